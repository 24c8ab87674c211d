"""Search CAC designs with SVPEN for two error definitions and compare the winners.

No pretraining: the state estimator sees the constant input (1, 1) and is
pushed around purely by the error estimator, which learns from cycle runs.
"""
import numpy as np

from svpen import netzoo as nz
from svpen.engine import SvpenConfig, TurbofanEvaluation, run_svpen
from svpen.errorkit import CAC_NAMES
from svpen.harness.scenarios import F_REQ, TSFC_REQ, TURBOFAN_DOMAIN

ITERS = 1000
results = {}
for case in ("benchmark", "unlock"):
    pem = TurbofanEvaluation(TURBOFAN_DOMAIN, case, F_REQ, TSFC_REQ)
    g1 = nz.build_state_estimator(nz.StateEstimatorSpec("mlp", 2, 11, 1.0, seed=0))
    g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("mlp", 11, 2, seed=100))
    cfg = SvpenConfig(epsilon=1e-12, max_iters=ITERS, clamp_states=True)
    res = run_svpen(g1, g2, pem, np.ones(2), cfg, CAC_NAMES)
    pem.evaluate(res.state_norm, np.ones(2))
    results[case] = (res, pem.last_performance)
    print(f"{case}: best e {res.e:.4f} at epoch {res.trace.best_epoch}")

print(f"\n{'':8s}" + "".join(f"{c:>12s}" for c in results))
for i, name in enumerate(CAC_NAMES):
    row = [TURBOFAN_DOMAIN.normalize(r.state)[i] for r, _ in results.values()]
    print(f"{name:8s}" + "".join(f"{v:12.2f}" for v in row))
for label, attr in (("F kN", "F"), ("TSFC", "TSFC")):
    print(f"{label:8s}" + "".join(f"{getattr(p, attr):12.2f}" for _, p in results.values()))

# the benchmark trace: error against epoch, every 100th row
res = results["benchmark"][0]
print("\nepoch      e   best_e")
for row in res.trace.rows[::100]:
    print(f"{row.epoch:5d} {row.e:7.4f} {row.best_e:8.4f}")
