"""End to end on spectra: dataset, pretraining, then an out-of-range case.

Set SVPEN_DEMO_SAMPLES, SVPEN_DEMO_EPOCHS and SVPEN_DEMO_ITERS lower for a quick
look; 50 epochs on 2000 spectra takes a few
minutes on one core.
"""
import os
import tempfile
from pathlib import Path

import numpy as np

from svpen import netzoo as nz
from svpen.engine import SvpenConfig, inverse_function_mode, run_svpen
from svpen.harness.commands import build_mas_problem, pretrain_on
from svpen.harness.datasets import DatasetSpec, gen_dataset
from svpen.harness.scenarios import MAS_SCENARIOS, desk_model, load_line_db

N_SAMPLES = int(os.environ.get("SVPEN_DEMO_SAMPLES", 2000))
EPOCHS = int(os.environ.get("SVPEN_DEMO_EPOCHS", 50))
ITERS = int(os.environ.get("SVPEN_DEMO_ITERS", 1000))

work = Path(tempfile.mkdtemp(prefix="svpen_demo_"))
db = load_line_db()
dataset = gen_dataset(DatasetSpec(n_samples=N_SAMPLES), desk_model(db), work / "dataset")
g1, report = pretrain_on(dataset, nz.StateEstimatorSpec(), epochs=EPOCHS)
print(f"pretrained: test T error {report.test_T_rel_error:.2%}, X error {report.test_X_rel_error:.2%}")
nz.save_checkpoint(work / "g1.npz", g1, g1.spec)

for name in ("ii_low", "iii"):
    scen = MAS_SCENARIOS[name]
    g1, _ = nz.load_checkpoint(work / "g1.npz")
    g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("spectral", 2, scen.grid.size, seed=100,
                                                            channel_scale=g1.spec.channel_scale))
    pem, y = build_mas_problem(scen, db, dataset)
    x0, ev0, _ = inverse_function_mode(g1, pem, y, scen.epsilon)
    print(f"\n{name}: {scen.description}; truth {scen.truth}")
    print(f"  one-shot estimate {np.round(ev0.state, 4)}  e {ev0.e:.4f}")
    res = run_svpen(g1, g2, pem, y, SvpenConfig(epsilon=scen.epsilon, max_iters=ITERS), ("T", "X"))
    rel = np.abs(res.state / np.array(scen.truth) - 1)
    print(f"  after {res.iterations} epochs: {np.round(res.state, 4)}  e {res.e:.4f}  "
          f"accepted {res.accepted}  state error {np.round(rel, 3)}")
print(f"\nfiles under {work}")
