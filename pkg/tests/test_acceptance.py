"""Acceptance criteria 1-11 at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL ...`` line; the lines are printed
as they happen (visible with ``-s``) and again in the terminal summary.
"""
import math

import numpy as np
import pytest
from scipy.constants import c as C_LIGHT, h as H_PLANCK, k as K_B

from svpen import engine as en
from svpen import errorkit as ek
from svpen import gradcore as gc
from svpen import netzoo as nz
from svpen import spectro as sp
from svpen import turbofan as tf
from svpen.harness import commands as cmd
from svpen.harness import scenarios as sc
from svpen.harness.config import RunConfig
from svpen.harness.datasets import DatasetSpec, gen_dataset

RESULTS = []


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# ------------------------------------------------------------------ fixtures


@pytest.fixture(scope="session")
def mas_setup(tmp_path_factory):
    """Desk dataset (2000 spectra) and a state estimator pretrained on it, written as a run config."""
    root = tmp_path_factory.mktemp("mas")
    db = sc.load_line_db()
    dataset = gen_dataset(DatasetSpec(n_samples=2000, seed=0), sc.desk_model(db), root / "dataset")
    spec = nz.StateEstimatorSpec("spectral-cnn", 200, 2, 0.25, seed=0)
    g1, report = cmd.pretrain_on(dataset, spec, epochs=50, batch_size=64, seed=0)
    nz.save_checkpoint(root / "g1.npz", g1, spec)
    return {"root": root, "db": db, "dataset": dataset, "report": report}


def mas_case(setup, scenario):
    root = setup["root"]
    cfg = RunConfig("mas", scenario, 0, {}, {
        "dataset_dir": str(root / "dataset"), "checkpoint": str(root / "g1.npz"), "out_dir": str(root / scenario),
    })
    return cmd.run_case(cfg)  # reloads the pretrained weights each time


@pytest.fixture(scope="module")
def turbofan_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("tf")
    out = {}
    for case in ("benchmark", "unlock"):
        cfg = RunConfig("turbofan", case, 0, {"max_iters": 1000}, {"out_dir": str(root / case)})
        out[case] = cmd.run_case(cfg)
    return out


# ---------------------------------------------------------------- criterion 1


def _fd_max_rel(f, module, rng, per_param=3, h=1e-6):
    module.zero_grad()
    f().backward()
    worst = 0.0
    for p in module.params.values():
        flat, grad = p.data.reshape(-1), p.grad.reshape(-1)
        for i in rng.choice(flat.size, min(per_param, flat.size), replace=False):
            old = flat[i]
            flat[i] = old + h
            up = f().item()
            flat[i] = old - h
            down = f().item()
            flat[i] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(grad[i] - num) / max(abs(num), 1e-3))
    return worst


def test_criterion_01_gradients():
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        # every layer type in one graph
        x = gc.Tensor(rng.normal(size=(2, 2, 9)), requires_grad=True)
        layers = gc.Module()
        layers.add_param("k", rng.normal(size=(3, 2, 3)))
        layers.add_param("b", rng.normal(size=3))
        layers.add_param("W", rng.normal(size=(2, 6)))
        layers.add_param("c", rng.normal(size=2))
        layers.params["x"] = x

        def f():
            p = layers.params
            h = gc.conv1d(x, p["k"], p["b"], padding=1)
            h = gc.adaptive_avg_pool1d(gc.max_pool1d(gc.relu(h) + gc.tansig(h), 2), 2)
            return gc.mean(gc.square(gc.tansig(gc.dense(gc.reshape(h, (2, 6)), p["W"], p["c"]))))

        worst = max(worst, _fd_max_rel(f, layers, rng, per_param=6))
        nets = [
            (nz.build_state_estimator(nz.StateEstimatorSpec("spectral-cnn", 32, 2, 0.0625, seed=seed)),
             lambda m, y=rng.random((2, 32)): gc.mean(gc.square(m(y)))),
            (nz.build_state_estimator(nz.StateEstimatorSpec("mlp", 2, 11, 1.0, seed=seed)),
             lambda m: gc.mean(gc.square(m(np.ones(2))))),
            (nz.build_error_estimator(nz.ErrorEstimatorSpec("spectral", 2, 32, channel_scale=0.0625, seed=seed)),
             lambda m, s=rng.random((2, 2)), y=rng.random(32): gc.total(m(s, y))),
            (nz.build_error_estimator(nz.ErrorEstimatorSpec("mlp", 11, 2, seed=seed)),
             lambda m, s=rng.random((2, 11)): gc.total(m(s, np.ones(2)))),
        ]
        for net, loss in nets:
            worst = max(worst, _fd_max_rel(lambda: loss(net), net, rng))
    ok = worst < 1e-4
    record(1, ok, f"max FD relative gradient error {worst:.2e} (< 1e-4), 10 seeds, layers + 4 estimators")
    assert ok


# ---------------------------------------------------------------- criterion 2


class _Stub(en.PhysicalEvaluationModule):
    def __init__(self):
        unit = ek.Bounds((0.0, 0.0), (1.0, 1.0))
        super().__init__(unit, unit)

    def _score(self, x_norm, x_phys, y_given):
        e = 10.0 + float(np.sum(x_phys**2))
        return en.Evaluation(e, ek.ErrorBreakdown({"e": e}), x_phys, x_phys)


def test_criterion_02_algorithm_accounting():
    g1 = nz.build_state_estimator(nz.StateEstimatorSpec("mlp", 2, 2, 0.5))
    g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("mlp", 2, 2))
    pem = _Stub()
    res = en.run_svpen(g1, g2, pem, np.ones(2), en.SvpenConfig(epsilon=1.0, max_iters=5))
    calls_ok = res.forward_calls == pem.calls == 1 + 16 + 3 * 5

    rng = np.random.default_rng(0)
    rw, ie = en.ReplayBuffer("random_walk"), en.ReplayBuffer("in_situ")
    for i in range(16):
        rw.append([0.1, 0.1], 1.0)
    first = en.compose_batch(ie, rw, (np.zeros(2), 1.0), rng)[2]
    for i in range(8):
        ie.append([0.2, 0.2], 1.0)
    steady = en.compose_batch(ie, rw, (np.zeros(2), 1.0), rng)[2]

    xs = rng.random((17, 2))
    target = g2(xs, np.ones(2)).data + 1e-3  # loss 1e-6 < gate
    before = {k: v.copy() for k, v in g2.state_dict().items()}
    en.g2_update(g2, gc.Adam(g2.parameters()), xs, target, np.ones(2))
    gated_ok = all(np.array_equal(before[k], v) for k, v in g2.state_dict().items())

    ok = calls_ok and first == (0, 16, 1) and steady == (8, 8, 1) and gated_ok
    record(2, ok, f"calls {res.forward_calls} (expect 32), epoch-1 batch {first}, steady {steady}, "
                  f"gated G2 bit-identical {gated_ok}")
    assert ok


# ---------------------------------------------------------------- criterion 3


def test_criterion_03_mas_round_trip(mas_setup):
    ds, db = mas_setup["dataset"], mas_setup["db"]
    model = sc.desk_model(db)
    pem = en.MasEvaluation(model, ds.obs_lower, ds.obs_upper, sc.MAS_STATE_NORM, sc.MAS_STATE_NORM)
    g1, _ = nz.load_checkpoint(mas_setup["root"] / "g1.npz")
    rng = np.random.default_rng(123)
    states = np.column_stack([rng.uniform(600, 2000, 5), rng.uniform(0.05, 0.07, 5)])
    errors = []
    for s in states:
        _, ev, _ = en.inverse_function_mode(g1, pem, pem.normalize_obs(model(s)), 0.15)
        errors.append(ev.e)
    accepted = sum(e < 0.15 for e in errors)
    ok = accepted >= 4
    record(3, ok, f"{accepted}/5 accepted in inverse mode, errors {np.round(errors, 4).tolist()}, "
                  f"pretrain test T rel err {mas_setup['report'].test_T_rel_error:.4f}")
    assert ok


# ------------------------------------------------------------ criteria 4 and 5


def _state_rel_error(summary):
    return [abs(s / t - 1.0) for s, t in zip(summary.state, summary.truth)]


def _mas_outcomes(setup, scenarios):
    rows, ok = [], True
    for name in scenarios:
        summary, _ = mas_case(setup, name)
        eps = sc.MAS_SCENARIOS[name].epsilon
        rel = _state_rel_error(summary)
        good = summary.accepted and summary.error < eps and summary.iterations <= 1000 and max(rel) <= 0.10
        ok &= good
        rows.append(f"{name}: e {summary.error:.4f} (<{eps}) at epoch {summary.iterations}, "
                    f"state ({summary.state[0]:.1f} K, {summary.state[1]:.4f}) rel err "
                    f"({rel[0]:.1%}, {rel[1]:.1%})")
    return ok, rows


def test_criterion_04_mas_outliers(mas_setup):
    ok, rows = _mas_outcomes(mas_setup, ("ii_low", "ii_high"))
    record(4, ok, "; ".join(rows) + " [needs e < eps and state within 10%]")
    assert ok


def test_criterion_05_mas_reconfiguration(mas_setup):
    ok, rows = _mas_outcomes(mas_setup, ("iii", "iv", "v"))
    record(5, ok, "; ".join(rows) + " [needs e < eps and state within 10%]")
    assert ok


# ---------------------------------------------------------------- criterion 6


def test_criterion_06_mas_mismatch(mas_setup):
    summary, result = mas_case(mas_setup, "i")
    rows = result.trace.rows
    initial = rows[0].e
    best = [r.best_e for r in rows]
    monotone = bool(np.all(np.diff(best) <= 0))
    reduction = 1.0 - best[-1] / initial
    ok = result.mode == "optimization" and monotone and best[-1] < initial and reduction >= 0.25
    record(6, ok, f"inverse mode rejected (e0 {initial:.4g}); best after {summary.iterations} epochs "
                  f"{best[-1]:.4g}, reduction {reduction:.1%} (>= 25%), best-so-far monotone {monotone}")
    assert ok


# ---------------------------------------------------------------- criterion 7


def test_criterion_07_turbofan_fidelity():
    fixed = tf.FixedParameters()
    perf = tf.simulate_turbofan(tf.CFM56_7B, fixed)
    m_hot = fixed.m_total / (1 + tf.CFM56_7B.BPR) + perf.m_fuel
    (T4, _), (T45, _), (T5, _) = perf.stations["4"], perf.stations["45"], perf.stations["5"]
    hp = abs(m_hot * tf.HOT.cp * (T4 - T45) * fixed.eta_mech / perf.works["HPC"] - 1)
    lp = abs(m_hot * tf.HOT.cp * (T45 - T5) * fixed.eta_mech / (perf.works["fan"] + perf.works["LPC"]) - 1)
    dF, dT = perf.F / 126.83 - 1, perf.TSFC / 11.22 - 1
    ok = abs(dF) <= 0.10 and abs(dT) <= 0.10 and hp <= 1e-9 and lp <= 1e-9
    record(7, ok, f"F {perf.F:.2f} kN ({dF:+.1%}), TSFC {perf.TSFC:.3f} ({dT:+.1%}), "
                  f"spool balance residuals {hp:.1e} / {lp:.1e}")
    assert ok


# ------------------------------------------------------------ criteria 8 and 9


def _norm_state(summary):
    return sc.TURBOFAN_DOMAIN.normalize(summary.state)


def test_criterion_08_turbofan_benchmark(turbofan_runs):
    summary, _ = turbofan_runs["benchmark"]
    x = _norm_state(summary)
    perf = summary.performance or {"F_kN": np.nan, "TSFC": np.nan}
    e_y1 = ek.tf_perf_error_v1(perf["F_kN"], perf["TSFC"], sc.F_REQ, sc.TSFC_REQ)
    near_lower = int(np.sum(x <= 0.1))
    ok = e_y1 == 0.0 and near_lower >= 8
    record(8, ok, f"best epoch {summary.best_epoch}: e_y1 {e_y1:.4f} (need 0), {near_lower}/11 params "
                  f"within 0.1 of lower bound (need 8), F {perf['F_kN']:.1f} kN, TSFC {perf['TSFC']:.3f}")
    assert ok


def test_criterion_09_turbofan_unlock(turbofan_runs):
    bench, _ = turbofan_runs["benchmark"]
    summary, _ = turbofan_runs["unlock"]
    x = _norm_state(summary)
    t_max = ek.CAC_NAMES.index("T_max")
    others = np.delete(x, t_max)
    shape_ok = bool(np.all(others >= 0.9) and x[t_max] <= 0.1)
    pu, pb = summary.performance, bench.performance
    direction_ok = pu["F_kN"] > pb["F_kN"] and pu["TSFC"] < pb["TSFC"]
    ok = shape_ok and direction_ok
    record(9, ok, f"normalized state {np.round(x, 2).tolist()} (others >= 0.9 and T_max <= 0.1: {shape_ok}); "
                  f"F {pu['F_kN']:.1f} vs benchmark {pb['F_kN']:.1f}, TSFC {pu['TSFC']:.3f} vs "
                  f"{pb['TSFC']:.3f} (direction: {direction_ok})")
    assert ok


# --------------------------------------------------------------- criterion 10


def test_criterion_10_error_oracles():
    from test_errorkit import oracle_mas, oracle_tf

    rng = np.random.default_rng(2024)
    worst = 0.0
    lo, hi = np.array([-0.2, -2.0]), np.array([1.0, 5.0])
    dom = ek.Bounds(tuple(lo), tuple(hi))
    for _ in range(1000):
        a, b, x = rng.random(30), rng.random(30), rng.uniform(-3, 6, 2)
        worst = max(worst, abs(ek.mas_breakdown(a, b, x, dom).total - oracle_mas(a, b, x, lo, hi)))
        xc = rng.random(11)
        F, T = rng.uniform(50, 200), rng.uniform(5, 15)
        for case in ek.TURBOFAN_CASES:
            worst = max(worst, abs(ek.tf_total_error(case, xc, F, T, sc.F_REQ, sc.TSFC_REQ).total
                                   - oracle_tf(case, list(xc), F, T, sc.F_REQ, sc.TSFC_REQ)))
    ok = worst <= 1e-12
    record(10, ok, f"max |formula - oracle| {worst:.1e} over 1000 draws x 6 totals")
    assert ok


# --------------------------------------------------------------- criterion 11


def test_criterion_11_physics_limits():
    checks = {}
    checks["absorptivity zero"] = sp.beer_lambert(0.0, 10.0) == 0.0
    checks["absorptivity saturates"] = 1.0 - sp.beer_lambert(5.0, 10.0) < 1e-20
    line = sp.LineRecord(2380.0, 1e-20, 2000.0, 0.07, 0.7, -0.003)
    checks["S(T0) = S0"] = math.isclose(sp.line_intensity(line, sp.T_REF), line.S0, rel_tol=1e-14)
    nu = C_LIGHT * 100 * 0.5
    rj = 2 * nu**2 * K_B * 3000.0 / C_LIGHT**2
    checks["Rayleigh-Jeans"] = math.isclose(sp.planck_radiance(0.5, 3000.0), rj, rel_tol=0.01)
    nu = C_LIGHT * 100 * 4000.0
    wien = 2 * H_PLANCK * nu**3 / C_LIGHT**2 * math.exp(-H_PLANCK * nu / (K_B * 300.0))
    checks["Wien"] = math.isclose(sp.planck_radiance(4000.0, 300.0), wien, rel_tol=1e-6)
    hw = sp.lorentz_hwhm(0.07, 0.7, 1000.0, sp.ATM) + sp.doppler_hwhm(2380.0, 1000.0, 44.0095)
    grid = 2380.0 + np.linspace(-2000 * hw, 2000 * hw, 2000001)
    area = np.trapezoid(sp.line_shape(line, 1000.0, sp.ATM, 44.0095, grid + line.delta_air), grid)
    checks["pseudo-Voigt area"] = abs(area - 1.0) <= 0.01
    ok = all(checks.values())
    record(11, ok, ", ".join(f"{k} {'ok' if v else 'BAD'}" for k, v in checks.items()) + f" (area {area:.4f})")
    assert ok
