import numpy as np
import pytest

from svpen import engine as en
from svpen import errorkit as ek
from svpen import gradcore as gc
from svpen import netzoo as nz
from svpen.harness import scenarios as sc
from svpen.spectro import SpectralGrid

UNIT = ek.Bounds((0.0, 0.0), (1.0, 1.0), ("a", "b"))


class StubEvaluation(en.PhysicalEvaluationModule):
    """Squared distance to a fixed target; no physics."""

    def __init__(self, target=(0.3, 0.7), clamp_states=False):
        super().__init__(UNIT, UNIT, clamp_states)
        self.target = np.asarray(target)
        self.seen = []

    def _score(self, x_norm, x_phys, y_given):
        self.seen.append(x_phys.copy())
        e = float(np.sum((x_phys - self.target) ** 2))
        return en.Evaluation(e, ek.ErrorBreakdown({"e": e}), x_phys, x_phys)


class LinearG2(gc.Module):
    """e_hat = w * state[:, 0]."""

    def __init__(self, w=1.0):
        super().__init__()
        self.add_param("w", np.array([w]))

    def __call__(self, state, obs):
        state = state if isinstance(state, gc.Tensor) else gc.Tensor(np.atleast_2d(state))
        return gc.reshape(gc.index(state, (slice(None), 0)) * gc.broadcast_batch(self.params["w"], 1)[0], (-1,))


def nets(seed=0):
    g1 = nz.build_state_estimator(nz.StateEstimatorSpec("mlp", 2, 2, 0.5, seed=seed))
    g2 = nz.build_error_estimator(nz.ErrorEstimatorSpec("mlp", 2, 2, branch_width=8, seed=seed + 100))
    return g1, g2


def snapshot(module):
    return {k: v.copy() for k, v in module.state_dict().items()}


def same(a, b):
    return all(np.array_equal(a[k], b[k]) for k in a)


def test_forward_call_accounting():
    g1, g2 = nets()
    pem = StubEvaluation(target=(5.0, 5.0))  # unreachable inside the unit box
    cfg = en.SvpenConfig(epsilon=1e-9, max_iters=5)
    res = en.run_svpen(g1, g2, pem, np.ones(2), cfg)
    assert not res.accepted and res.iterations == 5
    assert res.forward_calls == pem.calls == 1 + 16 + 3 * 5


def test_batch_composition():
    rng = np.random.default_rng(0)
    rw = en.ReplayBuffer("random_walk")
    for i in range(16):
        rw.append([i, i], i)
    ie = en.ReplayBuffer("in_situ")
    for n_ie, expected in ((0, (0, 16, 1)), (3, (3, 13, 1)), (8, (8, 8, 1)), (20, (8, 8, 1))):
        while len(ie) < n_ie:
            ie.append([-1.0, -1.0], -1.0)
        xs, es, counts = en.compose_batch(ie, rw, (np.array([9.0, 9.0]), 0.5), rng)
        assert counts == expected and len(xs) == len(es) == 17
        assert es[-1] == 0.5 and np.sum(es == -1.0) == expected[0]
    assert en.batch_counts(3) == (3, 13, 1)


def test_buffer_ring_and_sampling():
    buf = en.ReplayBuffer("in_situ", capacity=3)
    for i in range(5):
        buf.append([i], i)
    assert len(buf) == 3 and list(buf.errors()) == [2.0, 3.0, 4.0]
    xs, es = buf.sample(3, np.random.default_rng(0))
    assert sorted(es) == [2.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        buf.sample(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        en.ReplayBuffer("other")


def test_g2_loss_examples():
    g2 = LinearG2()
    opt = gc.Adam(g2.parameters())
    assert en.g2_update(g2, opt, np.array([[0.3]]), np.array([0.5]), None, delay=1)[0] == pytest.approx(0.04)
    g2 = LinearG2()
    opt = gc.Adam(g2.parameters())
    losses = en.g2_update(g2, opt, np.array([[0.3], [0.2]]), np.array([0.5, 0.2]), None, delay=1)
    assert losses[0] == pytest.approx(0.02)


def test_gated_g2_steps_leave_parameters_untouched():
    g2 = LinearG2()
    opt = gc.Adam(g2.parameters())
    before = snapshot(g2)
    states = np.array([[0.3], [0.2]])
    losses = en.g2_update(g2, opt, states, np.array([0.3, 0.2 + 0.005]), None, gate=1e-4, delay=5)
    assert len(losses) == 5 and all(v < 1e-4 for v in losses)
    assert same(before, snapshot(g2)) and opt.t == 0


def test_gated_real_ensemble_bit_identical():
    g1, g2 = nets(3)
    x = np.random.default_rng(0).random((17, 2))
    y = np.ones(2)
    errors = g2(x, y).data.copy()
    before = snapshot(g2)
    en.g2_update(g2, gc.Adam(g2.parameters()), x, errors, y)
    assert same(before, snapshot(g2))


def test_g1_update_freezes_g2_and_reports_pre_step_estimate():
    g1, g2 = nets(1)
    y = np.ones(2)
    before = snapshot(g2)
    pre = nz.estimate_error(g2, nz.estimate_state(g1, y), y)
    loss = en.g1_update(g1, g2, gc.Adam(g1.parameters()), y)
    assert loss == pytest.approx(pre, rel=1e-12)
    assert same(before, snapshot(g2))


def test_constant_g2_gives_zero_g1_step():
    g1, g2 = nets(2)
    for m in g2.members:
        m.params[f"{m.prefix}.out.w"].data[:] = 0.0
    before = snapshot(g1)
    en.g1_update(g1, g2, gc.Adam(g1.parameters()), np.ones(2))
    assert same(before, snapshot(g1))


def test_in_situ_exploration():
    pem = StubEvaluation()
    buf = en.ReplayBuffer("in_situ")
    rng = np.random.default_rng(0)
    x, ev = en.explore_in_situ(pem, None, np.array([0.4, 0.4]), 0.0, buf, rng)
    assert np.array_equal(x, [0.4, 0.4]) and buf.errors()[0] == pem.evaluate(x, None).e
    sigma = 0.05
    draws = np.array([en.explore_in_situ(pem, None, np.zeros(2), sigma, buf, rng)[0] for _ in range(1000)])
    assert np.all(np.abs(draws.mean(axis=0)) < 3 * sigma / np.sqrt(1000))
    assert len(buf) == 1000  # capacity


def test_random_walk_seeding():
    pem = StubEvaluation()
    a = en.seed_random_walk(pem, None, en.ReplayBuffer("random_walk"), np.random.default_rng(7))
    b = en.seed_random_walk(pem, None, en.ReplayBuffer("random_walk"), np.random.default_rng(7))
    assert len(a) == 16 and pem.calls == 32
    assert np.all((a.states() >= 0) & (a.states() <= 1))
    assert np.array_equal(a.states(), b.states())


def test_clamping_evaluates_at_bounds():
    pem = en.TurbofanEvaluation(sc.TURBOFAN_DOMAIN, "unlock")
    x = np.full(11, 0.5)
    x[0], x[4] = 1.3, -0.4
    ev = pem.evaluate(x, np.ones(2))
    assert ev.state[0] == sc.TURBOFAN_DOMAIN.hi[0] and ev.state[4] == sc.TURBOFAN_DOMAIN.lo[4]
    stub = StubEvaluation(clamp_states=True)
    stub.evaluate(np.array([1.3, -0.2]), None)
    assert np.array_equal(stub.seen[-1], [1.0, 0.0])


def test_turbofan_infeasible_penalty():
    pem = en.TurbofanEvaluation(sc.TURBOFAN_DOMAIN, "benchmark")
    x = np.zeros(11)
    x[[0, 1, 3]] = 1.0  # high BPR, fan and HPC ratios with a cool burner: the LPT drains the core below ambient
    ev = pem.evaluate(x, np.ones(2))
    assert ev.e == ek.INFEASIBLE_PENALTY and pem.last_performance is None


def small_mas():
    db = sc.load_line_db()
    grid = SpectralGrid(2380.0, 2383.2, 0.1)  # 32 points
    model = sc.desk_model(db, grid)
    states = np.column_stack([np.linspace(600, 2000, 20), np.linspace(0.05, 0.07, 20)])
    obs = np.stack([model(s) for s in states])
    pem = en.MasEvaluation(model, obs.min(0), obs.max(0), sc.MAS_STATE_NORM,
                           ek.Bounds((300.0, 0.01), (2000.0, 0.15)))
    return pem, model


def test_mas_evaluation_exact_reconstruction_and_hinge():
    pem, model = small_mas()
    truth = np.array([1234.0, 0.061])
    y = pem.normalize_obs(model(truth))
    ev = pem.evaluate(sc.MAS_STATE_NORM.normalize(truth), y)
    assert ev.e < 1e-12
    out = pem.evaluate(sc.MAS_STATE_NORM.normalize([2500.0, 0.2]), y)
    assert out.breakdown["e_reg_T"] > 0 and out.breakdown["e_reg_X"] > 0
    cold = pem.evaluate(np.array([-5.0, -3.0]), y)  # negative T and X are projected, not simulated
    assert np.isfinite(cold.e) and cold.state[0] == en.MasEvaluation.T_FLOOR and cold.state[1] == 0.0


def test_infinite_epsilon_accepts_in_inverse_mode():
    g1, g2 = nets()
    pem = StubEvaluation()
    res = en.run_svpen(g1, g2, pem, np.ones(2), en.SvpenConfig(epsilon=np.inf))
    assert res.accepted and res.mode == "inverse" and res.forward_calls == 1 and len(res.trace) == 1


def test_run_converges_on_stub_and_is_self_validated():
    g1, g2 = nets(1)
    pem = StubEvaluation()
    res = en.run_svpen(g1, g2, pem, np.ones(2), en.SvpenConfig(epsilon=0.01, max_iters=1000, seed=1))
    assert res.accepted
    assert res.e < 0.01 and res.e == pytest.approx(pem.evaluate(res.state_norm, None).e)
    assert res.forward_calls == 1 + 16 + 3 * res.iterations


def test_best_so_far_monotone_and_reported():
    g1, g2 = nets(5)
    res = en.run_svpen(g1, g2, StubEvaluation((5.0, 5.0)), np.ones(2), en.SvpenConfig(epsilon=1e-9, max_iters=40),
                       ("a", "b"))
    best = [r.best_e for r in res.trace.rows]
    assert np.all(np.diff(best) <= 0)
    assert res.e == min(r.e for r in res.trace.rows) == res.trace.best_e
    lines = res.trace.to_csv().splitlines()
    assert lines[0] == "epoch,a,b,e,e_hat,loss_g1,loss_g2,lr_g1,lr_g2,best_e" and len(lines) == 42


def test_full_run_determinism():
    outs = []
    for _ in range(2):
        g1, g2 = nets(6)
        res = en.run_svpen(g1, g2, StubEvaluation(), np.ones(2), en.SvpenConfig(epsilon=1e-6, max_iters=20, seed=3))
        outs.append(res.trace.to_csv())
    assert outs[0] == outs[1]


def test_nan_epoch_is_logged_not_fatal(caplog):
    g1, g2 = nets(7)
    pem = StubEvaluation()
    g2.members[0].params["g2.m0.out.b"].data[:] = np.nan
    res = en.run_svpen(g1, g2, pem, np.ones(2), en.SvpenConfig(epsilon=1e-9, max_iters=2))
    assert res.iterations == 2 and "aborted" in caplog.text


def test_config_validation():
    with pytest.raises(ValueError):
        en.SvpenConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        en.SvpenConfig(max_iters=0)
    assert en.SvpenConfig().batch_size == 17
