import numpy as np
import pytest

from netalloc import (
    AgentSpec,
    DivergenceError,
    GaussianNoise,
    GraphModel,
    GraphSample,
    LocalSet,
    NetworkState,
    NoiseConfig,
    ObjectiveSpec,
    PathStream,
    ProblemSpec,
    StepSchedule,
    apply_step,
    initial_state,
    monte_carlo,
    path_seed,
    run_path,
    sa_step,
    step_size,
)
from netalloc.engine import StepNoise, draw_step_noise


def tiny_problem(n=2, m=1, kind="unconstrained", seed=0):
    rng = np.random.default_rng(seed)
    agents = []
    for i in range(n):
        Q = np.diag(rng.uniform(0.5, 2.0, m))
        c = rng.uniform(-1, 1, m)
        if kind == "unconstrained":
            ls = LocalSet.unconstrained(m)
        else:
            ls = LocalSet.box(-3 * np.ones(m), 3 * np.ones(m))
        agents.append(AgentSpec(ObjectiveSpec.quadratic(Q, c), ls, rng.uniform(-1, 1, m)))
    return ProblemSpec(agents)


def ring_model(n):
    A = np.zeros((n, n))
    for i in range(n):
        A[i, (i + 1) % n] = A[(i + 1) % n, i] = 1.0
    return GraphModel.fixed_pool([A])


# ---------------------------------------------------------------------------
# schedules


def test_power_schedule_values():
    s = StepSchedule.power(1.0, 0.6)
    assert step_size(s, 0) == pytest.approx(1.0)
    assert step_size(s, 999) == pytest.approx(1000.0 ** -0.6)


def test_constant_schedule():
    s = StepSchedule.constant(0.01)
    assert step_size(s, 0) == step_size(s, 12345) == 0.01
    assert not s.convergent


def test_power_schedule_validation():
    with pytest.raises(ValueError):
        StepSchedule.power(1.0, 0.5)
    with pytest.raises(ValueError):
        StepSchedule.power(1.0, 1.5)
    with pytest.raises(ValueError):
        StepSchedule.power(-1.0, 0.6)
    assert StepSchedule.power(2.0, 1.0).convergent


def test_step_size_rejects_negative_k():
    with pytest.raises(ValueError):
        step_size(StepSchedule.power(1.0, 0.6), -1)


# ---------------------------------------------------------------------------
# single steps


def test_pointwise_fixed_point_on_empty_graph():
    problem = tiny_problem(3, 2, kind="box", seed=1)
    X = problem.D.copy()  # x_i = d_i
    Lam = problem.grad_all(X)  # lam_i = grad f_i(x_i)
    state = NetworkState(X=X, Lam=Lam.copy(), Z=np.zeros_like(X), k=0)
    graph = GraphSample.from_adjacency(np.zeros((3, 3)))
    nxt = apply_step(state, problem, graph, StepNoise(), alpha=0.7)
    np.testing.assert_allclose(nxt.X, state.X, atol=1e-14)
    np.testing.assert_allclose(nxt.Lam, state.Lam, atol=1e-14)
    np.testing.assert_allclose(nxt.Z, state.Z, atol=1e-14)
    assert nxt.k == 1


def test_one_step_matches_hand_computation():
    # two agents, one dimension, fixed noise draws, complete graph
    Q1, c1, d1 = 1.0, 0.5, 0.2
    Q2, c2, d2 = 2.0, -1.0, -0.4
    agents = [
        AgentSpec(ObjectiveSpec.quadratic([[Q1]], [c1]), LocalSet.box([-1.0], [1.0]), [d1]),
        AgentSpec(ObjectiveSpec.quadratic([[Q2]], [c2]), LocalSet.box([-1.0], [1.0]), [d2]),
    ]
    problem = ProblemSpec(agents)
    x = np.array([[0.3], [-0.2]])
    lam = np.array([[0.1], [0.4]])
    z = np.array([[-0.3], [0.2]])
    state = NetworkState(X=x.copy(), Lam=lam.copy(), Z=z.copy(), k=5)
    graph = GraphSample.from_adjacency(np.array([[0.0, 1.0], [1.0, 0.0]]))
    alpha = 0.25
    nu = np.array([[0.05], [-0.02]])
    delta = np.array([[0.01], [0.03]])
    zeta = np.zeros((2, 2, 1)); zeta[0, 1, 0] = 0.07; zeta[1, 0, 0] = -0.04
    eps = np.zeros((2, 2, 1)); eps[0, 1, 0] = -0.06; eps[1, 0, 0] = 0.02
    draws = StepNoise(nu=nu, delta=delta, zeta=zeta, eps=eps)
    nxt = apply_step(state, problem, graph, draws, alpha)

    # hand evaluation of the three per-agent update lines
    def clamp(v):
        return min(1.0, max(-1.0, v))

    g1 = 2 * Q1 * 0.3 + c1
    g2 = 2 * Q2 * (-0.2) + c2
    x1 = clamp(0.3 + alpha * (-(g1 + 0.05) + 0.1))
    x2 = clamp(-0.2 + alpha * (-(g2 - 0.02) + 0.4))
    l1 = 0.1 + alpha * ((d1 + 0.01) - 0.3 - (0.1 - (0.4 + 0.07)) - (-0.3 - (0.2 - 0.06)))
    l2 = 0.4 + alpha * ((d2 + 0.03) - (-0.2) - (0.4 - (0.1 - 0.04)) - (0.2 - (-0.3 + 0.02)))
    z1 = -0.3 + alpha * (0.1 - (0.4 + 0.07))
    z2 = 0.2 + alpha * (0.4 - (0.1 - 0.04))
    np.testing.assert_allclose(nxt.X.ravel(), [x1, x2], atol=1e-14)
    np.testing.assert_allclose(nxt.Lam.ravel(), [l1, l2], atol=1e-14)
    np.testing.assert_allclose(nxt.Z.ravel(), [z1, z2], atol=1e-14)


def test_feasibility_after_every_step():
    problem = tiny_problem(3, 2, kind="box", seed=3)
    model = ring_model(3)
    noise = NoiseConfig(gradient=GaussianNoise(2.0), resource=GaussianNoise(2.0),
                        channel_lambda=GaussianNoise(2.0), channel_z=GaussianNoise(2.0))
    res = run_path(problem, model, noise, StepSchedule.power(1.0, 0.6), 200, seed=4)
    assert problem.membership_violations(res.final_state.X).max() <= 1e-9


def test_shared_channel_noise_conservation():
    """Noiseless-z bookkeeping: with an undirected draw, sum_i z_i is conserved
    exactly, and sum_i (lam_i + z_i) moves by alpha * sum_i (d_i - x_i)."""
    problem = tiny_problem(4, 2, kind="box", seed=5)
    model = ring_model(4)
    stream = PathStream(11)
    state = initial_state(problem)
    graph = GraphSample.from_adjacency(model.graphs[0])
    noise = NoiseConfig.noiseless()
    for k in range(200):
        alpha = step_size(StepSchedule.power(1.0, 0.6), k)
        nxt = sa_step(state, problem, graph, noise, alpha, stream)
        assert np.abs(nxt.Z.sum(axis=0) - state.Z.sum(axis=0)).max() < 1e-12
        lhs = (nxt.Lam + nxt.Z).sum(axis=0) - (state.Lam + state.Z).sum(axis=0)
        rhs = alpha * (problem.D - state.X).sum(axis=0)
        assert np.abs(lhs - rhs).max() < 1e-12
        state = nxt


# ---------------------------------------------------------------------------
# paths


def test_run_path_rejects_zero_iterations():
    problem = tiny_problem()
    with pytest.raises(ValueError):
        run_path(problem, ring_model(2), NoiseConfig.noiseless(),
                 StepSchedule.power(1.0, 0.6), 0, seed=0)


def test_run_path_deterministic():
    problem = tiny_problem(3, 2, kind="box", seed=6)
    model = ring_model(3)
    noise = NoiseConfig(gradient=GaussianNoise(1.0), resource=GaussianNoise(1.0),
                        channel_lambda=GaussianNoise(1.0), channel_z=GaussianNoise(1.0))
    a = run_path(problem, model, noise, StepSchedule.power(1.0, 0.6), 500, seed=7)
    b = run_path(problem, model, noise, StepSchedule.power(1.0, 0.6), 500, seed=7)
    np.testing.assert_array_equal(a.trace.balance, b.trace.balance)
    np.testing.assert_array_equal(a.final_state.X, b.final_state.X)
    np.testing.assert_array_equal(a.final_state.Z, b.final_state.Z)


def test_trace_record_count_and_grid():
    problem = tiny_problem()
    model = ring_model(2)
    res = run_path(problem, model, NoiseConfig.noiseless(),
                   StepSchedule.power(1.0, 0.6), 95, seed=1, cadence=10)
    assert len(res.trace) == int(np.ceil(95 / 10))
    np.testing.assert_array_equal(res.trace.k, np.arange(0, 95, 10))
    assert res.trace.dist is None  # no reference supplied


def test_divergence_guard():
    problem = tiny_problem(3, 1, kind="unconstrained", seed=8)
    model = ring_model(3)
    with pytest.raises(DivergenceError) as err:
        run_path(problem, model, NoiseConfig.noiseless(),
                 StepSchedule.constant(50.0), 5000, seed=0)
    assert err.value.iteration >= 1


def test_run_path_noiseless_converges_toward_oracle():
    from netalloc import solve_dual

    problem = tiny_problem(4, 2, kind="box", seed=9)
    model = ring_model(4)
    sol = solve_dual(problem, tol=1e-9)
    res = run_path(problem, model, NoiseConfig.noiseless(),
                   StepSchedule.power(1.0, 0.6), 3000, seed=0, reference=sol.X_star)
    assert res.final_metrics["dist"] < 0.3 * res.trace.dist[0]


# ---------------------------------------------------------------------------
# Monte Carlo


def test_monte_carlo_single_path_equals_run_path():
    problem = tiny_problem(3, 2, kind="box", seed=10)
    model = ring_model(3)
    noise = NoiseConfig(gradient=GaussianNoise(0.5), resource=GaussianNoise(0.5),
                        channel_lambda=GaussianNoise(0.5), channel_z=GaussianNoise(0.5))
    sched = StepSchedule.power(1.0, 0.6)
    mc = monte_carlo(problem, model, noise, sched, 300, paths=1, master_seed=21)
    solo = run_path(problem, model, noise, sched, 300, seed=path_seed(21, 0))
    np.testing.assert_array_equal(mc.mean_trace.balance, solo.trace.balance)
    np.testing.assert_array_equal(mc.mean_trace.consensus, solo.trace.consensus)


def test_monte_carlo_mean_is_mean_of_paths():
    problem = tiny_problem(3, 1, kind="box", seed=11)
    model = ring_model(3)
    noise = NoiseConfig(gradient=GaussianNoise(0.5), resource=GaussianNoise(0.5),
                        channel_lambda=GaussianNoise(0.5), channel_z=GaussianNoise(0.5))
    sched = StepSchedule.power(1.0, 0.6)
    mc = monte_carlo(problem, model, noise, sched, 200, paths=5, master_seed=2,
                     keep_traces=True)
    stack = np.stack([t.balance for _, t in mc.traces], axis=0)
    np.testing.assert_allclose(mc.mean_trace.balance, stack.mean(axis=0), atol=1e-12)


def test_monte_carlo_thread_invariance():
    problem = tiny_problem(3, 2, kind="box", seed=12)
    model = ring_model(3)
    noise = NoiseConfig(gradient=GaussianNoise(1.0), resource=GaussianNoise(1.0),
                        channel_lambda=GaussianNoise(1.0), channel_z=GaussianNoise(1.0))
    sched = StepSchedule.power(1.0, 0.6)
    a = monte_carlo(problem, model, noise, sched, 200, paths=4, master_seed=3, threads=1)
    b = monte_carlo(problem, model, noise, sched, 200, paths=4, master_seed=3, threads=2)
    np.testing.assert_array_equal(a.mean_trace.balance, b.mean_trace.balance)
    np.testing.assert_array_equal(a.mean_trace.state_norm, b.mean_trace.state_norm)
    assert a.summary() == b.summary()


def test_monte_carlo_records_diverged_paths():
    problem = tiny_problem(3, 1, kind="unconstrained", seed=13)
    model = ring_model(3)
    mc = monte_carlo(problem, model, NoiseConfig.noiseless(),
                     StepSchedule.constant(50.0), 5000, paths=3, master_seed=4)
    assert len(mc.diverged) == 3
    assert mc.summary()["diverged"] == 3
    assert mc.mean_trace is None


def test_watch_records_allocations():
    problem = tiny_problem(3, 2, kind="box", seed=14)
    model = ring_model(3)
    res = run_path(problem, model, NoiseConfig.noiseless(),
                   StepSchedule.power(1.0, 0.6), 100, seed=5, watch=[(0, 0), (2, 1)])
    assert res.watched.shape == (10, 2)


# ---------------------------------------------------------------------------
# noise draws


def test_disabled_channels_draw_nothing():
    problem = tiny_problem(2, 2, kind="box", seed=15)
    draws = draw_step_noise(NoiseConfig.noiseless(), problem, problem.D, PathStream(0))
    assert draws.nu is None and draws.delta is None
    assert draws.zeta is None and draws.eps is None


def test_channel_independence():
    """Turning one channel off must not shift another channel's draws."""
    problem = tiny_problem(2, 2, kind="box", seed=16)
    full = NoiseConfig(gradient=GaussianNoise(1.0), resource=GaussianNoise(1.0),
                       channel_lambda=GaussianNoise(1.0), channel_z=GaussianNoise(1.0))
    part = NoiseConfig(resource=GaussianNoise(1.0))
    d1 = draw_step_noise(full, problem, problem.D, PathStream(42))
    d2 = draw_step_noise(part, problem, problem.D, PathStream(42))
    np.testing.assert_array_equal(d1.delta, d2.delta)


def test_trace_csv_roundtrip(tmp_path):
    from netalloc import read_csv, write_csv

    problem = tiny_problem(3, 2, kind="box", seed=20)
    model = ring_model(3)
    res = run_path(problem, model, NoiseConfig.noiseless(),
                   StepSchedule.power(1.0, 0.6), 80, seed=6)
    path = tmp_path / "trace.csv"
    write_csv(res.trace, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.k, res.trace.k)
    np.testing.assert_array_equal(back.balance, res.trace.balance)
    assert back.dist is None
    # writing again reproduces identical bytes
    path2 = tmp_path / "again.csv"
    write_csv(back, path2)
    assert path.read_bytes() == path2.read_bytes()
