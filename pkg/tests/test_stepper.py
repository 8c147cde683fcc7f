import numpy as np
import pytest
from conftest import reference_fields
from helpers import neutral_state, smooth_state

from trapflow import ChargeNeutralityViolation, MaterialFields, ModelParams, StepperConfig, TrajectoryLog
from trapflow import ValidationError, assemble_laplacian, build_grid, cell_average, entropy_report, make_state
from trapflow import relative_entropy, run, solve_equilibrium, step


@pytest.fixture(scope="module")
def setup():
    g = build_grid(1, 64)
    f = reference_fields(g)
    params = ModelParams(1.0, 1.0, 1.0, 1.0, eps=1e-2)
    op = assemble_laplacian(g)
    # neutralise the doping for a reference perturbed state
    rng = np.random.default_rng(11)
    eq0 = solve_equilibrium(g, f, params, op=op)
    n = eq0.n_inf * rng.uniform(0.7, 1.3, 64)
    p = eq0.p_inf * rng.uniform(0.7, 1.3, 64)
    ntr = np.clip(eq0.ntr_inf + rng.uniform(-0.2, 0.2, 64), 0, 1)
    shift = cell_average(g, n - p + params.eps * ntr - f.doping)
    f = f.with_doping(f.doping + shift)
    eq = solve_equilibrium(g, f, params, op=op)
    state = make_state(n, p, ntr, g, f, params, op=op)
    return g, f, params, op, eq, state


@pytest.mark.parametrize(
    "kwargs", [dict(dt=0.0), dict(dt=-1.0), dict(t_end=-1.0), dict(gummel_iters=0), dict(sample_every=0)]
)
def test_config_validation(kwargs):
    with pytest.raises(ValidationError):
        StepperConfig(**kwargs)


def test_config_step_count():
    assert StepperConfig(dt=1e-3, t_end=1.0).n_steps == 1000
    assert StepperConfig(dt=5e-3, t_end=8.0).n_steps == 1600


def test_equilibrium_is_fixed_point(setup):
    g, f, params, op, eq, _ = setup
    s = eq.as_state()
    cfg = StepperConfig(dt=1e-2)
    for _ in range(5):
        s = step(s, cfg, g, f, params, op)
    for name in ("n", "p", "n_tr", "psi"):
        assert np.max(np.abs(getattr(s, name) - getattr(eq.as_state(), name))) <= 1e-10
    assert relative_entropy(s, eq, g, f, params) <= 1e-12


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("gummel", [1, 3])
def test_single_step_invariants(seed, gummel, setup):
    g, f, params, op, _, _ = setup
    s = neutral_state(np.random.default_rng(seed), g, f, params, op, spread=2.0)
    new = step(s, StepperConfig(dt=1e-2, gummel_iters=gummel), g, f, params, op)
    q0 = cell_average(g, s.charge_density(params.eps))
    q1 = cell_average(g, new.charge_density(params.eps))
    assert abs(q1 - q0) <= 1e-12 * (1 + abs(q0))
    assert np.all(new.n >= 0) and np.all(new.p >= 0)
    assert np.all((new.n_tr >= 0) & (new.n_tr <= 1))
    assert abs(new.psi.mean()) <= 1e-14
    rhs = new.n - new.p + params.eps * new.n_tr - f.doping
    res = params.lam * op.apply(new.psi) - rhs
    assert np.sqrt(np.mean(res**2)) <= 1e-11 * max(1.0, np.sqrt(np.mean(rhs**2)))


def test_splitting_consistency(setup):
    g, f, params, op, _, _ = setup
    eq = solve_equilibrium(g, reference_fields(g), params, op=op)
    f0 = reference_fields(g)
    s0 = smooth_state(eq, g, params, f0, op)
    diffs = []
    for dt in (1e-3, 5e-4, 2.5e-4, 1.25e-4):
        one = step(s0, StepperConfig(dt=dt), g, f0, params, op)
        half = StepperConfig(dt=dt / 2)
        two = step(step(s0, half, g, f0, params, op), half, g, f0, params, op)
        diffs.append(max(np.max(np.abs(getattr(one, k) - getattr(two, k))) for k in ("n", "p", "n_tr")))
    ratios = np.array(diffs[:-1]) / np.array(diffs[1:])
    # local error O(dt^2): ratios approach 4 once the trap transient is resolved
    assert np.all(np.diff(ratios) > 0)
    assert 3.5 <= ratios[-1] <= 4.5


def test_run_from_equilibrium_stays_there(setup):
    g, f, params, op, eq, _ = setup
    log = run(eq.as_state(), StepperConfig(dt=1e-2, t_end=0.5, sample_every=5), g, f, params, eq, op=op)
    assert np.all(log.column("relative_entropy") <= 1e-12)
    assert log.fit is None and log.fit_error
    assert log.times[0] == 0.0 and log.times[-1] == pytest.approx(0.5)


def test_run_records_and_conserves(setup):
    g, f, params, op, eq, state = setup
    cfg = StepperConfig(dt=1e-2, t_end=1.0, sample_every=7)
    seen = []
    log = run(state, cfg, g, f, params, eq, op=op, callback=lambda k, s: seen.append(k))
    assert seen == list(range(1, 101))
    assert len(log) == 1 + 100 // 7 + 1
    assert np.all(np.diff(log.times) > 0)
    q = log.column("charge")
    assert np.max(np.abs(q - q[0])) <= 100 * 1e-13 * (1 + abs(q[0]))
    e = log.column("relative_entropy")
    assert np.all(np.diff(e) <= 1e-12)
    assert log.final_state.t == pytest.approx(1.0)


def test_run_rejects_inadmissible_initial(setup):
    g, f, params, op, eq, state = setup
    cfg = StepperConfig(dt=1e-2, t_end=0.1)
    with pytest.raises(ChargeNeutralityViolation):
        run(state.replace(n=state.n + 0.1), cfg, g, f, params, eq, op=op)
    with pytest.raises(ValidationError):
        make_state(state.n, state.p, state.n_tr + 1.0, g, f, params)
    with pytest.raises(ValidationError):
        make_state(-state.n, state.p, state.n_tr, g, f, params)


def test_log_requires_increasing_times(setup):
    g, f, params, op, eq, state = setup
    log = TrajectoryLog()
    rep = entropy_report(state, eq, g, f, params, op)
    log.append(rep)
    with pytest.raises(ValueError):
        log.append(rep)


def test_two_dimensional_run():
    g = build_grid(2, (12, 10))
    x = g.centers
    params = ModelParams(1.0, 2.0, 1.0, 0.5, eps=0.1)
    f = MaterialFields(0.2 * np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]), 0.3 * x[:, 1], -0.2 * x[:, 0])
    op = assemble_laplacian(g)
    rng = np.random.default_rng(0)
    s = neutral_state(rng, g, f, params, op, spread=0.5)
    f = f.with_doping(f.doping)
    eq = solve_equilibrium(g, f, params, op=op)
    log = run(s, StepperConfig(dt=2e-2, t_end=3.0, sample_every=5), g, f, params, eq, op=op)
    e = log.column("relative_entropy")
    assert e[-1] < 1e-2 * e[0]
    assert np.all(np.diff(e) <= 1e-12)
    q = log.column("charge")
    assert np.max(np.abs(q - q[0])) <= 1e-11
