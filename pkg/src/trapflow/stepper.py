"""Strang-split time stepping of the coupled system and trajectory logging."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ChargeNeutralityViolation,
    EntropyReport,
    Grid,
    InsufficientData,
    MaterialFields,
    ModelParams,
    State,
    ValidationError,
    cell_average,
)
from .entropy import DecayFit, entropy_report, fit_decay_rate
from .poisson import NeumannLaplacian, assemble_laplacian, solve_poisson
from .reactions import reaction_substep
from .transport import assemble_sg_operator, transport_substep


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    gummel_iters: int = 1
    sample_every: int = 10
    tol_linear: float = 1e-12
    tol_scalar: float = 1e-14

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt!r}")
        if not self.t_end >= 0:
            raise ValidationError(f"t_end must be nonnegative, got {self.t_end!r}")
        if self.gummel_iters < 1:
            raise ValidationError("gummel_iters must be >= 1")
        if self.sample_every < 1:
            raise ValidationError("sample_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class TrajectoryLog:
    samples: list = field(default_factory=list)
    fit: DecayFit | None = None
    fit_error: str | None = None
    final_state: State | None = None

    def append(self, report: EntropyReport):
        if self.samples and report.t <= self.samples[-1].t:
            raise ValueError("trajectory times must increase strictly")
        self.samples.append(report)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def __len__(self):
        return len(self.samples)


def poisson_rhs(n, p, n_tr, fields: MaterialFields, params: ModelParams) -> np.ndarray:
    return n - p + params.eps * n_tr - fields.doping


def make_state(
    n,
    p,
    n_tr,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    t: float = 0.0,
    op: NeumannLaplacian | None = None,
    tol: float = 1e-12,
) -> State:
    """Assemble a state, solving for the zero-mean potential."""
    if op is None:
        op = assemble_laplacian(grid)
    n = grid.check_cell_array(n, "n").copy()
    p = grid.check_cell_array(p, "p").copy()
    n_tr = grid.check_cell_array(n_tr, "n_tr").copy()
    if np.any(n < 0) or np.any(p < 0):
        raise ValidationError("densities must be nonnegative")
    if np.any(n_tr < 0) or np.any(n_tr > 1):
        raise ValidationError("trap occupancy must lie in [0, 1]")
    psi = solve_poisson(op, poisson_rhs(n, p, n_tr, fields, params), params.lam, tol=tol)
    return State(float(t), n, p, n_tr, psi)


def step(
    state: State,
    cfg: StepperConfig,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    op: NeumannLaplacian | None = None,
) -> State:
    """Advance one step: half reaction, transport of n then p, half reaction.

    Reaction substeps leave the charge density untouched cell by cell, so the
    potential only needs re-solving around the transport substeps.
    """
    if op is None:
        op = assemble_laplacian(grid)
    dt = cfg.dt
    tol = cfg.tol_linear

    def poisson(n, p, n_tr, guess):
        return solve_poisson(op, poisson_rhs(n, p, n_tr, fields, params), params.lam, tol=tol, x0=guess)

    n, p, n_tr = reaction_substep(state, 0.5 * dt, params, fields, tol=cfg.tol_scalar)
    half = State(state.t, n, p, n_tr, state.psi)

    psi = state.psi
    n_new, p_new = n, p
    for _ in range(cfg.gummel_iters):
        K_n = assemble_sg_operator(grid, psi + fields.v_n)
        n_new = transport_substep(half.replace(psi=psi), "n", dt, grid, fields, operator=K_n)
        psi = poisson(n_new, p, n_tr, psi)
        K_p = assemble_sg_operator(grid, -psi + fields.v_p)
        p_new = transport_substep(half.replace(psi=psi), "p", dt, grid, fields, operator=K_p)
        psi = poisson(n_new, p_new, n_tr, psi)

    moved = State(state.t, n_new, p_new, n_tr, psi)
    n, p, n_tr = reaction_substep(moved, 0.5 * dt, params, fields, tol=cfg.tol_scalar)
    psi = poisson(n, p, n_tr, psi)
    return State(state.t + dt, n, p, n_tr, psi)


def check_charge_neutrality(state: State, grid: Grid, fields: MaterialFields, params: ModelParams, compat_tol=None):
    rhs = poisson_rhs(state.n, state.p, state.n_tr, fields, params)
    if compat_tol is None:
        compat_tol = 1e-10 * (1.0 + float(np.sum(np.abs(rhs)) * grid.cell_volume))
    mismatch = cell_average(grid, rhs)
    if abs(mismatch) > compat_tol:
        raise ChargeNeutralityViolation(
            f"mean(n - p + eps n_tr - D) = {mismatch:.3e} exceeds {compat_tol:.3e}"
        )


def run(
    initial: State,
    cfg: StepperConfig,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    eq,
    op: NeumannLaplacian | None = None,
    window_fraction: float = 0.5,
    callback=None,
) -> TrajectoryLog:
    """Integrate to ``cfg.t_end`` and record an entropy report every ``sample_every`` steps.

    The log always contains the initial and the final state. After the run a
    decay fit of the relative entropy is attached when enough samples lie
    above round-off; otherwise ``fit_error`` says why not.
    """
    if op is None:
        op = assemble_laplacian(grid)
    check_charge_neutrality(initial, grid, fields, params)
    if np.any(initial.n < 0) or np.any(initial.p < 0):
        raise ValidationError("initial densities must be nonnegative")
    if np.any(initial.n_tr < 0) or np.any(initial.n_tr > 1):
        raise ValidationError("initial trap occupancy must lie in [0, 1]")
    psi = solve_poisson(
        op, poisson_rhs(initial.n, initial.p, initial.n_tr, fields, params), params.lam, tol=cfg.tol_linear
    )
    state = initial.replace(psi=psi)

    log = TrajectoryLog()
    log.append(entropy_report(state, eq, grid, fields, params, op))
    n_steps = cfg.n_steps
    for k in range(1, n_steps + 1):
        # times from k * dt so long runs do not accumulate round-off
        state = step(state, cfg, grid, fields, params, op).replace(t=k * cfg.dt)
        if k % cfg.sample_every == 0 or k == n_steps:
            log.append(entropy_report(state, eq, grid, fields, params, op))
        if callback is not None:
            callback(k, state)
    try:
        log.fit = fit_decay_rate(log, window_fraction=window_fraction)
    except InsufficientData as exc:
        log.fit_error = str(exc)
    log.final_state = state
    return log
