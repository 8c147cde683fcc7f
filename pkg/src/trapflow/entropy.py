"""Entropy, relative entropy, entropy production and decay-rate fits.

Logarithms follow ``0 ln 0 = 0``; densities below ``DENSITY_FLOOR`` count as
exact zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ChargeNeutralityViolation,
    EntropyReport,
    Grid,
    InsufficientData,
    MaterialFields,
    ModelParams,
    NonpositiveReference,
    State,
    ValidationError,
    cell_average,
    dirichlet_form,
    discrete_norms,
)
from .poisson import NeumannLaplacian, assemble_laplacian
from .transport import sg_edge_flux

DENSITY_FLOOR = 1e-300
LN2 = float(np.log(2.0))


def xlogy(x, y):
    """``x * ln(y)`` with ``0 * ln(anything) = 0``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    zero = x <= DENSITY_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(np.where(zero, 1.0, y))
    return np.where(zero, 0.0, out)


def boltzmann(u, ref):
    """Pointwise ``u ln(u/ref) - u + ref``, nonnegative for ``ref > 0``."""
    u = np.asarray(u, float)
    ref = np.asarray(ref, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(u > DENSITY_FLOOR, u / ref, 1.0)
    return np.maximum(xlogy(u, ratio) - u + ref, 0.0)


def binary_kl(s, s_ref):
    """Pointwise ``s ln(s/s_ref) + (1-s) ln((1-s)/(1-s_ref))``."""
    s = np.asarray(s, float)
    s_ref = np.asarray(s_ref, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = xlogy(s, np.where(s > DENSITY_FLOOR, s / s_ref, 1.0))
        b = xlogy(1.0 - s, np.where(1.0 - s > DENSITY_FLOOR, (1.0 - s) / (1.0 - s_ref), 1.0))
    return np.maximum(a + b, 0.0)


def trap_entropy(s):
    """``int_{1/2}^{s} ln(r/(1-r)) dr = s ln s + (1-s) ln(1-s) + ln 2``."""
    s = np.asarray(s, float)
    return xlogy(s, s) + xlogy(1.0 - s, 1.0 - s) + LN2


def _op(grid, op):
    return assemble_laplacian(grid) if op is None else op


def entropy(state: State, grid: Grid, fields: MaterialFields, params: ModelParams) -> float:
    nref = params.n0 * fields.mu_n
    pref = params.p0 * fields.mu_p
    local = boltzmann(state.n, nref) + boltzmann(state.p, pref) + params.eps * trap_entropy(state.n_tr)
    field_energy = 0.5 * params.lam * dirichlet_form(grid, state.psi)
    return float(np.sum(local) * grid.cell_volume + field_energy)


def relative_entropy(
    state: State,
    eq,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    cross_check: bool = False,
    rtol: float = 1e-9,
) -> float:
    """Entropy relative to ``eq``, evaluated directly from the relative densities.

    With ``cross_check`` the result is compared against ``E(state) - E(eq)``;
    a mismatch above ``rtol * (1 + E)`` means the state does not carry the
    equilibrium charge and raises ``ChargeNeutralityViolation``.
    """
    local = (
        boltzmann(state.n, eq.n_inf)
        + boltzmann(state.p, eq.p_inf)
        + params.eps * binary_kl(state.n_tr, eq.ntr_inf)
    )
    dpsi = state.psi - eq.psi_inf
    value = float(np.sum(local) * grid.cell_volume + 0.5 * params.lam * dirichlet_form(grid, dpsi))
    if cross_check:
        e_state = entropy(state, grid, fields, params)
        e_eq = entropy(eq.as_state(), grid, fields, params)
        gap = abs(value - (e_state - e_eq))
        if gap > rtol * (1.0 + abs(e_state)):
            raise ChargeNeutralityViolation(
                f"relative entropy identity violated by {gap:.3e}; state charge differs from equilibrium"
            )
    return value


def _pair_dissipation(alpha, beta):
    """``(alpha - beta)(ln alpha - ln beta)`` with ``0`` at ``alpha = beta = 0``."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    za = alpha <= DENSITY_FLOOR
    zb = beta <= DENSITY_FLOOR
    both = za & zb
    one = za ^ zb
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (alpha - beta) * (np.log(np.where(za, 1.0, alpha)) - np.log(np.where(zb, 1.0, beta)))
    out = np.where(both, 0.0, out)
    out = np.where(one, np.inf, out)
    return np.abs(out)


def flux_dissipation(grid: Grid, u, phi) -> float:
    """Face sum of ``c * G * (w_L - w_R)`` with ``w = ln u + phi``.

    Equivalent to ``c * G^2 / u_edge`` where ``u_edge`` is the SG-weighted
    logarithmic mean of the Slotboom variables; it reduces to the plain
    logarithmic mean of the two densities when ``phi`` is flat.
    """
    u = np.asarray(u, float)
    L, R = grid.left, grid.right
    delta = phi[R] - phi[L]
    G = sg_edge_flux(u[L], u[R], delta)
    uL, uR = u[L], u[R]
    zL = uL <= DENSITY_FLOOR
    zR = uR <= DENSITY_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        dw = np.log(np.where(zL, 1.0, uL)) - np.log(np.where(zR, 1.0, uR)) - delta
    terms = np.abs(G) * np.abs(dw)
    terms = np.where(zL & zR, 0.0, terms)
    terms = np.where((zL ^ zR) & (np.abs(G) > 0), np.inf, terms)
    return float(np.sum(grid.conductance * terms))


def reaction_dissipation(state: State, params: ModelParams, fields: MaterialFields) -> np.ndarray:
    """Cellwise ``-R_n ln x - R_p ln y`` in the nonnegative regrouped form."""
    ntr = np.asarray(state.n_tr, float)
    alpha = ntr
    beta = state.n * (1.0 - ntr) / (params.n0 * fields.mu_n)
    gamma = 1.0 - ntr
    eta = state.p * ntr / (params.p0 * fields.mu_p)
    return _pair_dissipation(alpha, beta) / params.tau_n + _pair_dissipation(gamma, eta) / params.tau_p


def entropy_production(state: State, grid: Grid, fields: MaterialFields, params: ModelParams) -> float:
    """Entropy production; ``inf`` when a log argument degenerates with nonzero weight."""
    flux = flux_dissipation(grid, state.n, state.psi + fields.v_n) + flux_dissipation(
        grid, state.p, -state.psi + fields.v_p
    )
    reaction = float(np.sum(reaction_dissipation(state, params, fields)) * grid.cell_volume)
    return flux + reaction


def entropy_report(
    state: State,
    eq,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    op: NeumannLaplacian | None = None,
) -> EntropyReport:
    op = _op(grid, op)
    dpsi = state.psi - eq.psi_inf
    nn = discrete_norms(grid, state.n, eq.n_inf)
    pn = discrete_norms(grid, state.p, eq.p_inf)
    tn = discrete_norms(grid, state.n_tr, eq.ntr_inf)
    lap = op.matrix @ dpsi
    h1 = float(np.sqrt(max(dirichlet_form(grid, dpsi), 0.0)))
    h2proxy = float(np.sqrt(np.sum(lap * lap) * grid.cell_volume)) + h1
    return EntropyReport(
        t=float(state.t),
        entropy=entropy(state, grid, fields, params),
        relative_entropy=relative_entropy(state, eq, grid, fields, params),
        production=entropy_production(state, grid, fields, params),
        charge=cell_average(grid, state.charge_density(params.eps)),
        l1_n=nn["l1"],
        l1_p=pn["l1"],
        linf_n=nn["linf"],
        linf_p=pn["linf"],
        linf_ntr=tn["linf"],
        h1_psi=h1,
        h2proxy_psi=h2proxy,
        min_n=float(np.min(state.n)),
        min_p=float(np.min(state.p)),
        min_ntr=float(np.min(state.n_tr)),
        max_ntr=float(np.max(state.n_tr)),
    )


def ckp_lower_bound(f, g, grid: Grid):
    """Both sides of the Csiszar-Kullback-Pinsker-type bound.

    ``lhs = int (f ln(f/g) - f + g)`` and
    ``rhs = 3 / (2 mean(f) + 4 mean(g)) * |f - g|_1^2``; ``lhs >= rhs``.
    """
    f = grid.check_cell_array(f, "f")
    g = grid.check_cell_array(g, "g")
    if np.any(g <= 0):
        raise NonpositiveReference("reference density g must be strictly positive")
    if np.any(f < 0):
        raise ValidationError("f must be nonnegative")
    lhs = float(np.sum(boltzmann(f, g)) * grid.cell_volume)
    l1 = float(np.sum(np.abs(f - g)) * grid.cell_volume)
    rhs = 3.0 / (2.0 * cell_average(grid, f) + 4.0 * cell_average(grid, g)) * l1 * l1
    return lhs, rhs


def pinsker_kernel(u):
    """``(2u + 4)(u ln u - u + 1) - 3 (u - 1)^2``, nonnegative for ``u >= 0``."""
    u = np.asarray(u, float)
    return (2.0 * u + 4.0) * (xlogy(u, u) - u + 1.0) - 3.0 * (u - 1.0) ** 2


def _sample_nonneg(rng, size):
    """Half uniform on [0, 10], half log-uniform on [1e-8, 1e8]."""
    k = size // 2
    return np.concatenate([rng.uniform(0.0, 10.0, k), 10.0 ** rng.uniform(-8.0, 8.0, size - k)])


def check_elementary_inequalities(samples: int, rng_seed: int = 0, flip: bool = False) -> dict:
    """Randomised check of three scalar inequalities.

    * ``(a - a0)(b - b0) <= (sqrt(ab) - sqrt(a0 b0))^2``
    * ``4 (sqrt x - sqrt y)^2 <= (x - y) ln(x/y)``
    * ``pinsker_kernel(u) >= 0``

    Margins are ``(larger side - smaller side) / scale`` where ``scale`` is
    the magnitude of the terms being compared, so round-off stays near
    machine precision. ``flip`` reverses every inequality to exercise the
    failure path.
    """
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples!r}")
    rng = np.random.default_rng(rng_seed)
    sign = -1.0 if flip else 1.0
    a, a0, b, b0 = (rng.permutation(_sample_nonneg(rng, samples)) for _ in range(4))
    big = (np.sqrt(a * b) - np.sqrt(a0 * b0)) ** 2
    small = (a - a0) * (b - b0)
    m1 = sign * (big - small) / (1.0 + a * b + a0 * b0 + a * b0 + a0 * b)

    x = rng.permutation(_sample_nonneg(rng, samples))
    y = np.maximum(rng.permutation(_sample_nonneg(rng, samples)), 1e-300)
    log_ratio = np.log(np.maximum(x, 1e-300)) - np.log(y)
    big = (x - y) * log_ratio
    small = 4.0 * (np.sqrt(x) - np.sqrt(y)) ** 2
    m2 = sign * (big - small) / (1.0 + (x + y) * (1.0 + np.abs(log_ratio)))

    u = rng.permutation(_sample_nonneg(rng, samples))
    h = pinsker_kernel(u)
    scale = 1.0 + (2.0 * u + 4.0) * (np.abs(xlogy(u, u)) + u + 1.0) + 3.0 * (u - 1.0) ** 2
    m3 = sign * h / scale

    report = {}
    for name, m in (("product_sqrt", m1), ("log_sqrt", m2), ("pinsker_kernel", m3)):
        worst = float(np.min(m))
        report[name] = {"worst_margin": worst, "passed": bool(worst >= -1e-12)}
    report["passed"] = all(v["passed"] for v in report.values())
    return report


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    window: tuple


def fit_decay_rate(times, values=None, window_fraction: float = 0.5, floor: float | None = None) -> DecayFit:
    """Least-squares fit of ``ln(value)`` against ``t`` on the tail of a series.

    ``times`` may be a trajectory log, in which case its relative entropies
    are fitted. Only samples above ``floor`` (default ``10 * machine eps``)
    enter; the last ``window_fraction`` of those is used.
    """
    if values is None:
        times, values = times.times, times.column("relative_entropy")
    t = np.asarray(times, float)
    v = np.asarray(values, float)
    if floor is None:
        floor = 10.0 * np.finfo(float).eps
    if not 0 < window_fraction <= 1:
        raise ValidationError("window_fraction must lie in (0, 1]")
    keep = np.isfinite(v) & (v > floor)
    t, v = t[keep], v[keep]
    n_tail = int(np.ceil(window_fraction * t.size))
    if n_tail < 10:
        raise InsufficientData(f"only {n_tail} usable samples in the fit window (need 10)")
    t, y = t[-n_tail:], np.log(v[-n_tail:])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return DecayFit(rate=float(-slope), intercept=float(intercept), r_squared=min(r2, 1.0), window=(float(t[0]), float(t[-1])))
