"""Equilibrium state via the shifted nonlinear Poisson equation.

With ``y = psi_inf - ln n_star`` the stationary problem decouples into the
local monotone equation

    lam * L y - exp(-y - V_n) + n0 p0 exp(y - V_p) - eps / (1 + n0 exp(y)) = -D

followed by ``n_star = exp(-mean(y))`` and ``psi_inf = y - mean(y)``. The
left-hand side is the gradient of a strictly convex energy, so Newton's method
with backtracking on that energy converges from ``y = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid, MaterialFields, ModelParams, NonConvergence, State, cell_average
from .poisson import NeumannLaplacian, assemble_laplacian
from .reactions import rate_n, rate_p
from .transport import sg_edge_flux


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    psi_inf: np.ndarray
    n_inf: np.ndarray
    p_inf: np.ndarray
    ntr_inf: np.ndarray
    n_star: float
    p_star: float
    residuals: dict = field(default_factory=dict)
    newton_history: tuple = ()

    def as_state(self, t: float = 0.0) -> State:
        return State(t, self.n_inf.copy(), self.p_inf.copy(), self.ntr_inf.copy(), self.psi_inf.copy())


def _nonlinearity(y, params, fields):
    """Local part ``g(y)`` of the shifted equation and its derivative."""
    en = np.exp(-y - fields.v_n)
    ep = params.n0 * params.p0 * np.exp(y - fields.v_p)
    q = params.n0 * np.exp(y)
    trap = params.eps / (1.0 + q)
    g = -en + ep - trap
    dg = en + ep + params.eps * q / (1.0 + q) ** 2
    return g, dg


def _energy(y, op, params, fields):
    """Convex functional whose gradient is ``vol * residual``."""
    en = np.exp(-y - fields.v_n)
    ep = params.n0 * params.p0 * np.exp(y - fields.v_p)
    # eps * (ln(1 + n0 e^y) - y), written without overflow
    trap = params.eps * np.logaddexp(np.log(params.n0), -y)
    local = np.sum(en + ep + trap + fields.doping * y) * op.grid.cell_volume
    return 0.5 * params.lam * float(y @ (op.stiffness @ y)) + float(local)


def shifted_residual(y, op, params, fields) -> np.ndarray:
    g, _ = _nonlinearity(y, params, fields)
    return params.lam * (op.matrix @ y) + g + fields.doping


def shifted_jacobian(y, op, params, fields) -> sp.csr_matrix:
    _, dg = _nonlinearity(y, params, fields)
    return (params.lam * op.matrix + sp.diags(dg)).tocsr()


def _residual_scale(y, op, params, fields) -> float:
    """Magnitude of the largest term entering the residual, at least 1."""
    en = np.exp(-y - fields.v_n)
    ep = params.n0 * params.p0 * np.exp(y - fields.v_p)
    terms = params.lam * (abs(op.matrix) @ np.abs(y)) + en + ep + params.eps + np.abs(fields.doping)
    return max(1.0, float(np.max(terms)))


def _at_floor(y, r, op, params, fields, tol) -> bool:
    return float(np.max(np.abs(r))) <= tol * _residual_scale(y, op, params, fields)


def monotonicity_margin(params: ModelParams, fields: MaterialFields) -> np.ndarray:
    """Lower bound on the local derivative, ``2 sqrt(n0 p0) exp(-(V_n + V_p)/2)``."""
    return 2.0 * np.sqrt(params.n0 * params.p0) * np.exp(-0.5 * (fields.v_n + fields.v_p))


def solve_equilibrium(
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    tol: float = 1e-12,
    max_iter: int = 100,
    op: NeumannLaplacian | None = None,
) -> EquilibriumState:
    """Compute ``(n_inf, p_inf, ntr_inf, psi_inf)`` and the constants ``n_star, p_star``.

    Raises
    ------
    NonConvergence
        If the max-norm residual exceeds ``tol`` after ``max_iter`` Newton steps;
        the exception carries the residual trace. A residual above ``tol`` is
        accepted only once the Newton correction is at machine precision and
        the residual is below ``tol`` times the largest assembled term.
    """
    if op is None:
        op = assemble_laplacian(grid)
    vol = grid.cell_volume
    y = np.zeros(grid.n_cells)
    r = shifted_residual(y, op, params, fields)
    energy = _energy(y, op, params, fields)
    history = [float(np.max(np.abs(r)))]
    for _ in range(max_iter):
        if history[-1] <= tol:
            break
        J = shifted_jacobian(y, op, params, fields)
        d = -spla.spsolve(J.tocsc(), r)
        # round-off floor: on fine grids lam * L y carries errors far above tol
        if np.max(np.abs(d)) <= 1e-14 * (1.0 + np.max(np.abs(y))):
            if history[-1] <= tol * _residual_scale(y, op, params, fields):
                break
        slope = vol * float(r @ d)
        t = 1.0
        while True:
            y_trial = y + t * d
            e_trial = _energy(y_trial, op, params, fields)
            r_trial = shifted_residual(y_trial, op, params, fields)
            rmax = float(np.max(np.abs(r_trial)))
            # descent in the convex energy and in the residual; energy
            # differences drown in round-off close to the root
            decrease = e_trial <= energy + 1e-4 * t * slope or abs(e_trial - energy) <= 1e-13 * (1 + abs(energy))
            if decrease and rmax < history[-1]:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if t < 1e-12:
            if _at_floor(y, r, op, params, fields, tol):
                break
            raise NonConvergence("equilibrium line search failed", residual=history[-1], history=history)
        y, r, energy = y_trial, r_trial, e_trial
        history.append(rmax)
    else:
        if history[-1] > tol and not _at_floor(y, r, op, params, fields, tol):
            raise NonConvergence(
                f"equilibrium Newton stalled at residual {history[-1]:.3e}",
                residual=history[-1],
                history=history,
            )

    mean_y = cell_average(grid, y)
    n_star = float(np.exp(-mean_y))
    p_star = params.n0 * params.p0 / n_star
    psi = y - mean_y
    n_inf = np.exp(-y - fields.v_n)
    p_inf = params.n0 * params.p0 * np.exp(y - fields.v_p)
    ntr_inf = 1.0 / (1.0 + params.n0 * np.exp(y))
    eq = EquilibriumState(psi, n_inf, p_inf, ntr_inf, n_star, p_star, {}, tuple(history))
    object.__setattr__(eq, "residuals", equilibrium_residuals(eq, grid, fields, params, op))
    return eq


def equilibrium_residuals(
    eq: EquilibriumState,
    grid: Grid,
    fields: MaterialFields,
    params: ModelParams,
    op: NeumannLaplacian | None = None,
) -> dict:
    """Max-norm certificates that the discrete stationary system holds."""
    if op is None:
        op = assemble_laplacian(grid)
    eps = params.eps
    psi = eq.psi_inf
    rhs = eq.n_inf - eq.p_inf + eps * eq.ntr_inf - fields.doping
    poisson_res = np.max(np.abs(params.lam * (op.matrix @ psi) - rhs))

    ntr_star = eq.n_star / (eq.n_star + params.n0 * np.exp(psi))
    scalar_res = abs(
        eq.n_star * cell_average(grid, np.exp(-psi - fields.v_n))
        - eq.p_star * cell_average(grid, np.exp(psi - fields.v_p))
        + eps * cell_average(grid, ntr_star)
        - cell_average(grid, fields.doping)
    )
    rn_res = np.max(np.abs(rate_n(eq.n_inf, eq.ntr_inf, params, fields)))
    rp_res = np.max(np.abs(rate_p(eq.p_inf, eq.ntr_inf, params, fields)))

    L, R = grid.left, grid.right
    phi_n = psi + fields.v_n
    phi_p = -psi + fields.v_p
    gn = sg_edge_flux(eq.n_inf[L], eq.n_inf[R], phi_n[R] - phi_n[L])
    gp = sg_edge_flux(eq.p_inf[L], eq.p_inf[R], phi_p[R] - phi_p[L])
    flux_res = max(np.max(np.abs(gn), initial=0.0), np.max(np.abs(gp), initial=0.0))
    return {
        "poisson_res": float(poisson_res),
        "scalar_res": float(scalar_res),
        "rn_res": float(rn_res),
        "rp_res": float(rp_res),
        "flux_res": float(flux_res),
    }
