"""Scharfetter-Gummel fluxes and the implicit transport substep.

For a channel potential ``phi`` (``psi + V_n`` for electrons, ``-psi + V_p``
for holes) the flux leaving cell L through the face to R is
``c * (B(delta) u_L - B(-delta) u_R)`` with ``delta = phi_R - phi_L`` and
``B(x) = x / (exp(x) - 1)``. It vanishes on ``u = const * exp(-phi)``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid, MaterialFields, NonConvergence, State, ValidationError, face_differences

_SERIES_CUTOFF = 1e-4
_OVERFLOW_CUTOFF = 700.0


def bernoulli(x):
    """``x / expm1(x)``, continuous at 0 and overflow-safe for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_CUTOFF
    big = x > _OVERFLOW_CUTOFF
    mid = ~(small | big)
    xs = x[small]
    out[small] = 1.0 - 0.5 * xs + xs * xs / 12.0
    xb = x[big]
    out[big] = xb * np.exp(-xb)
    xm = x[mid]
    out[mid] = xm / np.expm1(xm)
    return out if out.ndim else float(out)


def sg_edge_flux(n_left, n_right, delta):
    """Two-point flux from left to right, before multiplying by the conductance."""
    return bernoulli(delta) * np.asarray(n_left, float) - bernoulli(-np.asarray(delta, float)) * np.asarray(
        n_right, float
    )


def channel_potential(state: State, fields: MaterialFields, channel: str) -> np.ndarray:
    if channel == "n":
        return state.psi + fields.v_n
    if channel == "p":
        return -state.psi + fields.v_p
    raise ValidationError(f"channel must be 'n' or 'p', got {channel!r}")


def edge_potential(grid: Grid, phi) -> np.ndarray:
    """``phi_R - phi_L`` per interior face."""
    return face_differences(grid, phi)


def edge_fluxes(grid: Grid, u, phi) -> np.ndarray:
    """Conductance-weighted SG fluxes on every interior face."""
    u = np.asarray(u, float)
    delta = edge_potential(grid, phi)
    return grid.conductance * sg_edge_flux(u[grid.left], u[grid.right], delta)


def assemble_sg_operator(grid: Grid, phi) -> sp.csr_matrix:
    """Matrix ``K`` with ``vol * du/dt = -K u`` for the SG transport.

    Off-diagonals are nonpositive and every column sums to zero, so
    ``vol/dt * I + K`` is an M-matrix and conserves ``sum(vol * u)``.
    """
    delta = edge_potential(grid, phi)
    c = grid.conductance
    bp = c * bernoulli(delta)
    bm = c * bernoulli(-delta)
    L, R = grid.left, grid.right
    rows = np.concatenate([L, L, R, R])
    cols = np.concatenate([L, R, L, R])
    vals = np.concatenate([bp, -bm, -bp, bm])
    n = grid.n_cells
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    return K


def transport_substep(
    state: State,
    channel: str,
    dt: float,
    grid: Grid,
    fields: MaterialFields,
    operator: sp.csr_matrix | None = None,
) -> np.ndarray:
    """One implicit Euler step of the drift-diffusion equation with frozen psi.

    Returns the updated density of ``channel`` ('n' or 'p'). A precomputed
    ``operator`` must come from ``assemble_sg_operator`` with the same
    channel potential.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt!r}")
    phi = channel_potential(state, fields, channel)
    u = state.n if channel == "n" else state.p
    if operator is None:
        operator = assemble_sg_operator(grid, phi)
    shift = grid.cell_volume / dt
    M = (operator + shift * sp.identity(grid.n_cells, format="csr")).tocsc()
    u = np.asarray(u, float)
    rhs = shift * u
    lu = spla.splu(M)
    u_solve = lu.solve(rhs)
    u_solve += lu.solve(rhs - M @ u_solve)
    if not np.all(np.isfinite(u_solve)):
        raise NonConvergence(f"transport solve for channel {channel!r} produced non-finite values")
    # flux-form closure: each face flux leaves one cell and enters the other,
    # so mass is conserved to summation round-off whatever the solve residual
    flux = edge_fluxes(grid, u_solve, phi)
    n = grid.n_cells
    div = np.bincount(grid.left, weights=flux, minlength=n) - np.bincount(grid.right, weights=flux, minlength=n)
    u_new = u - div / shift
    # round-off can leave -1e-300-sized entries; the M-matrix inverse is nonnegative
    return np.maximum(u_new, 0.0)
