"""Trap-assisted recombination rates and the implicit reaction substep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MaterialFields, ModelParams, RootBracketFailure, State, ValidationError


@dataclass(frozen=True, eq=False)
class ReactionRates:
    r_n: np.ndarray
    r_p: np.ndarray


def rate_n(n, n_tr, params: ModelParams, fields: MaterialFields):
    return (n_tr - n / (params.n0 * fields.mu_n) * (1.0 - n_tr)) / params.tau_n


def rate_p(p, n_tr, params: ModelParams, fields: MaterialFields):
    return (1.0 - n_tr - p / (params.p0 * fields.mu_p) * n_tr) / params.tau_p


def eval_reactions(state: State, params: ModelParams, fields: MaterialFields) -> ReactionRates:
    return ReactionRates(
        rate_n(state.n, state.n_tr, params, fields),
        rate_p(state.p, state.n_tr, params, fields),
    )


def trap_steady_constants(n, p, params: ModelParams, fields: MaterialFields):
    """``(A, B)`` with ``R_p - R_n = A - B * n_tr`` for frozen ``n, p``."""
    inv_n = 1.0 / (params.tau_n * params.n0 * fields.mu_n)
    inv_p = 1.0 / (params.tau_p * params.p0 * fields.mu_p)
    A = 1.0 / params.tau_p + n * inv_n
    B = 1.0 / params.tau_p + p * inv_p + 1.0 / params.tau_n + n * inv_n
    return A, B


def frozen_trap_update(state: State, dt: float, params: ModelParams, fields: MaterialFields):
    """Implicit Euler for ``eps * d n_tr/dt = A - B n_tr`` with ``n, p`` held fixed."""
    A, B = trap_steady_constants(state.n, state.p, params, fields)
    return (params.eps * state.n_tr + dt * A) / (params.eps + dt * B)


def _coefficients(dt, params, fields):
    a = dt / params.tau_n
    b = dt / (params.tau_n * params.n0 * fields.mu_n)
    c = dt / params.tau_p
    e = dt / (params.tau_p * params.p0 * fields.mu_p)
    return a, b, c, e


def _implicit_np(s, n, p, a, b, c, e):
    n_new = (n + a * s) / (1.0 + b * (1.0 - s))
    p_new = (p + c * (1.0 - s)) / (1.0 + e * s)
    return n_new, p_new


def reaction_substep(
    state: State,
    dt: float,
    params: ModelParams,
    fields: MaterialFields,
    tol: float = 1e-14,
    max_iter: int = 200,
):
    """Implicit Euler for the per-cell reaction system.

    For a trial trap occupancy ``s`` the electron and hole equations are affine
    and are solved in closed form. What remains is the scalar equation
    ``eps (s - n_tr) + (n+(s) - n) - (p+(s) - p) = 0``, which is strictly
    increasing in ``s``, negative at 0 and positive at 1. It is solved with
    Newton's method safeguarded by a bisection bracket.

    Returns ``(n_new, p_new, n_tr_new)``. ``n - p + eps * n_tr`` is conserved
    cell by cell to round-off.
    """
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt!r}")
    n = np.asarray(state.n, float)
    p = np.asarray(state.p, float)
    ntr = np.asarray(state.n_tr, float)
    eps = params.eps
    a, b, c, e = _coefficients(dt, params, fields)

    def residual(s):
        n_new, p_new = _implicit_np(s, n, p, a, b, c, e)
        return eps * (s - ntr) + (n_new - n) - (p_new - p)

    def slope(s):
        dn = (a * (1.0 + b) + b * n) / (1.0 + b * (1.0 - s)) ** 2
        dp = (c * (1.0 + e) + e * p) / (1.0 + e * s) ** 2
        return eps + dn + dp

    lo = np.zeros_like(ntr)
    hi = np.ones_like(ntr)
    f_lo = residual(lo)
    f_hi = residual(hi)
    bad = ~(np.isfinite(f_lo) & np.isfinite(f_hi) & (f_lo <= 0) & (f_hi >= 0))
    if np.any(bad):
        idx = np.flatnonzero(bad)[:5]
        raise RootBracketFailure(f"cannot bracket trap occupancy in [0, 1] at cells {idx.tolist()}")

    # residual size below which f is indistinguishable from round-off
    noise = 8.0 * np.finfo(float).eps * (eps + np.abs(n) + np.abs(p))
    s = np.clip(ntr, 0.0, 1.0)
    for _ in range(max_iter):
        f = residual(s)
        neg = f < 0
        lo = np.where(neg, s, lo)
        hi = np.where(neg, hi, s)
        step = f / slope(s)
        trial = s - step
        outside = (trial < lo) | (trial > hi)
        settled = (f == 0) | (np.abs(f) <= noise)
        s_next = np.where(settled, s, np.where(outside, 0.5 * (lo + hi), trial))
        done = settled | (np.abs(s_next - s) <= tol)
        s = s_next
        if np.all(done):
            break
    s = np.clip(s, 0.0, 1.0)
    n_new, p_new = _implicit_np(s, n, p, a, b, c, e)
    # near s = 1 or s = 0 one ulp of s can shift n+ or p+ by far more than
    # round-off; the leftover residual goes into the larger density
    f = residual(s)
    into_n = n_new >= p_new
    n_new = np.where(into_n, np.maximum(n_new - f, 0.0), n_new)
    p_new = np.where(into_n, p_new, np.maximum(p_new + f, 0.0))
    return n_new, p_new, s
