"""Pure Neumann Poisson problem ``-lam * Laplace(psi) = f`` with zero-mean psi."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import CompatibilityViolation, Grid, NonConvergence, ValidationError


@dataclass(frozen=True, eq=False)
class NeumannLaplacian:
    """Two-point finite-volume Laplacian with no-flux faces.

    ``stiffness`` is the assembled Dirichlet form, ``sum_faces c (u_R - u_L)^2``
    with ``c = face_area / face_distance``. ``matrix`` is ``stiffness / cell_volume``
    and approximates ``-Laplace``. Both are symmetric with the constants as kernel.
    """

    grid: Grid
    stiffness: sp.csr_matrix
    matrix: sp.csr_matrix

    def apply(self, u) -> np.ndarray:
        """``L u`` assembled face by face, so constants map to exactly zero."""
        u = np.asarray(u, dtype=float)
        g = self.grid
        flux = g.conductance * (u[g.right] - u[g.left])
        n = g.n_cells
        out = np.bincount(g.left, weights=flux, minlength=n) - np.bincount(g.right, weights=flux, minlength=n)
        return -out / g.cell_volume

    @cached_property
    def _grounded_lu(self):
        # last cell pinned to zero; nonsingular because the face graph is connected
        return spla.splu(self.matrix[:-1, :-1].tocsc())

    def precondition(self, r) -> np.ndarray:
        """Zero-mean solution of ``L z = r`` for zero-mean ``r`` via the grounded factorization."""
        z = np.zeros_like(r)
        z[:-1] = self._grounded_lu.solve(r[:-1])
        return z - z.mean()


def assemble_laplacian(grid: Grid) -> NeumannLaplacian:
    c = grid.conductance
    L, R = grid.left, grid.right
    rows = np.concatenate([L, R, L, R])
    cols = np.concatenate([L, R, R, L])
    vals = np.concatenate([c, c, -c, -c])
    n = grid.n_cells
    stiffness = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    stiffness.sum_duplicates()
    return NeumannLaplacian(grid, stiffness, (stiffness / grid.cell_volume).tocsr())


def _l2(grid, r):
    return float(np.sqrt(np.dot(r, r) * grid.cell_volume))


def solve_poisson(
    op: NeumannLaplacian,
    f,
    lam: float,
    tol: float = 1e-12,
    compat_tol: float | None = None,
    x0=None,
    maxiter: int | None = None,
    precondition: bool = True,
) -> np.ndarray:
    """Solve ``lam * L psi = f`` on the zero-mean subspace.

    Conjugate gradients with the right-hand side and every iterate projected
    onto mean-zero fields. Converged when the (volume-weighted) l2 residual is
    at most ``tol * max(1, |f|_l2)``. With ``precondition`` the grounded
    sparse factorization serves as preconditioner, which is exact on the
    zero-mean subspace, so one or two iterations suffice.

    Raises
    ------
    CompatibilityViolation
        If ``|mean(f)| > compat_tol`` (default ``1e-10 * (1 + |f|_l1)``).
    NonConvergence
        If the residual target is not met within ``maxiter`` iterations.
    """
    grid = op.grid
    f = grid.check_cell_array(f, "f")
    if lam <= 0:
        raise ValidationError(f"lam must be positive, got {lam!r}")
    mean_f = float(np.mean(f))
    if compat_tol is None:
        compat_tol = 1e-10 * (1.0 + float(np.sum(np.abs(f)) * grid.cell_volume))
    if abs(mean_f) > compat_tol:
        raise CompatibilityViolation(
            f"mean of right-hand side is {mean_f:.3e}, exceeds {compat_tol:.3e}"
        )
    b = (f - mean_f) / lam
    target = tol * max(1.0, _l2(grid, f)) / lam
    if maxiter is None:
        maxiter = 10 * grid.n_cells + 100

    A = op.matrix
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    x -= x.mean()
    r = b - A @ x
    r -= r.mean()
    rnorm = _l2(grid, r)
    history = [rnorm]
    if rnorm <= target:
        return x
    M = op.precondition if precondition else (lambda v: v)
    z = M(r)
    d = z.copy()
    rz = np.dot(r, z)
    for _ in range(maxiter):
        Ad = A @ d
        alpha = rz / np.dot(d, Ad)
        x += alpha * d
        r -= alpha * Ad
        x -= x.mean()
        r -= r.mean()
        rnorm = _l2(grid, r)
        history.append(rnorm)
        if rnorm <= target:
            return x
        z = M(r)
        rz_new = np.dot(r, z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise NonConvergence(
        f"Poisson CG stalled at residual {rnorm * lam:.3e} after {maxiter} iterations",
        residual=rnorm * lam,
        history=history,
    )
