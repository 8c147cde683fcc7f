"""Domain types, grid construction and discrete integrals.

All fields live on cell centres of a uniform rectangular grid whose total
volume is normalised to one, so that ``cell_average`` is simultaneously the
integral and the mean of a piecewise-constant field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class TrapflowError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TrapflowError, ValueError):
    """A parameter lies outside its admissible domain."""


class CompatibilityViolation(TrapflowError):
    """Right-hand side of a pure Neumann problem does not have zero mean."""


class ChargeNeutralityViolation(TrapflowError):
    """Initial data do not carry the total charge fixed by the doping."""


class NonConvergence(TrapflowError):
    """An iterative solver failed to reach its tolerance.

    ``residual`` holds the last residual norm, ``history`` the trace.
    """

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = list(history) if history is not None else []


class RootBracketFailure(TrapflowError):
    """The scalar trap equation could not be bracketed in [0, 1]."""


class NonpositiveReference(TrapflowError):
    """A reference density that must be strictly positive is not."""


class InsufficientData(TrapflowError):
    """Too few usable samples for a decay fit."""


@dataclass(frozen=True)
class ModelParams:
    """Scalar model parameters.

    ``lam`` is the Debye-type constant in front of the Laplacian. ``eps`` is
    the trap lifetime (equivalently the density of trapped states) and must
    satisfy ``0 < eps <= eps0``.
    """

    n0: float = 1.0
    p0: float = 1.0
    tau_n: float = 1.0
    tau_p: float = 1.0
    eps: float = 1e-2
    eps0: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("n0", "p0", "tau_n", "tau_p", "eps", "eps0", "lam"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be positive and finite, got {value!r}")
        if self.eps > self.eps0:
            raise ValidationError(f"eps={self.eps!r} exceeds eps0={self.eps0!r}")

    def with_eps(self, eps: float) -> "ModelParams":
        return ModelParams(self.n0, self.p0, self.tau_n, self.tau_p, eps, self.eps0, self.lam)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred grid on the unit interval or unit square.

    Cells are numbered in C order (the last axis varies fastest). Only
    interior faces are stored; the absence of boundary faces is the
    no-flux closure. Each face is the ordered pair ``(left[k], right[k])``
    with ``right`` the neighbour in the positive axis direction.
    """

    dim: int
    shape: tuple
    spacing: tuple
    cell_volume: float
    centers: np.ndarray
    left: np.ndarray
    right: np.ndarray
    face_area: np.ndarray
    face_distance: np.ndarray
    face_axis: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_faces(self) -> int:
        return len(self.left)

    @property
    def volumes(self) -> np.ndarray:
        return np.full(self.n_cells, self.cell_volume)

    @property
    def conductance(self) -> np.ndarray:
        """Two-point transmissibility ``face_area / face_distance``."""
        return self.face_area / self.face_distance

    def check_cell_array(self, f, name="field") -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_cells,):
            raise ValueError(f"{name} has shape {f.shape}, expected ({self.n_cells},)")
        return f


def build_grid(dim: int, cells_per_axis) -> Grid:
    """Build a uniform grid with unit total volume.

    ``cells_per_axis`` is an int (used on every axis) or a sequence with one
    entry per axis, each at least 2.
    """
    if dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {dim!r}")
    if np.isscalar(cells_per_axis):
        shape = (int(cells_per_axis),) * dim
    else:
        shape = tuple(int(c) for c in cells_per_axis)
    if len(shape) != dim:
        raise ValidationError(f"expected {dim} cell counts, got {len(shape)}")
    if any(c < 2 for c in shape):
        raise ValidationError(f"need at least 2 cells per axis, got {shape}")

    spacing = tuple(1.0 / c for c in shape)
    cell_volume = float(np.prod(spacing))
    axes = [(np.arange(c) + 0.5) * h for c, h in zip(shape, spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)

    index = np.arange(int(np.prod(shape))).reshape(shape)
    left, right, area, dist, axis_id = [], [], [], [], []
    for ax in range(dim):
        lo = np.take(index, np.arange(shape[ax] - 1), axis=ax).ravel()
        hi = np.take(index, np.arange(1, shape[ax]), axis=ax).ravel()
        face_area = cell_volume / spacing[ax]
        left.append(lo)
        right.append(hi)
        area.append(np.full(lo.size, face_area))
        dist.append(np.full(lo.size, spacing[ax]))
        axis_id.append(np.full(lo.size, ax))

    return Grid(
        dim=dim,
        shape=shape,
        spacing=spacing,
        cell_volume=cell_volume,
        centers=centers,
        left=np.concatenate(left),
        right=np.concatenate(right),
        face_area=np.concatenate(area),
        face_distance=np.concatenate(dist),
        face_axis=np.concatenate(axis_id),
    )


@dataclass(frozen=True, eq=False)
class MaterialFields:
    """Doping and external potentials per cell.

    ``mu_n`` and ``mu_p`` are derived from ``v_n`` and ``v_p`` on
    construction and never set independently.
    """

    doping: np.ndarray
    v_n: np.ndarray
    v_p: np.ndarray
    mu_n: np.ndarray = field(init=False)
    mu_p: np.ndarray = field(init=False)

    def __post_init__(self):
        doping = np.asarray(self.doping, dtype=float)
        v_n = np.asarray(self.v_n, dtype=float)
        v_p = np.asarray(self.v_p, dtype=float)
        if not (doping.shape == v_n.shape == v_p.shape) or doping.ndim != 1:
            raise ValueError("doping, v_n and v_p must be 1-d arrays of equal length")
        object.__setattr__(self, "doping", doping)
        object.__setattr__(self, "v_n", v_n)
        object.__setattr__(self, "v_p", v_p)
        object.__setattr__(self, "mu_n", np.exp(-v_n))
        object.__setattr__(self, "mu_p", np.exp(-v_p))

    @classmethod
    def uniform(cls, grid: Grid, doping=0.0, v_n=0.0, v_p=0.0) -> "MaterialFields":
        def expand(a):
            a = np.asarray(a, dtype=float)
            return np.full(grid.n_cells, float(a)) if a.ndim == 0 else grid.check_cell_array(a)

        return cls(expand(doping), expand(v_n), expand(v_p))

    def with_doping(self, doping) -> "MaterialFields":
        return MaterialFields(doping, self.v_n, self.v_p)

    def mirrored(self, eps: float) -> "MaterialFields":
        """Fields of the electron-hole mirrored system (``D -> eps - D``)."""
        return MaterialFields(eps - self.doping, self.v_p, self.v_n)


@dataclass(frozen=True, eq=False)
class State:
    """Densities and self-consistent potential at time ``t``."""

    t: float
    n: np.ndarray
    p: np.ndarray
    n_tr: np.ndarray
    psi: np.ndarray

    def charge_density(self, eps: float) -> np.ndarray:
        return self.n - self.p + eps * self.n_tr

    def replace(self, **changes) -> "State":
        values = dict(t=self.t, n=self.n, p=self.p, n_tr=self.n_tr, psi=self.psi)
        values.update(changes)
        return State(**values)


@dataclass(frozen=True)
class EntropyReport:
    """Diagnostics of one state; norms measure the distance to equilibrium."""

    t: float
    entropy: float
    relative_entropy: float
    production: float
    charge: float
    l1_n: float
    l1_p: float
    linf_n: float
    linf_p: float
    linf_ntr: float
    h1_psi: float
    h2proxy_psi: float
    min_n: float
    min_p: float
    min_ntr: float
    max_ntr: float


def cell_average(grid: Grid, f) -> float:
    """Integral of a piecewise-constant field, equal to its mean since |Omega| = 1."""
    f = grid.check_cell_array(f)
    return float(np.sum(f) * grid.cell_volume)


def face_differences(grid: Grid, f) -> np.ndarray:
    """``f[right] - f[left]`` on every interior face."""
    f = np.asarray(f, dtype=float)
    return f[grid.right] - f[grid.left]


def dirichlet_form(grid: Grid, f, g=None) -> float:
    """Discrete ``integral grad f . grad g`` from two-point face differences."""
    df = face_differences(grid, f)
    dg = df if g is None else face_differences(grid, g)
    return float(np.sum(grid.conductance * df * dg))


def discrete_norms(grid: Grid, f, g) -> dict:
    """l1, l2, linf norms and the H1 seminorm of ``f - g``."""
    d = grid.check_cell_array(f, "f") - grid.check_cell_array(g, "g")
    vol = grid.cell_volume
    return {
        "l1": float(np.sum(np.abs(d)) * vol),
        "l2": float(np.sqrt(np.sum(d * d) * vol)),
        "linf": float(np.max(np.abs(d))),
        "h1_semi": float(np.sqrt(max(dirichlet_form(grid, d), 0.0))),
    }


def as_cell_array(grid: Grid, values: float | Sequence[float] | np.ndarray) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 0:
        return np.full(grid.n_cells, float(a))
    return grid.check_cell_array(a)
