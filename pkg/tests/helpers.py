"""Builders shared by several test modules."""

import numpy as np

from trapflow import assemble_laplacian, build_grid, cell_average, make_state, solve_poisson


def neutral_state(rng, grid, fields, params, op=None, spread=1.0):
    """Random admissible state carrying the total charge of the doping."""
    m = grid.n_cells
    n = 10 ** rng.uniform(-spread, spread, m)
    p = 10 ** rng.uniform(-spread, spread, m)
    ntr = rng.uniform(0, 1, m)
    gap = cell_average(grid, fields.doping) - cell_average(grid, n - p + params.eps * ntr)
    if gap >= 0:
        n = n + gap
    else:
        p = p - gap
    return make_state(n, p, ntr, grid, fields, params, op=op)


def smooth_state(eq, grid, params, fields, op=None):
    """Smooth perturbation of an equilibrium, renormalised to its charge."""
    x = grid.centers[:, 0]
    n = eq.n_inf * (1 + 0.3 * np.cos(np.pi * x))
    p = eq.p_inf * (1 - 0.2 * np.cos(2 * np.pi * x))
    ntr = eq.ntr_inf + 0.1 * np.sin(np.pi * x)
    gap = cell_average(grid, fields.doping) - cell_average(grid, n - p + params.eps * ntr)
    n = n + gap
    return make_state(n, p, ntr, grid, fields, params, op=op)


def manufactured_errors(sizes):
    """Max-norm errors of the 1D Poisson solve with exact solution cos(pi x) / pi^2."""
    errs = []
    for n in sizes:
        g = build_grid(1, n)
        x = g.centers[:, 0]
        psi = solve_poisson(assemble_laplacian(g), np.cos(np.pi * x), 1.0)
        errs.append(np.max(np.abs(psi - np.cos(np.pi * x) / np.pi**2)))
    return np.array(errs)
