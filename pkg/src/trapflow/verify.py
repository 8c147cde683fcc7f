"""Randomised property suite behind ``trapflow verify``."""

from __future__ import annotations

import numpy as np

from .core import MaterialFields, ModelParams, State, ValidationError, build_grid
from .entropy import check_elementary_inequalities, ckp_lower_bound
from .reactions import reaction_substep
from .transport import sg_edge_flux, transport_substep


def _ckp_suite(rng, pairs, flip):
    worst = np.inf
    for _ in range(pairs):
        cells = int(rng.integers(2, 33))
        grid = build_grid(1, cells)
        g = 10.0 ** rng.uniform(-3, 3, cells)
        f = 10.0 ** rng.uniform(-3, 3, cells) * (rng.random(cells) > 0.1)
        lhs, rhs = ckp_lower_bound(f, g, grid)
        margin = (lhs - rhs) / (1.0 + abs(lhs))
        worst = min(worst, -margin if flip else margin)
    return {"worst_margin": float(worst), "passed": bool(worst >= -1e-12)}


def _sg_suite(rng, samples):
    delta = rng.normal(0.0, 5.0, samples)
    phi_l = rng.normal(0.0, 3.0, samples)
    c = 10.0 ** rng.uniform(-2, 2, samples)
    gibbs = sg_edge_flux(c * np.exp(-phi_l), c * np.exp(-phi_l - delta), delta)
    scale = c * np.exp(-phi_l) * (1.0 + np.abs(delta))
    gibbs_worst = float(np.max(np.abs(gibbs) / scale))
    nl, nr = rng.uniform(0, 5, samples), rng.uniform(0, 5, samples)
    anti = sg_edge_flux(nl, nr, delta) + sg_edge_flux(nr, nl, -delta)
    anti_worst = float(np.max(np.abs(anti)))
    return {
        "gibbs_max_flux": gibbs_worst,
        "antisymmetry_max": anti_worst,
        "passed": bool(gibbs_worst <= 1e-13 and anti_worst == 0.0),
    }


def _conservation_suite(rng, samples):
    cells = max(2, min(samples, 4096))
    params = ModelParams(
        n0=float(10 ** rng.uniform(-1, 1)), p0=float(10 ** rng.uniform(-1, 1)),
        eps=float(10 ** rng.uniform(-6, 0)), eps0=1.0,
    )
    fields = MaterialFields(np.zeros(cells), rng.normal(0, 1, cells), rng.normal(0, 1, cells))
    n = 10.0 ** rng.uniform(-4, 1, cells)
    p = 10.0 ** rng.uniform(-4, 1, cells)
    ntr = rng.uniform(0, 1, cells)
    state = State(0.0, n, p, ntr, np.zeros(cells))
    worst_charge = 0.0
    box_ok = True
    for dt in (1e-4, 1e-2, 1.0, 1e2):
        n1, p1, t1 = reaction_substep(state, dt, params, fields)
        err = np.abs((n1 - p1 + params.eps * t1) - (n - p + params.eps * ntr)) / (1.0 + n + p)
        worst_charge = max(worst_charge, float(err.max()))
        box_ok &= bool(np.all(n1 >= 0) and np.all(p1 >= 0) and np.all((t1 >= 0) & (t1 <= 1)))

    grid = build_grid(1, 64)
    x = grid.centers[:, 0]
    worst_mass = 0.0
    positive = True
    for _ in range(5):
        u = rng.uniform(0, 2, 64)
        psi = rng.normal(0, 1) * np.cos(np.pi * x) + rng.normal(0, 1) * np.sin(2 * np.pi * x)
        f = MaterialFields(np.zeros(64), np.zeros(64), np.zeros(64))
        st = State(0.0, u, u, np.full(64, 0.5), psi)
        u1 = transport_substep(st, "n", 0.1, grid, f)
        worst_mass = max(worst_mass, abs(u1.sum() - u.sum()) / u.sum())
        positive &= bool(np.all(u1 >= 0))
    return {
        "reaction_charge_error": worst_charge,
        "reaction_box": box_ok,
        "transport_mass_error": float(worst_mass),
        "transport_positive": positive,
        "passed": bool(worst_charge <= 1e-13 and box_ok and worst_mass <= 1e-12 and positive),
    }


def run_verify(seed: int = 0, samples: int = 100_000, flip: bool = False) -> dict:
    """Run every property suite; ``flip`` reverses the inequality checks."""
    if samples < 1:
        raise ValidationError(f"samples must be >= 1, got {samples!r}")
    rng = np.random.default_rng(seed)
    report = {
        "elementary": check_elementary_inequalities(samples, rng_seed=seed, flip=flip),
        "ckp": _ckp_suite(rng, min(samples, 10_000), flip),
        "scharfetter_gummel": _sg_suite(rng, samples),
        "conservation": _conservation_suite(rng, samples),
    }
    report["passed"] = all(v["passed"] for v in report.values())
    return report
