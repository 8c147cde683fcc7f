"""Scenario documents: parsing, validation and materialisation.

A scenario is a YAML mapping with the sections ``model``, ``grid``,
``fields``, ``initial``, ``stepper``, ``outputs`` and ``sweep`` plus the flag
``neutralize``. Every section is optional; see ``DEFAULTS``. Spatial data are
given as *profiles*:

* a number, or ``{profile: constant, value: c}``
* ``{profile: cosine, amplitude: a, mode: k, offset: b, axis: 0}`` for
  ``b + a cos(k pi x)``, likewise ``sine``
* ``{profile: gaussian, amplitude: a, center: c, width: w, offset: b}``
* ``{profile: piecewise, breaks: [x1, ...], values: [v0, v1, ...], axis: 0}``
* a list, or ``{profile: array, values: [...]}``, with one entry per cell
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import yaml

from .core import (
    ChargeNeutralityViolation,
    Grid,
    MaterialFields,
    ModelParams,
    State,
    TrapflowError,
    ValidationError,
    build_grid,
    cell_average,
)
from .equilibrium import EquilibriumState, solve_equilibrium
from .poisson import NeumannLaplacian, assemble_laplacian
from .stepper import StepperConfig, make_state


class SchemaError(TrapflowError, ValueError):
    """Malformed scenario document; ``path`` locates the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS = {
    "model": {"n0": 1.0, "p0": 1.0, "tau_n": 1.0, "tau_p": 1.0, "eps": 1e-2, "eps0": 1.0, "lambda": 1.0},
    "grid": {"dim": 1, "cells": 64},
    "fields": {"doping": 0.0, "v_n": 0.0, "v_p": 0.0},
    "neutralize": True,
    "initial": {
        "kind": "equilibrium-perturbed",
        "seed": 0,
        "noise": 0.3,
        "trap_shift": 0.2,
        "zero_n_cells": [],
        "trap_zero_cells": [],
        "trap_full_cells": [],
        "n": 1.0,
        "p": 1.0,
        "n_tr": 0.5,
    },
    "stepper": {
        "dt": 1e-3,
        "t_end": 1.0,
        "gummel_iters": 1,
        "sample_every": 10,
        "tol_linear": 1e-12,
        "tol_scalar": 1e-14,
    },
    "outputs": {"trajectory": "trajectory.csv", "summary": "summary.json", "equilibrium": "equilibrium.json"},
    "sweep": {"max_ratio": 3.0, "window_fraction": 0.5},
}

INITIAL_KINDS = ("equilibrium", "equilibrium-perturbed", "profiles")
PROFILE_KEYS = {
    "constant": {"value"},
    "cosine": {"amplitude", "mode", "offset", "axis"},
    "sine": {"amplitude", "mode", "offset", "axis"},
    "gaussian": {"amplitude", "center", "width", "offset"},
    "piecewise": {"breaks", "values", "axis"},
    "array": {"values"},
}


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelParams
    dim: int
    cells: tuple
    fields: dict
    neutralize: bool
    initial: dict
    stepper: StepperConfig
    outputs: dict
    sweep: dict

    def with_eps(self, eps: float) -> "ScenarioConfig":
        return ScenarioConfig(
            self.model.with_eps(eps), self.dim, self.cells, self.fields, self.neutralize,
            self.initial, self.stepper, self.outputs, self.sweep,
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    """A materialised scenario ready to run."""

    config: ScenarioConfig
    grid: Grid
    fields: MaterialFields
    params: ModelParams
    op: NeumannLaplacian
    initial: State
    equilibrium: EquilibriumState
    doping_shift: float


def _merge(defaults, given, path):
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise SchemaError(path, f"expected a mapping, got {type(given).__name__}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise SchemaError(f"{path}.{key}", "unknown key")
        out[key] = value
    return out


def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise SchemaError(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _check_profile(desc, path):
    if isinstance(desc, (int, float)) and not isinstance(desc, bool):
        return
    if isinstance(desc, list):
        for i, v in enumerate(desc):
            _number(v, f"{path}[{i}]")
        return
    if not isinstance(desc, dict) or "profile" not in desc:
        raise SchemaError(path, "expected a number, a list or a mapping with a 'profile' key")
    kind = desc["profile"]
    if kind not in PROFILE_KEYS:
        raise SchemaError(f"{path}.profile", f"unknown profile {kind!r}; choose from {sorted(PROFILE_KEYS)}")
    for key in desc:
        if key != "profile" and key not in PROFILE_KEYS[kind]:
            raise SchemaError(f"{path}.{key}", f"not a parameter of profile {kind!r}")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario document, applying defaults."""
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise SchemaError("<document>", f"not valid YAML: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise SchemaError("<document>", "top level must be a mapping")
    for key in doc:
        if key not in DEFAULTS:
            raise SchemaError(key, "unknown section")

    model = _merge(DEFAULTS["model"], doc.get("model"), "model")
    model = {k: _number(v, f"model.{k}") for k, v in model.items()}
    params = ModelParams(
        n0=model["n0"], p0=model["p0"], tau_n=model["tau_n"], tau_p=model["tau_p"],
        eps=model["eps"], eps0=model["eps0"], lam=model["lambda"],
    )

    grid = _merge(DEFAULTS["grid"], doc.get("grid"), "grid")
    dim = _number(grid["dim"], "grid.dim", integer=True)
    cells = grid["cells"]
    if isinstance(cells, list):
        cells = tuple(_number(c, f"grid.cells[{i}]", integer=True) for i, c in enumerate(cells))
    else:
        cells = (_number(cells, "grid.cells", integer=True),) * dim
    build_grid(dim, cells)

    fields = _merge(DEFAULTS["fields"], doc.get("fields"), "fields")
    for key, desc in fields.items():
        _check_profile(desc, f"fields.{key}")

    neutralize = doc.get("neutralize", DEFAULTS["neutralize"])
    if not isinstance(neutralize, bool):
        raise SchemaError("neutralize", "expected true or false")

    initial = _merge(DEFAULTS["initial"], doc.get("initial"), "initial")
    if initial["kind"] not in INITIAL_KINDS:
        raise SchemaError("initial.kind", f"expected one of {INITIAL_KINDS}")
    initial["seed"] = _number(initial["seed"], "initial.seed", integer=True)
    initial["noise"] = _number(initial["noise"], "initial.noise")
    initial["trap_shift"] = _number(initial["trap_shift"], "initial.trap_shift")
    if not 0 <= initial["noise"] < 1:
        raise ValidationError("initial.noise must lie in [0, 1)")
    for key in ("zero_n_cells", "trap_zero_cells", "trap_full_cells"):
        if not isinstance(initial[key], list):
            raise SchemaError(f"initial.{key}", "expected a list of cell indices")
        initial[key] = [_number(c, f"initial.{key}[{i}]", integer=True) for i, c in enumerate(initial[key])]
    for key in ("n", "p", "n_tr"):
        _check_profile(initial[key], f"initial.{key}")

    st = _merge(DEFAULTS["stepper"], doc.get("stepper"), "stepper")
    stepper = StepperConfig(
        dt=_number(st["dt"], "stepper.dt"),
        t_end=_number(st["t_end"], "stepper.t_end"),
        gummel_iters=_number(st["gummel_iters"], "stepper.gummel_iters", integer=True),
        sample_every=_number(st["sample_every"], "stepper.sample_every", integer=True),
        tol_linear=_number(st["tol_linear"], "stepper.tol_linear"),
        tol_scalar=_number(st["tol_scalar"], "stepper.tol_scalar"),
    )

    outputs = _merge(DEFAULTS["outputs"], doc.get("outputs"), "outputs")
    for key, value in outputs.items():
        if not isinstance(value, str):
            raise SchemaError(f"outputs.{key}", "expected a file name")
    sweep = _merge(DEFAULTS["sweep"], doc.get("sweep"), "sweep")
    sweep = {k: _number(v, f"sweep.{k}") for k, v in sweep.items()}

    config = ScenarioConfig(params, dim, cells, fields, neutralize, initial, stepper, outputs, sweep)
    # profiles are only range-checked once a grid exists
    _validate_initial_ranges(config)
    return config


def _validate_initial_ranges(config: ScenarioConfig):
    grid = build_grid(config.dim, config.cells)
    for key in config.fields:
        evaluate_profile(config.fields[key], grid, f"fields.{key}")
    for key in ("zero_n_cells", "trap_zero_cells", "trap_full_cells"):
        for c in config.initial[key]:
            if not 0 <= c < grid.n_cells:
                raise ValidationError(f"initial.{key}: cell {c} outside 0..{grid.n_cells - 1}")
    if config.initial["kind"] == "profiles":
        n = evaluate_profile(config.initial["n"], grid, "initial.n")
        p = evaluate_profile(config.initial["p"], grid, "initial.p")
        ntr = evaluate_profile(config.initial["n_tr"], grid, "initial.n_tr")
        if np.any(n < 0) or np.any(p < 0):
            raise ValidationError("initial.n and initial.p must be nonnegative")
        if np.any(ntr < 0) or np.any(ntr > 1):
            raise ValidationError("initial.n_tr must lie in [0, 1]")


def evaluate_profile(desc, grid: Grid, path: str = "profile") -> np.ndarray:
    """Cell values of a profile description."""
    if isinstance(desc, (int, float)) and not isinstance(desc, bool):
        return np.full(grid.n_cells, float(desc))
    if isinstance(desc, list):
        desc = {"profile": "array", "values": desc}
    kind = desc["profile"]
    x = grid.centers
    if kind == "constant":
        return np.full(grid.n_cells, _number(desc.get("value", 0.0), f"{path}.value"))
    if kind in ("cosine", "sine"):
        axis = _number(desc.get("axis", 0), f"{path}.axis", integer=True)
        if not 0 <= axis < grid.dim:
            raise ValidationError(f"{path}.axis must be below dim={grid.dim}")
        a = _number(desc.get("amplitude", 1.0), f"{path}.amplitude")
        k = _number(desc.get("mode", 1), f"{path}.mode")
        b = _number(desc.get("offset", 0.0), f"{path}.offset")
        wave = np.cos if kind == "cosine" else np.sin
        return b + a * wave(k * np.pi * x[:, axis])
    if kind == "gaussian":
        a = _number(desc.get("amplitude", 1.0), f"{path}.amplitude")
        w = _number(desc.get("width", 0.1), f"{path}.width")
        b = _number(desc.get("offset", 0.0), f"{path}.offset")
        c = desc.get("center", 0.5)
        c = np.array([_number(v, f"{path}.center") for v in c]) if isinstance(c, list) else _number(c, f"{path}.center")
        if w <= 0:
            raise ValidationError(f"{path}.width must be positive")
        r2 = np.sum((x - c) ** 2, axis=1)
        return b + a * np.exp(-r2 / (2.0 * w * w))
    if kind == "piecewise":
        axis = _number(desc.get("axis", 0), f"{path}.axis", integer=True)
        breaks = [_number(v, f"{path}.breaks") for v in desc.get("breaks", [])]
        values = [_number(v, f"{path}.values") for v in desc.get("values", [])]
        if len(values) != len(breaks) + 1:
            raise ValidationError(f"{path}: need len(values) == len(breaks) + 1")
        if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
            raise ValidationError(f"{path}.breaks must increase")
        return np.asarray(values)[np.searchsorted(breaks, x[:, axis], side="right")]
    if kind == "array":
        values = np.asarray([_number(v, f"{path}.values") for v in desc.get("values", [])])
        if values.shape != (grid.n_cells,):
            raise ValidationError(f"{path}: expected {grid.n_cells} values, got {values.size}")
        return values
    raise SchemaError(f"{path}.profile", f"unknown profile {kind!r}")


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _initial_densities(config: ScenarioConfig, grid, fields, params, op):
    init = config.initial
    kind = init["kind"]
    if kind == "profiles":
        n = evaluate_profile(init["n"], grid, "initial.n")
        p = evaluate_profile(init["p"], grid, "initial.p")
        ntr = evaluate_profile(init["n_tr"], grid, "initial.n_tr")
    else:
        base = solve_equilibrium(grid, fields, params, op=op)
        n, p, ntr = base.n_inf.copy(), base.p_inf.copy(), base.ntr_inf.copy()
        if kind == "equilibrium-perturbed":
            rng = np.random.default_rng(init["seed"])
            amp = init["noise"]
            n *= rng.uniform(1.0 - amp, 1.0 + amp, grid.n_cells)
            p *= rng.uniform(1.0 - amp, 1.0 + amp, grid.n_cells)
            shift = init["trap_shift"]
            ntr = np.clip(ntr + rng.uniform(-shift, shift, grid.n_cells), 0.0, 1.0)
    n[init["zero_n_cells"]] = 0.0
    ntr[init["trap_zero_cells"]] = 0.0
    ntr[init["trap_full_cells"]] = 1.0
    return n, p, ntr


def materialize(config: ScenarioConfig) -> Scenario:
    """Build grid, fields, initial data and the matching equilibrium.

    With ``neutralize`` the doping is shifted by a constant so that the
    initial data carry exactly its total charge; the shift is reported.
    """
    params = config.model
    grid = build_grid(config.dim, config.cells)
    op = assemble_laplacian(grid)
    fields = MaterialFields(
        evaluate_profile(config.fields["doping"], grid, "fields.doping"),
        evaluate_profile(config.fields["v_n"], grid, "fields.v_n"),
        evaluate_profile(config.fields["v_p"], grid, "fields.v_p"),
    )
    n, p, ntr = _initial_densities(config, grid, fields, params, op)
    mismatch = cell_average(grid, n - p + params.eps * ntr - fields.doping)
    shift = 0.0
    if config.neutralize:
        shift = mismatch
        fields = fields.with_doping(fields.doping + shift)
    elif abs(mismatch) > 1e-10 * (1.0 + cell_average(grid, np.abs(fields.doping))):
        raise ChargeNeutralityViolation(
            f"initial data violate charge neutrality by {mismatch:.3e}; set neutralize: true"
        )
    eq = solve_equilibrium(grid, fields, params, op=op)
    if config.initial["kind"] == "equilibrium" and not any(
        config.initial[k] for k in ("zero_n_cells", "trap_zero_cells", "trap_full_cells")
    ):
        initial = eq.as_state()
    else:
        initial = make_state(n, p, ntr, grid, fields, params, op=op, tol=config.stepper.tol_linear)
    return Scenario(config, grid, fields, params, op, initial, eq, float(shift))
