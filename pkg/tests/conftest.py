import time
from pathlib import Path

import numpy as np
import pytest

from trapflow import MaterialFields, ModelParams, build_grid, relative_entropy
from trapflow.config import load_config, materialize
from trapflow.stepper import run

REPO = Path(__file__).resolve().parents[1]
REFERENCE_CONFIG = REPO / "configs" / "reference.yaml"


def reference_fields(grid):
    x = grid.centers[:, 0]
    return MaterialFields(
        0.3 * np.cos(np.pi * x) + 0.2,
        0.5 * np.cos(2 * np.pi * x),
        0.2 * np.sin(np.pi * x),
    )


@pytest.fixture
def unit_params():
    return ModelParams(n0=1.0, p0=1.0, tau_n=1.0, tau_p=1.0, eps=1e-2)


@pytest.fixture
def grid64():
    return build_grid(1, 64)


@pytest.fixture(scope="session")
def reference_scenario():
    return materialize(load_config(REFERENCE_CONFIG))


@pytest.fixture(scope="session")
def decay_run(reference_scenario):
    """The perturbed-equilibrium run with per-step monitors.

    Columns: t, min n, min p, min n_tr, 1 - max n_tr, relative entropy.
    """
    sc = reference_scenario

    def row(state):
        e_rel = relative_entropy(state, sc.equilibrium, sc.grid, sc.fields, sc.params)
        return (state.t, state.n.min(), state.p.min(), state.n_tr.min(), 1.0 - state.n_tr.max(), e_rel)

    monitors = [row(sc.initial)]

    def record(k, state):
        monitors.append(row(state))

    start = time.perf_counter()
    log = run(sc.initial, sc.config.stepper, sc.grid, sc.fields, sc.params, sc.equilibrium, op=sc.op, callback=record)
    elapsed = time.perf_counter() - start
    return {"log": log, "scenario": sc, "elapsed": elapsed, "monitors": np.array(monitors)}


ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
