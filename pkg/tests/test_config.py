import numpy as np
import pytest
from conftest import REFERENCE_CONFIG

from trapflow import ChargeNeutralityViolation, ValidationError, build_grid, cell_average
from trapflow.config import SchemaError, evaluate_profile, load_config, materialize, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg.stepper.dt == 1e-3
    assert cfg.cells == (64,) and cfg.dim == 1
    assert cfg.model.eps == 1e-2 and cfg.model.lam == 1.0
    assert cfg.neutralize is True
    assert cfg.outputs["trajectory"] == "trajectory.csv"


def test_reference_config_loads():
    cfg = load_config(REFERENCE_CONFIG)
    assert cfg.stepper.dt == 5e-3 and cfg.stepper.n_steps == 1600
    assert cfg.initial["zero_n_cells"] == [10]


@pytest.mark.parametrize(
    "text, path",
    [
        ("model: {bogus: 1}", "model.bogus"),
        ("nonsense: 1", "nonsense"),
        ("model: {eps: yes}", "model.eps"),
        ("model: [1, 2]", "model"),
        ("grid: {cells: 2.5}", "grid.cells"),
        ("fields: {doping: {profile: spiral}}", "fields.doping.profile"),
        ("fields: {doping: {profile: cosine, width: 1}}", "fields.doping.width"),
        ("fields: {doping: {amplitude: 1}}", "fields.doping"),
        ("neutralize: 1", "neutralize"),
        ("initial: {kind: random}", "initial.kind"),
        ("initial: {zero_n_cells: 3}", "initial.zero_n_cells"),
        ("outputs: {summary: 3}", "outputs.summary"),
        ("- 1\n- 2", "<document>"),
        ("model: {eps: [", "<document>"),
    ],
)
def test_schema_errors(text, path):
    with pytest.raises(SchemaError) as info:
        parse_config(text)
    assert info.value.path == path


@pytest.mark.parametrize(
    "text",
    [
        "model: {eps: 0.0}",
        "model: {eps: 2.0}",
        "model: {n0: -1.0}",
        "stepper: {dt: 0.0}",
        "initial: {kind: profiles, n_tr: 1.5}",
        "initial: {kind: profiles, n: -1.0}",
        "initial: {noise: 1.0}",
        "initial: {zero_n_cells: [64]}",
        "grid: {dim: 4}",
        "fields: {doping: [1.0, 2.0]}",
        "fields: {doping: {profile: gaussian, width: -0.1}}",
        "fields: {doping: {profile: piecewise, breaks: [0.5], values: [1.0]}}",
        "fields: {doping: {profile: cosine, axis: 1}}",
    ],
)
def test_validation_errors(text):
    with pytest.raises(ValidationError):
        parse_config(text)


def test_profiles():
    g = build_grid(1, 4)
    x = g.centers[:, 0]
    assert np.allclose(evaluate_profile(0.5, g), 0.5)
    assert np.allclose(evaluate_profile({"profile": "constant", "value": 2.0}, g), 2.0)
    assert np.allclose(evaluate_profile({"profile": "cosine", "amplitude": 2, "mode": 1, "offset": 1}, g), 1 + 2 * np.cos(np.pi * x))
    assert np.allclose(evaluate_profile({"profile": "sine", "mode": 2}, g), np.sin(2 * np.pi * x))
    assert np.array_equal(evaluate_profile({"profile": "piecewise", "breaks": [0.5], "values": [1, 3]}, g), [1, 1, 3, 3])
    assert np.array_equal(evaluate_profile([1, 2, 3, 4], g), [1, 2, 3, 4])
    gauss = evaluate_profile({"profile": "gaussian", "center": 0.5, "width": 0.25}, g)
    assert np.allclose(gauss, np.exp(-((x - 0.5) ** 2) / (2 * 0.0625)))
    g2 = build_grid(2, (2, 2))
    vals = evaluate_profile({"profile": "gaussian", "center": [0.25, 0.25], "width": 0.1}, g2)
    assert vals[0] == pytest.approx(1.0) and vals.argmax() == 0


def test_neutralize_shifts_doping():
    cfg = parse_config("initial: {kind: profiles, n: 2.0, p: 1.0, n_tr: 0.5}")
    sc = materialize(cfg)
    assert sc.doping_shift == pytest.approx(1.0 + 0.5e-2)
    rhs = sc.initial.n - sc.initial.p + sc.params.eps * sc.initial.n_tr - sc.fields.doping
    assert abs(cell_average(sc.grid, rhs)) <= 1e-14


def test_without_neutralize_imbalance_rejected():
    cfg = parse_config("neutralize: false\ninitial: {kind: profiles, n: 2.0, p: 1.0, n_tr: 0.5}")
    with pytest.raises(ChargeNeutralityViolation):
        materialize(cfg)


def test_equilibrium_initial_kind():
    sc = materialize(parse_config("initial: {kind: equilibrium}\nfields: {doping: {profile: cosine, amplitude: 0.2}}"))
    assert np.array_equal(sc.initial.n, sc.equilibrium.n_inf)
    assert abs(sc.doping_shift) <= 1e-12


def test_perturbed_initial_marks_cells():
    sc = materialize(load_config(REFERENCE_CONFIG))
    assert sc.initial.n[10] == 0.0
    assert sc.initial.n_tr[20] == 0.0 and sc.initial.n_tr[41] == 0.0
    assert sc.initial.n_tr[40] == 1.0


def test_with_eps():
    cfg = parse_config("")
    assert cfg.with_eps(0.5).model.eps == 0.5
    with pytest.raises(ValidationError):
        cfg.with_eps(2.0)
