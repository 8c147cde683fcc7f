import pytest

from trapflow import ValidationError
from trapflow.verify import run_verify


def test_all_suites_pass():
    report = run_verify(seed=5, samples=5000)
    assert report["passed"]
    assert set(report) == {"elementary", "ckp", "scharfetter_gummel", "conservation", "passed"}
    assert report["scharfetter_gummel"]["antisymmetry_max"] == 0.0
    assert report["conservation"]["reaction_charge_error"] <= 1e-13


def test_flip_fails():
    report = run_verify(seed=5, samples=2000, flip=True)
    assert not report["passed"]
    assert not report["elementary"]["passed"] and not report["ckp"]["passed"]


def test_reproducible():
    assert run_verify(seed=9, samples=1000) == run_verify(seed=9, samples=1000)


def test_rejects_empty_sample():
    with pytest.raises(ValidationError):
        run_verify(samples=0)
