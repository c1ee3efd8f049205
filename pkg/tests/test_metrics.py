import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cakecut.metrics import frobenius_norm, mse, normalize, psnr, psnr_from_mse, quality_report, relative_error


def test_frobenius_examples():
    assert frobenius_norm(np.zeros((3, 3))) == 0
    assert frobenius_norm(np.ones((2, 2))) == 2
    assert frobenius_norm(np.diag([3.0, 4.0])) == 5


def test_relative_error_examples(rng):
    u = rng.uniform(1, 255, size=(8, 8))
    assert relative_error(u, u) == 0
    assert relative_error(2 * u, u) == pytest.approx(100)
    assert relative_error(np.zeros_like(u), u) == pytest.approx(100)
    with pytest.raises(ZeroDivisionError):
        relative_error(u, np.zeros_like(u))
    with pytest.raises(ValueError):
        relative_error(u, u[:4])


def test_psnr_examples():
    u = np.full((4, 4), 100.0)
    assert psnr(u, u) == math.inf
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 255.0)) == pytest.approx(0.0, abs=1e-12)
    assert abs(psnr_from_mse(1.0) - 48.13) <= 0.01
    assert abs(psnr(u + 1, u) - 48.1308) < 1e-4


@given(seed=st.integers(0, 2**32 - 1), sigma=st.floats(0.01, 100))
def test_psnr_mse_identity(seed, sigma):
    g = np.random.default_rng(seed)
    u = g.uniform(0, 255, size=(16, 16))
    r = u + g.normal(0, sigma, size=u.shape)
    report = quality_report(r, u)
    assert report.mse == pytest.approx(mse(r, u), rel=0)
    assert abs(report.psnr_db - 10 * np.log10(255.0**2 / report.mse)) <= 1e-10
    assert report.re_percent >= 0


def test_normalize_examples():
    x = np.array([-2.0, 0.0, 2.0])
    assert normalize(x).tolist() == [0.0, 127.5, 255.0]
    assert normalize(x, "unit").tolist() == [0.0, 0.5, 1.0]
    assert not normalize(np.full((3, 3), 7.0)).any()


@given(seed=st.integers(0, 2**32 - 1), target=st.sampled_from(["unit", "byte"]))
def test_normalize_idempotent(seed, target):
    x = np.random.default_rng(seed).normal(size=(6, 5))
    once = normalize(x, target)
    np.testing.assert_allclose(normalize(once, target), once, atol=1e-12)


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.1, 10), b=st.floats(-100, 100))
def test_scale_detection_and_affine_invariance(seed, a, b):
    g = np.random.default_rng(seed)
    u = g.uniform(0, 255, size=(8, 8))
    r = u + g.normal(0, 10, size=u.shape)
    if abs(a - 1) > 1e-3:
        assert relative_error(a * r, u) != pytest.approx(relative_error(r, u), rel=1e-9)
    ref = normalize(u)
    assert psnr(normalize(a * r + b), ref) == pytest.approx(psnr(normalize(r), ref), rel=1e-9)


def test_report_dict():
    u = np.arange(16.0).reshape(4, 4)
    assert set(quality_report(u + 1, u).to_dict()) == {"re_percent", "psnr_db", "mse"}
