import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cakecut.hadamard import extract_row, ordered_hadamard
from cakecut.ordering import PatternShape, cc_order, make_order, natural_order, random_order
from cakecut.phantom import head_phantom
from cakecut.sensing import (
    MeasurementSet,
    NoiseModel,
    SensingPlan,
    apply_adjoint,
    apply_sensing,
    complementary_rows,
    measure,
    save_measurements,
)


def plan_for(p, q, m, method="cc_ascending", **kw):
    shape = PatternShape(p, q)
    order = random_order(shape, 3) if method == "random" else make_order(shape, method)
    return SensingPlan(shape, order, m, **kw)


def test_all_ones_first_measurement():
    plan = plan_for(4, 4, 1)
    assert apply_sensing(np.ones((4, 4)), plan).tolist() == [16.0]


def test_zero_image():
    plan = plan_for(8, 8, 17, "random")
    assert np.array_equal(apply_sensing(np.zeros((8, 8)), plan), np.zeros(17))


def test_matches_dense_rows(rng):
    plan = plan_for(8, 8, 64)
    x = rng.integers(0, 256, size=(8, 8))
    dense = ordered_hadamard(6, "sequency")[plan.selected]
    assert np.array_equal(apply_sensing(x, plan), dense @ x.reshape(-1))


def test_pixel_permutation_matches_dense(rng):
    plan = plan_for(8, 8, 20, "random")
    x = rng.integers(0, 256, size=(8, 8))
    dense = ordered_hadamard(6, "sequency")[plan.selected]
    assert np.array_equal(apply_sensing(x, plan), dense @ x.reshape(-1)[plan.pixel_permutation])


@pytest.mark.parametrize("method", ["cc_ascending", "random"])
def test_adjoint_dot_product(method, rng):
    plan = plan_for(8, 8, 13, method)
    for _ in range(20):
        x = rng.normal(size=(8, 8))
        y = rng.normal(size=13)
        lhs = apply_sensing(x, plan) @ y
        rhs = np.sum(x * apply_adjoint(y, plan))
        assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), 1.0)


def test_adjoint_full_sampling_and_unit(rng):
    plan = plan_for(4, 8, 32, "random")
    x = rng.normal(size=(4, 8))
    np.testing.assert_allclose(apply_adjoint(apply_sensing(x, plan), plan), 32 * x, atol=1e-10)
    plan = plan_for(4, 4, 3)
    e = np.array([1.0, 0.0, 0.0])
    assert np.array_equal(apply_adjoint(e, plan), np.ones((4, 4)))


def test_shape_errors():
    plan = plan_for(4, 4, 3)
    with pytest.raises(ValueError):
        apply_sensing(np.ones((4, 8)), plan)
    with pytest.raises(ValueError):
        apply_adjoint(np.ones(4), plan)
    with pytest.raises(ValueError):
        SensingPlan(PatternShape(4, 4), cc_order(PatternShape(2, 2)), 2)
    with pytest.raises(ValueError):
        SensingPlan(PatternShape(2, 2), cc_order(PatternShape(2, 2)), 5)
    with pytest.raises(ValueError):
        SensingPlan(PatternShape(2, 2), cc_order(PatternShape(2, 2)), 0)


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_linearity(seed, a, b):
    g = np.random.default_rng(seed)
    plan = plan_for(8, 4, 11, "random")
    x, z = g.normal(size=(2, 8, 4))
    lhs = apply_sensing(a * x + b * z, plan)
    rhs = a * apply_sensing(x, plan) + b * apply_sensing(z, plan)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 6))
def test_parseval(seed, k):
    side = 1 << (k // 2)
    shape = PatternShape(side, 1 << (k - k // 2))
    x = np.random.default_rng(seed).normal(size=(shape.p, shape.q))
    plan = SensingPlan(shape, natural_order(shape), shape.n)
    y = apply_sensing(x, plan)
    assert abs(y @ y - shape.n * np.sum(x * x)) <= 1e-9 * shape.n * np.sum(x * x)


def test_complementary_noise_free_matches_direct(rng):
    x = rng.uniform(0, 255, size=(16, 16))
    direct = measure(x, plan_for(16, 16, 40, "random"), seed=1)
    comp = measure(x, plan_for(16, 16, 40, "random", modulation="complementary_pair"), seed=1)
    assert np.max(np.abs(comp.y - direct.y)) <= 1e-12 * np.max(np.abs(direct.y))
    np.testing.assert_allclose(comp.y_plus + comp.y_minus, x.sum(), rtol=1e-12)
    np.testing.assert_array_equal(comp.y, comp.y_plus - comp.y_minus)


def test_complementary_exact_in_integers():
    x = np.arange(16, dtype=np.int64).reshape(4, 4)
    plan = plan_for(4, 4, 16, modulation="complementary_pair")
    meas = measure(x, plan, seed=0)
    assert np.all(meas.y_plus + meas.y_minus == x.sum())


def test_complementary_patterns_binary():
    plan = plan_for(8, 8, 10, "random")
    for r in range(10):
        plus, minus = complementary_rows(r, plan)
        assert set(np.unique(plus)) <= {0.0, 1.0}
        assert np.array_equal(plus + minus, np.ones((8, 8)))
        row = extract_row(int(plan.selected[r]), 64, "sequency")
        unscrambled = np.empty(64)
        unscrambled[plan.pixel_permutation] = row
        assert np.array_equal(plus - minus, unscrambled.reshape(8, 8))


def test_awgn_mean_statistics():
    x = head_phantom(128)
    shape = PatternShape(128, 128)
    plan = SensingPlan(shape, cc_order(shape), shape.n, noise=NoiseModel.default_awgn())
    clean = apply_sensing(x, plan)
    e = measure(x, plan, seed=11).y - clean
    expected = 0.01 * clean.mean()
    assert abs(e.mean() - expected) <= 3 * e.std(ddof=1) / np.sqrt(e.size)
    assert abs(e.var(ddof=1) - 1.0) < 0.05


def test_poisson_requires_nonnegative_rates(rng):
    x = rng.uniform(0, 10, size=(8, 8))
    direct = plan_for(8, 8, 30, noise=NoiseModel("poisson", poisson_scale=5.0))
    with pytest.raises(ValueError):
        measure(x, direct, seed=0)
    comp = plan_for(8, 8, 30, modulation="complementary_pair", noise=NoiseModel("poisson", poisson_scale=5.0))
    meas = measure(x, comp, seed=0)
    assert np.all(meas.y_plus >= 0) and np.all(meas.y_minus >= 0)
    np.testing.assert_allclose(meas.y_plus * 5.0, np.round(meas.y_plus * 5.0))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("laplace")
    with pytest.raises(ValueError):
        NoiseModel("awgn", awgn_variance=-1)
    with pytest.raises(ValueError):
        NoiseModel("poisson", poisson_scale=0)


def test_seed_determinism(rng):
    x = rng.uniform(0, 255, size=(8, 8))
    plan = plan_for(8, 8, 20, modulation="complementary_pair", noise=NoiseModel.default_awgn())
    a, b = measure(x, plan, seed=5), measure(x, plan, seed=5)
    assert a.to_csv() == b.to_csv()
    assert measure(x, plan, seed=6).to_csv() != a.to_csv()


def test_branch_draws_are_independent(rng):
    x = rng.uniform(0, 255, size=(8, 8))
    plan = plan_for(8, 8, 64, modulation="complementary_pair", noise=NoiseModel("awgn", 0.0, 1.0))
    meas = measure(x, plan, seed=2)
    clean = apply_sensing(x, plan)
    e_plus = meas.y_plus - (clean + x.sum()) / 2
    e_minus = meas.y_minus - (x.sum() - (clean + x.sum()) / 2)
    assert not np.allclose(e_plus, e_minus)


def test_csv_and_sidecar(tmp_path, rng):
    x = rng.uniform(0, 255, size=(4, 4))
    plan = plan_for(4, 4, 5, modulation="complementary_pair", noise=NoiseModel.default_awgn())
    meas = measure(x, plan, seed=9)
    sidecar = save_measurements(meas, tmp_path / "m.csv", {"note": "x"})
    text = (tmp_path / "m.csv").read_text()
    assert text.splitlines()[0] == "t,y,y_plus,y_minus"
    cols = MeasurementSet.columns_from_csv(text)
    assert np.array_equal(cols["y"], meas.y)
    assert np.array_equal(cols["y_plus"] - cols["y_minus"], cols["y"])
    meta = json.loads(sidecar.read_text())
    assert meta["plan_digest"] == plan.digest() and meta["seed"] == 9 and meta["note"] == "x"
    assert meta["plan"]["m"] == 5 and meta["plan"]["noise"]["kind"] == "awgn"


def test_plan_properties():
    plan = plan_for(8, 8, 16)
    assert plan.n == 64 and plan.sampling_ratio == 0.25
    assert plan.digest() != plan_for(8, 8, 17).digest()
