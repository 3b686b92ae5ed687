import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from npergm.basis import ExpBasis, build_basis, constraint_matrix, curve
from npergm.errors import ValidationError


def test_default_rates(basis):
    assert basis.K == 20
    assert basis.gammas[0] == pytest.approx(0.0005)
    assert basis.gammas[-1] == pytest.approx(1.0)
    r = basis.gammas[1:] / basis.gammas[:-1]
    assert np.allclose(r, r[0])


def test_values_start_at_zero_and_rise_to_one(basis):
    v = basis.values(np.array([0.0, 1.0, 1e6]))
    assert np.all(v[0] == 0)
    assert np.all(np.diff(v, axis=0) > 0)
    assert np.allclose(v[2], 1)


def test_cutpoints_equalise_neighbouring_derivatives(basis):
    xi = basis.cutpoints
    d = basis.derivatives(xi)
    r = np.arange(basis.K - 1)
    assert np.allclose(d[r, r], d[r, r + 1], rtol=1e-12)
    assert np.all(np.diff(xi) < 0)


def test_derivatives_match_finite_differences(basis):
    x = np.array([0.5, 3.0, 40.0])
    h = 1e-6
    fd = (basis.values(x + h) - basis.values(x - h)) / (2 * h)
    assert np.allclose(basis.derivatives(x), fd, atol=1e-8)


def test_constraint_matrix_layout(basis):
    c = constraint_matrix(basis, [1, -1])
    K = basis.K
    assert c.A.shape == (2 * (K - 1), 1 + 2 * K)
    assert np.all(c.A[:, 0] == 0)
    assert np.all(c.A[: K - 1, 1 + K :] == 0)
    assert np.allclose(c.A[c.block_rows(1), 1 + K :], -basis.derivatives(basis.cutpoints))


@given(arrays(float, 20, elements=st.floats(-5, 5)))
def test_effects_are_bounded_by_coefficient_mass(u):
    b = build_basis()
    x = np.linspace(0, 500, 300)
    assert np.all(np.abs(curve(b, u, x)) <= np.abs(u).sum() + 1e-12)


def test_nonnegative_coefficients_give_increasing_curves(basis):
    rng = np.random.default_rng(0)
    u = np.abs(rng.normal(size=basis.K))
    beta = np.concatenate([[0.0], u])
    assert np.all(constraint_matrix(basis, [1]).A @ beta >= 0)
    assert np.all(np.diff(curve(basis, u, np.linspace(0, 100, 500))) >= 0)


def test_serialisation_round_trip(basis):
    b2 = ExpBasis.from_dict(basis.to_dict())
    assert np.array_equal(b2.gammas, basis.gammas)
    with pytest.raises(ValidationError):
        ExpBasis.from_dict({"K": 3, "gammas": [0.1, 0.2]})


@pytest.mark.parametrize("gammas", [[0.1], [0.2, 0.1], [0.0, 1.0], [-1, 1]])
def test_invalid_rates(gammas):
    with pytest.raises(ValidationError):
        ExpBasis(np.array(gammas))


def test_invalid_arguments(basis):
    with pytest.raises(ValidationError):
        basis.values(np.array([-1.0]))
    with pytest.raises(ValidationError):
        basis.values(np.array([np.nan]))
    with pytest.raises(ValidationError):
        build_basis(K=1)
    with pytest.raises(ValidationError):
        constraint_matrix(basis, [1, 0])
