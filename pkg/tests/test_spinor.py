import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diraclab.spinor import (ALPHA, BETA, IDENTITY, SPIN, bilinear_density, dirac_matrix, identity_residuals, inner,
                             levi_civita, pair)

E = np.eye(4, dtype=complex)

complex_numbers = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)
spinors = st.lists(complex_numbers, min_size=4, max_size=4).map(np.array)


def test_beta_is_diagonal():
    np.testing.assert_array_equal(dirac_matrix("beta"), np.diag([1, 1, -1, -1]))


def test_alpha1_squared_is_identity():
    a1 = dirac_matrix("alpha1")
    np.testing.assert_array_equal(a1 @ a1, IDENTITY)


def test_alpha1_alpha2_is_i_s3():
    np.testing.assert_array_equal(dirac_matrix("alpha1") @ dirac_matrix("alpha2"), 1j * dirac_matrix("S3"))


@pytest.mark.parametrize("kind", ["gamma0", "gamma1", "gamma2", "gamma3", "alpha1", "alpha2", "alpha3", "beta",
                                  "S1", "S2", "S3"])
def test_entries_are_exact_units(kind):
    entries = set(np.unique(dirac_matrix(kind)).tolist())
    assert entries <= {0, 1, -1, 1j, -1j}


def test_alpha_is_gamma0_gamma_j():
    for j in range(3):
        np.testing.assert_array_equal(ALPHA[j], dirac_matrix("gamma0") @ dirac_matrix(f"gamma{j + 1}"))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        dirac_matrix("gamma5")


def test_constant_matrices_are_read_only():
    with pytest.raises(ValueError):
        BETA[0, 0] = 2


def test_identity_residuals_exactly_zero():
    res = identity_residuals()
    assert len(res) == 1 + 3 * 2 + 9 * 2
    assert all(v == 0.0 for v in res.values())


@pytest.mark.parametrize("j,k", [(0, 1), (2, 2)])
def test_selected_identities(j, k):
    res = identity_residuals()
    assert res[f"{{alpha{j+1}, alpha{k+1}}} - 2 delta I"] == 0
    assert res[f"alpha{k+1} beta + beta alpha{k+1}"] == 0


def test_spin_product_identity():
    for j, k in itertools.product(range(3), repeat=2):
        rhs = (j == k) * IDENTITY + 1j * sum(levi_civita(j, k, l) * SPIN[l] for l in range(3))
        np.testing.assert_array_equal(ALPHA[j] @ ALPHA[k], rhs)


@pytest.mark.parametrize("a,b,expected", [(E[0], E[0], 1), (E[0], E[1], 0), (1j * E[0], E[0], 1j),
                                          (E[0], 1j * E[0], -1j)])
def test_inner_examples(a, b, expected):
    assert inner(a, b) == expected


@pytest.mark.parametrize("psi,phi,expected", [(E[0], E[0], 1), (E[2], E[2], -1), (E[0], E[2], 0)])
def test_bilinear_density_examples(psi, phi, expected):
    assert bilinear_density(psi, phi) == expected


@given(spinors, spinors)
def test_inner_hermitian(a, b):
    np.testing.assert_allclose(np.conj(inner(a, b)), inner(b, a), rtol=1e-12, atol=1e-9)


@given(spinors)
def test_inner_positive(a):
    val = inner(a, a)
    assert val.imag == 0
    assert val.real >= 0


@given(spinors)
def test_density_formula(psi):
    expected = abs(psi[0]) ** 2 + abs(psi[1]) ** 2 - abs(psi[2]) ** 2 - abs(psi[3]) ** 2
    np.testing.assert_allclose(bilinear_density(psi, psi), expected, rtol=1e-12, atol=1e-9)


def test_density_real_on_many_spinors(rng):
    psi = rng.normal(size=(4, 10_000)) + 1j * rng.normal(size=(4, 10_000))
    assert np.max(np.abs(bilinear_density(psi, psi).imag)) == 0.0


@settings(max_examples=50)
@given(spinors, spinors)
def test_pair_with_identity_is_density(u, v):
    np.testing.assert_allclose(pair(u, IDENTITY, v), bilinear_density(u, v), rtol=1e-12, atol=1e-9)


def test_levi_civita():
    assert levi_civita(0, 1, 2) == 1
    assert levi_civita(1, 0, 2) == -1
    assert levi_civita(2, 0, 1) == 1
    assert levi_civita(0, 0, 1) == 0
