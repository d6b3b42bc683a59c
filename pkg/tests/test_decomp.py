import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spectral
from diraclab.decomp import (beta_field, dirac_free_flow, free_propagate, free_wave_residual, identity_residuals,
                             project, projector_symbol, split)
from diraclab.grid import SPECTRAL, ContractViolation, SpinorField
from diraclab.spinor import ALPHA, BETA, IDENTITY

vectors = st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=3).map(np.array)
masses = st.sampled_from([0.0, 0.5, 1.0, 3.0])


def test_symbol_at_rest():
    np.testing.assert_allclose(projector_symbol(np.zeros(3), +1, 1.0), np.diag([1, 1, 0, 0]), atol=1e-15)
    np.testing.assert_allclose(projector_symbol(np.zeros(3), -1, 1.0), np.diag([0, 0, 1, 1]), atol=1e-15)


def test_symbol_degenerate_point():
    np.testing.assert_array_equal(projector_symbol(np.zeros(3), +1, 0.0), IDENTITY / 2)


def test_massless_symbol():
    xi = np.array([1.0, -2.0, 2.0])
    expected = 0.5 * (IDENTITY + sum(ALPHA[j] * xi[j] for j in range(3)) / 3.0)
    np.testing.assert_allclose(projector_symbol(xi, "+", 0.0), expected, atol=1e-15)


@given(vectors, masses)
def test_symbol_is_hermitian_projection(xi, m):
    if m == 0 and not np.any(xi):
        return
    p = projector_symbol(xi, +1, m)
    q = projector_symbol(xi, -1, m)
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    np.testing.assert_allclose(p, p.conj().T, atol=1e-14)
    np.testing.assert_allclose(p + q, IDENTITY, atol=1e-14)
    np.testing.assert_allclose(p @ q, 0, atol=1e-12)
    assert np.trace(p).real == pytest.approx(2.0)


def test_bad_sign_rejected():
    with pytest.raises(ContractViolation):
        projector_symbol(np.ones(3), 0, 1.0)


@pytest.mark.parametrize("m", [0.0, 1.0, 2.5])
def test_identity_residuals_on_random_fields(grid16, rng, m):
    for _ in range(10):
        res = identity_residuals(random_spectral(grid16, rng, drop_zero_mode=(m == 0)), m)
        assert max(res.values()) < 1e-11


def test_zero_mode_breaks_idempotence_at_zero_mass(grid8):
    data = np.zeros((4,) + grid8.shape, dtype=complex)
    data[0, 0, 0, 0] = 1
    res = identity_residuals(SpinorField(grid8, data, SPECTRAL), 0.0)
    assert res["idempotence+"] > 0.1


def test_split_reconstructs(grid16, rng):
    fld = random_spectral(grid16, rng).physical()
    pair = split(fld, 1.0)
    assert (pair.total() - fld.spectral()).norm() / fld.norm() < 1e-12
    assert project(pair.psi_plus, -1, 1.0).norm() / fld.norm() < 1e-12
    assert project(pair.psi_minus, +1, 1.0).norm() / fld.norm() < 1e-12


def test_beta_commutation(grid8, rng):
    u = random_spectral(grid8, rng)
    for s in (+1, -1):
        lhs = beta_field(project(u, s, 1.0))
        rhs = project(beta_field(u), -s, 1.0)
        # difference is s m <D>^{-1} u, nonzero for m > 0
        assert (lhs - rhs).norm() > 1e-3 * u.norm()
    np.testing.assert_array_equal(beta_field(u).data[2:], -u.data[2:])
    np.testing.assert_array_equal(BETA @ np.arange(4), [0, 1, -2, -3])


@pytest.mark.parametrize("m", [0.0, 1.0])
def test_propagator_unitary_and_group(grid16, rng, m):
    f = random_spectral(grid16, rng)
    for t in (0.3, -1.7, 5.0):
        for s in (+1, -1):
            ft = free_propagate(f, s, t, m)
            assert abs(ft.norm() / f.norm() - 1) < 1e-12
            both = free_propagate(free_propagate(f, s, t, m), s, 0.4, m)
            np.testing.assert_allclose(both.data, free_propagate(f, s, t + 0.4, m).data, atol=1e-12)
    np.testing.assert_array_equal(free_propagate(f, +1, 0.0, m).data, f.data)


def test_single_mode_phase(grid8):
    xi = (1.0, 2.0, 2.0)
    data = np.zeros((4,) + grid8.shape, dtype=complex)
    data[2] = grid8.plane_wave(xi)
    out = free_propagate(SpinorField(grid8, data), +1, 0.7, 4.0).physical()
    np.testing.assert_allclose(out.data[2], np.exp(-0.7j * 5.0) * data[2], atol=1e-13)


@pytest.mark.parametrize("s", [+1, -1])
def test_free_wave_equation(grid16, rng, s):
    f = project(random_spectral(grid16, rng), s, 1.0)
    assert free_wave_residual(f, s, 1.0, t=0.8) < 1e-9


def test_free_flow_solves_dirac_equation(grid8, rng):
    # i d/dt psi = (alpha.D + m beta) psi, checked by a centred difference
    f = random_spectral(grid8, rng)
    h = 1e-4
    fwd = dirac_free_flow(f, 0.5 + h, 1.0).data
    bwd = dirac_free_flow(f, 0.5 - h, 1.0).data
    mid = dirac_free_flow(f, 0.5, 1.0)
    k = grid8.kvec
    hmid = sum(np.einsum("ab,b...->a...", ALPHA[j], k[j] * mid.data) for j in range(3))
    hmid = hmid + np.einsum("ab,b...->a...", BETA, mid.data)
    resid = 1j * (fwd - bwd) / (2 * h) - hmid
    assert np.linalg.norm(resid) / np.linalg.norm(hmid) < 1e-6
