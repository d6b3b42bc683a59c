import math

import numpy as np
import pytest

from diraclab.decomp import HalfWavePair, free_propagate, split
from diraclab.grid import SPECTRAL, ContractViolation, SpinorField, l2_norm
from diraclab.solver import (BlowUp, NonContraction, SimConfig, density, evolve, hartree_nonlinearity, initial_data,
                             picard_iterate, rescale_data, scattering_profile, stack, state_hs_norm, step_etd,
                             with_config)
from diraclab.spinor import BETA

SMALL = SimConfig(n=8, T=0.1, dt=0.01, epsilon=0.5, output_every=5)


def _scaled(pair, c):
    return HalfWavePair(SpinorField(pair.psi_plus.grid, c * pair.psi_plus.spectral().data, SPECTRAL),
                        SpinorField(pair.psi_minus.grid, c * pair.psi_minus.spectral().data, SPECTRAL), pair.m)


def _diff(a, b):
    return np.linalg.norm(stack(a) - stack(b)) / np.linalg.norm(stack(b))


@pytest.mark.parametrize("changes", [{"dt": 0.0}, {"T": 1e-4, "dt": 1e-3}, {"epsilon": -1.0}, {"s": 0.0},
                                     {"scheme": "euler"}])
def test_config_validation(changes):
    with pytest.raises(ContractViolation):
        SimConfig(**changes)


def test_initial_data_norm_and_seed():
    pair = initial_data(SMALL)
    grid = SMALL.grid
    assert state_hs_norm(grid, stack(pair), SMALL.s) == pytest.approx(SMALL.epsilon, rel=1e-12)
    np.testing.assert_array_equal(stack(pair), stack(initial_data(SMALL)))
    assert not np.array_equal(stack(pair), stack(initial_data(with_config(SMALL, seed=1))))


def test_zero_data_stays_zero():
    traj = evolve(with_config(SMALL, epsilon=0.0))
    assert all(not np.any(st) for st in traj.states)


def test_nonlinearity_is_cubic():
    pair = initial_data(SMALL)
    c = 0.7 - 1.3j
    lhs = hartree_nonlinearity(_scaled(pair, c), SMALL.m).data
    rhs = abs(c) ** 2 * c * hartree_nonlinearity(pair, SMALL.m).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.max(np.abs(rhs)))


def test_density_is_real():
    rho = density(initial_data(SMALL))
    assert np.max(np.abs(rho.imag)) < 1e-15 * np.max(np.abs(rho.real)) + 1e-300


def test_constant_field_nonlinearity(grid8):
    # psi = const: <beta psi, psi> = |a|^2 - |b|^2 is constant and V * 1 = int V = 4 pi
    spinor = np.array([1.0, 0.5j, 0.2, -0.1])
    data = np.broadcast_to(spinor[:, None, None, None], (4,) + grid8.shape).astype(complex)
    fld = SpinorField(grid8, data)
    pair = split(fld, 1.0)
    rho = 1.0 + 0.25 - 0.04 - 0.01
    out = hartree_nonlinearity(pair, 1.0).physical().data
    expected = 4 * math.pi * rho * np.einsum("ab,b...->a...", BETA, data)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_linear_flow_matches_free_propagator():
    pair = initial_data(SMALL)
    traj = evolve(SMALL, pair, nonlinear=False)
    t = traj.times[-1]
    for idx, s in ((0, +1), (1, -1)):
        f = (pair.psi_plus, pair.psi_minus)[idx]
        exact = free_propagate(f, s, t, SMALL.m).data
        np.testing.assert_allclose(traj.states[-1][idx], exact, atol=1e-13 * np.max(np.abs(exact)))


def test_gauge_covariance():
    pair = initial_data(SMALL)
    phase = np.exp(0.9j)
    a = step_etd(_scaled(pair, phase), 0.01, SMALL.m)
    b = _scaled(step_etd(pair, 0.01, SMALL.m), phase)
    assert _diff(a, b) < 1e-11


def test_time_reversal():
    pair = initial_data(SMALL)
    fwd = pair
    for _ in range(10):
        fwd = step_etd(fwd, 0.01, SMALL.m)
    back = fwd
    for _ in range(10):
        back = step_etd(back, -0.01, SMALL.m)
    assert _diff(back, pair) < 1e-8


def test_l2_drift_small():
    traj = evolve(SMALL)
    assert traj.l2_drift < 1e-8
    assert len(traj.diagnostics) == SMALL.steps + 1
    assert traj.times == pytest.approx([0.0, 0.05, 0.1])


def test_rescale_preserves_l2():
    pair = initial_data(SimConfig(n=8, m=0.0, epsilon=0.3))
    for lam in (2.0, 0.5):
        out = rescale_data(pair, lam)
        assert out.psi_plus.grid.length == pytest.approx(pair.psi_plus.grid.length / lam)
        assert l2_norm(out.total()) == pytest.approx(l2_norm(pair.total()), rel=1e-12)


def test_free_flow_scattering_residuals_vanish():
    traj = evolve(SMALL, nonlinear=False)
    for sg in ("+", "-"):
        rep = scattering_profile(traj, sg)
        assert np.max(rep.residuals) < 1e-12
        assert rep.to_dict()["sign"] == sg


def test_scattering_report_shape():
    traj = evolve(SMALL)
    rep = scattering_profile(traj, +1)
    K = len(traj.times)
    assert rep.residuals.shape == (K, K)
    np.testing.assert_array_equal(rep.residuals, rep.residuals.T)
    assert len(rep.tail_maxima) == K


def test_picard_zero_data():
    zero = initial_data(with_config(SMALL, epsilon=0.0))
    res = picard_iterate(zero, 0.1, 4, SMALL.m, 0.01, SMALL.s)
    assert res.distances == [0.0]
    assert not np.any(res.iterates)


def test_picard_contracts_and_matches_rk4():
    c = with_config(SMALL, epsilon=0.5, output_every=1)
    data = initial_data(c)
    res = picard_iterate(data, c.T, 8, c.m, c.dt, c.s)
    assert all(r < 0.5 for r in res.ratios)
    traj = evolve(c, data)
    dist = max(state_hs_norm(c.grid, a - b, c.s) for a, b in zip(res.iterates, traj.states))
    assert dist < 1e-6


def test_picard_diverges_for_large_data():
    c = SimConfig(n=8, T=0.5, dt=0.01, epsilon=10.0)
    with np.errstate(all="ignore"), pytest.raises(NonContraction) as info:
        picard_iterate(initial_data(c), c.T, 8, c.m, c.dt, c.s)
    assert info.value.result.distances[1] > info.value.result.distances[0]


def test_blow_up_reported():
    pair = initial_data(SMALL)
    bad = stack(pair)
    bad[0, 0, 1, 1, 1] = np.nan
    grid = SMALL.grid
    nan_pair = HalfWavePair(SpinorField(grid, bad[0], SPECTRAL), SpinorField(grid, bad[1], SPECTRAL), SMALL.m)
    with np.errstate(all="ignore"):
        with pytest.raises(BlowUp):
            step_etd(nan_pair, 0.01, SMALL.m)
        with pytest.raises(BlowUp) as info:
            evolve(SMALL, nan_pair)
    assert info.value.trajectory is not None
    assert info.value.t == pytest.approx(0.01)
