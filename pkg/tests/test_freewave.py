import math

import numpy as np
import pytest

from diraclab.freewave import (ANALYTIC_VALUES, ORACLE_CONSTANT, RadialProfile, SingularConfiguration, a_pm,
                               analytic_configs, calibrate, calibration_summary, check_triple, compatibility_mask,
                               constant_profile, dyadic_sum_check, dyadic_sum_ratio, fit_exponent, i_closed,
                               i_minus_closed, i_plus_closed, i_pm_bruteforce, modulation_leakage,
                               modulation_project, predicted_bound, random_band_data, random_configs,
                               strichartz_norm, strichartz_scan, support_probe, time_taper)
from diraclab.grid import CapacityError, ContractViolation, Grid, sigma_lambda

ONE = constant_profile(10.0)


@pytest.mark.parametrize("tau,xi,m,expected", [
    (3.0, 1.0, 0.0, (1.0, 2.0)),
    (3.0, 1.0, 1.0, (0.5 * 3 - 0.5 * math.sqrt(0.5), 0.5 * 3 + 0.5 * math.sqrt(0.5))),
    (1.0, 2.0, 1.0, (0.5 - math.sqrt(7 / 3), 0.5 + math.sqrt(7 / 3))),
])
def test_a_pm_examples(tau, xi, m, expected):
    np.testing.assert_allclose(a_pm(tau, xi, m), expected, rtol=1e-14)


def test_a_pm_negative_radicand():
    # tau^2 - |xi|^2 = 0.41 < 4 m^2
    assert a_pm(2.1, 2.0, 1.0) is None


def test_a_pm_singular():
    with pytest.raises(SingularConfiguration):
        a_pm(2.0, 2.0, 0.0)
    with pytest.raises(ContractViolation):
        a_pm(1.0, 0.0, 0.0)


@pytest.mark.parametrize("label", list(ANALYTIC_VALUES))
def test_closed_forms_match_hand_values(label):
    cfg = next(c for c in analytic_configs() if c.label == label)
    val = i_closed(cfg.sign, cfg.f, cfg.g, cfg.tau, cfg.xi_norm, cfg.m)
    assert val == pytest.approx(ANALYTIC_VALUES[label], rel=1e-10)


def test_hand_values():
    # I+ : int_1^2 r (3 - r) dr = 13/6 ; I- : int_{3/2}^{10} r (r - 1) dr / 2 = 850/6
    assert ANALYTIC_VALUES["I+ m=0 tau=3 |xi|=1"] == pytest.approx(13 / 6)
    assert ANALYTIC_VALUES["I- m=0 tau=1 |xi|=2"] == pytest.approx(850 / 6)


@pytest.mark.parametrize("tau,xi,m", [(1.0, 2.0, 0.0), (2.1, 2.0, 1.0), (-1.0, 2.0, 0.0)])
def test_i_plus_empty_domain(tau, xi, m):
    assert i_plus_closed(ONE, ONE, tau, xi, m) == 0.0


@pytest.mark.parametrize("tau", [2.0, 2.5, -3.0])
def test_i_minus_outside_support(tau):
    assert i_minus_closed(ONE, ONE, tau, 2.0, 0.0) == 0.0


def test_profile_support():
    p = RadialProfile(lambda r: r, 1.0, 2.0)
    np.testing.assert_array_equal(p(np.array([0.5, 1.0, 1.5, 2.0, 2.5])), [0, 1.0, 1.5, 2.0, 0])


@pytest.mark.parametrize("cfg", analytic_configs(), ids=lambda c: c.label)
def test_bruteforce_reproduces_hand_values(cfg):
    brute = i_pm_bruteforce(cfg.f, cfg.g, cfg.tau, cfg.xi, cfg.m, 0.02, cfg.sign)
    assert brute / ORACLE_CONSTANT == pytest.approx(ANALYTIC_VALUES[cfg.label], rel=5e-3)


def test_bruteforce_rotation_invariant():
    f = RadialProfile(lambda r: np.exp(-r / 3), 0.0, 6.0)
    rot = np.linalg.qr(np.random.default_rng(5).normal(size=(3, 3)))[0]
    xi = np.array([0.3, -0.7, 1.1])
    a = i_pm_bruteforce(f, f, 3.5, xi, 0.5, 0.04, +1)
    b = i_pm_bruteforce(f, f, 3.5, rot @ xi, 0.5, 0.04, +1)
    assert abs(a / b - 1) < 1e-3


def test_bruteforce_capacity_and_contract():
    with pytest.raises(CapacityError):
        i_pm_bruteforce(ONE, ONE, 3.0, (0, 0, 1.0), 0.0, 0.01, +1, d_sigma=0.01)
    with pytest.raises(CapacityError):
        i_pm_bruteforce(ONE, ONE, 3.0, (0, 0, 1.0), 0.0, 0.01, +1, max_points=1e3)
    with pytest.raises(ContractViolation):
        i_pm_bruteforce(ONE, ONE, 3.0, (0, 0, 1.0), 0.0, 0.0, +1)
    with pytest.raises(ContractViolation):
        i_pm_bruteforce(ONE, ONE, 3.0, (0, 0, 0), 0.0, 0.02, +1)


def test_calibration_ratio_settles_as_eps_shrinks():
    cfgs = random_configs(np.random.default_rng(3), 2)
    rows = calibrate(cfgs, (0.04, 0.02))
    for cfg in cfgs:
        r = {row["eps"]: row["ratio"] for row in rows if row["label"] == cfg.label}
        assert abs(r[0.02] / ORACLE_CONSTANT - 1) <= abs(r[0.04] / ORACLE_CONSTANT - 1) + 1e-3
        assert abs(r[0.02] / ORACLE_CONSTANT - 1) < 0.02
    summary = calibration_summary(rows)
    assert summary["eps"] == 0.02
    assert summary["configs"] == 2


@pytest.mark.parametrize("m,tau,inside", [(0.0, 2.5, False), (0.0, 1.0, True), (0.5, 1.0, True),
                                          (0.5, -1.0, True)])
def test_i_minus_support(m, tau, inside):
    val = support_probe(-1, m, tau, 2.0)
    assert (val > 1.0) == inside


def test_check_triple():
    check_triple(2, 2, 2)
    check_triple(1, 8, 8)
    with pytest.raises(ContractViolation):
        check_triple(16, 2, 2)
    with pytest.raises(ContractViolation):
        check_triple(1, 1, 16)
    with pytest.raises(ContractViolation):
        check_triple(3, 2, 2)
    with pytest.raises(CapacityError):
        check_triple(4, 4, 4, Grid(16))


@pytest.mark.parametrize("kind,inter,mu,l1,l2,expected", [
    ("plain", "++", 2, 16, 16, 2.0),
    ("plain", "+-", 4, 16, 16, 8.0),
    ("null", "++", 4, 16, 16, 2.0),
    ("null", "+-", 4, 16, 16, 4.0),
    ("plain", "++", 2, 2, 16, 2.0),
])
def test_predicted_bound(kind, inter, mu, l1, l2, expected):
    assert predicted_bound(kind, inter, mu, l1, l2) == pytest.approx(expected)


def test_fit_exponent():
    assert fit_exponent([1, 2, 4], [3, 6, 12]) == pytest.approx(1.0)
    assert fit_exponent([1, 2, 4, 8], [1, 0.5, 0.25, 0.125]) == pytest.approx(-1.0)
    with pytest.raises(ContractViolation):
        fit_exponent([1, 2], [1, 2])


def test_random_band_data_unit_norm(grid16, rng):
    c = random_band_data(grid16, 2, rng, components=3)
    assert c.shape == (3,) + grid16.shape
    assert grid16.volume * np.sum(np.abs(c) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("q,r", [(2, math.inf), (3, 4), (4, 3)])
def test_strichartz_rejects_inadmissible(grid16, q, r):
    with pytest.raises(ContractViolation):
        strichartz_scan([1, 2, 4], q, r, 0.0, 1, grid16)


def test_strichartz_lowest_band_finite(grid16, rng):
    f_hat = random_band_data(grid16, 1, rng)[0]
    val = strichartz_norm(grid16, f_hat, +1, 0.0, 4, 4, grid16.length, 8)
    assert np.isfinite(val) and val > 0


def test_strichartz_norm_q_r_two(grid16, rng):
    # the L^2 norm is conserved, so the L^2_t L^2_x norm is sqrt(T)
    f_hat = random_band_data(grid16, 2, rng)[0]
    nt = 8
    val = strichartz_norm(grid16, f_hat, +1, 1.0, 2, 2, grid16.length, nt)
    assert val == pytest.approx(math.sqrt(grid16.length), rel=1e-12)


def _space_time_noise(grid, nt, rng):
    shape = (nt,) + grid.shape
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize("lam", [1.0, 2.0, 8.0])
@pytest.mark.parametrize("sign", [+1, -1])
def test_modulation_partition(grid16, rng, lam, sign):
    u = _space_time_noise(grid16, 16, rng)
    lo = modulation_project(u, grid16, grid16.length, sign, lam, 1.0, "below")
    hi = modulation_project(u, grid16, grid16.length, sign, lam, 1.0, "at_least")
    np.testing.assert_allclose(lo + hi, u, atol=1e-12)


def test_modulation_bands_sum_to_tail(grid16, rng):
    u = _space_time_noise(grid16, 16, rng)
    tail = modulation_project(u, grid16, grid16.length, +1, 4.0, 0.0, "at_least")
    bands = sum(modulation_project(u, grid16, grid16.length, +1, 2.0**k, 0.0, "band") for k in range(2, 8))
    np.testing.assert_allclose(bands, tail, atol=1e-12)


def test_modulation_single_mode(grid16):
    # e^{i(tau t + xi.x)} is an eigenfunction with eigenvalue sigma_lam(|tau + <xi>_m|)
    nt, T, m = 16, grid16.length, 0.0
    xi = (3.0, 0.0, 4.0)
    tau = 2.0  # lattice frequency 2 pi / T * 2
    t = T * np.arange(nt) / nt
    u = np.exp(1j * tau * t)[:, None, None, None] * grid16.plane_wave(xi)[None]
    for lam in (2.0, 4.0, 8.0):
        out = modulation_project(u, grid16, T, +1, lam, m, "band")
        np.testing.assert_allclose(out, sigma_lambda(7.0, lam) * u, atol=1e-12)


def test_modulation_unknown_part(grid16):
    with pytest.raises(ContractViolation):
        modulation_project(np.zeros((4,) + grid16.shape), grid16, 1.0, +1, 2.0, 0.0, "middle")


def test_time_taper():
    w = time_taper(1.0, 16)
    assert w[8] == 1.0
    assert np.all((w > 0) & (w <= 1))
    assert w[0] < 1e-3


@pytest.mark.parametrize("m", [0.0, 1.0])
@pytest.mark.parametrize("sign", [+1, -1])
def test_free_wave_has_small_modulation(grid16, rng, m, sign):
    f_hat = random_band_data(grid16, 2, rng)[0]
    assert modulation_leakage(grid16, 8, sign, m, grid16.length, 32, f_hat) < 0.05


def test_untapered_window_leaks(grid16, rng):
    f_hat = random_band_data(grid16, 2, rng)[0]
    assert modulation_leakage(grid16, 8, +1, 1.0, grid16.length, 32, f_hat, taper=False) > 0.05


def test_compatibility_mask_symmetric():
    mask = compatibility_mask(6)
    np.testing.assert_array_equal(mask, np.transpose(mask, (0, 2, 1, 3)))
    np.testing.assert_array_equal(mask, np.transpose(mask, (3, 1, 2, 0)))
    assert mask[0, 0, 0, 0]
    assert not mask[0, 0, 0, 5]


def test_dyadic_single_atom():
    # c_j = unit atom at lambda = 4: lambda4 runs over 1..8, so S = 4^{2 delta} sum_{i<=3} 4^{i s}
    K, k, s, delta = 6, 2, 0.5, 0.2
    c = np.zeros((3, K))
    c[:, k] = 1.0
    lam = 2.0**k
    expected = lam ** (2 * delta) * sum(4.0 ** (i * s) for i in range(k + 2)) / lam ** (6 * s)
    assert dyadic_sum_ratio(c, s, delta) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("s,delta", [(0.5, 0.5), (0.3, 0.4), (0.5, 0.0)])
def test_dyadic_contract(s, delta):
    with pytest.raises(ContractViolation):
        dyadic_sum_check(s, delta, 1, 5)


def test_dyadic_sum_finite_and_seeded():
    a = dyadic_sum_check(0.5, 0.1, 5, 8, seed=2)
    b = dyadic_sum_check(0.5, 0.1, 5, 8, seed=2)
    assert np.isfinite(a) and a == b
