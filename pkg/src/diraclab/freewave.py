"""Convolutions of free waves, their quadrature oracle, scaling scans and dyadic sums.

Closed forms ``i_plus_closed`` / ``i_minus_closed`` evaluate the radial
integrals

    I+  ~ |xi|^-1 int_{a-}^{a+} r (tau - r) f(sqrt(r^2 - m^2)) g(sqrt((tau - r)^2 - m^2)) dr
    I-  ~ |xi|^-1 int_{a+}^{inf} r (r - tau) f(sqrt(r^2 - m^2)) g(sqrt((r - tau)^2 - m^2)) dr

with unit constant.  ``i_pm_bruteforce`` integrates the defining 3D
integral with a Gaussian in place of the delta; the ratio of the two is the
hidden constant, measured as 2 pi (azimuthal angle times the Jacobian of the
delta in the polar angle).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .decomp import _sign, project_data, propagator_phase
from .grid import (CapacityError, ContractViolation, Grid, check_dyadic, chi, fftn, ifftn,
                   rho_lambda, sigma_at_least, sigma_lambda)
from .nullform import bilinear_physical_data
from .spinor import IDENTITY, pair

# Measured bruteforce / closed-form ratio (see ``calibrate``).
ORACLE_CONSTANT = 2.0 * math.pi

SCAN_SLACK = 0.3


class SingularConfiguration(ContractViolation):
    """tau^2 = |xi|^2, where the a_pm formula divides by zero."""


@dataclass(frozen=True)
class RadialProfile:
    func: Callable[[np.ndarray], np.ndarray]
    r_lo: float
    r_hi: float
    name: str = ""

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r >= self.r_lo) & (r <= self.r_hi)
        return np.where(inside, self.func(r), 0.0)


def constant_profile(r_hi: float, r_lo: float = 0.0, value: float = 1.0) -> RadialProfile:
    return RadialProfile(lambda r: np.full_like(r, value), r_lo, r_hi, f"const{value:g}[{r_lo:g},{r_hi:g}]")


# ---------------------------------------------------------------------------
# Closed forms


def a_pm(tau: float, xi_norm: float, m: float):
    """(a-, a+) bounding the radial integrals; None when the radicand is negative."""
    if xi_norm <= 0:
        raise ContractViolation("|xi| must be positive")
    den = tau * tau - xi_norm * xi_norm
    if den == 0:
        raise SingularConfiguration(f"tau^2 = |xi|^2 at tau={tau}, |xi|={xi_norm}")
    rad = (den - 4 * m * m) / den
    if rad < 0:
        return None
    half = 0.5 * xi_norm * math.sqrt(rad)
    return 0.5 * tau - half, 0.5 * tau + half


def _shifted(profile: RadialProfile, r, m: float):
    return profile(np.sqrt(np.maximum(np.asarray(r, dtype=float) ** 2 - m * m, 0.0)))


def _breakpoints(lo, hi, candidates):
    return sorted({c for c in candidates if lo < c < hi})


def i_plus_closed(f: RadialProfile, g: RadialProfile, tau: float, xi_norm: float, m: float) -> float:
    if tau <= 0 or tau * tau - xi_norm * xi_norm < 4 * m * m:
        return 0.0
    lims = a_pm(tau, xi_norm, m)
    if lims is None:
        return 0.0
    lo, hi = lims

    def integrand(r):
        return r * (tau - r) * _shifted(f, r, m) * _shifted(g, tau - r, m)

    edges = [math.hypot(f.r_lo, m), math.hypot(f.r_hi, m), tau - math.hypot(g.r_lo, m), tau - math.hypot(g.r_hi, m)]
    val, _ = integrate.quad(integrand, lo, hi, points=_breakpoints(lo, hi, edges) or None, limit=200,
                            epsabs=0.0, epsrel=1e-11)
    return val / xi_norm


def i_minus_closed(f: RadialProfile, g: RadialProfile, tau: float, xi_norm: float, m: float) -> float:
    """Closed form of I-; the support |tau| < |xi| was confirmed against the oracle."""
    if abs(tau) >= xi_norm:
        return 0.0
    lims = a_pm(tau, xi_norm, m)
    if lims is None:
        return 0.0
    lo = lims[1]
    hi = min(math.hypot(f.r_hi, m), tau + math.hypot(g.r_hi, m))
    if hi <= lo:
        return 0.0

    def integrand(r):
        return r * (r - tau) * _shifted(f, r, m) * _shifted(g, r - tau, m)

    edges = [math.hypot(f.r_lo, m), tau + math.hypot(g.r_lo, m)]
    val, _ = integrate.quad(integrand, lo, hi, points=_breakpoints(lo, hi, edges) or None, limit=200,
                            epsabs=0.0, epsrel=1e-11)
    return val / xi_norm


def i_closed(sign, f, g, tau, xi_norm, m) -> float:
    fn = i_plus_closed if _sign(sign) > 0 else i_minus_closed
    return fn(f, g, tau, xi_norm, m)


# ---------------------------------------------------------------------------
# Brute-force oracle


def _frame(xi):
    e3 = xi / np.linalg.norm(xi)
    trial = np.eye(3)[int(np.argmin(np.abs(e3)))]
    e1 = np.cross(e3, trial)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(e3, e1), e3


def i_pm_bruteforce(f: RadialProfile, g: RadialProfile, tau: float, xi, m: float, eps: float, sign=+1,
                    d_sigma: float | None = None, d_theta: float | None = None, n_phi: int = 3,
                    max_points: float = 6e7, chunk: int = 2_000_000) -> float:
    """int f(|eta|) g(|xi - eta|) delta_eps(tau - <eta>_m -+ <xi - eta>_m) d eta in 3D.

    Midpoint rule in polar coordinates about xi (sigma = |eta|, polar angle
    theta, azimuth phi), evaluated on Cartesian vectors.  delta_eps is a
    unit-mass Gaussian of standard deviation eps truncated at 8 eps; only
    theta cells inside that window are visited.
    """
    sgn = _sign(sign)
    if eps <= 0:
        raise ContractViolation("mollifier width must be positive")
    xi = np.asarray(xi, dtype=float)
    X = float(np.linalg.norm(xi))
    if X == 0:
        raise ContractViolation("xi must be nonzero")
    s_lo, s_hi = f.r_lo, f.r_hi
    d_sigma = eps / 5 if d_sigma is None else d_sigma
    d_theta = eps / (5 * s_hi) if d_theta is None else d_theta
    if max(d_sigma, s_hi * d_theta) > eps / 4:
        raise CapacityError(f"quadrature spacing {max(d_sigma, s_hi * d_theta):.3g} exceeds eps/4 = {eps / 4:.3g}")
    ns = max(1, int(math.ceil((s_hi - s_lo) / d_sigma)))
    ds = (s_hi - s_lo) / ns
    sig = s_lo + ds * (np.arange(ns) + 0.5)
    nt = int(math.ceil(math.pi / d_theta))
    dth = math.pi / nt
    cut = 8 * eps

    # d = <xi - eta>_m on the delta surface, then the admissible polar window
    c = sgn * (tau - np.sqrt(sig**2 + m * m))
    d_lo = np.maximum(c - cut, m)
    d_hi = c + cut
    ok = d_hi > m
    cos_hi = np.clip((sig**2 + X * X + m * m - d_lo**2) / (2 * sig * X), -1, 1)
    cos_lo = np.clip((sig**2 + X * X + m * m - d_hi**2) / (2 * sig * X), -1, 1)
    th_lo = np.arccos(cos_hi)
    th_hi = np.arccos(cos_lo)
    i0 = np.clip(np.floor(th_lo / dth).astype(int) - 1, 0, nt)
    i1 = np.clip(np.ceil(th_hi / dth).astype(int) + 1, 0, nt)
    counts = np.where(ok, i1 - i0, 0)
    total = int(counts.sum()) * n_phi
    if total > max_points:
        raise CapacityError(f"oracle needs {total:.3g} points (limit {max_points:.3g})")

    e1, e2, e3 = _frame(xi)
    phis = 2 * math.pi * np.arange(n_phi) / n_phi
    radial = np.outer(np.cos(phis), e1) + np.outer(np.sin(phis), e2)  # (n_phi, 3)
    norm = 1.0 / (eps * math.sqrt(2 * math.pi))
    acc = 0.0
    rows = np.nonzero(counts)[0]
    start = 0
    while start < rows.size:
        budget = 0
        stop = start
        while stop < rows.size and (budget == 0 or budget + counts[rows[stop]] <= chunk):
            budget += counts[rows[stop]]
            stop += 1
        sel = rows[start:stop]
        cnt = counts[sel]
        sg = np.repeat(sig[sel], cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        th = (np.repeat(i0[sel], cnt) + offs + 0.5) * dth
        axial = (sg * np.cos(th))[:, None, None] * e3
        trans = (sg * np.sin(th))[:, None, None] * radial[None]
        eta = axial + trans  # (P, n_phi, 3)
        r_eta = np.linalg.norm(eta, axis=-1)
        r_rest = np.linalg.norm(xi - eta, axis=-1)
        arg = tau - np.sqrt(r_eta**2 + m * m) - sgn * np.sqrt(r_rest**2 + m * m)
        kern = np.where(np.abs(arg) <= cut, norm * np.exp(-0.5 * (arg / eps) ** 2), 0.0)
        w = (sg**2 * np.sin(th))[:, None]
        acc += float(np.sum(w * kern * f(r_eta) * g(r_rest)))
        start = stop
    return acc * ds * dth * (2 * math.pi / n_phi)


# ---------------------------------------------------------------------------
# Calibration


@dataclass
class OracleConfig:
    sign: int
    tau: float
    xi: tuple
    m: float
    f: RadialProfile
    g: RadialProfile
    label: str = ""

    @property
    def xi_norm(self) -> float:
        return float(np.linalg.norm(self.xi))


def analytic_configs() -> list[OracleConfig]:
    """The two cases with hand-computed closed forms 13/6 and 850/6."""
    one = constant_profile(10.0)
    return [
        OracleConfig(+1, 3.0, (0.0, 0.0, 1.0), 0.0, one, one, "I+ m=0 tau=3 |xi|=1"),
        OracleConfig(-1, 1.0, (0.0, 2.0, 0.0), 0.0, one, one, "I- m=0 tau=1 |xi|=2"),
    ]


ANALYTIC_VALUES = {"I+ m=0 tau=3 |xi|=1": 13.0 / 6.0, "I- m=0 tau=1 |xi|=2": 850.0 / 6.0}


def _profile_family(rng, r_hi):
    kind = int(rng.integers(3))
    if kind == 0:
        return constant_profile(r_hi)
    if kind == 1:
        return RadialProfile(lambda r: 1.0 + 0.5 * np.cos(r), 0.0, r_hi, f"1+cos/2[0,{r_hi:.3g}]")
    return RadialProfile(lambda r: np.exp(-r / 3.0), 0.0, r_hi, f"exp(-r/3)[0,{r_hi:.3g}]")


def random_configs(rng: np.random.Generator, count: int) -> list[OracleConfig]:
    """Random (tau, xi, f, g, m, sign) with a nonempty kinematic domain."""
    out = []
    for k in range(count):
        sign = 1 if k % 2 == 0 else -1
        m = float(rng.choice([0.0, 0.5, 1.0]))
        X = float(rng.uniform(0.5, 2.5))
        d = rng.normal(size=3)
        xi = tuple(X * d / np.linalg.norm(d))
        if sign > 0:
            tau = float(math.sqrt(X * X + 4 * m * m) + rng.uniform(0.3, 3.0))
            r_hi = float(rng.uniform(max(6.0, tau + 0.5), 8.0))
        else:
            tau = float(rng.uniform(-0.8, 0.8) * X)
            r_hi = float(rng.uniform(4.0, 6.0))
        f = _profile_family(rng, r_hi)
        g = _profile_family(rng, r_hi)
        out.append(OracleConfig(sign, tau, xi, m, f, g, f"random{k}"))
    return out


def calibrate(configs, eps_list=(0.04, 0.02, 0.01)) -> list[dict]:
    """bruteforce / closed ratio for every config and mollifier width."""
    rows = []
    for cfg in configs:
        closed = i_closed(cfg.sign, cfg.f, cfg.g, cfg.tau, cfg.xi_norm, cfg.m)
        for eps in eps_list:
            brute = i_pm_bruteforce(cfg.f, cfg.g, cfg.tau, cfg.xi, cfg.m, eps, cfg.sign)
            rows.append({
                "label": cfg.label, "sign": "+" if cfg.sign > 0 else "-", "tau": cfg.tau,
                "xi_norm": cfg.xi_norm, "m": cfg.m, "f": cfg.f.name, "g": cfg.g.name, "eps": eps,
                "closed": closed, "bruteforce": brute,
                "ratio": brute / closed if closed != 0 else math.nan,
            })
    return rows


def calibration_summary(rows) -> dict:
    finest = min(r["eps"] for r in rows)
    ratios = np.array([r["ratio"] for r in rows if r["eps"] == finest])
    mean = float(np.mean(ratios))
    return {
        "eps": finest, "configs": int(ratios.size), "mean_ratio": mean,
        "spread": float((ratios.max() - ratios.min()) / mean),
        "constant_over_2pi": mean / (2 * math.pi),
    }


def support_probe(sign, m: float, tau: float, xi_norm: float, eps: float = 0.02, r_hi: float = 8.0) -> float:
    """Brute-force value with unit profiles; used to locate the support of I-."""
    one = constant_profile(r_hi)
    return i_pm_bruteforce(one, one, tau, (0.0, 0.0, xi_norm), m, eps, sign)


def write_calibration_csv(path, rows):
    keys = ["label", "sign", "tau", "xi_norm", "m", "f", "g", "eps", "closed", "bruteforce", "ratio"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in keys})


# ---------------------------------------------------------------------------
# Scaling scans


def band_edges(lam: float) -> tuple[float, float]:
    """Support of rho_lam: [lam/2, 2 lam], and [0, 2] for lam = 1."""
    return (0.0 if lam == 1 else lam / 2, 2.0 * lam)


def same_scale(l1: float, l2: float) -> bool:
    return max(l1, l2) <= 2 * min(l1, l2)


def check_triple(mu: float, lam1: float, lam2: float, grid: Grid | None = None):
    """Reject triples whose frequency bands cannot satisfy xi = eta - zeta, or that alias."""
    for lam in (mu, lam1, lam2):
        check_dyadic(lam)
        if lam < 1:
            raise ContractViolation(f"dyadic scales must be >= 1, got {lam}")
    bands = [band_edges(lam) for lam in (mu, lam1, lam2)]
    for i in range(3):
        others = [bands[j][1] for j in range(3) if j != i]
        if bands[i][0] >= sum(others):
            raise ContractViolation(f"incompatible dyadic triple mu={mu}, lambda1={lam1}, lambda2={lam2}")
    if grid is not None and 2 * max(band_edges(lam1)[1], band_edges(lam2)[1]) > grid.nyquist:
        raise CapacityError(f"bands lambda1={lam1}, lambda2={lam2} alias on an n={grid.n} grid")


def predicted_bound(kind: str, interaction: str, mu: float, lam1: float, lam2: float) -> float:
    """Right-hand side of the free-wave estimate with unit constant."""
    if not same_scale(lam1, lam2):
        return min(lam1, lam2)
    if kind == "plain":
        return mu if interaction == "++" else math.sqrt(mu * lam1)
    if kind == "null":
        return mu * math.sqrt(mu / lam1) if interaction == "++" else mu
    raise ContractViolation(f"unknown scan kind {kind!r}")


def predicted_exponents(kind: str, interaction: str) -> dict[str, float]:
    """Same-scale exponents (mu, lambda) of the predicted bound."""
    table = {("plain", "++"): (1.0, 0.0), ("plain", "+-"): (0.5, 0.5),
             ("null", "++"): (1.5, -0.5), ("null", "+-"): (1.0, 0.0)}
    mu_e, lam_e = table[(kind, interaction)]
    return {"mu": mu_e, "lambda": lam_e}


def random_band_data(grid: Grid, lam: float, rng: np.random.Generator, components: int = 1) -> np.ndarray:
    """Spectral coefficients: complex Gaussian times rho_lam(|xi|), unit L^2 norm."""
    shape = (components,) + grid.shape
    c = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * rho_lambda(grid.kabs, lam)
    return c / math.sqrt(grid.volume * np.sum(np.abs(c) ** 2))


def _spacetime_l2(values_sq, dt):
    return math.sqrt(dt * float(np.sum(values_sq)))


def _time_samples(T: float, nt: int) -> np.ndarray:
    return T * np.arange(nt) / nt


def strichartz_norm(grid: Grid, f_hat, sign, m: float, q: float, r: float, T: float, nt: int) -> float:
    """|| S_m(+-t) f ||_{L^q_t L^r_x} on [0, T) with nt samples."""
    dt = T / nt
    vals = []
    for t in _time_samples(T, nt):
        u = ifftn(f_hat * propagator_phase(grid, sign, t, m))
        vals.append((grid.cell_volume * np.sum(np.abs(u) ** r)) ** (1.0 / r))
    return (dt * np.sum(np.asarray(vals) ** q)) ** (1.0 / q)


def strichartz_scan(lams, q: float, r: float, m: float, trials: int, grid: Grid,
                    T: float | None = None, nt: int = 32, seed: int = 0) -> dict:
    """Largest mixed norm per scale over random and packet data, and its fitted exponent in lambda."""
    if not (2 <= r < math.inf) or abs(1 / q + 1 / r - 0.5) > 1e-12:
        raise ContractViolation(f"(q, r) = ({q}, {r}) is not wave-admissible with r < infinity")
    T = grid.length if T is None else T
    rows = []
    for lam in lams:
        check_dyadic(lam)
        rng = np.random.default_rng([seed, int(lam), 7])
        for fam in SCAN_FAMILIES:
            for trial in range(trials):
                if fam == "random":
                    f_hat = random_band_data(grid, lam, rng)[0]
                else:
                    f_hat = packet_band_data(grid, lam, lam / 2, lam * _unit(rng))[0]
                rows.append({"lambda": lam, "family": fam, "trial": trial,
                             "norm": strichartz_norm(grid, f_hat, +1, m, q, r, T, nt),
                             "predicted": lam ** (2 / q)})
    maxima = {lam: float(max(x["norm"] for x in rows if x["lambda"] == lam)) for lam in lams}
    return {"rows": rows, "maxima": maxima, "exponent": fit_exponent(list(maxima), list(maxima.values())),
            "predicted_exponent": 2 / q}


def fit_exponent(scales, values) -> float:
    """Least-squares slope of log(values) against log(scales)."""
    if len(scales) < 3:
        raise ContractViolation("an exponent fit needs at least 3 dyadic points")
    return float(np.polyfit(np.log(np.asarray(scales, float)), np.log(np.asarray(values, float)), 1)[0])


@dataclass
class ScalingScanResult:
    kind: str
    interaction: str
    mu: float
    lam1: float
    lam2: float
    j: int | None
    samples: list[tuple[str, float]]
    predicted: float
    plain_samples: list[tuple[str, float]] = field(default_factory=list)

    @property
    def norms(self) -> list[float]:
        return [v for _, v in self.samples]

    @property
    def measured(self) -> float:
        """Largest norm over all trials: the estimates bound a supremum over data."""
        return float(max(self.norms))

    @property
    def ratio(self) -> float:
        return self.measured / self.predicted

    @property
    def null_gain(self) -> float:
        """Mean over random trials of ||null form|| / ||<u, v>|| (null scans only)."""
        num = [v for fam, v in self.samples if fam == "random"]
        den = [v for fam, v in self.plain_samples if fam == "random"]
        return float(np.mean(np.asarray(num) / np.asarray(den)))


def packet_band_data(grid: Grid, lam: float, width: float, center, components: int = 1,
                     polarization=None) -> np.ndarray:
    """Coherent wave packet: real Gaussian of given width around ``center`` times rho_lam, unit L^2 norm."""
    center = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
    env = np.exp(-0.5 * np.sum((grid.kvec - center) ** 2, axis=0) / width**2) * rho_lambda(grid.kabs, lam)
    pol = np.ones(components) if polarization is None else np.asarray(polarization)
    c = pol.reshape((components, 1, 1, 1)) * env
    return c / math.sqrt(grid.volume * np.sum(np.abs(c) ** 2))


def _unit(rng):
    d = rng.normal(size=3)
    return d / np.linalg.norm(d)


def _trial_data(kind: str, family: str, interaction: str, lam1: float, lam2: float, mu: float, m: float,
                grid: Grid, rng: np.random.Generator):
    """One pair (f, g) of spectral data for a scan trial.

    ``random``: independent Gaussian coefficients on the two bands.
    ``packet``: coherent packets of frequency width mu / 2 centred at +-lam e
    for a random direction e, placed so that the two waves interact over the
    longest time allowed by the interaction (the Knapp-type configurations
    behind the sharpness of the estimates).
    """
    sgn2 = +1 if interaction == "++" else -1
    comps = 1 if kind == "plain" else 4
    if family == "random":
        f = random_band_data(grid, lam1, rng, comps)
        g = random_band_data(grid, lam2, rng, comps)
    elif family == "packet":
        e = _unit(rng)
        # plain products pair eta with zeta ~ -eta; null forms pair eta with zeta ~ eta
        g_dir = -e if kind == "plain" else e
        pf = pg = None
        if kind == "null":
            pf = rng.normal(size=4) + 1j * rng.normal(size=4)
            pg = rng.normal(size=4) + 1j * rng.normal(size=4)
        f = packet_band_data(grid, lam1, mu / 2, lam1 * e, comps, pf)
        g = packet_band_data(grid, lam2, mu / 2, lam2 * g_dir, comps, pg)
    else:
        raise ContractViolation(f"unknown data family {family!r}")
    if kind == "null":
        f = project_data(grid, f, +1, m)
        g = project_data(grid, g, sgn2, m)
        f /= math.sqrt(grid.volume * np.sum(np.abs(f) ** 2))
        g /= math.sqrt(grid.volume * np.sum(np.abs(g) ** 2))
    else:
        f, g = f[0], g[0]
    return f, g


SCAN_FAMILIES = ("random", "packet")


def _scan_pass(kind: str, interaction: str, lam1: float, lam2: float, mus, js, m: float, trials: int,
               grid: Grid, T: float, nt: int, seed: int, families=SCAN_FAMILIES):
    """Norms of P_mu(product) for every mu (and null index j) from one set of trials.

    ``trials`` trials are run per data family.  Returns
    {(mu, j): [(family, norm) per trial]} with j = None for the plain product
    and, for null scans, j = 0 for the unstructured pairing <u, v> of the
    same data.
    """
    for mu in mus:
        check_triple(mu, lam1, lam2, grid)
    sgn2 = +1 if interaction == "++" else -1
    ckey = (1 if kind == "plain" else 2, 1 if sgn2 > 0 else 2, int(lam1), int(lam2))
    rng = np.random.default_rng([seed, *ckey])
    proj = {mu: rho_lambda(grid.kabs, mu) for mu in mus}
    keys = [(mu, None) for mu in mus] if kind == "plain" else [(mu, j) for mu in mus for j in (0, *js)]
    out = {k: [] for k in keys}
    dt = T / nt
    # packets depend on mu through their width, so they are drawn per mu
    plan = [(fam, mu_p) for fam in families for _ in range(trials)
            for mu_p in ([None] if fam == "random" else mus)]
    for fam, mu_p in plan:
        f, g = _trial_data(kind, fam, interaction, lam1, lam2, mu_p or 1, m, grid, rng)
        targets = [k for k in keys if mu_p is None or k[0] == mu_p]
        acc = {k: 0.0 for k in targets}
        for t in _time_samples(T, nt):
            ft = f * propagator_phase(grid, +1, t, m)
            gt = g * propagator_phase(grid, sgn2, t, m)
            if kind == "plain":
                prods = {None: fftn(ifftn(ft) * ifftn(gt))}
            else:
                uf, vg = ifftn(ft), ifftn(gt)
                prods = {0: fftn(np.einsum("a...,a...->...", uf, np.conj(vg)))}
                caches = ({"one": uf}, {"one": vg})
                for j in js:
                    prods[j] = fftn(bilinear_physical_data(grid, "q", j, sgn2, ft, gt, m, caches))
            for (mu, j) in targets:
                acc[(mu, j)] += grid.volume * float(np.sum(np.abs(proj[mu] * prods[j]) ** 2))
        for k in targets:
            out[k].append((fam, math.sqrt(dt * acc[k])))
    return out


def bilinear_scan(interaction: str, mu: float, lam1: float, lam2: float, m: float, trials: int,
                  grid: Grid, T: float | None = None, nt: int = 32, seed: int = 0) -> ScalingScanResult:
    """|| P_mu (S_m(t) f_lam1 . S_m(+-t) g_lam2) ||_{L^2_{t,x}} over random unit-norm data."""
    T = grid.length if T is None else T
    norms = _scan_pass("plain", interaction, lam1, lam2, [mu], (), m, trials, grid, T, nt, seed)[(mu, None)]
    return ScalingScanResult("plain", interaction, mu, lam1, lam2, None, norms,
                             predicted_bound("plain", interaction, mu, lam1, lam2))


def nullform_scan(j: int, interaction: str, mu: float, lam1: float, lam2: float, m: float, trials: int,
                  grid: Grid, T: float | None = None, nt: int = 32, seed: int = 0) -> ScalingScanResult:
    """|| P_mu Q_j(S_m(t) f_lam1, S_m(+-t) g_lam2) ||_{L^2_{t,x}} for half-wave spinor data."""
    T = grid.length if T is None else T
    res = _scan_pass("null", interaction, lam1, lam2, [mu], (j,), m, trials, grid, T, nt, seed)
    return ScalingScanResult("null", interaction, mu, lam1, lam2, j, res[(mu, j)],
                             predicted_bound("null", interaction, mu, lam1, lam2), res[(mu, 0)])


def scaling_suite(m: float, trials: int, grid: Grid, T: float | None = None, nt: int = 32, seed: int = 0,
                  scales=(1, 2, 4), js=(1, 2, 3)) -> list[ScalingScanResult]:
    """Same-scale scans: mu varies at lambda = max(scales); lambda varies at mu = min(scales).

    Each (interaction, lambda) pair is computed in a single pass covering every
    mu and every null index, so the mu and lambda series share their trials.
    """
    T = grid.length if T is None else T
    lam_top, mu_low = max(scales), min(scales)
    results = []
    for kind in ("plain", "null"):
        for inter in ("++", "+-"):
            for lam in scales:
                mus = list(scales) if lam == lam_top else [mu_low]
                res = _scan_pass(kind, inter, lam, lam, mus, js, m, trials, grid, T, nt, seed)
                for mu in mus:
                    if kind == "plain":
                        results.append(ScalingScanResult(kind, inter, mu, lam, lam, None, res[(mu, None)],
                                                         predicted_bound(kind, inter, mu, lam, lam)))
                    else:
                        for j in js:
                            results.append(ScalingScanResult(kind, inter, mu, lam, lam, j, res[(mu, j)],
                                                             predicted_bound(kind, inter, mu, lam, lam),
                                                             res[(mu, 0)]))
    return results


def _series(results, kind, interaction, j):
    """{(mu, lam1): measured}; j = "sup" takes the largest null form at each point."""
    pts: dict[tuple[float, float], float] = {}
    for r in results:
        if r.kind != kind or r.interaction != interaction:
            continue
        if j == "sup" or r.j == j:
            key = (r.mu, r.lam1)
            pts[key] = max(pts.get(key, 0.0), r.measured)
    return pts


def fit_scaling(results, kind: str, interaction: str, j=None, scales=(1, 2, 4), slack: float = SCAN_SLACK) -> dict:
    """Fitted exponents in mu (at the top lambda) and lambda (at the lowest mu)."""
    pts = _series(results, kind, interaction, j)
    lam_top, mu_low = max(scales), min(scales)
    mu_series = sorted((mu, v) for (mu, lam), v in pts.items() if lam == lam_top)
    lam_series = sorted((lam, v) for (mu, lam), v in pts.items() if mu == mu_low)
    pred = predicted_exponents(kind, interaction)
    fit = {"mu": fit_exponent(*zip(*mu_series)), "lambda": fit_exponent(*zip(*lam_series))}
    return {
        "kind": kind, "interaction": interaction, "j": j, "fitted": fit, "predicted": pred,
        "passed": all(fit[v] <= pred[v] + slack for v in fit),
    }


def null_gain_series(results, j: int, interaction: str = "++", scales=(1, 2, 4)) -> list[tuple[float, float]]:
    """(lambda, null/plain ratio) at the lowest mu, ordered by lambda."""
    mu_low = min(scales)
    sel = [r for r in results if r.kind == "null" and r.interaction == interaction and r.j == j and r.mu == mu_low]
    return sorted((r.lam1, r.null_gain) for r in sel)


def write_scan_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "interaction", "j", "mu", "lambda1", "lambda2", "family", "trial", "measured", "predicted", "ratio"])
        for r in results:
            for k, (fam, v) in enumerate(r.samples):
                w.writerow([r.kind, r.interaction, "" if r.j is None else r.j, r.mu, r.lam1, r.lam2, fam, k,
                            f"{v:.10g}", f"{r.predicted:.10g}", f"{v / r.predicted:.10g}"])


# ---------------------------------------------------------------------------
# Modulation projections


def _modulation(grid: Grid, nt: int, T: float, sign, m: float) -> np.ndarray:
    """|tau + sign <xi>_m| on the (nt, n, n, n) space-time frequency lattice.

    Time frequencies follow the numpy convention u(t) = sum u~(tau) e^{i tau t},
    so S_m(+t) f = e^{-it<xi>} f sits at tau = -<xi>_m and has zero "+"
    modulation.
    """
    tau = 2 * math.pi * np.fft.fftfreq(nt, d=T / nt)
    return np.abs(tau[:, None, None, None] + _sign(sign) * grid.bracket(m)[None])


def modulation_project(u, grid: Grid, T: float, sign, lam: float, m: float, part: str = "band") -> np.ndarray:
    """Lambda^+-_lam on physical space-time samples u of shape (..., nt, n, n, n).

    ``part`` selects sigma_lam ("band"), the sum over modulations >= lam
    ("at_least", symbol 1 - chi(2 s / lam)) or its complement ("below").
    The time window is treated as periodic, so a free wave whose frequency
    is not a multiple of 2 pi / T leaks into neighbouring modulations.
    """
    u = np.asarray(u)
    nt = u.shape[-4]
    s = _modulation(grid, nt, T, sign, m)
    if part == "band":
        sym = sigma_lambda(s, lam)
    elif part == "at_least":
        sym = sigma_at_least(s, lam)
    elif part == "below":
        sym = chi(2 * s / lam)
        check_dyadic(lam)
    else:
        raise ContractViolation(f"unknown modulation part {part!r}")
    axes = (-4, -3, -2, -1)
    return np.fft.ifftn(np.fft.fftn(u, axes=axes) * sym, axes=axes)


def free_wave_samples(grid: Grid, f_hat, sign, m: float, T: float, nt: int) -> np.ndarray:
    """Physical samples of S_m(+-t) f at t = k T / nt, shape (nt, n, n, n)."""
    return np.stack([ifftn(f_hat * propagator_phase(grid, sign, t, m)) for t in _time_samples(T, nt)])


def time_taper(T: float, nt: int, width: float = 0.125) -> np.ndarray:
    """Gaussian window centred on the sampled interval with standard deviation width * T."""
    t = _time_samples(T, nt)
    return np.exp(-0.5 * ((t - T / 2) / (width * T)) ** 2)


def modulation_leakage(grid: Grid, lam: float, sign, m: float, T: float, nt: int, f_hat,
                       taper: bool = True) -> float:
    """|| Lambda_{>= lam} w S_m(+-t) f || / || w S_m(+-t) f || on the sampled window.

    Without the taper w the periodic extension of the window is discontinuous
    and the leaked content only decays like lam^{-1/2}.
    """
    u = free_wave_samples(grid, f_hat, sign, m, T, nt)
    if taper:
        u = u * time_taper(T, nt)[:, None, None, None]
    hi = modulation_project(u, grid, T, sign, lam, m, "at_least")
    return float(np.linalg.norm(hi) / np.linalg.norm(u))


# ---------------------------------------------------------------------------
# Dyadic summation


def compatibility_mask(K: int) -> np.ndarray:
    """Boolean (K, K, K, K) mask [l4, l1, l2, l3]: each lambda_j <= 3 max of the other three."""
    lam = 2.0 ** np.arange(K)
    l4, l1, l2, l3 = np.meshgrid(lam, lam, lam, lam, indexing="ij")
    stack = np.stack([l1, l2, l3, l4])
    ok = np.ones(l1.shape, dtype=bool)
    for j in range(4):
        others = np.max(np.delete(stack, j, axis=0), axis=0)
        ok &= stack[j] <= 3 * others
    return ok


def dyadic_sum_ratio(c, s: float, delta: float, mask: np.ndarray | None = None) -> float:
    """S / prod_j || lambda^s c_j ||^2 for sequences c of shape (3, K) on lambda = 2^k."""
    c = np.asarray(c, dtype=float)
    K = c.shape[1]
    mask = compatibility_mask(K) if mask is None else mask
    lam = 2.0 ** np.arange(K)
    l1, l2, l3 = np.meshgrid(lam, lam, lam, indexing="ij")
    med = np.median(np.stack([l1, l2, l3]), axis=0)
    weight = (lam**s)[:, None, None, None] * (med**delta)[None] * mask
    inner = np.einsum("dabc,a,b,c->d", weight, c[0], c[1], c[2])
    S = float(np.sum(inner**2))
    norms = np.prod([np.sum((lam**s * c[j]) ** 2) for j in range(3)])
    return S / norms


def dyadic_sum_check(s: float, delta: float, trials: int, K: int, seed: int = 0, enforce: bool = True) -> float:
    """Max ratio over random sequences c_{j,lam} = lam^-s U(0, 1) supported on lambda < 2^K."""
    if enforce and not s > delta > 0:
        raise ContractViolation(f"need s > delta > 0, got s={s}, delta={delta}")
    rng = np.random.default_rng([seed, K])
    mask = compatibility_mask(K)
    lam = 2.0 ** np.arange(K)
    return max(dyadic_sum_ratio(lam**-s * rng.uniform(size=(3, K)), s, delta, mask) for _ in range(trials))


def dyadic_growth(s: float, delta: float, trials: int, Ks=(10, 20, 40), seed: int = 0) -> dict[int, float]:
    """Max ratio per support length; bounded when s > delta, growing when delta >= s."""
    return {K: dyadic_sum_check(s, delta, trials, K, seed, enforce=False) for K in Ks}
