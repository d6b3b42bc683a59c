"""Null symbols q_j, smooth symbols b_j and the bilinear forms Q_j, B_j.

Two independent evaluation routes are provided:

* ``nullform_fourier`` sums the matrix kernel directly over all pairs of
  lattice frequencies (O(n^6); the oracle, small grids only);
* ``nullform_physical`` writes each symbol as a sum of separable products
  ``c * A(eta) B(zeta) M`` and evaluates them with FFTs and pointwise spinor
  pairings.

Conventions shared by both routes (they define the operators, not the
numerics):

* ``hat(eta) = eta / <eta>_m``, set to 0 at eta = 0 when m = 0;
* the Riesz multiplier ``R(eta) = |eta| / <eta>_m`` is 1 everywhere when
  m = 0, including the zero mode, so every b-symbol vanishes identically
  for m = 0;
* Riesz components use the real symbols ``eta_j / <eta>_m`` (i.e. D_j/<D>_m
  with D = -i grad).
"""

from __future__ import annotations

import csv
import functools
import itertools
import math

import numpy as np

from .decomp import _sign, project_data, projector_symbol
from .grid import CapacityError, ContractViolation, Grid, SpinorField, bracket_weight, ifftn
from .spinor import ALPHA, BETA, IDENTITY, SPIN, levi_civita, pair

# Constant multiplying sum_j (Q_j + B_j), j = 1..3, in the decomposition of
# <beta Pi^+ u, Pi^+- v>; fitted by ``fit_decomposition_constant`` (result 0.25
# to ~1e-16) and frozen here.
DECOMPOSITION_CONSTANT = 0.25

MAX_FOURIER_N = 16


# ---------------------------------------------------------------------------
# Scalar building blocks on frequency arrays of shape (3, ...)


def hat(xi, m: float) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    br = bracket_weight(xi, m)
    return np.where(br > 0, xi / np.where(br > 0, br, 1.0), 0.0)


def riesz_norm(xi, m: float) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if m == 0:
        return np.ones(xi.shape[1:])
    return bracket_weight(xi, 0.0) / bracket_weight(xi, m)


def inv_bracket(xi, m: float) -> np.ndarray:
    br = bracket_weight(xi, m)
    return np.where(br > 0, 1.0 / np.where(br > 0, br, 1.0), 0.0)


def _mat(coeff, mat):
    """Broadcast a scalar array (...) times a constant (4, 4) matrix -> (..., 4, 4)."""
    return np.asarray(coeff)[..., None, None] * mat


# ---------------------------------------------------------------------------
# Symbols (direct formulas)


def q_symbol(j: int, sign, eta, zeta, m: float) -> np.ndarray:
    """Null symbol q^sign_j(eta, zeta), j in {1, 2, 3}; shape (..., 4, 4)."""
    sgn = _sign(sign)
    eh, zh = hat(eta, m), hat(zeta, m)
    ne, nz = riesz_norm(eta, m), riesz_norm(zeta, m)
    if j == 1:
        return _mat(ne * nz - sgn * np.sum(eh * zh, axis=0), IDENTITY)
    if j == 2:
        return -sum(_mat(eh[k] * nz - sgn * zh[k] * ne, ALPHA[k]) for k in range(3))
    if j == 3:
        cross = np.cross(eh, zh, axis=0)
        return -sgn * 1j * sum(_mat(cross[l], SPIN[l]) for l in range(3))
    raise ContractViolation(f"null symbols are indexed 1..3, got {j}")


def b_symbol(j: int, sign, eta, zeta, m: float) -> np.ndarray:
    """Smooth symbol b^sign_j(eta, zeta), j in {1, 2, 3, 4}; shape (..., 4, 4)."""
    sgn = _sign(sign)
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if j == 1:
        return _mat(1.0 - riesz_norm(eta, m) * riesz_norm(zeta, m), IDENTITY)
    be, bz = bracket_weight(eta, m), bracket_weight(zeta, m)
    inv_prod = inv_bracket(eta, m) * inv_bracket(zeta, m)
    if j == 2:
        ae = bracket_weight(eta, 0.0)
        az = bracket_weight(zeta, 0.0)
        vec = eta * (bz - az) - sgn * zeta * (be - ae)
        return -sum(_mat(vec[k] * inv_prod, ALPHA[k]) for k in range(3))
    if j == 3:
        diff = eta - zeta
        d_alpha_beta = sum(_mat(diff[k], ALPHA[k] @ BETA) for k in range(3))
        inner = m * d_alpha_beta - _mat((be - sgn * bz) * m, BETA) + m * m * IDENTITY
        return -sgn * inner * inv_prod[..., None, None]
    if j == 4:
        return _mat(m * inv_bracket(eta, m), BETA)
    raise ContractViolation(f"smooth symbols are indexed 1..4, got {j}")


def symbol_eval(family: str, j: int, sign, eta, zeta, m: float) -> np.ndarray:
    if family == "q":
        return q_symbol(j, sign, eta, zeta, m)
    if family == "b":
        return b_symbol(j, sign, eta, zeta, m)
    raise ContractViolation(f"family must be 'q' or 'b', got {family!r}")


def symbol_sum_check(sign, eta, zeta, m: float) -> float:
    """max |4 Pi^-(eta) Pi^sign(zeta) - sum_{j<=3} (q_j + b_j)| over all entries and samples."""
    lhs = 4 * projector_symbol(eta, -1, m) @ projector_symbol(zeta, sign, m)
    rhs = sum(q_symbol(j, sign, eta, zeta, m) + b_symbol(j, sign, eta, zeta, m) for j in (1, 2, 3))
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Separable expansions for the physical-space route

_MULTIPLIERS = ("one", "R", "1-R", "inv", "hat1", "hat2", "hat3")


@functools.lru_cache(maxsize=64)
def _grid_multiplier(grid: Grid, name: str, m: float) -> np.ndarray:
    out = _multiplier(name, grid.kvec, m)
    out.setflags(write=False)
    return out


def _multiplier(name: str, kvec, m: float) -> np.ndarray:
    if name == "one":
        return np.ones(kvec.shape[1:])
    if name == "R":
        return riesz_norm(kvec, m)
    if name == "1-R":
        return 1.0 - riesz_norm(kvec, m)
    if name == "inv":
        return inv_bracket(kvec, m)
    if name.startswith("hat"):
        return hat(kvec, m)[int(name[3:]) - 1]
    raise KeyError(name)


def separable_terms(family: str, j: int, sign, m: float) -> list[tuple[complex, str, str, np.ndarray]]:
    """Terms (c, A, B, M) with symbol = sum c A(eta) B(zeta) M."""
    s = _sign(sign)
    h = [f"hat{k}" for k in (1, 2, 3)]
    if family == "q":
        if j == 1:
            return [(1, "R", "R", IDENTITY)] + [(-s, h[k], h[k], IDENTITY) for k in range(3)]
        if j == 2:
            return [(-1, h[k], "R", ALPHA[k]) for k in range(3)] + [(s, "R", h[k], ALPHA[k]) for k in range(3)]
        if j == 3:
            return [(-s * 1j * levi_civita(a, b, l), h[a], h[b], SPIN[l])
                    for a, b, l in itertools.permutations(range(3))]
    elif family == "b":
        if j == 1:
            return [(1, "one", "one", IDENTITY), (-1, "R", "R", IDENTITY)]
        if j == 2:
            return ([(-1, h[k], "1-R", ALPHA[k]) for k in range(3)]
                    + [(s, "1-R", h[k], ALPHA[k]) for k in range(3)])
        if j == 3:
            ab = [ALPHA[k] @ BETA for k in range(3)]
            return ([(-s * m, h[k], "inv", ab[k]) for k in range(3)]
                    + [(s * m, "inv", h[k], ab[k]) for k in range(3)]
                    + [(s * m, "one", "inv", BETA), (-m, "inv", "one", BETA),
                       (-s * m * m, "inv", "inv", IDENTITY)])
        if j == 4:
            return [(m, "inv", "one", BETA)]
    raise ContractViolation(f"no symbol {family}_{j}")


def _physical_bilinear(grid: Grid, terms, u_hat, v_hat, m: float, caches=None) -> np.ndarray:
    """sum over terms of <beta A u, c M B v>, evaluated pointwise in physical space.

    ``caches`` (a pair of dicts) lets several forms on the same (u, v) share
    the Riesz-transformed inputs.
    """
    cache_u, cache_v = caches if caches is not None else ({}, {})

    def side(cache, name, data):
        if name not in cache:
            cache[name] = ifftn(data * _grid_multiplier(grid, name, float(m)))
        return cache[name]

    out = np.zeros(u_hat.shape[1:], dtype=complex)
    for c, a, b, mat in terms:
        if c == 0:
            continue
        out += pair(side(cache_u, a, u_hat), c * mat, side(cache_v, b, v_hat))
    return out


def _spectral_data(fld) -> tuple[Grid, np.ndarray]:
    if not isinstance(fld, SpinorField):
        raise ContractViolation("expected a SpinorField")
    spec = fld.spectral()
    return spec.grid, spec.data


def nullform_physical(j: int, sign, u: SpinorField, v: SpinorField, m: float) -> np.ndarray:
    """Q_j(u, v) as a physical-space scalar array."""
    grid, uh = _spectral_data(u)
    _, vh = _spectral_data(v)
    return _physical_bilinear(grid, separable_terms("q", j, sign, m), uh, vh, m)


def bterm_physical(j: int, sign, u: SpinorField, v: SpinorField, m: float) -> np.ndarray:
    """B_j(u, v) as a physical-space scalar array."""
    grid, uh = _spectral_data(u)
    _, vh = _spectral_data(v)
    return _physical_bilinear(grid, separable_terms("b", j, sign, m), uh, vh, m)


def bilinear_physical_data(grid: Grid, family: str, j: int, sign, u_hat, v_hat, m: float,
                           caches=None) -> np.ndarray:
    """Array-level entry point used by the scaling scans and the decomposition."""
    return _physical_bilinear(grid, separable_terms(family, j, sign, m), u_hat, v_hat, m, caches)


def bilinear_fourier(family: str, j: int, sign, u: SpinorField, v: SpinorField, m: float,
                     chunk: int = 64) -> np.ndarray:
    """Fourier coefficients of the bilinear form by direct double-lattice summation.

    out[xi] = sum_{eta - zeta = xi (mod n)} <beta u(eta), k(eta, zeta) v(zeta)>,
    which is exactly the coefficient sequence of the pointwise product on the
    periodic grid.
    """
    grid, uh = _spectral_data(u)
    _, vh = _spectral_data(v)
    n = grid.n
    if n > MAX_FOURIER_N:
        raise CapacityError(f"direct kernel sum supports n <= {MAX_FOURIER_N}, got n = {n}")
    npts = n**3
    k = grid.kvec.reshape(3, npts)
    idx = np.stack(np.unravel_index(np.arange(npts), grid.shape))
    bu = uh.reshape(4, npts).copy()
    bu[2:] *= -1
    vflat = vh.reshape(4, npts)
    out_re = np.zeros(npts)
    out_im = np.zeros(npts)
    for start in range(0, npts, chunk):
        sl = slice(start, min(start + chunk, npts))
        eta = k[:, sl, None]
        zeta = k[:, None, :]
        kern = symbol_eval(family, j, sign, np.broadcast_to(eta, (3, eta.shape[1], npts)),
                           np.broadcast_to(zeta, (3, eta.shape[1], npts)), m)
        kv = np.einsum("ezab,bz->eza", kern, vflat)
        vals = np.einsum("ae,eza->ez", bu[:, sl], np.conj(kv))
        diff = (idx[:, sl, None] - idx[:, None, :]) % n
        flat = np.ravel_multi_index(tuple(diff), grid.shape).ravel()
        out_re += np.bincount(flat, weights=vals.real.ravel(), minlength=npts)
        out_im += np.bincount(flat, weights=vals.imag.ravel(), minlength=npts)
    return (out_re + 1j * out_im).reshape(grid.shape)


def nullform_fourier(j: int, sign, u: SpinorField, v: SpinorField, m: float) -> np.ndarray:
    """Fourier coefficients of Q_j(u, v) through the direct kernel sum."""
    return bilinear_fourier("q", j, sign, u, v, m)


# ---------------------------------------------------------------------------
# Decomposition of <beta Pi^+ u, Pi^+- v>


def _decomposition_parts(u: SpinorField, v: SpinorField, sign, m: float):
    grid, uh = _spectral_data(u)
    _, vh = _spectral_data(v)
    if m == 0:
        # Pi^+-(0) = I/2 is not idempotent, so the zero mode is left out at m = 0
        uh = uh.copy()
        vh = vh.copy()
        uh[(slice(None), 0, 0, 0)] = 0
        vh[(slice(None), 0, 0, 0)] = 0
    up = project_data(grid, uh, +1, m)
    vp = project_data(grid, vh, sign, m)
    lhs = pair(ifftn(up), IDENTITY, ifftn(vp))
    caches = ({}, {})
    sums = sum(bilinear_physical_data(grid, fam, j, sign, up, vp, m, caches) for fam in ("q", "b") for j in (1, 2, 3))
    b4 = bilinear_physical_data(grid, "b", 4, sign, up, vp, m, caches)
    return lhs, sums, b4


def fit_decomposition_constant(pairs, sign, m: float) -> complex:
    """Least-squares c with <beta Pi^+ u, Pi^s v> - B_4 = c sum_{j<=3}(Q_j + B_j) over all pairs."""
    num = 0j
    den = 0.0
    for u, v in pairs:
        lhs, sums, b4 = _decomposition_parts(u, v, sign, m)
        num += np.vdot(sums, lhs - b4)
        den += float(np.vdot(sums, sums).real)
    return num / den


def decomposition_check(u: SpinorField, v: SpinorField, sign, m: float,
                        constant: float = DECOMPOSITION_CONSTANT) -> tuple[complex, float]:
    """Return (fitted constant for this pair, relative residual with the frozen constant)."""
    lhs, sums, b4 = _decomposition_parts(u, v, sign, m)
    den = float(np.vdot(sums, sums).real)
    fitted = np.vdot(sums, lhs - b4) / den if den > 0 else complex("nan")
    resid = np.linalg.norm(lhs - constant * sums - b4) / max(np.linalg.norm(lhs), 1e-300)
    return complex(fitted), float(resid)


# ---------------------------------------------------------------------------
# Pointwise symbol bounds


def bound_rhs(sign, eta, zeta, m: float) -> np.ndarray:
    """Bracketed quantity on the right of the null-symbol bound (before the power a).

    The differences |eta - zeta| - ||eta| - |zeta|| and |eta| + |zeta| - |eta - zeta|
    are rewritten through |eta_hat -+ zeta_hat|^2 so that near-parallel and
    near-antiparallel pairs do not lose every digit to cancellation.
    """
    sgn = _sign(sign)
    eta = np.asarray(eta, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    ae = np.linalg.norm(eta, axis=0)
    az = np.linalg.norm(zeta, axis=0)
    ad = np.linalg.norm(eta - zeta, axis=0)
    ue = eta / np.where(ae > 0, ae, 1.0)
    uz = zeta / np.where(az > 0, az, 1.0)
    if sgn > 0:
        # ad^2 - (ae - az)^2 = ae az |ue - uz|^2
        gap = ae * az * np.sum((ue - uz) ** 2, axis=0) / np.where(ad > 0, ad + np.abs(ae - az), 1.0)
        num = ad * gap
    else:
        # (ae + az)^2 - ad^2 = ae az |ue + uz|^2
        gap = ae * az * np.sum((ue + uz) ** 2, axis=0) / np.where(ae + az > 0, ae + az + ad, 1.0)
        num = (ae + az) * gap
    return num / (bracket_weight(eta, m) * bracket_weight(zeta, m))


def symbol_norm(mat) -> np.ndarray:
    """Operator 2-norm of a stack of 4x4 matrices."""
    return np.linalg.norm(mat, ord=2, axis=(-2, -1))


def sample_frequency_pairs(rng: np.random.Generator, count: int, scale_range=(1e-2, 1e2)):
    """Random pairs: a third generic, a third near-parallel, a third near-antiparallel."""
    lo, hi = np.log(scale_range[0]), np.log(scale_range[1])

    def directions(k):
        d = rng.normal(size=(3, k))
        return d / np.linalg.norm(d, axis=0)

    def mags(k):
        return np.exp(rng.uniform(lo, hi, size=k))

    n1 = count // 3
    n2 = count // 3
    n3 = count - n1 - n2
    eta = directions(count) * mags(count)
    zeta = np.empty_like(eta)
    zeta[:, :n1] = directions(n1) * mags(n1)
    for sl, sgn, k in ((slice(n1, n1 + n2), 1.0, n2), (slice(n1 + n2, None), -1.0, n3)):
        e = eta[:, sl]
        tilt = np.exp(rng.uniform(np.log(1e-6), np.log(1e-1), size=k))
        d = e / np.linalg.norm(e, axis=0) + tilt * directions(k)
        d /= np.linalg.norm(d, axis=0)
        zeta[:, sl] = sgn * d * mags(k)
    return eta, zeta


def symbol_bound_check(j: int, sign, m: float, a: float, samples: int = 100_000, seed: int = 0,
                       eta=None, zeta=None) -> dict:
    """max over samples of |q^sign_j| / rhs^a, with the maximising pair."""
    # the estimate is stated for a in [0, 1/2]; a = 1 is the two-sided
    # comparability case for q^-_1 and is accepted as well
    if not 0 <= a <= 1:
        raise ContractViolation(f"exponent a must lie in [0, 1], got {a}")
    if eta is None or zeta is None:
        eta, zeta = sample_frequency_pairs(np.random.default_rng(seed), samples)
    qn = symbol_norm(q_symbol(j, sign, eta, zeta, m))
    rhs = bound_rhs(sign, eta, zeta, m) ** a
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(qn == 0, 0.0, qn / rhs)
    i = int(np.nanargmax(ratio))
    finite = ratio[np.isfinite(ratio) & (qn > 0)]
    return {
        "j": j, "sign": "+" if _sign(sign) > 0 else "-", "m": m, "a": a,
        "max_ratio": float(ratio[i]),
        "min_ratio": float(finite.min()) if finite.size else math.nan,
        "argmax_eta": eta[:, i].tolist(), "argmax_zeta": zeta[:, i].tolist(),
        "samples": int(eta.shape[1]),
    }


def write_bound_scan_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "sign", "m", "a", "max_ratio", "min_ratio", "argmax_eta", "argmax_zeta", "samples"])
        for r in rows:
            w.writerow([r["j"], r["sign"], r["m"], r["a"], f"{r['max_ratio']:.10g}", f"{r['min_ratio']:.10g}",
                        " ".join(f"{x:.6g}" for x in r["argmax_eta"]),
                        " ".join(f"{x:.6g}" for x in r["argmax_zeta"]), r["samples"]])
