"""Half-wave projections of the free Dirac operator and the free propagators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SPECTRAL, ContractViolation, Grid, SpinorField, bracket_weight
from .spinor import ALPHA, BETA, IDENTITY


def _sign(sign) -> int:
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ContractViolation(f"sign must be +1/-1 or '+'/'-', got {sign!r}")


def dirac_symbol(xi, m: float) -> np.ndarray:
    """alpha.xi + m beta, shape (..., 4, 4) for xi of shape (3, ...)."""
    xi = np.asarray(xi, dtype=float)
    out = m * BETA * np.ones(xi.shape[1:] + (1, 1))
    for j in range(3):
        out = out + xi[j][..., None, None] * ALPHA[j]
    return out


def projector_symbol(xi, sign, m: float) -> np.ndarray:
    """Pi^sign_m(xi) = (I + sign (alpha.xi + m beta)/<xi>_m) / 2, shape (..., 4, 4).

    At the degenerate point xi = 0, m = 0 the symbol is I/2.
    """
    sgn = _sign(sign)
    xi = np.asarray(xi, dtype=float)
    br = np.asarray(bracket_weight(xi, m))
    safe = np.where(br > 0, br, 1.0)
    h = dirac_symbol(xi, m) / safe[..., None, None]
    return 0.5 * (IDENTITY + sgn * h)


def _apply_dirac(grid: Grid, data: np.ndarray, m: float) -> np.ndarray:
    """(alpha.xi + m beta) applied to spectral data, using the block structure."""
    kx, ky, kz = grid.kvec
    u1, u2, u3, u4 = data
    # alpha^j = [[0, sigma^j], [sigma^j, 0]]; sigma.xi = [[kz, kx - i ky], [kx + i ky, -kz]]
    out = np.empty_like(data)
    out[0] = kz * u3 + (kx - 1j * ky) * u4 + m * u1
    out[1] = (kx + 1j * ky) * u3 - kz * u4 + m * u2
    out[2] = kz * u1 + (kx - 1j * ky) * u2 - m * u3
    out[3] = (kx + 1j * ky) * u1 - kz * u2 - m * u4
    return out


def _inv_bracket(grid: Grid, m: float) -> np.ndarray:
    br = grid.bracket(m)
    return np.where(br > 0, 1.0 / np.where(br > 0, br, 1.0), 0.0)


def project_data(grid: Grid, data: np.ndarray, sign, m: float) -> np.ndarray:
    """Pi^sign applied to spectral spinor data."""
    sgn = _sign(sign)
    return 0.5 * (data + sgn * _apply_dirac(grid, data, m) * _inv_bracket(grid, m))


def project(fld: SpinorField, sign, m: float) -> SpinorField:
    spec = fld.spectral()
    return spec.replace(project_data(spec.grid, spec.data, sign, m))


@dataclass
class HalfWavePair:
    psi_plus: SpinorField
    psi_minus: SpinorField
    m: float

    def total(self) -> SpinorField:
        return self.psi_plus.spectral() + self.psi_minus.spectral()

    def component(self, sign) -> SpinorField:
        return self.psi_plus if _sign(sign) > 0 else self.psi_minus


def split(fld: SpinorField, m: float) -> HalfWavePair:
    spec = fld.spectral()
    return HalfWavePair(project(spec, +1, m), project(spec, -1, m), m)


def propagator_phase(grid: Grid, sign, t: float, m: float) -> np.ndarray:
    """Symbol exp(-+ i t <xi>_m) of S_m(+-t)."""
    return np.exp(-1j * _sign(sign) * t * grid.bracket(m))


def free_propagate(fld: SpinorField, sign, t: float, m: float) -> SpinorField:
    """S_m(sign * t) f = exp(-sign i t <D>_m) f."""
    spec = fld.spectral()
    return spec.replace(spec.data * propagator_phase(spec.grid, sign, t, m))


def dirac_free_flow(fld: SpinorField, t: float, m: float) -> SpinorField:
    """exp(-i t (alpha.D + m beta)) f, the free Dirac evolution of an unsplit field."""
    pair = split(fld, m)
    return free_propagate(pair.psi_plus, +1, t, m) + free_propagate(pair.psi_minus, -1, t, m)


def beta_field(fld: SpinorField) -> SpinorField:
    data = fld.data.copy()
    data[2:] *= -1
    return fld.replace(data)


def inverse_bracket(fld: SpinorField, m: float) -> SpinorField:
    """<D>_m^{-1} f (the xi = 0, m = 0 mode is sent to zero)."""
    spec = fld.spectral()
    return spec.replace(spec.data * _inv_bracket(spec.grid, m))


def identity_residuals(fld: SpinorField, m: float) -> dict[str, float]:
    """Relative residuals of the projection identities for one field."""
    u = fld.spectral()
    scale = max(u.norm(), 1e-300)
    p = {s: project(u, s, m) for s in (+1, -1)}
    res = {
        "reconstruction": (p[+1] + p[-1] - u).norm() / scale,
    }
    for s in (+1, -1):
        tag = "+" if s > 0 else "-"
        res[f"idempotence{tag}"] = (project(p[s], s, m) - p[s]).norm() / scale
        res[f"annihilation{tag}"] = project(p[s], -s, m).norm() / scale
        # beta Pi^s u - Pi^{-s}(beta u) - s m <D>^{-1} u = 0
        lhs = beta_field(p[s]) - project(beta_field(u), -s, m) - s * m * inverse_bracket(u, m)
        res[f"beta-commutation{tag}"] = lhs.norm() / scale
    return res


def free_wave_residual(f: SpinorField, sign, m: float, t: float, h: float = 1e-3) -> float:
    """Relative residual of (-i d/dt + sign <D>_m) S_m(sign t) f = 0.

    d/dt is a fourth-order central difference in time, so the check does not
    reuse the propagator's own phase derivative.
    """
    sgn = _sign(sign)
    at = lambda tt: free_propagate(f, sgn, tt, m).data
    dudt = (-at(t + 2 * h) + 8 * at(t + h) - 8 * at(t - h) + at(t - 2 * h)) / (12 * h)
    br = f.grid.bracket(m)
    u = at(t)
    resid = -1j * dudt + sgn * br * u
    return float(np.linalg.norm(resid) / max(np.linalg.norm(br * u), 1e-300))


def require_spectral(fld: SpinorField):
    if fld.rep != SPECTRAL:
        raise ContractViolation("expected a spectral-space field")
