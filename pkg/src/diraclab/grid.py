"""Periodic grid, spectral transforms, Fourier multipliers and dyadic cutoffs.

Spectral arrays hold Fourier-series coefficients: ``u(x) = sum_k c_k exp(i k.x)``,
i.e. the forward FFT is normalised by 1/n^3 ("forward" norm).  With this choice
the L^2(box) norm is ``sqrt(L^3 * sum |c_k|^2)`` in spectral space and
``sqrt(h^3 * sum |u(x)|^2)`` in physical space, and the coefficients of a
pointwise product are the circular convolution of the factors' coefficients.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft

SPATIAL_AXES = (-3, -2, -1)
YUKAWA_CONSTANT = 4.0 * math.pi
THREADS_ENV = "DIRACLAB_THREADS"


class ContractViolation(ValueError):
    """An operation was called with an argument that breaks its precondition."""


class CapacityError(RuntimeError):
    """A requested computation exceeds the size the chosen method supports."""


def fft_workers() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    return max(1, int(value))


def fftn(a, axes=SPATIAL_AXES):
    return sfft.fftn(a, axes=axes, norm="forward", workers=fft_workers())


def ifftn(a, axes=SPATIAL_AXES):
    return sfft.ifftn(a, axes=axes, norm="forward", workers=fft_workers())


@dataclass(frozen=True)
class Grid:
    """Periodic n^3 lattice on a cube of side ``length``."""

    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self):
        if self.n < 8 or self.n % 2 or self.n & (self.n - 1):
            raise ContractViolation(f"n must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ContractViolation(f"box length must be positive, got {self.length}")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.length

    @property
    def nyquist(self) -> float:
        return self.dk * self.n / 2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def volume(self) -> float:
        return self.length**3

    @cached_property
    def k1d(self) -> np.ndarray:
        return self.dk * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Frequency lattice, shape (3, n, n, n), in FFT order."""
        return np.stack(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(np.sum(self.kvec**2, axis=0))

    @cached_property
    def x1d(self) -> np.ndarray:
        return self.spacing * np.arange(self.n)

    @cached_property
    def xvec(self) -> np.ndarray:
        return np.stack(np.meshgrid(self.x1d, self.x1d, self.x1d, indexing="ij"))

    def bracket(self, m: float) -> np.ndarray:
        """<xi>_m on the lattice."""
        return bracket_weight(self.kvec, m)

    def lattice_index(self, xi) -> tuple[int, int, int]:
        """FFT-order index of a lattice frequency vector."""
        idx = []
        for comp in xi:
            k = comp / self.dk
            if abs(k - round(k)) > 1e-9:
                raise ContractViolation(f"frequency {tuple(xi)} is not on the lattice")
            idx.append(int(round(k)) % self.n)
        return tuple(idx)

    def plane_wave(self, xi) -> np.ndarray:
        """exp(i xi.x) sampled on the grid."""
        phase = sum(xi[j] * self.xvec[j] for j in range(3))
        return np.exp(1j * phase)


PHYSICAL = "physical"
SPECTRAL = "spectral"


@dataclass
class SpinorField:
    """4-component field on a grid, in one of two representations."""

    grid: Grid
    data: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (4,) + self.grid.shape:
            raise ContractViolation(f"expected data shape {(4,) + self.grid.shape}, got {self.data.shape}")
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ContractViolation(f"unknown representation {self.rep!r}")

    @classmethod
    def zeros(cls, grid: Grid, rep: str = PHYSICAL) -> "SpinorField":
        return cls(grid, np.zeros((4,) + grid.shape, dtype=complex), rep)

    def spectral(self) -> "SpinorField":
        return self if self.rep == SPECTRAL else transform(self, "forward")

    def physical(self) -> "SpinorField":
        return self if self.rep == PHYSICAL else transform(self, "inverse")

    def replace(self, data) -> "SpinorField":
        return SpinorField(self.grid, data, self.rep)

    def copy(self) -> "SpinorField":
        return SpinorField(self.grid, self.data.copy(), self.rep)

    def _check(self, other: "SpinorField"):
        if other.grid != self.grid or other.rep != self.rep:
            raise ContractViolation("fields live on different grids or representations")

    def __add__(self, other):
        self._check(other)
        return self.replace(self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return self.replace(self.data - other.data)

    def __mul__(self, c):
        return self.replace(self.data * c)

    __rmul__ = __mul__

    def norm(self) -> float:
        return l2_norm(self)


def transform(fld: SpinorField, direction: str) -> SpinorField:
    """Forward (physical -> spectral) or inverse spectral transform."""
    if direction == "forward":
        if fld.rep != PHYSICAL:
            raise ContractViolation("forward transform needs a physical-space field")
        return SpinorField(fld.grid, fftn(fld.data), SPECTRAL)
    if direction == "inverse":
        if fld.rep != SPECTRAL:
            raise ContractViolation("inverse transform needs a spectral-space field")
        return SpinorField(fld.grid, ifftn(fld.data), PHYSICAL)
    raise ContractViolation(f"unknown direction {direction!r}")


def l2_norm_spectral(grid: Grid, coeffs) -> float:
    """L^2(box) norm from Fourier coefficients, any number of leading axes."""
    return math.sqrt(grid.volume * float(np.sum(np.abs(coeffs) ** 2)))


def l2_norm_physical(grid: Grid, values) -> float:
    return math.sqrt(grid.cell_volume * float(np.sum(np.abs(values) ** 2)))


def l2_norm(fld: SpinorField) -> float:
    if fld.rep == SPECTRAL:
        return l2_norm_spectral(fld.grid, fld.data)
    return l2_norm_physical(fld.grid, fld.data)


def sobolev_weight(grid: Grid, s: float) -> np.ndarray:
    """<xi>^s with the inhomogeneous bracket <xi> = sqrt(1 + |xi|^2)."""
    return (1.0 + grid.kabs**2) ** (s / 2)


def hs_norm_spectral(grid: Grid, coeffs, s: float) -> float:
    return l2_norm_spectral(grid, coeffs * sobolev_weight(grid, s))


def hs_norm(fld: SpinorField, s: float) -> float:
    return hs_norm_spectral(fld.grid, fld.spectral().data, s)


def bracket_weight(xi, m: float):
    """sqrt(m^2 + |xi|^2); ``xi`` has its 3 components on the leading axis."""
    if m < 0:
        raise ContractViolation(f"mass must be >= 0, got {m}")
    xi = np.asarray(xi, dtype=float)
    # hypot avoids underflow of |xi|^2 for tiny frequencies
    return np.hypot(np.hypot(np.hypot(xi[0], xi[1]), xi[2]), m)


@dataclass
class MultiplierSpec:
    """A Fourier multiplier given by its symbol on the frequency lattice.

    ``symbol`` maps the lattice array ``kvec`` (shape (3, n, n, n)) to either a
    scalar array (n, n, n) or, for ``kind="matrix"``, an array (4, 4, n, n, n).
    """

    kind: str
    symbol: Callable[[np.ndarray], np.ndarray]
    description: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, grid: Grid) -> np.ndarray:
        if grid not in self._cache:
            values = np.asarray(self.symbol(grid.kvec))
            expected = grid.shape if self.kind == "scalar" else (4, 4) + grid.shape
            values = np.broadcast_to(values, expected)
            if not np.all(np.isfinite(values)):
                raise ContractViolation(f"multiplier {self.description!r} is not finite on the lattice")
            self._cache[grid] = values
        return self._cache[grid]


def apply_multiplier(fld: SpinorField, spec: MultiplierSpec) -> SpinorField:
    """Pointwise multiplication in spectral space; matrix symbols mix the 4 components."""
    if fld.rep != SPECTRAL:
        raise ContractViolation("apply_multiplier needs a spectral-space field")
    values = spec.evaluate(fld.grid)
    if spec.kind == "scalar":
        return fld.replace(fld.data * values)
    if spec.kind == "matrix":
        return fld.replace(np.einsum("ab...,b...->a...", values, fld.data))
    raise ContractViolation(f"unknown multiplier kind {spec.kind!r}")


def scalar_multiplier(fn: Callable[[np.ndarray], np.ndarray], description: str = "") -> MultiplierSpec:
    return MultiplierSpec("scalar", fn, description)


def yukawa_symbol(kvec, constant: float = YUKAWA_CONSTANT):
    """Fourier symbol of convolution with exp(-|x|)/|x|."""
    return constant / (1.0 + np.sum(np.asarray(kvec) ** 2, axis=0))


def yukawa_convolve(grid: Grid, density, constant: float = YUKAWA_CONSTANT, spectral: bool = False):
    """Convolve a scalar field with the Yukawa potential.

    ``density`` is a physical-space array unless ``spectral`` is set; the
    result is returned in the same representation.
    """
    dens_hat = np.asarray(density) if spectral else fftn(density)
    out_hat = dens_hat * yukawa_symbol(grid.kvec, constant)
    return out_hat if spectral else ifftn(out_hat)


# ---------------------------------------------------------------------------
# Dyadic cutoffs


def _bump_exp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def chi(s):
    """Smooth even cutoff: 1 on [-1, 1], 0 outside (-2, 2)."""
    a = np.abs(np.asarray(s, dtype=float))
    num = _bump_exp(2.0 - a)
    den = num + _bump_exp(a - 1.0)
    return num / den


def is_dyadic(lam: float) -> bool:
    if not lam > 0:
        return False
    k = math.log2(lam)
    return abs(k - round(k)) < 1e-12


def check_dyadic(lam: float):
    if not is_dyadic(lam):
        raise ContractViolation(f"{lam} is not a dyadic number 2^k")


def rho_lambda(s, lam: float):
    """Frequency cutoff to |s| ~ lam (lam >= 1); identically zero for lam < 1."""
    check_dyadic(lam)
    s = np.asarray(s, dtype=float)
    if lam < 1:
        return np.zeros_like(s)
    if lam == 1:
        return chi(s)
    return chi(s / lam) - chi(2 * s / lam)


def sigma_lambda(s, lam: float):
    """Modulation cutoff to |s| ~ lam, any dyadic lam > 0."""
    check_dyadic(lam)
    s = np.asarray(s, dtype=float)
    return chi(s / lam) - chi(2 * s / lam)


def sigma_at_least(s, lam: float):
    """sum of sigma_mu over dyadic mu >= lam, i.e. 1 - chi(2 s / lam)."""
    check_dyadic(lam)
    return 1.0 - chi(2 * np.asarray(s, dtype=float) / lam)


def lp_bands(grid: Grid) -> list[float]:
    """Dyadic lam = 1, 2, ... up to the first one covering every lattice |xi|."""
    kmax = float(grid.kabs.max())
    bands = [1.0]
    while bands[-1] < kmax:
        bands.append(bands[-1] * 2)
    return bands


def lp_symbol(grid: Grid, lam: float) -> np.ndarray:
    return rho_lambda(grid.kabs, lam)


def lp_project(fld, lam: float, grid: Grid | None = None):
    """P_lam on a SpinorField, or on a bare spectral array when ``grid`` is given."""
    if isinstance(fld, SpinorField):
        spec = fld.spectral()
        out = spec.replace(spec.data * lp_symbol(spec.grid, lam))
        return out if fld.rep == SPECTRAL else out.physical()
    if grid is None:
        raise ContractViolation("lp_project on a bare array needs the grid")
    return np.asarray(fld) * lp_symbol(grid, lam)


# ---------------------------------------------------------------------------
# Snapshot I/O

_SNAPSHOT_MAGIC = b"DIRACSNP"


def save_field(path, fld: SpinorField, m: float = 0.0, dtype: str = "complex128", extra: dict | None = None):
    """Write a field as an 8-byte magic, a length-prefixed JSON header and raw little-endian data."""
    if dtype not in ("complex64", "complex128"):
        raise ContractViolation(f"unsupported snapshot dtype {dtype}")
    header = {"n": fld.grid.n, "L": fld.grid.length, "repr": fld.rep, "m": m, "dtype": dtype,
              "shape": [4, fld.grid.n, fld.grid.n, fld.grid.n]}
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True).encode()
    data = np.ascontiguousarray(fld.data, dtype=np.dtype(dtype).newbyteorder("<"))
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(data.tobytes())


def load_field(path) -> tuple[SpinorField, dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != _SNAPSHOT_MAGIC:
            raise ContractViolation(f"{path} is not a field snapshot")
        size = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(size))
        dtype = np.dtype(header["dtype"]).newbyteorder("<")
        data = np.frombuffer(fh.read(), dtype=dtype).reshape(header["shape"])
    grid = Grid(header["n"], header["L"])
    return SpinorField(grid, data.astype(complex), header["repr"]), header


def radial_spectrum(fld: SpinorField, nbins: int | None = None):
    """Shell-summed spectral energy L^3 sum |c_k|^2 in bins of |xi| of width dk."""
    grid = fld.grid
    energy = grid.volume * np.sum(np.abs(fld.spectral().data) ** 2, axis=0)
    shell = np.floor(grid.kabs / grid.dk + 0.5).astype(int)
    nbins = nbins or int(shell.max()) + 1
    sums = np.bincount(shell.ravel(), weights=energy.ravel(), minlength=nbins)[:nbins]
    return grid.dk * np.arange(nbins), sums


def write_radial_spectrum_csv(path, fld: SpinorField):
    k, e = radial_spectrum(fld)
    with open(path, "w") as fh:
        fh.write("k,energy\n")
        for ki, ei in zip(k, e):
            fh.write(f"{ki:.10g},{ei:.17g}\n")
