"""Constant Dirac/Pauli matrices and pointwise spinor pairings.

The inner product on C^4 conjugates its *second* argument,

    inner(a, b) = b^dagger a = sum_k a_k conj(b_k),

so that ``inner(beta @ psi, psi)`` is |psi_1|^2 + |psi_2|^2 - |psi_3|^2 - |psi_4|^2.
Every bilinear density in the package goes through :func:`pair` and uses
this convention.
"""

from __future__ import annotations

import itertools

import numpy as np

_I2 = np.eye(2, dtype=complex)
_Z2 = np.zeros((2, 2), dtype=complex)

SIGMA = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

IDENTITY = np.eye(4, dtype=complex)
BETA = np.block([[_I2, _Z2], [_Z2, -_I2]])
GAMMA = (BETA,) + tuple(np.block([[_Z2, s], [-s, _Z2]]) for s in SIGMA)
ALPHA = tuple(GAMMA[0] @ g for g in GAMMA[1:])
SPIN = tuple(np.block([[s, _Z2], [_Z2, s]]) for s in SIGMA)

for _m in (IDENTITY, BETA, *GAMMA, *ALPHA, *SPIN):
    _m.setflags(write=False)

_KINDS = {
    "gamma0": GAMMA[0], "gamma1": GAMMA[1], "gamma2": GAMMA[2], "gamma3": GAMMA[3],
    "alpha1": ALPHA[0], "alpha2": ALPHA[1], "alpha3": ALPHA[2],
    "beta": BETA,
    "S1": SPIN[0], "S2": SPIN[1], "S3": SPIN[2],
    "identity": IDENTITY,
}


def dirac_matrix(kind: str) -> np.ndarray:
    """Return one of the constant 4x4 matrices by name (``"alpha2"``, ``"S3"``, ...)."""
    try:
        return _KINDS[kind].copy()
    except KeyError:
        raise ValueError(f"unknown matrix kind {kind!r}; expected one of {sorted(_KINDS)}") from None


def levi_civita(j: int, k: int, l: int) -> int:
    """Permutation symbol on 0-based indices."""
    if len({j, k, l}) < 3:
        return 0
    perm = (j, k, l)
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


def inner(a, b):
    """Sesquilinear pairing over the leading spinor axis, conjugate-linear in ``b``.

    ``a`` and ``b`` have shape ``(4, ...)``; the result has shape ``(...)``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    return np.einsum("a...,a...->...", a, np.conj(b))


def apply_matrix(mat, psi):
    """Apply a constant (4, 4) matrix to a spinor array of shape (4, ...)."""
    return np.einsum("ab,b...->a...", mat, psi)


def beta_apply(psi):
    """beta @ psi without a matrix product (beta is diagonal)."""
    out = np.array(psi, dtype=complex, copy=True)
    out[2:] *= -1
    return out


def bilinear_density(psi, phi):
    """inner(beta psi, phi); real when ``phi is psi``."""
    return inner(beta_apply(psi), phi)


def pair(u, mat, v):
    """Pointwise inner(beta u, mat v) for spinor arrays u, v of shape (4, ...)."""
    return inner(beta_apply(u), apply_matrix(mat, v))


def _max_abs(x) -> float:
    return float(np.max(np.abs(x)))


def identity_residuals() -> dict[str, float]:
    """Max-norm residuals of the Clifford identities.

    The matrices have entries in {0, +-1, +-i}, so every product below is
    computed without rounding and each residual is exactly zero.
    """
    res = {"beta^2 - I": _max_abs(BETA @ BETA - IDENTITY)}
    for j in range(3):
        a = ALPHA[j]
        res[f"alpha{j+1}^2 - I"] = _max_abs(a @ a - IDENTITY)
        res[f"alpha{j+1} beta + beta alpha{j+1}"] = _max_abs(a @ BETA + BETA @ a)
    for j, k in itertools.product(range(3), repeat=2):
        aj, ak = ALPHA[j], ALPHA[k]
        delta = 1.0 if j == k else 0.0
        res[f"{{alpha{j+1}, alpha{k+1}}} - 2 delta I"] = _max_abs(aj @ ak + ak @ aj - 2 * delta * IDENTITY)
        eps_s = sum(levi_civita(j, k, l) * SPIN[l] for l in range(3))
        res[f"alpha{j+1} alpha{k+1} - delta I - i eps S"] = _max_abs(aj @ ak - delta * IDENTITY - 1j * eps_s)
    return res
