"""Time evolution of the Yukawa-Hartree Dirac system in half-wave form.

The unknowns are the half waves psi^+- with

    d/dt psi^+- = -+ i <D>_m psi^+- + i Pi^+- F,   F = (V * <beta psi, psi>) beta psi,

psi = psi^+ + psi^-.  States are stacked spectral arrays of shape
(2, 4, n, n, n); index 0 holds psi^+ and index 1 holds psi^-.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_simpson

from .decomp import HalfWavePair, _sign, project_data, propagator_phase, split
from .grid import (SPECTRAL, YUKAWA_CONSTANT, ContractViolation, Grid, SpinorField, fftn, hs_norm_spectral,
                   ifftn, l2_norm_spectral, yukawa_convolve)
from .spinor import beta_apply


class BlowUp(RuntimeError):
    """Non-finite values during time stepping; carries the time and partial trajectory."""

    def __init__(self, t: float, trajectory=None):
        super().__init__(f"non-finite state at t = {t:.6g}")
        self.t = t
        self.trajectory = trajectory


class NonContraction(RuntimeError):
    """Picard distances grew for three consecutive iterations."""

    def __init__(self, result):
        super().__init__(f"Picard iteration is not contracting: distances {result.distances}")
        self.result = result


@dataclass(frozen=True)
class SimConfig:
    n: int = 32
    length: float = 2 * math.pi
    m: float = 1.0
    s: float = 0.1
    epsilon: float = 0.01
    dt: float = 1e-3
    T: float = 1.0
    scheme: str = "etd_rk4"
    seed: int = 0
    output_every: int = 100
    envelope_width: float = 1.0 / 16  # spatial Gaussian envelope width as a fraction of the box; 0 disables
    yukawa_constant: float = YUKAWA_CONSTANT

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        if self.T < self.dt:
            raise ContractViolation("horizon T must be at least dt")
        if self.epsilon < 0:
            raise ContractViolation("epsilon must be nonnegative")
        if not self.s > 0:
            raise ContractViolation("Sobolev index s must be positive")
        if self.scheme not in ("etd_rk4", "picard"):
            raise ContractViolation(f"unknown scheme {self.scheme!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.length)

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))


# ---------------------------------------------------------------------------
# Data and nonlinearity


def initial_data(config: SimConfig) -> HalfWavePair:
    """Random data with <xi>^{-s-2}-weighted Gaussian coefficients, H^s norm epsilon, split by Pi^+-.

    With ``envelope_width > 0`` the field is multiplied in physical space by
    a Gaussian bump centred in the box, so that the solution disperses
    within the simulated window.
    """
    grid = config.grid
    rng = np.random.default_rng(config.seed)
    shape = (4,) + grid.shape
    coeff = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * grid.bracket(1.0) ** (-config.s - 2)
    if config.envelope_width > 0:
        width = config.envelope_width * grid.length
        r2 = np.sum((grid.xvec - grid.length / 2) ** 2, axis=0)
        coeff = fftn(ifftn(coeff) * np.exp(-0.5 * r2 / width**2))
    norm = hs_norm_spectral(grid, coeff, config.s)
    coeff = coeff * (config.epsilon / norm) if config.epsilon > 0 else np.zeros_like(coeff)
    return split(SpinorField(grid, coeff, SPECTRAL), config.m)


def stack(pair: HalfWavePair) -> np.ndarray:
    return np.stack([pair.psi_plus.spectral().data, pair.psi_minus.spectral().data])


def unstack(grid: Grid, state: np.ndarray, m: float) -> HalfWavePair:
    return HalfWavePair(SpinorField(grid, state[0].copy(), SPECTRAL), SpinorField(grid, state[1].copy(), SPECTRAL), m)


def _nonlinearity_physical(grid: Grid, psi_phys: np.ndarray, constant: float) -> np.ndarray:
    bpsi = beta_apply(psi_phys)
    density = np.einsum("a...,a...->...", bpsi, np.conj(psi_phys)).real
    potential = yukawa_convolve(grid, density, constant).real
    return potential * bpsi


def hartree_nonlinearity(pair: HalfWavePair, m: float = 0.0, constant: float = YUKAWA_CONSTANT) -> SpinorField:
    """F = (V * <beta psi, psi>) beta psi for psi = psi^+ + psi^-, returned in spectral form."""
    psi = pair.total()
    grid = psi.grid
    return SpinorField(grid, fftn(_nonlinearity_physical(grid, ifftn(psi.data), constant)), SPECTRAL)


def density(pair: HalfWavePair) -> np.ndarray:
    """Complex pointwise <beta psi, psi> (imaginary part is roundoff)."""
    psi = ifftn(pair.total().data)
    return np.einsum("a...,a...->...", beta_apply(psi), np.conj(psi))


def _rhs(grid: Grid, state: np.ndarray, m: float, constant: float) -> np.ndarray:
    """Nonlinear part i Pi^+- F of the half-wave system."""
    fh = fftn(_nonlinearity_physical(grid, ifftn(state[0] + state[1]), constant))
    return 1j * np.stack([project_data(grid, fh, +1, m), project_data(grid, fh, -1, m)])


def _phases(grid: Grid, h: float, m: float) -> np.ndarray:
    """E(h) = diag(e^{-ih<D>}, e^{+ih<D>}) as a (2, 1, n, n, n) array."""
    return np.stack([propagator_phase(grid, +1, h, m), propagator_phase(grid, -1, h, m)])[:, None]


# ---------------------------------------------------------------------------
# Interaction-picture RK4


def lawson_step(grid: Grid, state: np.ndarray, dt: float, m: float, constant: float = YUKAWA_CONSTANT,
                nonlinear: bool = True, phases=None) -> np.ndarray:
    """One integrating-factor RK4 step: exact free flow, RK4 on the pulled-back nonlinearity."""
    e_half, e_full = phases if phases is not None else (_phases(grid, dt / 2, m), _phases(grid, dt, m))
    if not nonlinear:
        return e_full * state
    k1 = _rhs(grid, state, m, constant)
    a = e_half * (state + 0.5 * dt * k1)
    k2 = _rhs(grid, a, m, constant)
    b = e_half * state + 0.5 * dt * k2
    k3 = _rhs(grid, b, m, constant)
    c = e_full * state + dt * e_half * k3
    k4 = _rhs(grid, c, m, constant)
    return e_full * state + dt / 6 * (e_full * k1 + 2 * e_half * (k2 + k3) + k4)


def step_etd(pair: HalfWavePair, dt: float, m: float, constant: float = YUKAWA_CONSTANT,
             nonlinear: bool = True) -> HalfWavePair:
    grid = pair.psi_plus.grid
    out = lawson_step(grid, stack(pair), dt, m, constant, nonlinear)
    if not np.all(np.isfinite(out)):
        raise BlowUp(dt)
    return unstack(grid, out, m)


def integrate(grid: Grid, state: np.ndarray, dt: float, steps: int, m: float,
              constant: float = YUKAWA_CONSTANT, nonlinear: bool = True) -> np.ndarray:
    """Advance a stacked state by ``steps`` steps of size dt (dt < 0 runs backwards)."""
    phases = (_phases(grid, dt / 2, m), _phases(grid, dt, m))
    for k in range(steps):
        state = lawson_step(grid, state, dt, m, constant, nonlinear, phases)
        if not np.all(np.isfinite(state)):
            raise BlowUp((k + 1) * dt)
    return state


# ---------------------------------------------------------------------------
# Trajectories


def state_hs_norm(grid: Grid, state: np.ndarray, s: float) -> float:
    """H^s norm of psi^+ + psi^-."""
    return hs_norm_spectral(grid, state[0] + state[1], s)


def state_l2_norm(grid: Grid, state: np.ndarray) -> float:
    return l2_norm_spectral(grid, state[0] + state[1])


@dataclass
class Trajectory:
    grid: Grid
    m: float
    s: float
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    blown_up_at: float | None = None

    def pair(self, k: int) -> HalfWavePair:
        return unstack(self.grid, self.states[k], self.m)

    @property
    def l2_drift(self) -> float:
        return max((abs(d["drift"]) for d in self.diagnostics), default=0.0)

    def write_csv(self, path):
        keys = ["t", "l2", "hs", "drift", "nonlinearity"]
        with open(path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for d in self.diagnostics:
                fh.write(",".join(f"{d[k]:.17g}" for k in keys) + "\n")


def evolve(config: SimConfig, pair: HalfWavePair | None = None, nonlinear: bool = True) -> Trajectory:
    """Run the RK4 scheme to T, recording diagnostics every step and states every ``output_every`` steps."""
    grid = config.grid
    pair = initial_data(config) if pair is None else pair
    state = stack(pair)
    traj = Trajectory(grid, config.m, config.s)
    l2_0 = state_l2_norm(grid, state)
    phases = (_phases(grid, config.dt / 2, config.m), _phases(grid, config.dt, config.m))

    def record(k, st):
        l2 = state_l2_norm(grid, st)
        nl = _rhs(grid, st, config.m, config.yukawa_constant) if nonlinear else np.zeros_like(st)
        traj.diagnostics.append({
            "t": k * config.dt, "l2": l2, "hs": state_hs_norm(grid, st, config.s),
            "drift": (l2 - l2_0) / l2_0 if l2_0 > 0 else 0.0,
            "nonlinearity": l2_norm_spectral(grid, nl[0] + nl[1]),
        })
        if k % config.output_every == 0 or k == config.steps:
            traj.times.append(k * config.dt)
            traj.states.append(st.copy())

    record(0, state)
    for k in range(1, config.steps + 1):
        state = lawson_step(grid, state, config.dt, config.m, config.yukawa_constant, nonlinear, phases)
        if not np.all(np.isfinite(state)):
            traj.blown_up_at = k * config.dt
            raise BlowUp(k * config.dt, traj)
        record(k, state)
    return traj


# ---------------------------------------------------------------------------
# Duhamel / Picard


GEOMETRIC_SPREAD = 10.0


@dataclass
class PicardResult:
    times: np.ndarray
    iterates: np.ndarray  # final iterate, shape (nt, 2, 4, n, n, n)
    distances: list[float]
    ratios: list[float]
    floor: float

    @property
    def geometric(self) -> bool:
        """At least two usable ratios, all below 1, spread within one decade."""
        r = self.ratios
        return len(r) >= 2 and max(r) < 1 and max(r) / min(r) <= GEOMETRIC_SPREAD


def duhamel_map(grid: Grid, psi0: np.ndarray, traj: np.ndarray, times: np.ndarray, m: float,
                constant: float = YUKAWA_CONSTANT) -> np.ndarray:
    """psi(t) = S(+-t)[psi0 + int_0^t S(-+t') i Pi^+- F(psi(t')) dt'] on the time grid."""
    pulled = np.empty_like(traj)
    for k, t in enumerate(times):
        pulled[k] = _phases(grid, -t, m) * _rhs(grid, traj[k], m, constant)
    # cumulative_simpson is real-only; integrate the two parts separately
    integral = (cumulative_simpson(pulled.real, x=times, axis=0, initial=0)
                + 1j * cumulative_simpson(pulled.imag, x=times, axis=0, initial=0))
    out = np.empty_like(traj)
    for k, t in enumerate(times):
        out[k] = _phases(grid, t, m) * (psi0 + integral[k])
    return out


def _sup_hs(grid: Grid, diff: np.ndarray, s: float) -> float:
    return max(state_hs_norm(grid, d, s) for d in diff)


def picard_iterate(pair0: HalfWavePair, T: float, n_iter: int, m: float, dt: float, s: float,
                   constant: float = YUKAWA_CONSTANT, floor_rel: float = 1e-12,
                   raise_on_divergence: bool = True) -> PicardResult:
    """Picard iteration started from the free evolution of the data.

    d_k is the sup-in-time H^s distance between consecutive iterates.  The
    iterates share their free part exactly, so roundoff in d_k scales with
    the first correction d_0; ratios d_{k+1}/d_k are reported only while both
    distances exceed ``floor_rel * d_0``.
    """
    grid = pair0.psi_plus.grid
    psi0 = stack(pair0)
    nt = int(round(T / dt)) + 1
    times = np.linspace(0.0, T, nt)
    cur = np.stack([_phases(grid, t, m) * psi0 for t in times])
    floor = 0.0
    distances: list[float] = []
    for _ in range(n_iter):
        nxt = duhamel_map(grid, psi0, cur, times, m, constant)
        distances.append(_sup_hs(grid, nxt - cur, s))
        cur = nxt
        if len(distances) == 1:
            floor = floor_rel * distances[0]
        if distances[-1] <= floor or distances[-1] == 0:
            break
    ratios = [distances[k + 1] / distances[k] for k in range(len(distances) - 1)
              if distances[k + 1] > floor and distances[k] > floor]
    result = PicardResult(times, cur, distances, ratios, floor)
    growth = [distances[k + 1] > distances[k] for k in range(len(distances) - 1)]
    if raise_on_divergence and any(all(growth[k:k + 3]) for k in range(len(growth) - 2)):
        raise NonContraction(result)
    return result


# ---------------------------------------------------------------------------
# Scattering diagnostics


@dataclass
class ScatterReport:
    sign: str
    times: list[float]
    residuals: np.ndarray
    tail_maxima: list[float]
    consistent: bool
    early_max: float
    late_max: float

    def to_dict(self) -> dict:
        return {"sign": self.sign, "times": self.times, "residuals": self.residuals.tolist(),
                "tail_maxima": self.tail_maxima, "scattering_consistent": self.consistent,
                "early_window_max": self.early_max, "late_window_max": self.late_max,
                "late_smaller": self.late_max < self.early_max}


def pullback_profiles(traj: Trajectory, sign) -> list[np.ndarray]:
    """g(t_k) = S_m(-+t_k) psi^+-(t_k)."""
    sgn = _sign(sign)
    idx = 0 if sgn > 0 else 1
    return [st[idx] * propagator_phase(traj.grid, sgn, -t, traj.m) for t, st in zip(traj.times, traj.states)]


def scattering_profile(traj: Trajectory, sign, s: float | None = None, m: float | None = None) -> ScatterReport:
    """Pairwise H^s residuals of the pulled-back profiles.

    ``consistent`` records that max_{i,j >= k} r(t_i, t_j) is nonincreasing
    in k; the half-window maxima compare pairs inside [0, T/2] with pairs
    inside [T/2, T].
    """
    s = traj.s if s is None else s
    prof = pullback_profiles(traj, sign)
    K = len(prof)
    r = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            r[i, j] = r[j, i] = hs_norm_spectral(traj.grid, prof[i] - prof[j], s)
    tails = [float(r[k:, k:].max()) for k in range(K)]
    times = np.asarray(traj.times)
    half = times[-1] / 2
    early = times <= half + 1e-12
    late = times >= half - 1e-12
    early_max = float(r[np.ix_(early, early)].max()) if early.sum() > 1 else 0.0
    late_max = float(r[np.ix_(late, late)].max()) if late.sum() > 1 else 0.0
    consistent = all(tails[k + 1] <= tails[k] for k in range(K - 1))
    return ScatterReport("+" if _sign(sign) > 0 else "-", list(map(float, traj.times)), r, tails, consistent,
                         early_max, late_max)


# ---------------------------------------------------------------------------
# Symmetry helpers


def rescale_data(pair: HalfWavePair, lam: float) -> HalfWavePair:
    """u_lam(x) = lam^{3/2} u(lam x) on a box of side L / lam with the same n (m = 0 scaling)."""
    grid = pair.psi_plus.grid
    small = Grid(grid.n, grid.length / lam)

    def conv(f):
        return SpinorField(small, f.spectral().data * lam**1.5, SPECTRAL)

    return HalfWavePair(conv(pair.psi_plus), conv(pair.psi_minus), pair.m)


def with_config(config: SimConfig, **changes) -> SimConfig:
    return replace(config, **changes)
