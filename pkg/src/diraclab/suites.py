"""Check suites shared by the command line and the acceptance tests.

Every suite takes a resolved configuration (see :mod:`diraclab.config`) and
returns a :class:`SuiteResult`: named checks against the configured
tolerances, plus plain tables that are written out as CSV.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import freewave as fw
from .config import sim_config
from .decomp import identity_residuals as projection_residuals
from .grid import SPECTRAL, Grid, SpinorField, fftn, save_field, write_radial_spectrum_csv
from .nullform import (DECOMPOSITION_CONSTANT, bilinear_fourier, bilinear_physical_data, decomposition_check,
                       fit_decomposition_constant, sample_frequency_pairs, symbol_bound_check, symbol_sum_check)
from .solver import BlowUp, evolve, initial_data, picard_iterate, scattering_profile, state_hs_norm, with_config
from .spinor import identity_residuals as matrix_residuals

_RELATIONS = {"<": lambda a, b: a < b, "<=": lambda a, b: a <= b, ">": lambda a, b: a > b,
              ">=": lambda a, b: a >= b, "==": lambda a, b: a == b}


@dataclass
class Check:
    name: str
    value: float
    relation: str
    threshold: float
    enforced: bool = True
    note: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value)) and _RELATIONS[self.relation](self.value, self.threshold)

    def line(self) -> str:
        tag = ("PASS" if self.passed else "FAIL") if self.enforced else "INFO"
        extra = f"  ({self.note})" if self.note else ""
        return f"{tag}  {self.name}: {self.value:.6g} {self.relation} {self.threshold:.6g}{extra}"

    def row(self) -> dict:
        return {"check": self.name, "value": self.value, "relation": self.relation, "threshold": self.threshold,
                "enforced": self.enforced, "passed": self.passed, "note": self.note}


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.enforced)

    def add(self, name, value, relation, threshold, enforced=True, note="") -> Check:
        c = Check(name, float(value), relation, float(threshold), enforced, note)
        self.checks.append(c)
        return c

    def extend(self, other: "SuiteResult") -> "SuiteResult":
        self.checks += other.checks
        self.tables.update(other.tables)
        self.summary.update(other.summary)
        self.elapsed += other.elapsed
        return self

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "checks.csv", [c.row() for c in self.checks])
        for name, rows in self.tables.items():
            write_rows(out / f"{name}.csv", rows)
        summary = {"suite": self.name, "passed": self.passed, "checks": [c.row() for c in self.checks],
                   **self.summary}
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_rows(path, rows: list[dict]) -> None:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - start
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def random_field(grid: Grid, rng: np.random.Generator, drop_zero_mode: bool = False) -> SpinorField:
    shape = (4,) + grid.shape
    data = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    if drop_zero_mode:
        data[:, 0, 0, 0] = 0
    return SpinorField(grid, data, SPECTRAL)


# ---------------------------------------------------------------------------
# Identity suites


@timed
def matrix_suite(cfg) -> SuiteResult:
    res = SuiteResult("matrix")
    resid = matrix_residuals()
    res.tables["matrix_identities"] = [{"identity": k, "residual": v} for k, v in resid.items()]
    res.add("matrix identities (max residual)", max(resid.values()), "<=", cfg["tolerances"]["matrix_identity"])
    return res


@timed
def projection_suite(cfg) -> SuiteResult:
    """Projection identities on random fields; the zero mode is left out at m = 0."""
    v = cfg["verify"]
    res = SuiteResult("projection")
    grid = Grid(v["n"])
    rng = np.random.default_rng([cfg["run"]["seed"], 1])
    rows = []
    worst = 0.0
    for m in (0.0, 1.0):
        acc: dict[str, float] = {}
        for _ in range(v["fields"]):
            for k, r in projection_residuals(random_field(grid, rng, m == 0), m).items():
                acc[k] = max(acc.get(k, 0.0), r)
        rows += [{"m": m, "identity": k, "max_residual": r, "fields": v["fields"]} for k, r in acc.items()]
        worst = max(worst, max(acc.values()))
    res.tables["projection_identities"] = rows
    res.add(f"projection identities ({v['fields']} fields, n={v['n']}, m=0,1)", worst, "<",
            cfg["tolerances"]["projection_identity"])
    return res


@timed
def decomposition_suite(cfg) -> SuiteResult:
    """Symbol sum identity, the frozen-constant decomposition and the two evaluation routes."""
    v = cfg["verify"]
    tol = cfg["tolerances"]
    seed = cfg["run"]["seed"]
    res = SuiteResult("decomposition")

    rng = np.random.default_rng([seed, 2])
    eta, zeta = sample_frequency_pairs(rng, v["symbol_pairs"])
    rows = [{"sign": sg, "m": m, "max_residual": symbol_sum_check(sg, eta, zeta, m), "pairs": v["symbol_pairs"]}
            for m in (0.0, 1.0) for sg in (+1, -1)]
    res.tables["symbol_sum"] = rows
    res.add(f"symbol sum identity ({v['symbol_pairs']} pairs)", max(r["max_residual"] for r in rows), "<",
            tol["symbol_sum"])

    grid = Grid(v["n"])
    rng = np.random.default_rng([seed, 3])
    pairs = [(random_field(grid, rng), random_field(grid, rng)) for _ in range(v["decomposition_pairs"])]
    rows = []
    for m in (0.0, 1.0):
        for sg in (+1, -1):
            fitted = fit_decomposition_constant(pairs, sg, m)
            resid = max(decomposition_check(u, w, sg, m, DECOMPOSITION_CONSTANT)[1] for u, w in pairs)
            rows.append({"sign": sg, "m": m, "fitted_re": fitted.real, "fitted_im": fitted.imag,
                         "frozen": DECOMPOSITION_CONSTANT, "max_residual": resid, "pairs": len(pairs)})
    res.tables["decomposition"] = rows
    res.summary["decomposition_constant"] = DECOMPOSITION_CONSTANT
    res.add(f"decomposition with frozen constant {DECOMPOSITION_CONSTANT} ({len(pairs)} pairs)",
            max(r["max_residual"] for r in rows), "<", tol["decomposition"])

    small = Grid(8)
    rng = np.random.default_rng([seed, 4])
    u, w = random_field(small, rng), random_field(small, rng)
    rows = []
    for m in (0.0, 0.5, 1.0):
        for sg in (+1, -1):
            for fam, js in (("q", (1, 2, 3)), ("b", (1, 2, 3, 4))):
                for j in js:
                    ref = bilinear_fourier(fam, j, sg, u, w, m)
                    phys = fftn(bilinear_physical_data(small, fam, j, sg, u.data, w.data, m))
                    rel = float(np.linalg.norm(phys - ref) / max(np.linalg.norm(ref), 1e-300))
                    rows.append({"family": fam, "j": j, "sign": sg, "m": m, "relative_difference": rel})
    res.tables["cross_representation"] = rows
    res.add("Fourier kernel vs physical space (8^3)", max(r["relative_difference"] for r in rows), "<",
            tol["cross_representation"])
    return res


@timed
def bound_suite(cfg) -> SuiteResult:
    """Pointwise null-symbol bounds: a = 1/2 for every q_j, two-sided a = 1 for q^-_1."""
    v = cfg["verify"]
    bound = cfg["tolerances"]["symbol_bound"]
    res = SuiteResult("bounds")
    rows = []
    for m in (0.0, 1.0):
        for sg in (+1, -1):
            for j in (1, 2, 3):
                rows.append(symbol_bound_check(j, sg, m, 0.5, v["bound_samples"], cfg["run"]["seed"]))
        rows.append(symbol_bound_check(1, -1, m, 1.0, v["bound_samples"], cfg["run"]["seed"]))
    res.tables["symbol_bounds"] = [{k: r[k] for k in ("j", "sign", "m", "a", "max_ratio", "min_ratio", "samples")}
                                   for r in rows]
    res.add("null symbol bound, a = 1/2 (max ratio)", max(r["max_ratio"] for r in rows if r["a"] == 0.5), "<",
            bound)
    two_sided = [r for r in rows if r["a"] == 1.0]
    res.add("q^-_1 comparability, a = 1 (max ratio)", max(r["max_ratio"] for r in two_sided), "<", bound)
    res.add("q^-_1 comparability, a = 1 (min ratio)", min(r["min_ratio"] for r in two_sided), ">", 1 / bound)
    return res


def verify_suite(cfg) -> SuiteResult:
    res = SuiteResult("verify")
    for part in (matrix_suite, projection_suite, decomposition_suite, bound_suite):
        res.extend(part(cfg))
    return res


# ---------------------------------------------------------------------------
# Oracle calibration

SUPPORT_PROBES = [  # (sign, m, tau, |xi|)
    (-1, 1.0, 0.5, 2.0), (-1, 0.0, 0.5, 2.0), (-1, 1.0, -1.5, 2.0), (-1, 0.5, 1.9, 2.0),
    (-1, 1.0, 3.0, 1.0), (-1, 1.0, 2.5, 2.0),
]


@timed
def oracle_suite(cfg) -> SuiteResult:
    o = cfg["oracle"]
    tol = cfg["tolerances"]
    res = SuiteResult("oracle")
    rng = np.random.default_rng([cfg["run"]["seed"], 5])
    configs = fw.analytic_configs() + fw.random_configs(rng, o["configs"])
    rows = fw.calibrate(configs, o["eps"])
    res.tables["calibration"] = rows
    summ = fw.calibration_summary(rows)
    res.summary["calibration"] = summ
    res.summary["oracle_constant"] = fw.ORACLE_CONSTANT
    res.add(f"oracle ratio spread over {summ['configs']} configurations (eps={summ['eps']})", summ["spread"],
            "<", tol["oracle_spread"])
    res.add("calibrated constant / 2 pi - 1", abs(summ["constant_over_2pi"] - 1), "<", tol["oracle_spread"])
    finest = min(o["eps"])
    for label, exact in fw.ANALYTIC_VALUES.items():
        row = next(r for r in rows if r["label"] == label and r["eps"] == finest)
        res.add(f"{label}: closed form vs {exact:.6g}", abs(row["closed"] / exact - 1), "<", tol["oracle_analytic"])
        res.add(f"{label}: bruteforce / 2 pi vs {exact:.6g}", abs(row["bruteforce"] / fw.ORACLE_CONSTANT / exact - 1),
                "<", tol["oracle_analytic"])

    probes = []
    for sg, m, tau, xn in SUPPORT_PROBES:
        val = fw.support_probe(sg, m, tau, xn)
        probes.append({"sign": sg, "m": m, "tau": tau, "xi_norm": xn, "bruteforce": val, "nonzero": val > 1e-8,
                       "abs_tau_below_abs_xi": abs(tau) < xn,
                       "tau2_minus_xi2_at_least_4m2": tau * tau - xn * xn >= 4 * m * m})
    res.tables["support_probe"] = probes
    mismatches = sum(p["nonzero"] != p["abs_tau_below_abs_xi"] for p in probes)
    res.summary["minus_support"] = "|tau| < |xi|" if mismatches == 0 else "undetermined"
    res.add("I- support matches |tau| < |xi| (mismatching probes)", mismatches, "==", 0)
    return res


# ---------------------------------------------------------------------------
# Scans


def _scan_grid(cfg) -> Grid:
    return Grid(cfg["scan"]["n"])


@timed
def strichartz_suite(cfg) -> SuiteResult:
    sc = cfg["scan"]
    q = sc["q"]
    r = 2 * q / (q - 2)
    grid = _scan_grid(cfg)
    out = fw.strichartz_scan(sc["scales"], q, r, sc["m"], sc["trials"], grid, grid.length, sc["nt"],
                             cfg["run"]["seed"])
    res = SuiteResult("strichartz")
    res.tables["strichartz"] = out["rows"]
    res.summary["strichartz"] = {"q": q, "r": r, "maxima": {str(k): v for k, v in out["maxima"].items()},
                                 "exponent": out["exponent"], "predicted_exponent": out["predicted_exponent"]}
    res.add(f"Strichartz q={q:g} exponent (predicted {out['predicted_exponent']:.3g})", out["exponent"], "<=",
            out["predicted_exponent"] + cfg["tolerances"]["scan_slack"])
    return res


def _null_gain_monotone(series) -> bool:
    vals = [v for _, v in series]
    return all(b < a for a, b in zip(vals, vals[1:]))


@timed
def scaling_scan_suite(cfg) -> SuiteResult:
    sc = cfg["scan"]
    slack = cfg["tolerances"]["scan_slack"]
    grid = _scan_grid(cfg)
    scales = tuple(sc["scales"])
    results = fw.scaling_suite(sc["m"], sc["trials"], grid, grid.length, sc["nt"], cfg["run"]["seed"], scales)
    res = SuiteResult("scaling")
    res.tables["scaling"] = [
        {"kind": r.kind, "interaction": r.interaction, "j": "" if r.j is None else r.j, "mu": r.mu,
         "lambda1": r.lam1, "lambda2": r.lam2, "family": fam, "trial": k, "measured": val,
         "predicted": r.predicted, "ratio": val / r.predicted}
        for r in results for k, (fam, val) in enumerate(r.samples)]
    fits = []
    # plain products and the sup over the null forms carry the estimates; single null forms are reported
    plan = [("plain", "++", None, True), ("plain", "+-", None, True), ("null", "++", "sup", True),
            ("null", "+-", "sup", False)] + [("null", "++", j, False) for j in (1, 2, 3)]
    for kind, inter, j, enforced in plan:
        fit = fw.fit_scaling(results, kind, inter, j, scales, slack)
        fits.append(fit)
        label = f"{kind} {inter}" + ("" if j is None else f" j={j}")
        for var in ("mu", "lambda"):
            res.add(f"{label}: {var} exponent (predicted {fit['predicted'][var]:.3g})", fit["fitted"][var], "<=",
                    fit["predicted"][var] + slack, enforced)
    res.summary["fits"] = fits
    gains = []
    for j in (1, 2, 3):
        series = fw.null_gain_series(results, j, "++", scales)
        gains += [{"j": j, "mu": min(scales), "lambda": lam, "null_over_plain": g} for lam, g in series]
        steps = [b / a for (_, a), (_, b) in zip(series, series[1:])]
        res.add(f"null gain j={j} decreases in lambda (largest step ratio)", max(steps), "<", 1.0,
                note=" ".join(f"{g:.3g}" for _, g in series))
    res.tables["null_gain"] = gains
    res.summary["scan_mass"] = sc["m"]
    res.summary["trials_per_family"] = sc["trials"]
    return res


@timed
def modulation_suite(cfg) -> SuiteResult:
    sc = cfg["scan"]
    grid = _scan_grid(cfg)
    rng = np.random.default_rng([cfg["run"]["seed"], 6])
    lam = sc["modulation_lambda"]
    rows = []
    for m in (0.0, 1.0):
        f_hat = fw.random_band_data(grid, 4, rng)[0]
        for sg in (+1, -1):
            for mod in (1, 2, 4, 8, 16):
                rows.append({"m": m, "sign": sg, "data_band": 4, "modulation": mod,
                             "leakage": fw.modulation_leakage(grid, mod, sg, m, grid.length, sc["nt"], f_hat)})
    res = SuiteResult("modulation")
    res.tables["modulation_leakage"] = rows
    res.add(f"free-wave content at modulation >= {lam:g}", max(r["leakage"] for r in rows if r["modulation"] == lam),
            "<", cfg["tolerances"]["modulation_leakage"])
    return res


def _growth(values: dict) -> list[float]:
    v = [values[k] for k in sorted(values)]
    return [b / a - 1 for a, b in zip(v, v[1:])]


@timed
def dyadic_suite(cfg) -> SuiteResult:
    sc = cfg["scan"]
    tol = cfg["tolerances"]
    s, delta, ctrl = sc["dyadic_s"], sc["dyadic_delta"], sc["dyadic_control_delta"]
    Ks = tuple(sc["dyadic_K"])
    seed = cfg["run"]["seed"]
    bounded = fw.dyadic_growth(s, delta, sc["dyadic_trials"], Ks, seed)
    control = fw.dyadic_growth(s, ctrl, sc["dyadic_trials"], Ks, seed)
    res = SuiteResult("dyadic")
    res.tables["dyadic"] = ([{"s": s, "delta": delta, "K": K, "max_ratio": v} for K, v in bounded.items()]
                            + [{"s": s, "delta": ctrl, "K": K, "max_ratio": v} for K, v in control.items()])
    res.add(f"dyadic sum (s, delta) = ({s:g}, {delta:g}): growth per support doubling", max(_growth(bounded)), "<=",
            tol["dyadic_bounded_growth"])
    res.add(f"negative control delta = {ctrl:g} >= s: growth over K = {Ks[0]}..{Ks[-1]}",
            control[Ks[-1]] / control[Ks[0]] - 1, ">=", tol["dyadic_control_growth"])
    return res


SCAN_PARTS = {"strichartz": strichartz_suite, "scaling": scaling_scan_suite, "modulation": modulation_suite,
              "dyadic": dyadic_suite}


def scan_suite(cfg, parts=tuple(SCAN_PARTS)) -> SuiteResult:
    res = SuiteResult("scan")
    for name in parts:
        res.extend(SCAN_PARTS[name](cfg))
    return res


# ---------------------------------------------------------------------------
# Solver


def convergence_study(cfg) -> dict:
    """Self-convergence of the RK4 scheme against a finer-step reference (H^s error at T)."""
    sc = cfg["solver_checks"]
    base = sim_config(cfg, n=sc["convergence_n"], epsilon=sc["convergence_epsilon"], T=sc["convergence_T"],
                      m=1.0)
    data = initial_data(base)

    def final(steps):
        c = with_config(base, dt=base.T / steps, output_every=steps)
        return c, evolve(c, data).states[-1]

    _, ref = final(sc["convergence_ref_steps"])
    rows = []
    for steps in sc["convergence_steps"]:
        c, st = final(steps)
        rows.append({"steps": steps, "dt": c.dt, "error": state_hs_norm(c.grid, st - ref, c.s)})
    orders = [math.log2(a["error"] / b["error"]) for a, b in zip(rows, rows[1:])]
    return {"rows": rows, "orders": orders}


def picard_comparison(cfg) -> dict:
    sc = cfg["solver_checks"]
    c = sim_config(cfg, n=sc["picard_n"], T=sc["picard_T"], dt=sc["picard_dt"], output_every=1)
    data = initial_data(c)
    pic = picard_iterate(data, c.T, sc["picard_iterations"], c.m, c.dt, c.s, c.yukawa_constant)
    traj = evolve(c, data)
    dist = max(state_hs_norm(c.grid, a - b, c.s) for a, b in zip(pic.iterates, traj.states))
    return {"distances": pic.distances, "ratios": pic.ratios, "geometric": pic.geometric, "picard_vs_rk4": dist,
            "epsilon": c.epsilon}


@timed
def solver_suite(cfg) -> SuiteResult:
    sc = cfg["solver_checks"]
    tol = cfg["tolerances"]
    res = SuiteResult("solver")

    c = sim_config(cfg, n=sc["drift_n"], dt=sc["drift_dt"], T=sc["drift_T"], output_every=sc["scatter_every"])
    traj = evolve(c)
    res.tables["diagnostics"] = traj.diagnostics
    res.add(f"L2 drift (n={c.n}, dt={c.dt:g}, T={c.T:g}, eps={c.epsilon:g}, m={c.m:g})", traj.l2_drift, "<",
            tol["l2_drift"])
    scatter = {}
    for sg in ("+", "-"):
        rep = scattering_profile(traj, sg)
        scatter[sg] = rep.to_dict()
        res.add(f"scattering {sg}: late-window residual below early-window residual ({rep.early_max:.3g})",
                rep.late_max, "<", rep.early_max)
    res.summary["scattering"] = scatter

    conv = convergence_study(cfg)
    res.tables["convergence"] = conv["rows"]
    res.summary["convergence_orders"] = conv["orders"]
    res.add("self-convergence order (smallest)", min(conv["orders"]), ">=", tol["convergence_order"])

    pic = picard_comparison(cfg)
    res.summary["picard"] = pic
    res.tables["picard"] = [{"k": k, "distance": d} for k, d in enumerate(pic["distances"])]
    res.add(f"Picard contraction ratio (largest, eps={pic['epsilon']:g})", max(pic["ratios"], default=math.inf),
            "<", tol["picard_ratio"])
    res.add("Picard ratios geometric (1 = yes)", float(pic["geometric"]), "==", 1.0)
    res.add("Picard vs RK4 (sup H^s distance)", pic["picard_vs_rk4"], "<", tol["picard_etd"])
    return res


# ---------------------------------------------------------------------------
# Simulation


@timed
def simulate(cfg, out_dir=None) -> SuiteResult:
    """One evolution with scattering reports; snapshots and spectra go to ``out_dir``."""
    c = sim_config(cfg)
    res = SuiteResult("simulate")
    try:
        traj = evolve(c)
        blown = None
    except BlowUp as exc:
        traj, blown = exc.trajectory, exc.t
    res.tables["diagnostics"] = traj.diagnostics
    res.summary["config"] = {k: getattr(c, k) for k in c.__dataclass_fields__}
    res.summary["blow_up_time"] = blown
    res.add("finite solution (blow-up time, -1 = none)", -1.0 if blown is None else blown, "==", -1.0)
    if blown is not None:
        return res
    res.add("L2 drift", traj.l2_drift, "<", cfg["tolerances"]["l2_drift"])
    small = c.epsilon <= cfg["solver_checks"]["picard_epsilon_max"]
    reports = {}
    for sg in ("+", "-"):
        rep = scattering_profile(traj, sg)
        reports[sg] = rep.to_dict()
        res.add(f"scattering {sg}: late-window residual below early-window residual ({rep.early_max:.3g})",
                rep.late_max, "<", rep.early_max, enforced=small,
                note="" if small else "epsilon above the small-data threshold, not asserted")
    res.summary["scattering"] = reports
    res.summary["hs_initial"] = state_hs_norm(c.grid, traj.states[0], c.s)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for sg, rep in reports.items():
            with open(out / f"scatter_{'plus' if sg == '+' else 'minus'}.json", "w") as fh:
                json.dump(rep, fh, indent=2)
                fh.write("\n")
        for tag, k in (("initial", 0), ("final", -1)):
            pair = traj.pair(k)
            for name, fld in (("plus", pair.psi_plus), ("minus", pair.psi_minus)):
                save_field(out / f"psi_{name}_{tag}.bin", fld, c.m, extra={"t": traj.times[k]})
            write_radial_spectrum_csv(out / f"spectrum_{tag}.csv", pair.total())
    return res


__all__ = ["Check", "SuiteResult", "verify_suite", "matrix_suite", "projection_suite", "decomposition_suite",
           "bound_suite", "oracle_suite", "strichartz_suite", "scaling_scan_suite", "modulation_suite",
           "dyadic_suite", "scan_suite", "solver_suite", "simulate", "convergence_study", "picard_comparison",
           "SCAN_PARTS", "write_rows", "random_field"]
