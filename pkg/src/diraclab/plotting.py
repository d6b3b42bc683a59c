"""PNG figures rendered from the CSV tables that the subcommands write."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _f(x) -> float:
    return float(x) if x not in ("", None) else math.nan


def _save(fig, path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def _reference(ax, xs, slope, anchor, **kw):
    xs = np.asarray(sorted(xs), float)
    ax.plot(xs, anchor * (xs / xs[0]) ** slope, "--", lw=1, **kw)


def plot_scaling(rows, path):
    """Largest measured norm against mu (at the top lambda) and lambda (at the lowest mu)."""
    best = defaultdict(float)
    pred = {}
    for r in rows:
        key = (r["kind"], r["interaction"], r["j"] or "-", _f(r["mu"]), _f(r["lambda1"]))
        best[key] = max(best[key], _f(r["measured"]))
        pred[key] = _f(r["predicted"])
    lam_top = max(k[4] for k in best)
    mu_low = min(k[3] for k in best)
    series = sorted({k[:3] for k in best})
    fig, axes = plt.subplots(1, 2, figsize=(11, 4.5))
    for ax, var, fixed in ((axes[0], 3, lam_top), (axes[1], 4, mu_low)):
        other = 4 if var == 3 else 3
        for s in series:
            pts = sorted((k[var], v) for k, v in best.items() if k[:3] == s and k[other] == fixed)
            if len(pts) < 2:
                continue
            xs, ys = zip(*pts)
            line, = ax.loglog(xs, ys, "o-", label=" ".join(p for p in s if p != "-"))
            p = sorted((k[var], pred[k]) for k in best if k[:3] == s and k[other] == fixed)
            _reference(ax, xs, math.log(p[-1][1] / p[0][1]) / math.log(xs[-1] / xs[0]), ys[0],
                       color=line.get_color())
        ax.set_xlabel("mu" if var == 3 else "lambda")
        ax.set_ylabel("largest measured norm")
        ax.set_title(f"{'lambda' if var == 3 else 'mu'} = {fixed:g}; dashed: predicted slope")
        ax.legend(fontsize=7)
    return _save(fig, path)


def plot_null_gain(rows, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    by_j = defaultdict(list)
    for r in rows:
        by_j[r["j"]].append((_f(r["lambda"]), _f(r["null_over_plain"])))
    for j, pts in sorted(by_j.items()):
        xs, ys = zip(*sorted(pts))
        ax.loglog(xs, ys, "o-", label=f"Q{j}")
    xs = sorted({x for pts in by_j.values() for x, _ in pts})
    _reference(ax, xs, -0.5, max(y for pts in by_j.values() for _, y in pts), color="k", label="lambda^-1/2")
    ax.set_xlabel("lambda")
    ax.set_ylabel("null form / plain pairing")
    ax.legend()
    return _save(fig, path)


def plot_strichartz(rows, path):
    best = defaultdict(float)
    pred = {}
    for r in rows:
        lam = _f(r["lambda"])
        best[lam] = max(best[lam], _f(r["norm"]))
        pred[lam] = _f(r["predicted"])
    xs, ys = zip(*sorted(best.items()))
    slope = math.log(pred[xs[-1]] / pred[xs[0]]) / math.log(xs[-1] / xs[0])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(xs, ys, "o-", label="largest measured")
    _reference(ax, xs, slope, ys[0], color="k", label=f"predicted slope {slope:.2g}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("L^q_t L^r_x norm")
    ax.legend()
    return _save(fig, path)


def plot_calibration(rows, path, constant=2 * math.pi):
    fig, ax = plt.subplots(figsize=(6, 4))
    by_label = defaultdict(list)
    for r in rows:
        by_label[r["label"]].append((_f(r["eps"]), _f(r["ratio"]) / constant))
    for label, pts in by_label.items():
        xs, ys = zip(*sorted(pts))
        ax.semilogx(xs, ys, "o-", lw=1, ms=3, label=label if "random" not in label else None)
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("mollifier width eps")
    ax.set_ylabel("bruteforce / (2 pi closed form)")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_diagnostics(rows, path):
    t = [_f(r["t"]) for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    axes[0].plot(t, [abs(_f(r["drift"])) for r in rows])
    axes[0].set_ylabel("|relative L2 drift|")
    axes[1].plot(t, [_f(r["hs"]) for r in rows])
    axes[1].set_ylabel("H^s norm")
    axes[2].plot(t, [_f(r["nonlinearity"]) for r in rows])
    axes[2].set_ylabel("L2 norm of nonlinearity")
    for ax in axes:
        ax.set_xlabel("t")
    return _save(fig, path)


def plot_convergence(rows, path):
    dt = [_f(r["dt"]) for r in rows]
    err = [_f(r["error"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(dt, err, "o-", label="H^s error vs reference")
    _reference(ax, dt, 4.0, min(err), color="k", label="dt^4")
    ax.set_xlabel("dt")
    ax.legend()
    return _save(fig, path)


def plot_dyadic(rows, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    by = defaultdict(list)
    for r in rows:
        by[(r["s"], r["delta"])].append((_f(r["K"]), _f(r["max_ratio"])))
    for (s, d), pts in by.items():
        xs, ys = zip(*sorted(pts))
        ax.loglog(xs, ys, "o-", label=f"s={s}, delta={d}")
    ax.set_xlabel("support length K")
    ax.set_ylabel("max ratio")
    ax.legend()
    return _save(fig, path)


def plot_modulation(rows, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    by = defaultdict(list)
    for r in rows:
        by[(r["m"], r["sign"])].append((_f(r["modulation"]), _f(r["leakage"])))
    for (m, sg), pts in by.items():
        xs, ys = zip(*sorted(pts))
        ax.semilogy(xs, ys, "o-", label=f"m={m}, sign={sg}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("modulation threshold")
    ax.set_ylabel("relative content above threshold")
    ax.legend()
    return _save(fig, path)


PLOTTERS = {
    "scaling": plot_scaling, "null_gain": plot_null_gain, "strichartz": plot_strichartz,
    "calibration": plot_calibration, "diagnostics": plot_diagnostics, "convergence": plot_convergence,
    "dyadic": plot_dyadic, "modulation_leakage": plot_modulation,
}
