"""Run configuration: an INI file with typed keys, defaults and command-line overrides.

Schema (every key optional; unknown sections or keys are errors)::

    [grid]        n, length
    [physics]     m, s, epsilon, yukawa_constant
    [time]        dt, T, scheme, output_every, envelope_width
    [run]         seed
    [verify]      fields, n, decomposition_pairs, symbol_pairs, bound_samples
    [oracle]      eps, configs
    [scan]        n, m, trials, nt, scales, q, dyadic_trials, dyadic_K, dyadic_s, dyadic_delta,
                  dyadic_control_delta, modulation_lambda
    [solver_checks] drift_n, drift_dt, drift_T, convergence_n, convergence_epsilon, convergence_T,
                  convergence_steps, convergence_ref_steps, picard_n, picard_T, picard_dt, picard_iterations,
                  picard_epsilon_max, scatter_every
    [tolerances]  see TOLERANCES below

Lists are comma separated.
"""

from __future__ import annotations

import configparser
import copy
import math

from .solver import SimConfig


class ConfigError(ValueError):
    """Bad configuration file or override, with the offending location."""


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


_TYPES = {int: int, float: float, str: str, "floats": _floats, "ints": _ints}

# tolerance defaults are the acceptance thresholds
TOLERANCES = {
    "matrix_identity": 0.0,
    "projection_identity": 1e-11,
    "symbol_sum": 1e-12,
    "decomposition": 1e-10,
    "cross_representation": 1e-10,
    "symbol_bound": 10.0,
    "oracle_spread": 0.02,
    "oracle_analytic": 0.005,
    "scan_slack": 0.3,
    "modulation_leakage": 0.05,
    "l2_drift": 1e-8,
    "convergence_order": 3.7,
    "picard_ratio": 0.5,
    "picard_etd": 1e-6,
    "free_flow": 1e-13,
    "dyadic_bounded_growth": 0.10,
    "dyadic_control_growth": 0.50,
}

SCHEMA: dict[str, dict[str, tuple[object, object]]] = {
    "grid": {"n": (int, 32), "length": (float, 2 * math.pi)},
    "physics": {"m": (float, 1.0), "s": (float, 0.1), "epsilon": (float, 0.01),
                "yukawa_constant": (float, 4 * math.pi)},
    "time": {"dt": (float, 1e-3), "T": (float, 1.0), "scheme": (str, "etd_rk4"), "output_every": (int, 100),
             "envelope_width": (float, 1.0 / 16)},
    "run": {"seed": (int, 0)},
    "verify": {"fields": (int, 100), "n": (int, 16), "decomposition_pairs": (int, 20),
               "symbol_pairs": (int, 10_000), "bound_samples": (int, 100_000)},
    "oracle": {"eps": ("floats", (0.04, 0.02, 0.01)), "configs": (int, 10)},
    "scan": {"n": (int, 32), "m": (float, 0.0), "trials": (int, 8), "nt": (int, 32), "scales": ("ints", (1, 2, 4)),
             "q": (float, 4.0), "dyadic_trials": (int, 100), "dyadic_K": ("ints", (10, 20, 40)),
             "dyadic_s": (float, 0.5), "dyadic_delta": (float, 0.1), "dyadic_control_delta": (float, 0.5),
             "modulation_lambda": (float, 8.0)},
    "solver_checks": {"drift_n": (int, 32), "drift_dt": (float, 1e-3), "drift_T": (float, 1.0),
                      "convergence_n": (int, 16), "convergence_epsilon": (float, 3.0),
                      "convergence_T": (float, 0.5), "convergence_steps": ("ints", (25, 50, 100)),
                      "convergence_ref_steps": (int, 400), "picard_n": (int, 16), "picard_T": (float, 0.5),
                      "picard_dt": (float, 0.01), "picard_iterations": (int, 8),
                      "picard_epsilon_max": (float, 3.0), "scatter_every": (int, 100)},
    "tolerances": {k: (float, v) for k, v in TOLERANCES.items()},
}


def defaults() -> dict:
    return {sec: {k: copy.copy(d) for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def _convert(section: str, key: str, raw: str, where: str):
    kind = SCHEMA[section][key][0]
    try:
        return _TYPES[kind](raw.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: [{section}] {key} = {raw!r} is not a valid {getattr(kind, '__name__', kind)}"
                          ) from exc


def _line_numbers(path) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    with open(path) as fh:
        for no, line in enumerate(fh, 1):
            text = line.strip()
            if text.startswith("[") and text.endswith("]"):
                section = text[1:-1].strip()
            elif section and "=" in text and not text.startswith(("#", ";")):
                lines[(section, text.split("=", 1)[0].strip())] = no
    return lines


def load_config(path=None) -> dict:
    """Defaults, updated from an INI file when ``path`` is given."""
    cfg = defaults()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    lines = _line_numbers(path)
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{path}:{lines.get((section, key), '?')}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            cfg[section][key] = _convert(section, key, raw, where)
    return cfg


def set_value(cfg: dict, dotted: str, value) -> None:
    section, _, key = dotted.partition(".")
    if section not in SCHEMA or key not in SCHEMA[section]:
        raise ConfigError(f"unknown setting {dotted}")
    cfg[section][key] = _convert(section, key, str(value), "override")


def sim_config(cfg: dict, **changes) -> SimConfig:
    base = dict(n=cfg["grid"]["n"], length=cfg["grid"]["length"], m=cfg["physics"]["m"], s=cfg["physics"]["s"],
                epsilon=cfg["physics"]["epsilon"], dt=cfg["time"]["dt"], T=cfg["time"]["T"],
                scheme=cfg["time"]["scheme"], seed=cfg["run"]["seed"], output_every=cfg["time"]["output_every"],
                envelope_width=cfg["time"]["envelope_width"], yukawa_constant=cfg["physics"]["yukawa_constant"])
    base.update(changes)
    try:
        return SimConfig(**base)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def to_jsonable(cfg: dict) -> dict:
    return {sec: {k: list(v) if isinstance(v, tuple) else v for k, v in keys.items()} for sec, keys in cfg.items()}


def write_config(cfg: dict, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for sec, keys in cfg.items():
        parser[sec] = {k: ",".join(map(str, v)) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
                       for k, v in keys.items()}
    with open(path, "w") as fh:
        parser.write(fh)
