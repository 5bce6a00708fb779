"""Command line: ``symlab <experiment> [--config path] [--set key=value ...] [--out dir] [--seeds a..b]``.

Configuration is layered: built-in defaults, then experiment defaults, then
the config file (``key = value`` lines, ``#`` comments), then ``--set`` flags.
A run's ``manifest.json`` can be passed back as ``--config`` to repeat it.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .dynamics import SimConfig, SimConfigError
from .experiments import EXPERIMENTS
from .lattice import LatticeError, TorusGrid
from .lie_algebra import LieAlgebraError, get_algebra
from .noise import NoiseConfigError
from .observables import NormParamError, NormParams

log = logging.getLogger("symlab")


class ConfigError(ValueError):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = str(text).strip().lower()
    return None if t in ("none", "") else float(t)


def _opt_int(text):
    t = str(text).strip().lower()
    return None if t in ("none", "") else int(t)


def _mass(text):
    """Scalar, or a matrix written as rows separated by ``;``."""
    t = str(text).strip()
    if t.lower() == "none":
        return None
    if ";" in t or "," in t:
        return [[float(v) for v in row.split(",")] for row in t.split(";")]
    return float(t)


def seed_range(text):
    """``a..b`` (inclusive) or a comma list."""
    t = str(text).strip()
    if ".." in t:
        a, b = (int(v) for v in t.split(".."))
        if b < a:
            raise ValueError(f"empty seed range {t!r}")
        return list(range(a, b + 1))
    return [int(v) for v in t.split(",") if v.strip()]


# key -> parser; every physical parameter and every experiment knob is listed
KEYS = {
    "d": int,
    "n": int,
    "N": int,
    "group": str,
    "dt": float,
    "eps": _opt_float,
    "mollifier": str,
    "r_k": float,
    "bare_mass": _mass,
    "dg_mass": _mass,
    "check_c": _mass,
    "counterterm": str,
    "counterterm_value": _mass,
    "c_divergent": float,
    "c_finite": float,
    "horizon": float,
    "blow_up": float,
    "noise_n": _opt_int,
    "alpha": float,
    "eta": float,
    "beta": float,
    "delta": float,
    "alpha3": float,
    "theta": float,
    "seeds": str,
    # experiment knobs
    "samples": int,
    "zero_mode": float,
    "ns": str,
    "dt_factor": float,
    "amplitude": float,
    "check_every": int,
    "eps_exponents": str,
    "mollifiers": str,
    "d3": _bool,
    "triangles": int,
    "min_area_cells": float,
    "segments": int,
    "alpha_seg": float,
    "ns3": str,
    "group3": str,
    "samples3": int,
    "segments3": int,
    "length3": float,
    "heat_t": float,
    "flow_time": float,
    "loop_sides": str,
    "record_every": float,
    "early_time": float,
}

DEFAULTS = {
    "d": 2,
    "n": 64,
    "group": "su2",
    "dt": 1e-4,
    "eps": None,
    "mollifier": "na",
    "r_k": 0.25,
    "bare_mass": 0.0,
    "dg_mass": None,
    "check_c": None,
    "counterterm": "computed",
    "counterterm_value": None,
    "c_divergent": 0.0,
    "c_finite": 0.0,
    "horizon": 0.1,
    "blow_up": 1e4,
    "noise_n": None,
    "alpha": 0.75,
    "eta": -0.55,
    "beta": -0.25,
    "delta": 0.9,
    "alpha3": 0.45,
    "theta": 0.3,
    "seeds": "0..0",
}


@dataclass
class ExperimentSpec:
    name: str | None
    params: dict
    seeds: list
    out: Path | None = None
    sources: dict = field(default_factory=dict)

    def echo(self):
        return {"experiment": self.name, "params": self.params, "seeds": self.seeds, "sources": self.sources}


def read_config_file(path):
    """Key-value pairs from a text config or a previous run's manifest."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(text)
        params = data.get("config", data).get("params")
        if params is None:
            raise ConfigError(f"{path} is not a run manifest")
        return {k: _render(v) for k, v in params.items()}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def _render(v):
    if v is None:
        return "none"
    if isinstance(v, list):
        return ";".join(",".join(repr(float(x)) for x in row) for row in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _layer(params, sources, values, source):
    for k, v in values.items():
        if k not in KEYS:
            raise ConfigError(f"unknown key {k!r} (from {source})")
        try:
            parsed = KEYS[k](v) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"bad value for {k!r} (from {source}): {exc}") from None
        entry = sources.setdefault(k, {"history": []})
        entry["history"].append({"source": source, "value": v if isinstance(v, (str, int, float, bool)) or v is None else str(v)})
        entry["source"] = source
        params[k] = parsed


def parse_config(path=None, experiment=None, overrides=(), seeds=None):
    """Resolve defaults < experiment defaults < file < ``key=value`` overrides."""
    if experiment is not None and experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    params, sources = {}, {}
    _layer(params, sources, DEFAULTS, "default")
    if experiment is not None:
        _layer(params, sources, EXPERIMENTS[experiment].defaults, "experiment")
    if path is not None:
        _layer(params, sources, read_config_file(path), f"file:{path}")
    flags = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        flags[k] = v
    _layer(params, sources, flags, "flag")
    if seeds is not None:
        _layer(params, sources, {"seeds": seeds}, "flag:--seeds")
    if "N" in params:
        prefix = "su" if params["group"].startswith("su") else "u"
        params["group"] = f"{prefix}{params['N']}"
    validate(params)
    try:
        seed_list = seed_range(params["seeds"])
    except ValueError as exc:
        raise ConfigError(f"bad seeds {params['seeds']!r}: {exc}") from None
    return ExperimentSpec(experiment, params, seed_list, sources=sources)


def validate(p):
    """Range checks with the valid interval in every message."""
    if p["d"] not in (2, 3):
        raise ConfigError(f"d = {p['d']} is outside {{2, 3}}")
    try:
        TorusGrid(p["d"], p["n"])
        get_algebra(p["group"])
        if "group3" in p:
            get_algebra(p["group3"])
    except (LatticeError, LieAlgebraError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        NormParams(alpha=p["alpha"], eta=p["eta"], beta=p["beta"], delta=p["delta"], alpha3=p["alpha3"], theta=p["theta"])
    except NormParamError as exc:
        raise ConfigError(str(exc)) from None
    try:
        SimConfig(
            TorusGrid(p["d"], p["n"]),
            p["group"],
            dt=p["dt"],
            eps=p["eps"],
            mollifier=p["mollifier"],
            r_k=p["r_k"],
            counterterm=p["counterterm"],
            counterterm_value=p["counterterm_value"],
            horizon=p["horizon"],
            blow_up=p["blow_up"],
            noise_n=p["noise_n"],
        )
    except (SimConfigError, NoiseConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    for k in ("samples", "samples3", "triangles", "segments", "segments3", "check_every"):
        if k in p and p[k] < 1:
            raise ConfigError(f"{k} = {p[k]} is outside [1, inf)")
    for k in ("dt_factor",):
        if k in p and not 0 < p[k] <= 0.25:
            raise ConfigError(f"{k} = {p[k]} is outside (0, 0.25]")


def _finite_or_str(v):
    return v if not isinstance(v, float) or math.isfinite(v) else str(v)


def run_experiment(spec: ExperimentSpec):
    """Run, write artifacts under ``spec.out`` and return the :class:`Result`."""
    from .plotting import line_chart

    exp = EXPERIMENTS[spec.name]
    t0 = time.perf_counter()
    result = exp.run(spec.params, spec.seeds)
    elapsed = time.perf_counter() - t0
    if spec.out is None:
        return result
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"experiment": spec.name, "seeds": f"{spec.seeds[0]}..{spec.seeds[-1]}", "code_version": io.CODE_VERSION}
    for name, tab in result.tables.items():
        io.write_csv(out / f"{name}.csv", tab.header, tab.rows, {**meta, **tab.meta})
    io.write_csv(
        out / "checks.csv",
        ["check", "passed", "value", "criterion"],
        [[c.name, c.passed, c.value, c.criterion] for c in result.checks],
        meta,
    )
    for name, rep in result.reports.items():
        io.write_json(out / f"{name}.json", rep)
    for name, ch in result.charts.items():
        line_chart(out / f"{name}.svg", ch.series, ch.xlabel, ch.ylabel, logx=ch.logx, logy=ch.logy, reference=ch.reference)
    io.write_json(
        out / "manifest.json",
        {
            "config": spec.echo(),
            "code_version": io.CODE_VERSION,
            "passed": result.passed,
            "checks": [{"name": c.name, "passed": c.passed, "value": _finite_or_str(c.value), "criterion": c.criterion} for c in result.checks],
            "artifacts": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
            "runtime_seconds": elapsed,
            "timings": result.timings,
        },
    )
    return result


def build_parser():
    ap = argparse.ArgumentParser(prog="symlab", description="Run a canned experiment and write its artifacts.")
    ap.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    ap.add_argument("--config", help="key = value file, or a previous manifest.json")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", help="artifact directory (default runs/<experiment>)")
    ap.add_argument("--seeds", help="inclusive seed range a..b")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.experiment not in EXPERIMENTS:
        ap.print_usage(sys.stderr)
        print(f"symlab: unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}", file=sys.stderr)
        return 2
    try:
        spec = parse_config(args.config, args.experiment, args.overrides, args.seeds)
        io.threads()
    except (ConfigError, ValueError) as exc:
        print(f"symlab: {exc}", file=sys.stderr)
        return 2
    spec.out = Path(args.out or Path("runs") / args.experiment)
    try:
        result = run_experiment(spec)
    except Exception as exc:
        print(f"symlab: {args.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for c in result.checks:
        print(c.line())
    print(f"artifacts in {spec.out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
