"""Config-driven experiment sweeps over (algorithm, seed, power, c) cells.

Config file format (INI, one ``key = value`` per line)::

    [geometry]
    M = 6                  ; required
    K = 4                  ; required
    element_spacing = ...  ; meters, default wavelength / 4
    feed_layout = line

    [channel]
    n_users = 4
    D = 1
    carrier_freq = 28e9
    bandwidth = 100e6
    noise_density_dbm = -174
    path_count = 15
    cell_radius = 150
    bs_height = 10
    ue_height = 1.5
    min_distance = 10

    [algorithm]            ; shared by all algorithms
    rho0_scale = 0.01
    ...
    [algorithm.smm]        ; per-algorithm overrides of the same keys

    [experiment]
    algorithms = mm, sr, smm
    power_dbm = 16, 18, 20, 22, 24
    c_grid = 1, 0.5, 0.1   ; only the smm cells sweep c
    seeds = 1..20
    output_dir = results
    workers = 1
    dump_channels = true

Unknown sections or keys are errors.
"""

import configparser
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import platform
import re
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .algorithms import AlgorithmConfig, init_point, run_mm, run_smm, run_sr
from .channel import ChannelParams, dbm_to_watts, make_rng, sample_channel_set, seed_streams
from .rates import nats_to_bits, user_rates
from .rhs import RhsGeometry, init_amplitude_bounds

log = logging.getLogger(__name__)

ALGORITHMS = ("mm", "sr", "smm")
ZERO_RATE_THRESHOLD = 0.01  # nats
SUMMARY_COLUMNS = (
    "algorithm", "seed", "P_dbm", "c", "min_rate_nats", "sum_rate_nats", "min_rate_bits", "sum_rate_bits",
    "zero_rate_ue_count", "iterations", "converged", "wall_ms", "status", "error",
)

_GEOMETRY_KEYS = {"M": int, "K": int, "element_spacing": float, "feed_layout": str}
_CHANNEL_KEYS = {
    "n_users": int, "D": int, "carrier_freq": float, "bandwidth": float, "noise_density_dbm": float,
    "path_count": int, "cell_radius": float, "bs_height": float, "ue_height": float, "min_distance": float,
}
_ALGORITHM_KEYS = {
    "rho0": float, "rho0_scale": float, "rho_growth": float, "rho_trigger": float, "mm_objective_tol": float,
    "penalty_stop": float, "objective_tol": float, "max_iter_mm": int, "max_iter_penalty": int,
    "inner_tol": float, "bisection_tol": float,
}
_EXPERIMENT_KEYS = {
    "algorithms": str, "power_dbm": str, "c_grid": str, "seeds": str, "output_dir": str, "workers": int,
    "dump_channels": str,
}


class ParseError(ValueError):
    def __init__(self, message, line=None, key=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.key = key


class ValidationError(ValueError):
    """All problems found in a config; ``errors`` is a list of ``(key, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.errors))

    @property
    def keys(self):
        return [k for k, _ in self.errors]


@dataclass
class ScenarioConfig:
    M: int
    K: int
    element_spacing: float = None
    feed_layout: str = "line"
    n_users: int = 4
    channel: ChannelParams = field(default_factory=ChannelParams)
    algorithm: dict = field(default_factory=dict)  # name -> dict of AlgorithmConfig overrides
    algorithms: tuple = ALGORITHMS
    power_dbm: tuple = (16.0, 18.0, 20.0, 22.0, 24.0)
    c_grid: tuple = (1.0, 0.5, 0.1)
    seeds: tuple = tuple(range(1, 21))
    output_dir: str = "results"
    workers: int = 1
    dump_channels: bool = True

    def geometry(self):
        return RhsGeometry(self.M, self.K, self.channel.wavelength, element_spacing=self.element_spacing)

    def algorithm_config(self, name, power_dbm, c=1.0):
        opts = dict(self.algorithm.get(name, {}))
        return AlgorithmConfig(power_budget=float(dbm_to_watts(power_dbm)), c=c, **opts)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["channel"] = dataclasses.asdict(self.channel)
        return d

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def parse_float_list(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def parse_seeds(text):
    """``"1..20"``, ``"1,2,5"`` or mixtures like ``"1..3, 7"``."""
    seeds = []
    for part in re.split(r"[,\s]+", text.strip()):
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return tuple(dict.fromkeys(seeds))


def parse_algorithms(text):
    names = tuple(v.strip().lower() for v in text.split(",") if v.strip())
    if names == ("all",):
        return ALGORITHMS
    bad = [n for n in names if n not in ALGORITHMS]
    if bad or not names:
        raise ValueError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS} or 'all'")
    return names


def _read_ini(text):
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (M vs m)
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.section}.{exc.option}", exc.lineno, f"{exc.section}.{exc.option}")
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", exc.lineno, exc.section)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any section", exc.lineno)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", line)
    return parser


def _convert(section, key, raw, kind, errors):
    name = f"{section}.{key}"
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        errors.append((name, f"expected {kind.__name__}, got {raw!r}"))
        return None


def _section(parser, name, schema, errors):
    out = {}
    if not parser.has_section(name):
        return out
    for key, raw in parser.items(name):
        if key not in schema:
            errors.append((f"{name}.{key}", "unknown key"))
            continue
        value = _convert(name, key, raw, schema[key], errors)
        if value is not None:
            out[key] = value
    return out


def config_from_text(text, overrides=None):
    """Parse and validate INI text; ``overrides`` maps ``"section.key"`` to raw strings."""
    parser = _read_ini(text)
    overrides = overrides or {}
    for dotted, raw in overrides.items():
        section, key = dotted.rsplit(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(raw))

    errors = []
    known = {"geometry", "channel", "algorithm", "experiment"} | {f"algorithm.{a}" for a in ALGORITHMS}
    for name in parser.sections():
        if name not in known:
            errors.append((name, "unknown section"))

    geo = _section(parser, "geometry", _GEOMETRY_KEYS, errors)
    chan = _section(parser, "channel", _CHANNEL_KEYS, errors)
    algo_common = _section(parser, "algorithm", _ALGORITHM_KEYS, errors)
    algo = {a: {**algo_common, **_section(parser, f"algorithm.{a}", _ALGORITHM_KEYS, errors)} for a in ALGORITHMS}
    exp = _section(parser, "experiment", _EXPERIMENT_KEYS, errors)

    for key in ("M", "K"):
        if key not in geo and not any(k == f"geometry.{key}" for k, _ in errors):
            errors.append((f"geometry.{key}", "required"))
        elif key in geo and geo[key] < 1:
            errors.append((f"geometry.{key}", "must be >= 1"))
    if geo.get("feed_layout", "line") != "line":
        errors.append(("geometry.feed_layout", "only 'line' is supported"))
    if "element_spacing" in geo and not geo["element_spacing"] > 0:
        errors.append(("geometry.element_spacing", "must be positive"))

    n_users = chan.pop("n_users", 4)
    if n_users < 1:
        errors.append(("channel.n_users", "must be >= 1"))
    channel = None
    try:
        channel = ChannelParams(**chan)
    except ValueError as exc:
        errors.append(("channel", str(exc)))

    for a, opts in algo.items():
        try:
            AlgorithmConfig(power_budget=1.0, **opts)
        except ValueError as exc:
            errors.append((f"algorithm.{a}", str(exc)))

    fields = {}
    for key, parse in (("algorithms", parse_algorithms), ("power_dbm", parse_float_list),
                       ("c_grid", parse_float_list), ("seeds", parse_seeds)):
        if key in exp:
            try:
                fields[key] = parse(exp[key])
            except ValueError as exc:
                errors.append((f"experiment.{key}", str(exc)))
    if "power_dbm" in fields:
        if not fields["power_dbm"]:
            errors.append(("experiment.power_dbm", "power sweep must be nonempty"))
        elif any(not np.isfinite(p) or p < 0 for p in fields["power_dbm"]):
            errors.append(("experiment.power_dbm", "power entries must be finite and >= 0 dBm"))
    if "c_grid" in fields and (not fields["c_grid"] or any(not 0 < c <= 1 for c in fields["c_grid"])):
        errors.append(("experiment.c_grid", "c values must lie in (0, 1]"))
    if "seeds" in fields and any(s < 0 for s in fields["seeds"]):
        errors.append(("experiment.seeds", "seeds must be >= 0"))
    if exp.get("workers", 1) < 1:
        errors.append(("experiment.workers", "must be >= 1"))
    if "dump_channels" in exp:
        flag = exp["dump_channels"].lower()
        if flag not in ("true", "false", "yes", "no", "1", "0"):
            errors.append(("experiment.dump_channels", "expected a boolean"))
        fields["dump_channels"] = flag in ("true", "yes", "1")
    if errors:
        raise ValidationError(errors)

    return ScenarioConfig(
        M=geo["M"], K=geo["K"], element_spacing=geo.get("element_spacing"), feed_layout=geo.get("feed_layout", "line"),
        n_users=n_users, channel=channel, algorithm=algo,
        output_dir=exp.get("output_dir", "results"), workers=exp.get("workers", 1), **fields,
    )


def load_config(path, overrides=None):
    with open(path) as fh:
        text = fh.read()
    return config_from_text(text, overrides)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------


def compute_metrics(W, X, channels, threshold=ZERO_RATE_THRESHOLD):
    """Min/sum rate (nats) and the number of users below ``threshold`` nats."""
    rates = user_rates(W, X, channels.H, channels.noise_power)
    return {
        "rates": rates,
        "min_rate_nats": float(rates.min()),
        "sum_rate_nats": float(rates.sum()),
        "zero_rate_ue_count": int(np.sum(rates < threshold)),
    }


def build_cells(cfg):
    """Cartesian product of the sweep; only smm cells carry a ``c``."""
    cells = []
    for algo in cfg.algorithms:
        for seed in cfg.seeds:
            for p in cfg.power_dbm:
                for c in (cfg.c_grid if algo == "smm" else (None,)):
                    cells.append((algo, seed, p, c))
    return sorted(cells, key=cell_sort_key)


def cell_sort_key(cell):
    algo, seed, p, c = cell
    return (ALGORITHMS.index(algo), seed, p, -1.0 if c is None else -c)


def cell_name(cell):
    algo, seed, p, c = cell
    name = f"{algo}_s{seed}_p{p:g}"
    return name if c is None else f"{name}_c{c:g}"


def scenario(cfg, seed):
    """Channel and amplitude bounds for one seed; identical for every algorithm."""
    geom = cfg.geometry()
    channels = sample_channel_set(seed, cfg.channel, geom, cfg.n_users)
    bounds = init_amplitude_bounds(geom, channels.directions)
    return geom, channels, bounds


def initial_point(cfg, seed, bounds, power_dbm):
    _, init_ss = seed_streams(seed)
    return init_point(bounds, float(dbm_to_watts(power_dbm)), make_rng(init_ss), cfg.n_users, cfg.channel.D)


def _init_digest(init):
    h = hashlib.sha256()
    for a in init:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def run_cell(cfg, cell, solver_log_dir=None):
    """Run one cell; never raises (failures are recorded in the returned row)."""
    algo, seed, p_dbm, c = cell
    row = {"algorithm": algo, "seed": seed, "P_dbm": p_dbm, "c": c}
    out = {"cell": cell, "row": row, "trace_csv": None, "channel_digest": None, "init_digest": None, "channel_json": None}
    t0 = time.perf_counter()
    try:
        geom, channels, bounds = scenario(cfg, seed)
        out["channel_digest"] = channels.digest()
        out["channel_json"] = channels.dumps()
        init = initial_point(cfg, seed, bounds, p_dbm)
        out["init_digest"] = _init_digest(init)
        acfg = cfg.algorithm_config(algo, p_dbm, 1.0 if c is None else c)
        if algo == "mm":
            if solver_log_dir is not None:
                with open(os.path.join(solver_log_dir, cell_name(cell) + "_solver.jsonl"), "w") as fh:
                    W, X, trace = run_mm(channels, geom, bounds, acfg, init=init, solver_log=fh)
            else:
                W, X, trace = run_mm(channels, geom, bounds, acfg, init=init)
        else:
            runner = run_sr if algo == "sr" else run_smm
            W, X, trace = runner(channels, geom, bounds, acfg, init=init)
        m = compute_metrics(W, X, channels)
        row.update(
            min_rate_nats=m["min_rate_nats"], sum_rate_nats=m["sum_rate_nats"],
            min_rate_bits=float(nats_to_bits(m["min_rate_nats"])), sum_rate_bits=float(nats_to_bits(m["sum_rate_nats"])),
            zero_rate_ue_count=m["zero_rate_ue_count"], iterations=trace.iterations, converged=trace.converged,
            status="ok", error="",
        )
        out["trace_csv"] = trace.to_csv()
    except Exception as exc:  # recorded per cell, the sweep continues
        log.error("cell %s failed: %s", cell_name(cell), exc)
        log.debug("%s", traceback.format_exc())
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        trace = getattr(exc, "trace", None)
        if trace is not None and trace.rows:
            out["trace_csv"] = trace.to_csv()
    row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
    return out


def _cell_job(args):
    return run_cell(*args)


def write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(k)) for k in SUMMARY_COLUMNS])
    return buf.getvalue()


def run_experiment(cfg, verbose=False):
    """Run every cell and write summary, traces, channel dumps and manifest.

    Returns ``(rows, outputs)``; ``rows`` are sorted by cell key regardless of
    completion order.
    """
    out_dir = cfg.output_dir
    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    cells = build_cells(cfg)
    solver_dir = trace_dir if verbose else None
    log.info("running %d cells with %d worker(s)", len(cells), cfg.workers)

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_cell_job, [(cfg, cell, solver_dir) for cell in cells]))
    else:
        results = [run_cell(cfg, cell, solver_dir) for cell in cells]
    results.sort(key=lambda r: cell_sort_key(r["cell"]))

    channel_digests, init_digests = {}, {}
    for r in results:
        name = cell_name(r["cell"])
        if r["trace_csv"] is not None:
            write_atomic(os.path.join(trace_dir, name + ".csv"), r["trace_csv"])
        seed = r["cell"][1]
        if r["channel_digest"] is not None and seed not in channel_digests:
            channel_digests[seed] = r["channel_digest"]
            if cfg.dump_channels:
                write_atomic(os.path.join(out_dir, "channels", f"seed_{seed}.json"), r["channel_json"])
        init_digests[name] = r["init_digest"]

    rows = [r["row"] for r in results]
    write_atomic(os.path.join(out_dir, "summary.csv"), summary_csv(rows))
    manifest = {
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "versions": {
            "holobeam": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "channel_sha256": {str(k): v for k, v in sorted(channel_digests.items())},
        "init_sha256": init_digests,
        "cells": len(rows),
        "failed": sum(r["status"] != "ok" for r in rows),
    }
    write_atomic(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True, default=list))
    return rows, {"summary": os.path.join(out_dir, "summary.csv"), "manifest": os.path.join(out_dir, "manifest.json")}
