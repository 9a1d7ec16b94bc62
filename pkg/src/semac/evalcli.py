"""Experiment orchestration, NMSE evaluation and the ``semac`` command line.

A configuration names the function, slot count, SNR grid, channel model and
scheme.  :func:`run_experiment` designs once (or adapts per channel block),
runs Monte Carlo trials and returns per-SNR NMSE rows; the CLI wraps it with
``design``, ``adapt``, ``simulate`` and ``sweep`` subcommands.

Trial ``t`` draws its inputs, noise and channel from generators keyed only
by ``(seed, stream, t)``, and trials are merged in a fixed chunk order, so
output does not depend on the number of worker threads.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import airsim, decode, moddesign, powerad
from .funcspace import (FULL, SYMMETRIC_SHARED, InputDomain, TargetFunction,
                        _all_index_tuples, build_constraint_set, default_epsilon,
                        enumerate_combinations)

__all__ = [
    "ConfigError",
    "FunctionSpec",
    "ExperimentConfig",
    "NMSEAccumulator",
    "NMSEReport",
    "nmse",
    "load_config",
    "parse_config",
    "resolve_threads",
    "run_experiment",
    "rows_to_csv",
    "cli",
    "main",
]

SEMAC = "semac"
SEMAC_PA = "semac-pa"
CSV_COLUMNS = ("snr_db", "nmse", "trials", "scheme", "L", "Q", "K", "function")
CHUNK_TRIALS = 500
_INPUT_STREAM, _NOISE_STREAM, _CHANNEL_STREAM, _BLOCK_STREAM, _ROUNDING_STREAM = range(5)


class ConfigError(ValueError):
    """Invalid configuration; names the source path and the offending field."""

    def __init__(self, message: str, path: Optional[str] = None, field: Optional[str] = None):
        super().__init__(message)
        self.path = path
        self.field = field

    def to_dict(self) -> dict:
        return {"error": "ConfigError", "message": str(self), "path": self.path,
                "field": self.field}


def nmse(truths, estimates, f_max: float, f_min: float) -> float:
    """``sum |f - f_hat|^2 / (N_s |f_max - f_min|^2)``."""
    t = np.asarray(truths, dtype=float)
    e = np.asarray(estimates, dtype=float)
    if t.shape != e.shape or t.size == 0:
        raise ValueError("truths and estimates must be nonempty and of equal length")
    span = float(f_max) - float(f_min)
    if span == 0:
        raise ValueError("degenerate function range: f_max equals f_min")
    return float(np.sum((t - e) ** 2) / (t.size * span ** 2))


@dataclass
class NMSEAccumulator:
    """Running sums for the NMSE and its Monte Carlo standard error."""

    span2: float
    total: float = 0.0
    total_sq: float = 0.0
    count: int = 0

    def add(self, truths, estimates) -> None:
        err = (np.asarray(truths, dtype=float) - np.asarray(estimates, dtype=float)) ** 2
        self.total += float(err.sum())
        self.total_sq += float(np.sum(err ** 2))
        self.count += int(err.size)

    def merge(self, other: "NMSEAccumulator") -> "NMSEAccumulator":
        return NMSEAccumulator(self.span2, self.total + other.total,
                               self.total_sq + other.total_sq, self.count + other.count)

    @property
    def value(self) -> float:
        return self.total / (self.count * self.span2) if self.count else float("nan")

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return float("nan")
        mean = self.total / self.count
        var = max(self.total_sq / self.count - mean ** 2, 0.0) * self.count / (self.count - 1)
        return float(np.sqrt(var / self.count) / self.span2)


# --------------------------------------------------------------------------- config

@dataclass
class FunctionSpec:
    kind: str
    values: List[float]
    K: int
    epsilon: Optional[float] = None
    mode: str = FULL
    table: Optional[List[float]] = None


@dataclass
class ExperimentConfig:
    """Validated experiment settings; see ``docs/config.md`` for the schema."""

    function: FunctionSpec
    L: int
    snr_db: List[float]
    trials: int
    channel: str = airsim.UNIT
    scheme: str = SEMAC
    fixed_modulation: Optional[str] = None
    seed: int = 0
    noiseless: bool = False
    design_method: str = moddesign.REDUCED
    polish: bool = True
    projection: str = moddesign.CLOSED_FORM
    block: int = 100
    n_samples: int = 100
    deep_fade: str = "resample"
    output_csv: Optional[str] = None
    output_json: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


_TOP_FIELDS = {"function", "L", "snr_db", "trials", "channel", "scheme", "fixed_modulation",
               "seed", "noiseless", "design", "power_adaptation", "deep_fade", "output"}


def _require(cond: bool, message: str, path: Optional[str], fld: str) -> None:
    if not cond:
        raise ConfigError(f"{fld}: {message}", path, fld)


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def parse_config(data: dict, path: Optional[str] = None) -> ExperimentConfig:
    """Validate a decoded JSON configuration."""
    _require(isinstance(data, dict), "configuration must be a JSON object", path, "<root>")
    unknown = sorted(set(data) - _TOP_FIELDS)
    _require(not unknown, f"unknown field(s) {unknown}", path, unknown[0] if unknown else "")
    _require("function" in data, "missing", path, "function")
    fn = data["function"]
    _require(isinstance(fn, dict), "must be an object", path, "function")
    for key in ("kind", "values", "K"):
        _require(key in fn, "missing", path, f"function.{key}")
    _require(isinstance(fn["kind"], str), "must be a string", path, "function.kind")
    _require(fn["kind"] in ("sum", "product", "max", "custom"),
             "must be one of sum, product, max, custom", path, "function.kind")
    vals = fn["values"]
    _require(isinstance(vals, list) and all(_is_number(v) for v in vals),
             "must be a list of numbers", path, "function.values")
    n = len(vals)
    _require(n >= 2 and n & (n - 1) == 0, "length must be a power of two >= 2", path,
             "function.values")
    _require(len(set(vals)) == n, "values must be distinct", path, "function.values")
    _require(_is_int(fn["K"]) and fn["K"] >= 1, "must be an integer >= 1", path, "function.K")
    eps = fn.get("epsilon")
    _require(eps is None or (_is_number(eps) and eps > 0), "must be a positive number",
             path, "function.epsilon")
    mode = fn.get("mode", FULL)
    _require(mode in (FULL, SYMMETRIC_SHARED), f"must be {FULL!r} or {SYMMETRIC_SHARED!r}",
             path, "function.mode")
    _require(not (mode == SYMMETRIC_SHARED and fn["kind"] == "custom"),
             "symmetric-shared mode needs a symmetric function", path, "function.mode")
    table = fn.get("table")
    if fn["kind"] == "custom":
        _require(isinstance(table, list) and len(table) == n ** fn["K"],
                 f"custom functions need a table of {n}**K outputs", path, "function.table")
    func = FunctionSpec(fn["kind"], [float(v) for v in vals], int(fn["K"]), eps, mode, table)

    _require("L" in data, "missing", path, "L")
    _require(_is_int(data["L"]) and data["L"] >= 1, "must be an integer >= 1", path, "L")
    _require("snr_db" in data, "missing", path, "snr_db")
    snr = data["snr_db"]
    _require(isinstance(snr, list) and len(snr) > 0 and all(_is_number(s) for s in snr),
             "must be a nonempty list of numbers", path, "snr_db")
    _require("trials" in data, "missing", path, "trials")
    _require(_is_int(data["trials"]) and data["trials"] >= 1, "must be an integer >= 1",
             path, "trials")
    channel = data.get("channel", airsim.UNIT)
    _require(channel in (airsim.UNIT, airsim.RAYLEIGH), "must be 'unit' or 'rayleigh'",
             path, "channel")
    scheme = data.get("scheme", SEMAC)
    _require(scheme in (SEMAC, SEMAC_PA), f"must be {SEMAC!r} or {SEMAC_PA!r}", path, "scheme")
    fixed = data.get("fixed_modulation")
    if scheme == SEMAC_PA:
        _require(isinstance(fixed, str) and fixed != "",
                 "required when scheme is semac-pa", path, "fixed_modulation")
        _require(fixed.upper() in powerad._PATTERNS,
                 f"unknown pattern; known: {sorted(powerad._PATTERNS)}", path, "fixed_modulation")
        _require(powerad._PATTERNS[fixed.upper()] == n,
                 "pattern size must equal the number of input values", path, "fixed_modulation")
    seed = data.get("seed", 0)
    _require(_is_int(seed) and seed >= 0, "must be a nonnegative integer", path, "seed")
    noiseless = data.get("noiseless", False)
    _require(isinstance(noiseless, bool), "must be true or false", path, "noiseless")
    deep_fade = data.get("deep_fade", "resample")
    _require(deep_fade in ("resample", "truncate"), "must be 'resample' or 'truncate'",
             path, "deep_fade")

    design = data.get("design", {})
    _require(isinstance(design, dict), "must be an object", path, "design")
    method = design.get("method", moddesign.REDUCED)
    _require(method in (moddesign.REDUCED, moddesign.RELAXED),
             "must be 'reduced' or 'relaxed'", path, "design.method")
    polish = design.get("polish", True)
    _require(isinstance(polish, bool), "must be true or false", path, "design.polish")
    projection = design.get("projection", moddesign.CLOSED_FORM)
    _require(projection in (moddesign.CLOSED_FORM, moddesign.WATERFILL),
             "must be 'closed-form' or 'waterfill'", path, "design.projection")
    pa = data.get("power_adaptation", {})
    _require(isinstance(pa, dict), "must be an object", path, "power_adaptation")
    block = pa.get("block", 100)
    _require(_is_int(block) and block >= 1, "must be an integer >= 1", path,
             "power_adaptation.block")
    n_samples = pa.get("n_samples", 100)
    _require(_is_int(n_samples) and n_samples >= 1, "must be an integer >= 1", path,
             "power_adaptation.n_samples")
    out = data.get("output", {})
    _require(isinstance(out, dict), "must be an object", path, "output")
    for key in ("csv", "json"):
        _require(out.get(key) is None or isinstance(out.get(key), str), "must be a string",
                 path, f"output.{key}")
    return ExperimentConfig(func, int(data["L"]), [float(s) for s in snr], int(data["trials"]),
                            channel, scheme, fixed, int(seed), noiseless, method, polish,
                            projection, int(block), int(n_samples), deep_fade, out.get("csv"),
                            out.get("json"))


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", path, None) from None
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}", path, None) from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON at line {err.lineno} column {err.colno}: {err.msg}",
                          path, None) from None


def load_config(path: str) -> ExperimentConfig:
    return parse_config(_read_json(path), path)


def resolve_threads(default: Optional[int] = None) -> int:
    """Worker count: ``SEMAC_THREADS`` when set, else ``default`` or the CPU count."""
    raw = os.environ.get("SEMAC_THREADS")
    if raw is None or raw.strip() == "":
        return max(1, default or os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SEMAC_THREADS must be an integer, got {raw!r}", None,
                          "SEMAC_THREADS") from None
    if n < 1:
        raise ConfigError(f"SEMAC_THREADS must be >= 1, got {n}", None, "SEMAC_THREADS")
    return n


# --------------------------------------------------------------------------- experiment

@dataclass
class NMSEReport:
    """Per-SNR NMSE with trial counts, standard errors and run metadata."""

    rows: List[dict]
    metadata: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def nmse(self) -> np.ndarray:
        return np.array([r["nmse"] for r in self.rows])

    def stderr(self) -> np.ndarray:
        return np.array([r["stderr"] for r in self.rows])

    def to_json(self) -> str:
        doc = {"columns": list(CSV_COLUMNS), "rows": self.rows, "metadata": self.metadata,
               "wall_time": self.wall_time}
        return json.dumps(doc, indent=1, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def build_function(fn: FunctionSpec) -> TargetFunction:
    domain = InputDomain(fn.K, fn.values)
    return TargetFunction(fn.kind, domain, table=fn.table)


def design_from_config(config: ExperimentConfig):
    """Design, combinations, constraints and function for a ``semac`` config."""
    function = build_function(config.function)
    combos = enumerate_combinations(function.domain, function, config.function.mode)
    eps = config.function.epsilon
    eps = default_epsilon(function) if eps is None else eps
    constraints = build_constraint_set(combos, epsilon=eps, function=function)
    design = moddesign.design_modulation(combos, constraints, config.L, eps,
                                         method=config.design_method, polish=config.polish,
                                         seed=config.seed, rule=config.projection)
    return design, combos, constraints, function


def _draw_inputs(seed, trials, Q, K):
    idx = np.empty((trials.size, K), dtype=np.int64)
    for r, t in enumerate(trials):
        idx[r] = airsim.trial_rng(seed, _INPUT_STREAM, int(t)).integers(0, Q, K)
    return idx


def _unit_noise(seed, trials, L, stream=_NOISE_STREAM):
    z = np.empty((trials.size, L), dtype=complex)
    for r, t in enumerate(trials):
        rng = airsim.trial_rng(seed, stream, int(t))
        z[r] = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) / np.sqrt(2.0)
    return z


def _trial_gains(config, trials, K, L):
    """Effective ``h p`` per trial under inversion; counts deep-fade events."""
    gains = np.ones((trials.size, K, L), dtype=complex)
    fades = 0
    if config.channel == airsim.UNIT:
        return gains, fades
    for r, t in enumerate(trials):
        rng = airsim.trial_rng(config.seed, _CHANNEL_STREAM, int(t))
        while True:
            h = airsim.sample_channel(K, L, airsim.RAYLEIGH, rng).h
            try:
                p = airsim.invert_channel(h, truncate=config.deep_fade == "truncate")
            except airsim.DeepFadeError:
                fades += 1
                continue
            fades += int(np.sum(p == 0))
            gains[r] = h * p
            break
    return gains, fades


def _run_semac_chunk(config, table, symbols, outputs_of, sigma2s, trials):
    K, Q, L = symbols.shape
    idx = _draw_inputs(config.seed, trials, Q, K)
    truth = outputs_of(idx)
    gains, fades = _trial_gains(config, trials, K, L)
    clean = np.zeros((trials.size, L), dtype=complex)
    for k in range(K):
        clean += symbols[k, idx[:, k], :] * gains[:, k, :]
    z = _unit_noise(config.seed, trials, L)
    exact = decode.tabular_map(decode.ml_decode(clean, table), table)
    noiseless_errors = int(np.sum(exact != truth))
    accs = []
    for sigma2 in sigma2s:
        y = clean + np.sqrt(sigma2) * z
        est = decode.tabular_map(decode.ml_decode(y, table), table)
        acc = NMSEAccumulator(1.0)
        acc.add(truth, est)
        accs.append(acc)
    return accs, fades


def _chunks(n: int, size: int):
    return [np.arange(s, min(s + size, n)) for s in range(0, n, size)]


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _merge(results, n_snr, span2):
    accs = [NMSEAccumulator(span2) for _ in range(n_snr)]
    for chunk in results:
        for s in range(n_snr):
            accs[s] = accs[s].merge(chunk[s])
    for acc in accs:
        acc.span2 = span2
    return accs


def _rows(config, accs, Q):
    rows = []
    for snr, acc in zip(config.snr_db, accs):
        rows.append({"snr_db": snr, "nmse": acc.value, "trials": acc.count,
                     "scheme": config.scheme, "L": config.L, "Q": Q, "K": config.function.K,
                     "function": config.function.kind, "stderr": acc.stderr})
    return rows


def _sigma2s(config, signal_power):
    if config.noiseless:
        return [0.0] * len(config.snr_db)
    return [airsim.noise_for_snr(s, signal_power).sigma2 for s in config.snr_db]


def _run_semac(config, threads):
    design, combos, constraints, function = design_from_config(config)
    seq = design.sequences(combos)
    table = decode.build_table(seq, combos.outputs, constraints.epsilon)
    signal_power = float(np.mean(np.abs(table.sequences) ** 2))
    sigma2s = _sigma2s(config, signal_power)
    symbols = np.stack(design.X_nodes)                       # (K, Q, L)
    work = _chunks(config.trials, CHUNK_TRIALS)
    results = _map_ordered(
        lambda tr: _run_semac_chunk(config, table, symbols, function.of_indices, sigma2s, tr),
        work, threads)
    span2 = (function.f_max - function.f_min) ** 2
    accs = _merge([r[0] for r in results], len(sigma2s), span2)
    meta = {"design": design.report, "table_entries": len(table),
            "merged_entries": table.n_merged, "clusters": table.n_clusters,
            "signal_power": signal_power, "deep_fades": int(sum(r[1] for r in results)),
            "f_max": function.f_max, "f_min": function.f_min}
    return _rows(config, accs, function.domain.Q), meta


def _pa_certified(plan, classes, function, tol=decode.FEAS_TOL):
    """No merges are needed when every class holds and gaps exceed the merge radius."""
    gaps = np.diff(function.range_values)
    tight = classes.epsilon * float(gaps.min()) - tol > decode.MERGE_TOL ** 2
    return plan.worst_margin >= -tol and tight


def _run_pa_block(config, function, modulation, classes, indices, outputs, block, trials):
    K, L = config.function.K, config.L
    failures = 0
    for attempt in itertools.count():
        rng = airsim.trial_rng(config.seed, _BLOCK_STREAM, block, attempt)
        H = airsim.sample_channel(K, L, airsim.RAYLEIGH, rng).h
        seed = int(np.random.SeedSequence([config.seed, _ROUNDING_STREAM, block,
                                           attempt]).generate_state(1)[0])
        try:
            plan = powerad.adapt_power(classes, H, function, n_samples=config.n_samples,
                                       seed=seed)
            break
        except (powerad.PowerInfeasibleError, powerad.RandomizationError):
            failures += 1
            if attempt >= 20:
                raise
    seq = powerad.plan_sequences(plan, modulation, H, indices)
    offending = np.empty((0, 2), dtype=np.int64) if _pa_certified(plan, classes, function) \
        else None
    table = decode.build_table(seq, outputs, classes.epsilon, offending=offending)
    signal_power = float(np.mean(np.abs(table.sequences) ** 2))
    sigma2s = _sigma2s(config, signal_power)
    idx = _draw_inputs(config.seed, trials, modulation.Q, K)
    truth = function.of_indices(idx)
    clean = powerad.plan_sequences(plan, modulation, H, idx)
    z = _unit_noise(config.seed, trials, L)
    exact = decode.tabular_map(decode.ml_decode(clean, table), table)
    noiseless_errors = int(np.sum(exact != truth))
    accs = []
    for sigma2 in sigma2s:
        y = clean + np.sqrt(sigma2) * z
        est = decode.tabular_map(decode.ml_decode(y, table), table)
        acc = NMSEAccumulator(1.0)
        acc.add(truth, est)
        accs.append(acc)
    info = {"block": block, "method": plan.method, "total_power": plan.total_power,
            "sdp_optimum": plan.sdp_optimum, "worst_margin": plan.worst_margin,
            "failures": failures, "merged_entries": table.n_merged,
            "noiseless_errors": noiseless_errors}
    return accs, info


def _run_semac_pa(config, threads):
    function = build_function(config.function)
    modulation = powerad.fixed_modulation(config.fixed_modulation, config.function.K, config.L)
    classes = powerad.build_difference_classes(modulation, function, config.function.epsilon)
    indices = _all_index_tuples(function.domain.Q, function.domain.K)
    outputs = function.of_indices(indices)
    blocks = _chunks(config.trials, config.block)
    results = _map_ordered(
        lambda b: _run_pa_block(config, function, modulation, classes, indices, outputs,
                                int(b[0] // config.block), b),
        blocks, threads)
    span2 = (function.f_max - function.f_min) ** 2
    accs = _merge([r[0] for r in results], len(config.snr_db), span2)
    plans = [r[1] for r in results]
    meta = {"classes": len(classes), "blocks": len(plans),
            "plan_failures": int(sum(p["failures"] for p in plans)),
            "methods": sorted({p["method"] for p in plans}),
            "min_worst_margin": float(min(p["worst_margin"] for p in plans)),
            "power_over_optimum": float(np.mean([p["total_power"] / p["sdp_optimum"]
                                                 for p in plans])),
            "merged_entries": int(sum(p["merged_entries"] for p in plans)),
            "noiseless_errors": int(sum(p["noiseless_errors"] for p in plans)),
            "min_power_gap": float(min(p["total_power"] - p["sdp_optimum"] for p in plans)),
            "plans": plans, "f_max": function.f_max, "f_min": function.f_min}
    return _rows(config, accs, function.domain.Q), meta


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> NMSEReport:
    """Monte Carlo NMSE for every configured SNR."""
    start = time.perf_counter()
    threads = resolve_threads() if threads is None else max(1, int(threads))
    if config.scheme == SEMAC_PA:
        rows, meta = _run_semac_pa(config, threads)
    else:
        rows, meta = _run_semac(config, threads)
    meta["config"] = config.to_dict()
    return NMSEReport(rows, meta, time.perf_counter() - start)


def rows_to_csv(rows: Sequence[dict]) -> str:
    """CSV with the fixed column order; floats use shortest round-trip form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                         for c in CSV_COLUMNS])
    return buf.getvalue()


# --------------------------------------------------------------------------- CLI

def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
        return
    directory = os.path.dirname(os.path.abspath(out))
    os.makedirs(directory, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _config_with_seed(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("a --config file is required", None, "--config")
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = int(args.seed)
    return config


def _cmd_design(args) -> int:
    config = _config_with_seed(args)
    if config.scheme != SEMAC:
        raise ConfigError("design needs scheme 'semac'", args.config, "scheme")
    design, combos, constraints, _ = design_from_config(config)
    _write(moddesign.design_to_json(design), args.out)
    return 0


def _cmd_adapt(args) -> int:
    config = _config_with_seed(args)
    if config.scheme != SEMAC_PA:
        raise ConfigError("adapt needs scheme 'semac-pa'", args.config, "scheme")
    function = build_function(config.function)
    modulation = powerad.fixed_modulation(config.fixed_modulation, config.function.K, config.L)
    classes = powerad.build_difference_classes(modulation, function, config.function.epsilon)
    rng = airsim.trial_rng(config.seed, _BLOCK_STREAM, 0, 0)
    H = airsim.sample_channel(config.function.K, config.L, airsim.RAYLEIGH, rng).h
    plan = powerad.adapt_power(classes, H, function, n_samples=config.n_samples,
                               seed=config.seed)
    _write(powerad.plan_to_json(plan, H), args.out)
    return 0


def _emit_report(report: NMSEReport, csv_path: Optional[str], json_path: Optional[str]):
    _write(rows_to_csv(report.rows), csv_path)
    if json_path is not None:
        _write(report.to_json(), json_path)


def _json_sibling(path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    root, _ = os.path.splitext(path)
    return root + ".report.json"


def _cmd_simulate(args) -> int:
    config = _config_with_seed(args)
    report = run_experiment(config)
    csv_path = args.out or config.output_csv
    json_path = config.output_json or _json_sibling(csv_path)
    _emit_report(report, csv_path, json_path)
    return 0


def _set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def expand_sweep(doc: dict, path: Optional[str] = None) -> List[dict]:
    """Configurations of a sweep: ``base`` overridden by every ``grid`` combination
    and then by each entry of ``runs``."""
    _require(isinstance(doc, dict), "sweep file must be a JSON object", path, "<root>")
    _require("base" in doc, "missing", path, "base")
    base = doc["base"]
    grid = doc.get("grid", {})
    runs = doc.get("runs", [{}])
    _require(isinstance(grid, dict) and all(isinstance(v, list) and v for v in grid.values()),
             "must map dotted fields to nonempty lists", path, "grid")
    _require(isinstance(runs, list) and all(isinstance(r, dict) for r in runs),
             "must be a list of objects", path, "runs")
    keys = list(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        for run in runs:
            cfg = copy.deepcopy(base)
            for k, v in zip(keys, combo):
                _set_dotted(cfg, k, v)
            for k, v in run.items():
                _set_dotted(cfg, k, v)
            out.append(cfg)
    return out


def _cmd_sweep(args) -> int:
    if args.config is None:
        raise ConfigError("a --config file is required", None, "--config")
    docs = expand_sweep(_read_json(args.config), args.config)
    configs = []
    for n, doc in enumerate(docs):
        try:
            configs.append(parse_config(doc, args.config))
        except ConfigError as err:
            raise ConfigError(f"run {n}: {err}", args.config, f"runs[{n}].{err.field}") from None
    rows, reports = [], []
    for config in configs:
        if args.seed is not None:
            config.seed = int(args.seed)
        report = run_experiment(config)
        rows.extend(report.rows)
        reports.append(json.loads(report.to_json()))
    _write(rows_to_csv(rows), args.out)
    json_path = _json_sibling(args.out)
    if json_path is not None:
        _write(json.dumps({"runs": reports}, indent=1), json_path)
    return 0


class _ArgumentError(Exception):
    pass


class _QuietParser(argparse.ArgumentParser):
    """Raises on usage errors so ``cli`` can report them as JSON."""

    def error(self, message):
        raise _ArgumentError(message)


def _parser() -> argparse.ArgumentParser:
    parser = _QuietParser(prog="semac", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"design": "emit a modulation design as JSON",
             "adapt": "emit a power plan for one channel draw as JSON",
             "simulate": "run one experiment and write CSV (plus a JSON report)",
             "sweep": "run a batch of experiments from a sweep file"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output file (default: standard output)")
    return parser


_COMMANDS = {"design": _cmd_design, "adapt": _cmd_adapt, "simulate": _cmd_simulate,
             "sweep": _cmd_sweep}


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line; returns the exit status.

    Failures print one JSON object on standard error: ``error`` names the
    failure type, ``message`` describes it, and config errors add ``path``
    and ``field``.
    """
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _ArgumentError as err:
        _report_error({"error": "UsageError", "message": str(err)})
        return 2
    except ConfigError as err:
        _report_error(err.to_dict())
        return 2
    except (ValueError, RuntimeError, OSError) as err:
        _report_error({"error": type(err).__name__, "message": str(err)})
        return 1


def _report_error(doc: dict) -> None:
    sys.stderr.write(json.dumps(doc) + "\n")


def main() -> None:
    sys.exit(cli())
