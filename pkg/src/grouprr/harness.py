"""Experiment configuration, trial execution, metrics and serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from . import pipeline
from .graph import (
    Graph,
    count_four_cycles,
    count_triangles,
    generate_erdos_renyi,
    generate_power_law,
    induced_random_subgraph,
    load_edge_list,
)
from .primitives import BudgetSplit
from .streams import TrialStreams, substream

RELATIVE_ERROR_DEFINITION = "|estimate - truth| / max(truth, 1)"

# Synthetic stand-ins for the public datasets used in the experiments.
NAMED_GRAPHS = {
    "wikipedia-standin": "powerlaw:7115:6",
    "congress-standin": "er:500:0.1",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    graph_path: str | None = None
    synthetic: str | None = None
    stat: str = "triangles"
    mechanism: str = "grouprr_clip"
    epsilon: float = 1.0
    eps_split: tuple[float, float, float] | None = None
    s: int | None = None
    mu_c: float | None = None
    mu_star: float | None = None
    trials: int = 10
    seed: int = 0
    subsample: int | None = None
    beta: float = 1e-3
    workers: int = 1
    record_time: bool = False

    def validate(self) -> None:
        if (self.graph_path is None) == (self.synthetic is None):
            raise ConfigError("give exactly one of a graph path or a synthetic generator spec")
        if self.stat not in pipeline.STATS:
            raise ConfigError(f"stat must be one of {pipeline.STATS}")
        if self.mechanism not in pipeline.MECHANISMS:
            raise ConfigError(f"mechanism must be one of {pipeline.MECHANISMS}")
        if self.mechanism == "grouprr_smooth" and self.stat != "triangles":
            raise ConfigError("grouprr_smooth supports triangles only")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must be in (0, 1)")
        grouped = self.s is not None or self.mu_c is not None
        if grouped == (self.mu_star is not None):
            raise ConfigError("give exactly one of (s, mu_c) or mu_star")
        if self.mu_star is not None and not 0 < self.mu_star <= 1:
            raise ConfigError("mu_star must be in (0, 1]")
        if self.s is not None and self.s < 1:
            raise ConfigError("s must be >= 1")
        if self.mu_c is not None and not 0 < self.mu_c <= 1:
            raise ConfigError("mu_c must be in (0, 1]")
        self.split()

    def split(self) -> BudgetSplit:
        try:
            if self.eps_split is None:
                return BudgetSplit.default(self.epsilon)
            return BudgetSplit.from_fractions(self.epsilon, self.eps_split)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def resolved(self) -> dict:
        """Concrete ``s``, ``mu_c``, baseline ``mu`` and the effective reduction ``mu_c / s^2``."""
        if self.mu_star is not None:
            s, mu_c = pipeline.group_parameters(self.mu_star, self.stat)
            target = self.mu_star
        else:
            s = self.s if self.s is not None else 1
            mu_c = self.mu_c if self.mu_c is not None else 1.0
            target = mu_c / s**2
        mu = 1.0 if self.mechanism == "rr_full" else pipeline.arr_parameter(target, self.stat)
        return {"s": s, "mu_c": mu_c, "mu": mu, "mu_star": target, "mu_star_eff": mu_c / s**2}


@dataclass
class TrialResult:
    trial: int
    seed: int
    mechanism: str
    stat: str
    n: int
    estimate: float
    ground_truth: int
    relative_error: float
    raw_sum: float
    upload_bits: int
    download_bits: int
    clip_events: int
    clipped_users: int
    wall_time_ms: float = field(default=0.0, compare=False)


def relative_error(estimate: float, truth: float) -> float:
    return abs(estimate - truth) / max(truth, 1)


def l2_error(estimates, truth: float) -> float:
    est = np.asarray(estimates, dtype=float)
    return float(math.sqrt(np.sum((est - truth) ** 2)))


# ---------------------------------------------------------------- graphs


def _generate(spec: str, rng: np.random.Generator) -> Graph:
    spec = NAMED_GRAPHS.get(spec, spec)
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "powerlaw":
            n = int(args[0])
            min_degree = int(args[1]) if len(args) > 1 else 1
            exponent = float(args[2]) if len(args) > 2 else 2.0
            return generate_power_law(n, exponent, rng, min_degree=min_degree)
        if kind == "er":
            return generate_erdos_renyi(int(args[0]), float(args[1]), rng)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad generator spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown generator {kind!r}; use powerlaw:N[:MINDEG[:EXP]] or er:N:P")


@lru_cache(maxsize=16)
def _load_graph(path, synthetic, seed, subsample) -> Graph:
    if path is not None:
        try:
            g = load_edge_list(path)
        except OSError as exc:
            raise ConfigError(f"cannot read graph: {exc}") from None
    else:
        g = _generate(synthetic, substream(seed, "graph"))
    if subsample is not None:
        if not 0 < subsample <= g.n:
            raise ConfigError(f"subsample must be in (0, {g.n}]")
        g = induced_random_subgraph(g, subsample, substream(seed, "subsample"))
    return g


def load_graph(config: ExperimentConfig) -> Graph:
    return _load_graph(config.graph_path, config.synthetic, config.seed, config.subsample)


@lru_cache(maxsize=32)
def _truth(g: Graph, stat: str) -> int:
    return count_triangles(g) if stat == "triangles" else count_four_cycles(g)


def ground_truth(g: Graph, stat: str) -> int:
    return _truth(g, stat)


# ---------------------------------------------------------------- trials


def run_mechanism(config: ExperimentConfig, g: Graph, trial: int) -> pipeline.MechanismOutput:
    p = config.resolved()
    streams = TrialStreams(config.seed, trial)
    split = config.split()
    if config.mechanism in ("grouprr_clip", "grouprr_smooth"):
        noise = "clip" if config.mechanism == "grouprr_clip" else "smooth"
        return pipeline.run_grouprr(g, config.stat, split, p["s"], p["mu_c"], streams, noise=noise, beta=config.beta)
    return pipeline.run_arr(g, config.stat, split, p["mu"], streams, beta=config.beta)


def _one_trial(config: ExperimentConfig, g: Graph, truth: int, trial: int) -> TrialResult:
    start = time.perf_counter()
    out = run_mechanism(config, g, trial)
    elapsed = (time.perf_counter() - start) * 1000.0
    return TrialResult(
        trial=trial,
        seed=config.seed,
        mechanism=config.mechanism,
        stat=config.stat,
        n=g.n,
        estimate=out.estimate,
        ground_truth=truth,
        relative_error=relative_error(out.estimate, truth),
        raw_sum=out.raw_sum,
        upload_bits=out.upload_bits,
        download_bits=out.download_bits,
        clip_events=out.clip_events,
        clipped_users=out.clipped_users,
        wall_time_ms=elapsed,
    )


def summarize(results: list[TrialResult], config: ExperimentConfig) -> dict:
    truth = results[0].ground_truth
    rel = np.array([r.relative_error for r in results])
    return {
        "mechanism": config.mechanism,
        "stat": config.stat,
        "n": results[0].n,
        "trials": len(results),
        "ground_truth": truth,
        "mean_estimate": float(np.mean([r.estimate for r in results])),
        "mean_relative_error": float(rel.mean()),
        "median_relative_error": float(np.median(rel)),
        "l2_error": l2_error([r.estimate for r in results], truth),
        "mean_upload_bits": float(np.mean([r.upload_bits for r in results])),
        "mean_download_bits": float(np.mean([r.download_bits for r in results])),
        "clip_events": int(sum(r.clip_events for r in results)),
        "relative_error_definition": RELATIVE_ERROR_DEFINITION,
        "epsilon": config.epsilon,
        "split": list(asdict(config.split()).values()),
        "beta": config.beta,
        "seed": config.seed,
        **config.resolved(),
    }


def run_trials(config: ExperimentConfig) -> tuple[list[TrialResult], dict]:
    """Run ``config.trials`` independent trials; trial ``t`` draws only from streams keyed by ``(seed, t)``."""
    config.validate()
    g = load_graph(config)
    truth = ground_truth(g, config.stat)
    if config.workers == 1:
        results = [_one_trial(config, g, truth, t) for t in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(lambda t: _one_trial(config, g, truth, t), range(config.trials)))
    return results, summarize(results, config)


# ---------------------------------------------------------------- output


def _csv_fields(include_time: bool) -> list[str]:
    names = [f.name for f in fields(TrialResult)]
    return names if include_time else [n for n in names if n != "wall_time_ms"]


def results_to_csv(results: list[TrialResult], include_time: bool = False) -> str:
    buf = io.StringIO()
    names = _csv_fields(include_time)
    writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for r in results:
        row = asdict(r)
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in names})
    return buf.getvalue()


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True)


# ---------------------------------------------------------------- sweeps

SWEEP_AXES = ("mu_star", "epsilon", "n", "s")


def sweep(config: ExperimentConfig, axis: str, values, mechanisms=None) -> list[dict]:
    """Long-format table with one summary row per ``(mechanism, axis value)``.

    A failing point is recorded with an ``error`` entry and the sweep goes on.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    mechanisms = [config.mechanism] if mechanisms is None else list(mechanisms)
    rows = []
    for mech in mechanisms:
        for v in values:
            if axis == "mu_star":
                point = replace(config, mechanism=mech, mu_star=float(v), s=None, mu_c=None)
            elif axis == "epsilon":
                point = replace(config, mechanism=mech, epsilon=float(v))
            elif axis == "n":
                point = replace(config, mechanism=mech, subsample=int(v))
            else:
                point = replace(
                    config, mechanism=mech, s=int(v), mu_c=config.mu_c if config.mu_c is not None else 1.0, mu_star=None
                )
            row = {"axis": axis, "value": v, "mechanism": mech}
            try:
                start = time.perf_counter()
                _, summary = run_trials(point)
                row.update(summary, wall_time_s=time.perf_counter() - start, error=None)
                row["mechanism"] = mech
            except Exception as exc:  # keep sweeping; the failure is part of the table
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: json.dumps(v) if isinstance(v, list) else v for k, v in r.items()})
    return buf.getvalue()
