"""Replicated swarm experiments: scenarios, seeding, aggregation, persistence."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from ._accel import backend_name
from .criteria import CriterionKind, CriterionValue, relative_efficiency
from .model import num_params, write_text_atomic
from .pso import RNG_ALGORITHM, PsoConfig, RunResult, StopReason, Topology, TopologyKind, run

SUCCESS_SLACK = 1e-6
PAPER_SWARM_SIZES = (50, 150, 500)
PAPER_REPLICATES = 140
DESK_SWARM_SIZES = (50, 150)
DESK_REPLICATES = 20


def paper_grid() -> list[tuple[int, int]]:
    """The 21 (K, N) design scenarios: K=1 N=3..9, K=2 N=6..12, K=3 N=10..16."""
    return [(K, N) for K, start in ((1, 3), (2, 6), (3, 10)) for N in range(start, start + 7)]


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Scenario:
    K: int
    N: int
    criterion: CriterionKind
    swarm_size: int
    variant: TopologyKind
    replicates: int = DESK_REPLICATES
    root_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "criterion", CriterionKind.parse(self.criterion))
        object.__setattr__(self, "variant", TopologyKind.parse(self.variant))
        num_params(self.K)
        for name in ("N", "swarm_size", "replicates"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if not 0 <= int(self.root_seed) < 2**64:
            raise ValueError("root_seed must be a 64-bit unsigned integer")

    @property
    def fingerprint(self) -> str:
        # replicates and root_seed are left out so growing a batch keeps old streams
        return f"K{self.K}-N{self.N}-{self.criterion.value}-S{self.swarm_size}-{self.variant.value}"

    @property
    def p(self) -> int:
        return num_params(self.K)

    def config(self, **overrides) -> PsoConfig:
        return PsoConfig(swarm_size=self.swarm_size, topology=Topology(self.variant), **overrides)


def replicate_seed(root_seed: int, fingerprint: str, index: int) -> int:
    """Stable 64-bit seed from BLAKE2b over ``"root|fingerprint|index"``."""
    digest = hashlib.blake2b(f"{int(root_seed)}|{fingerprint}|{int(index)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def scenario_factorial(grid, swarm_sizes, variants, criteria, replicates, root_seed=0) -> list[Scenario]:
    return [
        Scenario(K, N, crit, S, var, replicates, root_seed)
        for (K, N), S, var, crit in product(grid, swarm_sizes, variants, criteria)
    ]


def paper_factorial(root_seed: int = 0) -> list[Scenario]:
    return scenario_factorial(paper_grid(), PAPER_SWARM_SIZES, list(TopologyKind), list(CriterionKind),
                              PAPER_REPLICATES, root_seed)


# -- running ------------------------------------------------------------------


def _run_one(task):
    scenario, index, overrides = task
    config = scenario.config(seed=replicate_seed(scenario.root_seed, scenario.fingerprint, index), **overrides)
    return scenario, index, run(scenario.criterion, scenario.N, scenario.K, config)


def run_batch(scenarios, workers: int = 1, config_overrides: dict | None = None, on_result=None):
    """Run every replicate of every scenario.

    Returns ``{scenario: [RunResult, ...]}`` with each list in replicate order,
    regardless of how work was scheduled across ``workers`` processes.
    """
    overrides = dict(config_overrides or {})
    scenarios = list(scenarios)
    for s in scenarios:
        s.config(**overrides).validate(s.N * s.K)
    tasks = [(s, i, overrides) for s in scenarios for i in range(s.replicates)]
    done = []
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            done.append(_run_one(t))
            if on_result is not None:
                on_result(*done[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for item in pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (8 * workers))):
                done.append(item)
                if on_result is not None:
                    on_result(*item)
    done.sort(key=lambda item: (item[0].fingerprint, item[0].root_seed, item[1]))
    out = {s: [] for s in scenarios}
    for s, _, r in done:
        out[s].append(r)
    return out


def run_replicates(scenario: Scenario, workers: int = 1, config_overrides: dict | None = None) -> list[RunResult]:
    return run_batch([scenario], workers, config_overrides)[scenario]


# -- efficacy -----------------------------------------------------------------


def _check_reference(reference_value):
    if reference_value is None:
        raise ValueError("no reference value: supply a catalog entry or use the batch-best reference")
    ref = float(reference_value)
    if getattr(reference_value, "singular", False) or not math.isfinite(ref) or ref <= 0:
        raise ValueError("reference value must be finite, positive and nonsingular")
    return ref


def efficiencies(results, reference_value, kind, p: int) -> np.ndarray:
    """Percent efficiency of each run relative to the reference; singular runs get 0."""
    ref = _check_reference(reference_value)
    out = []
    for r in results:
        v = float(r.best_fitness) if isinstance(r, RunResult) else float(r)
        out.append(relative_efficiency(kind, v, ref, p) if math.isfinite(v) and v > 0 else 0.0)
    return np.array(out)


def prop_highly_efficient(results, reference_value, kind, p: int, threshold_percent: float = 95.0) -> float:
    eff = efficiencies(results, reference_value, kind, p)
    # singular runs (efficiency 0) never count, even at a zero threshold
    return float(np.mean((eff > 0) & (eff >= threshold_percent))) if eff.size else 0.0


def success_probability(results, reference_value, kind, p: int) -> float:
    """Share of runs at least as good as the reference (100% efficiency, less a 1e-6 slack)."""
    return prop_highly_efficient(results, reference_value, kind, p, 100.0 - SUCCESS_SLACK)


# -- reference catalog --------------------------------------------------------


def catalog_key(K: int, N: int, criterion) -> str:
    return f"{K}-{N}-{CriterionKind.parse(criterion).value}"


@dataclass
class ReferenceCatalog:
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, entry in self.entries.items():
            value = float(entry["value"])
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"catalog entry {key}: reference value must be finite and positive")

    def lookup(self, K: int, N: int, criterion) -> float | None:
        entry = self.entries.get(catalog_key(K, N, criterion))
        return None if entry is None else float(entry["value"])

    @classmethod
    def load(cls, path) -> "ReferenceCatalog":
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: catalog must be a JSON object")
        entries = {}
        for key, entry in raw.items():
            if isinstance(entry, (int, float, str)):
                entry = {"value": entry}
            parts = key.split("-")
            if len(parts) != 3:
                raise ValueError(f"{path}: bad catalog key {key!r}; expected 'K-N-criterion'")
            entries[catalog_key(int(parts[0]), int(parts[1]), parts[2])] = entry
        return cls(entries)

    def dump(self) -> str:
        return json.dumps(self.entries, indent=2, sort_keys=True)


# -- summaries ----------------------------------------------------------------


@dataclass(frozen=True)
class ReplicateSummary:
    scenario: Scenario
    reference_value: float
    reference_source: str  # "catalog", "batch_best" or "none"
    best_value: float
    median_value: float
    success_probability: float
    prop_highly_efficient: float
    median_function_evaluations: float
    median_wall_time_seconds: float


SUMMARY_HEADER = [
    "fingerprint", "K", "N", "criterion", "variant", "swarm_size", "replicates", "root_seed",
    "reference_source", "reference_value", "best_value", "median_value",
    "success_probability", "prop_highly_efficient",
    "median_function_evaluations", "median_wall_time_seconds",
]


def summarize(results, scenario: Scenario, catalog: ReferenceCatalog | None = None) -> ReplicateSummary:
    """Aggregate one scenario's runs.

    The reference is the catalog entry when there is one, otherwise the best
    value in this batch (``reference_source == "batch_best"``).
    """
    results = list(results)
    if not results:
        raise ValueError("cannot summarise an empty result list")
    values = np.array([float(r.best_fitness) for r in results])
    ref = catalog.lookup(scenario.K, scenario.N, scenario.criterion) if catalog is not None else None
    source = "catalog"
    if ref is None:
        finite = values[np.isfinite(values)]
        ref, source = (float(finite.min()), "batch_best") if finite.size else (math.nan, "none")
    if source == "none":
        p_succ = p_high = 0.0
    else:
        p_succ = success_probability(results, ref, scenario.criterion, scenario.p)
        p_high = prop_highly_efficient(results, ref, scenario.criterion, scenario.p)
    return ReplicateSummary(
        scenario=scenario,
        reference_value=ref,
        reference_source=source,
        best_value=float(values.min()),
        median_value=float(np.median(values)),
        success_probability=p_succ,
        prop_highly_efficient=p_high,
        median_function_evaluations=float(np.median([r.function_evaluations for r in results])),
        median_wall_time_seconds=float(np.median([r.wall_time_seconds for r in results])),
    )


def summary_row(s: ReplicateSummary) -> list[str]:
    sc = s.scenario
    return [
        sc.fingerprint, str(sc.K), str(sc.N), sc.criterion.value, sc.variant.value, str(sc.swarm_size),
        str(sc.replicates), str(sc.root_seed), s.reference_source, fmt17(s.reference_value),
        fmt17(s.best_value), fmt17(s.median_value), fmt17(s.success_probability),
        fmt17(s.prop_highly_efficient), fmt17(s.median_function_evaluations),
        fmt17(s.median_wall_time_seconds),
    ]


def format_summary_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        w.writerow(summary_row(s))
    return buf.getvalue()


# -- per-run records ----------------------------------------------------------


def run_record(result: RunResult, scenario: Scenario | None = None, replicate: int | None = None) -> dict:
    """JSON-ready record of one run; criterion values are 17-digit strings."""
    K, N = result.K, result.N
    rec = {
        "scenario": scenario.fingerprint if scenario else f"K{K}-N{N}-{result.best_fitness.kind.value}-S{result.swarm_size}-{result.topology.value}",
        "K": K,
        "N": N,
        "criterion": result.best_fitness.kind.value,
        "variant": result.topology.value,
        "swarm_size": result.swarm_size,
        "replicate": replicate,
        "seed": result.seed,
        "best_value": fmt17(result.best_fitness.value),
        "singular": result.best_fitness.singular,
        "iterations": result.iterations,
        "function_evaluations": result.function_evaluations,
        "wall_time_seconds": result.wall_time_seconds,
        "stop_reason": result.stop_reason.value,
        "best_design": result.best_design.tolist(),
        "rng": RNG_ALGORITHM,
        "backend": backend_name(),
    }
    return rec


def result_from_record(rec: dict) -> RunResult:
    design = np.array(rec["best_design"], dtype=float).reshape(rec["N"], rec["K"])
    return RunResult(
        best_design=design,
        best_fitness=CriterionValue.from_float(rec["criterion"], float(rec["best_value"])),
        iterations=int(rec["iterations"]),
        function_evaluations=int(rec["function_evaluations"]),
        wall_time_seconds=float(rec["wall_time_seconds"]),
        stop_reason=StopReason(rec["stop_reason"]),
        seed=int(rec["seed"]),
        swarm_size=int(rec["swarm_size"]),
        topology=TopologyKind.parse(rec["variant"]),
    )


def format_jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_batch(results_by_scenario, jsonl_path=None, csv_path=None, catalog=None):
    """Persist a finished batch atomically; returns the summaries."""
    records, summaries = [], []
    for scenario in sorted(results_by_scenario, key=lambda s: (s.fingerprint, s.root_seed)):
        runs = results_by_scenario[scenario]
        records.extend(run_record(r, scenario, i) for i, r in enumerate(runs))
        summaries.append(summarize(runs, scenario, catalog))
    if jsonl_path is not None:
        write_text_atomic(jsonl_path, format_jsonl(records))
    if csv_path is not None:
        write_text_atomic(csv_path, format_summary_csv(summaries))
    return summaries


def load_scenarios(path, defaults: dict | None = None) -> list[Scenario]:
    """Scenarios from a JSON list of objects with Scenario field names."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError(f"{path}: expected a JSON list of scenarios")
    base = dict(defaults or {})
    return [Scenario(**{**base, **item}) for item in raw]


def default_workers() -> int:
    env = os.environ.get("OPTDES_WORKERS")
    return int(env) if env else 1


def with_replicates(scenario: Scenario, n: int) -> Scenario:
    return replace(scenario, replicates=n)
