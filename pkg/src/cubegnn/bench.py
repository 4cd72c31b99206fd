"""Benchmark harness: scrambled instances, per-instance search metrics, CSV reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import gnn, walks
from .cube import apply_moves, format_moves, parse_scramble, random_scramble, solved_state
from .oracle import MAX_DEPTH_CAP, DistanceTable, bfs_distances
from .search import (DIAMETER, GnnHeuristic, Heuristic, HeuristicConfig, OracleHeuristic,
                     ZeroHeuristic, search)

log = logging.getLogger(__name__)

HEURISTICS = ("gnn", "zero", "oracle-capped")
COLUMNS = ("index", "scramble", "solution", "solution_length", "expanded_nodes",
           "heuristic_evals", "wall_time", "solved", "oracle_distance", "optimal")
TIMING_COLUMNS = ("wall_time",)
DEFAULT_BENCH_BUDGET = 20_000_000


@dataclass(frozen=True)
class BenchConfig:
    num_instances: int = 100
    scramble_min: int = 5
    scramble_max: int = 7
    rng_seed: int = 0
    heuristic: str = "gnn"
    lam: float = 1.0 / DIAMETER
    node_budget: int = DEFAULT_BENCH_BUDGET
    oracle_cap: int | None = None

    def __post_init__(self):
        if self.num_instances < 1:
            raise ValueError("num_instances must be >= 1")
        if not 1 <= self.scramble_min <= self.scramble_max <= DIAMETER:
            raise ValueError(
                f"need 1 <= scramble_min <= scramble_max <= {DIAMETER}, "
                f"got {self.scramble_min}..{self.scramble_max}"
            )
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")


@dataclass
class BenchRow:
    index: int
    scramble: str
    solution: str
    solution_length: int
    expanded_nodes: int
    heuristic_evals: int
    wall_time: float
    solved: bool
    oracle_distance: int | None = None
    optimal: bool | None = None


@dataclass
class BenchReport:
    config: BenchConfig
    rows: list[BenchRow]
    metadata: dict = field(default_factory=dict)

    def mean(self, column: str) -> float:
        return float(np.mean([getattr(r, column) for r in self.rows]))

    def aggregates(self) -> dict[str, float | str]:
        out = {
            "mean_solution_length": self.mean("solution_length"),
            "mean_expanded_nodes": self.mean("expanded_nodes"),
            "mean_heuristic_evals": self.mean("heuristic_evals"),
            "mean_wall_time": self.mean("wall_time"),
            "solved": f"{sum(r.solved for r in self.rows)}/{len(self.rows)}",
        }
        flags = [r.optimal for r in self.rows if r.optimal is not None]
        if flags:
            out["optimal"] = f"{sum(flags)}/{len(flags)}"
            out["mean_oracle_distance"] = float(np.mean(
                [r.oracle_distance for r in self.rows if r.oracle_distance is not None]))
        return out

    @property
    def all_solved(self) -> bool:
        return all(r.solved for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        meta = json.dumps({"config": asdict(self.config), **self.metadata}, sort_keys=True)
        buf.write(f"# cubegnn-bench {meta}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        for k, v in self.aggregates().items():
            buf.write(f"# {k}={_fmt(v)}\n")
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_report(path) -> tuple[dict, list[dict], dict]:
    """Parse a report into (metadata, rows, footer) with string values."""
    lines = Path(path).read_text().splitlines()
    meta = json.loads(lines[0].split(" ", 2)[2])
    body = [ln for ln in lines[1:] if not ln.startswith("#")]
    footer = dict(ln[2:].split("=", 1) for ln in lines[1:] if ln.startswith("# "))
    rows = list(csv.DictReader(body))
    return meta, rows, footer


def make_instances(cfg: BenchConfig) -> list[list]:
    """Scramble lengths uniform on [min, max], moves uniform over all 12."""
    rng = np.random.default_rng(cfg.rng_seed)
    out = []
    for _ in range(cfg.num_instances):
        length = int(rng.integers(cfg.scramble_min, cfg.scramble_max + 1))
        out.append(random_scramble(rng, length))
    return out


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def config_digest(cfg: BenchConfig) -> str:
    return hashlib.sha256(json.dumps(asdict(cfg), sort_keys=True).encode()).hexdigest()[:16]


def make_heuristic(cfg: BenchConfig, model: gnn.GnnModel | None = None,
                   table: DistanceTable | None = None) -> Heuristic:
    if cfg.heuristic == "zero":
        return ZeroHeuristic()
    if cfg.heuristic == "oracle-capped":
        if table is None:
            raise ValueError("oracle-capped heuristic needs a distance table")
        return OracleHeuristic(table, cfg.lam)
    if model is None:
        raise ValueError("gnn heuristic needs a model")
    return GnnHeuristic(model, HeuristicConfig(lam=cfg.lam))


def run_bench(cfg: BenchConfig, h: Heuristic, table: DistanceTable | None = None,
              metadata: dict | None = None) -> BenchReport:
    rows = []
    for i, scramble in enumerate(make_instances(cfg)):
        start = apply_moves(solved_state(), scramble)
        res = search(start, h, node_budget=cfg.node_budget)
        # re-verify independently of the searcher's own goal test
        solved = res.solved and apply_moves(start, res.path).is_solved()
        d0 = table.lookup(start) if table is not None else None
        optimal = None if d0 is None or not solved else res.length == d0
        rows.append(BenchRow(i, format_moves(scramble), format_moves(res.path), res.length,
                             res.expanded_nodes, res.heuristic_evals, res.wall_time, solved,
                             d0, optimal))
        log.info("instance %d: len %d expanded %d evals %d %.2fs", i, res.length,
                 res.expanded_nodes, res.heuristic_evals, res.wall_time)
    meta = {"config_hash": config_digest(cfg), **(metadata or {})}
    return BenchReport(cfg, rows, meta)


def oracle_for(cfg: BenchConfig) -> DistanceTable:
    cap = cfg.oracle_cap if cfg.oracle_cap is not None else min(cfg.scramble_max, MAX_DEPTH_CAP)
    return bfs_distances(cap)


def write_loss_trace(losses, path) -> None:
    lines = ["epoch,loss"] + [f"{i},{v!r}" for i, v in enumerate(losses)]
    Path(path).write_text("\n".join(lines) + "\n")


def run_pipeline(workdir, walk_cfg: walks.WalkConfig, train_cfg: gnn.TrainConfig,
                 bench_cfg: BenchConfig, baselines=("zero",), table: DistanceTable | None = None):
    """walk -> train -> bench (gnn plus baselines) with all artefacts in ``workdir``."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    timings = {}

    t0 = time.perf_counter()
    graph = walks.run_walks(walk_cfg)
    walks.save_graph(graph, workdir / "walks.txt")
    timings["walk"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = gnn.train(None, graph, train_cfg)
    gnn.save_model(result.model, workdir / "model.txt")
    write_loss_trace(result.losses, workdir / "loss.csv")
    timings["train"] = time.perf_counter() - t0

    if table is None:
        table = oracle_for(bench_cfg)
    reports = {}
    model = gnn.load_model(workdir / "model.txt")
    meta = {"model_sha256": file_digest(workdir / "model.txt")}
    for name in ("gnn", *baselines):
        cfg = BenchConfig(**{**asdict(bench_cfg), "heuristic": name})
        t0 = time.perf_counter()
        report = run_bench(cfg, make_heuristic(cfg, model, table), table,
                           meta if name == "gnn" else None)
        report.write(workdir / f"bench_{name}.csv")
        timings[f"bench_{name}"] = time.perf_counter() - t0
        reports[name] = report
    return {"graph": graph, "train": result, "reports": reports, "timings": timings,
            "table": table, "workdir": workdir}


def solve_text(scramble: str, h: Heuristic, node_budget: int):
    start = apply_moves(solved_state(), parse_scramble(scramble))
    return search(start, h, node_budget=node_budget)
