"""Command-line driver: ``cubegnn {scramble,walk,train,solve,bench,oracle,pipeline}``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import bench, gnn, walks
from .cube import ScrambleError, format_moves, random_scramble
from .oracle import MAX_DEPTH_CAP, bfs_distances
from .search import DEFAULT_NODE_BUDGET, DIAMETER, GnnHeuristic, HeuristicConfig, ZeroHeuristic


def cmd_scramble(length: int, seed: int) -> str:
    if not 1 <= length <= DIAMETER:
        raise ValueError(f"length must be in [1, {DIAMETER}], got {length}")
    return format_moves(random_scramble(np.random.default_rng(seed), length))


def _scramble(args):
    print(cmd_scramble(args.length, args.seed))
    return 0


def _walk(args):
    cfg = walks.WalkConfig(args.walks, args.length, args.seed)
    graph = walks.run_walks(cfg)
    walks.save_graph(graph, args.out)
    print(f"nodes {graph.num_nodes} edges {len(graph.edges) // 2}")
    return 0


def _train(args):
    graph = walks.load_graph(args.data)
    cfg = gnn.TrainConfig(learning_rate=args.lr, epochs=args.epochs, rng_seed=args.seed,
                          weight_init_scale=args.init_scale, hidden_dim=args.hidden)
    result = gnn.train(None, graph, cfg)
    gnn.save_model(result.model, args.out)
    bench.write_loss_trace(result.losses, args.loss_out or f"{args.out}.loss.csv")
    print(f"final loss {result.losses[-1]:.6f} accuracy {gnn.accuracy(result.model, graph):.4f}")
    return 0


def _solve(args):
    if args.heuristic == "zero":
        h = ZeroHeuristic()
    else:
        if not args.model:
            raise ValueError("--model is required for the gnn heuristic")
        h = GnnHeuristic(gnn.load_model(args.model), HeuristicConfig(lam=args.lam))
    res = bench.solve_text(args.scramble, h, args.budget)
    if not res.solved:
        print(f"no solution ({res.status}) after {res.expanded_nodes} expansions")
        return 1
    print(f"solution: {format_moves(res.path) if res.path else '(already solved)'}")
    print(f"length {res.length} expanded {res.expanded_nodes} time {res.wall_time:.3f}s")
    return 0


def _bench(args):
    cfg = bench.BenchConfig(args.instances, args.min, args.max, args.seed, args.heuristic,
                            args.lam, args.budget, args.oracle_cap)
    model = gnn.load_model(args.model) if cfg.heuristic == "gnn" else None
    need_table = not args.no_oracle or cfg.heuristic == "oracle-capped"
    table = bench.oracle_for(cfg) if need_table else None
    meta = {"model_sha256": bench.file_digest(args.model)} if model is not None else {}
    report = bench.run_bench(cfg, bench.make_heuristic(cfg, model, table), table, meta)
    report.write(args.out)
    for k, v in report.aggregates().items():
        print(f"{k} {v}")
    return 0 if report.all_solved else 1


def _oracle(args):
    table = bfs_distances(args.depth)
    text = table.dump_counts()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def _pipeline(args):
    out = bench.run_pipeline(
        args.workdir,
        walks.WalkConfig(args.walks, args.length, args.seed),
        gnn.TrainConfig(epochs=args.epochs, rng_seed=args.seed),
        bench.BenchConfig(num_instances=args.instances, rng_seed=args.seed,
                          node_budget=args.budget),
    )
    for name, report in out["reports"].items():
        agg = report.aggregates()
        print(f"{name}: " + " ".join(f"{k}={v}" for k, v in agg.items()))
    print(" ".join(f"{k}={v:.1f}s" for k, v in out["timings"].items()))
    return 0 if all(r.all_solved for r in out["reports"].values()) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cubegnn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scramble", help="print a uniform random scramble")
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=_scramble)

    s = sub.add_parser("walk", help="sample the training subgraph")
    s.add_argument("--walks", type=int, required=True)
    s.add_argument("--length", type=int, default=7)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_walk)

    s = sub.add_parser("train", help="train the classifier on a walk dataset")
    defaults = gnn.TrainConfig()
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--loss-out")
    s.add_argument("--epochs", type=int, default=defaults.epochs)
    s.add_argument("--lr", type=float, default=defaults.learning_rate)
    s.add_argument("--init-scale", type=float, default=defaults.weight_init_scale)
    s.add_argument("--hidden", type=int, default=defaults.hidden_dim)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=_train)

    s = sub.add_parser("solve", help="solve one scramble")
    s.add_argument("scramble")
    s.add_argument("--model")
    s.add_argument("--heuristic", choices=("gnn", "zero"), default="gnn")
    s.add_argument("--lam", type=float, default=1.0 / DIAMETER)
    s.add_argument("--budget", type=int, default=DEFAULT_NODE_BUDGET)
    s.set_defaults(func=_solve)

    s = sub.add_parser("bench", help="benchmark on random scrambles")
    bd = bench.BenchConfig()
    s.add_argument("--model")
    s.add_argument("--heuristic", choices=bench.HEURISTICS, default=bd.heuristic)
    s.add_argument("--instances", type=int, default=bd.num_instances)
    s.add_argument("--min", type=int, default=bd.scramble_min)
    s.add_argument("--max", type=int, default=bd.scramble_max)
    s.add_argument("--lam", type=float, default=bd.lam)
    s.add_argument("--budget", type=int, default=bd.node_budget)
    s.add_argument("--oracle-cap", type=int, choices=range(0, MAX_DEPTH_CAP + 1))
    s.add_argument("--no-oracle", action="store_true", help="skip optimality flags")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_bench)

    s = sub.add_parser("oracle", help="exact distance counts by breadth-first search")
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(func=_oracle)

    s = sub.add_parser("pipeline", help="walk, train and bench (gnn and zero) in one go")
    s.add_argument("--workdir", required=True)
    s.add_argument("--walks", type=int, default=8000)
    s.add_argument("--length", type=int, default=7)
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--instances", type=int, default=100)
    s.add_argument("--budget", type=int, default=bench.DEFAULT_BENCH_BUDGET)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, ScrambleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
