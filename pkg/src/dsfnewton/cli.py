"""
Command line entry point.

    dsfnewton run --config exp.yaml --out results/
    dsfnewton sweep --config sweep.yaml --out results/
    dsfnewton consensus-demo --topology tree --nodes 10 --seed 3
    dsfnewton bounds --mu 1 --L 1 --grad0 3
    dsfnewton validate-data --data data.csv --label-column -1

Exit codes: 0 success / converged, 2 iteration cap reached, 1 any error.
The default output directory comes from ``$DSFNEWTON_OUT`` (else ``./out``).
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import consensus, engines, graph, objectives
from .harness import ConfigError, RunFailure, SimConfig, run_experiment, sweep

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2
OUT_ENV = "DSFNEWTON_OUT"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "out")


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "algorithm": args.algorithm,
        "topology.n_nodes": args.nodes,
        "constants.c": args.c,
        "warm_start": args.warm_start,
        "stop.cap": args.cap,
        "stop.tol": args.tol,
    }


def _load_config(args) -> SimConfig:
    base = SimConfig.load(args.config) if args.config else SimConfig.from_dict({})
    return base.with_overrides(**_overrides(args))


def cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg)
    out = Path(args.out or _default_out())
    result.write(out)
    summ = result.summary()
    print(f"{summ['algorithm']}: {summ['iterations']} iterations, final |grad| = {summ['final_grad_norm']:.3e}, "
          f"{summ['total_bits_per_node']:.0f} bits/node -> {out}")
    if cfg["algorithm"] in ("dan", "dan-la", "polyak"):
        print("note: convergence guarantees hold only if the supplied mu, L, M are valid for this objective")
    return EXIT_OK if result.trace.converged else EXIT_CAP


def _sweep_configs(path) -> list:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text()) or {}
    base = SimConfig.from_dict(raw.get("base", {}), path.parent)
    if "runs" in raw:
        return [SimConfig.from_dict(_deep_merge(base.data, run), path.parent) for run in raw["runs"]]
    grid = raw.get("grid", {})
    keys = list(grid)
    return [base.with_overrides(**dict(zip(keys, combo))) for combo in itertools.product(*(grid[k] for k in keys))]


def _deep_merge(base: dict, override: dict) -> dict:
    out = json.loads(json.dumps(base))
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def cmd_sweep(args) -> int:
    configs = _sweep_configs(args.config)
    configs = [c.with_overrides(**_overrides(args)) for c in configs]
    results = sweep(configs, workers=args.workers)
    out = Path(args.out or _default_out())
    code = EXIT_OK
    index = []
    for i, res in enumerate(results):
        if isinstance(res, RunFailure):
            print(f"run {i:03d}: FAILED {res.error}", file=sys.stderr)
            index.append({"run": i, "error": res.error})
            code = EXIT_ERROR
            continue
        res.write(out / f"run_{i:03d}")
        summ = res.summary()
        index.append({"run": i, **summ})
        print(f"run {i:03d}: {summ['algorithm']} {summ['stop_reason']} after {summ['iterations']} iterations")
        if not res.trace.converged and code == EXIT_OK:
            code = EXIT_CAP
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(index, indent=1))
    return code


def _demo_graph(args):
    n, seed = args.nodes, args.seed
    kind = args.topology
    if kind == "tree":
        return graph.generate_random_tree(n, seed).graph
    if kind == "path":
        return graph.path_graph(n)
    if kind == "star":
        return graph.star_graph(n)
    if kind == "ring":
        return graph.bfs_spanning_tree(graph.ring_graph(n), 0).graph
    if kind == "directed-ring":
        return graph.ring_graph(n, directed=True)
    if kind == "erdos-renyi":
        return graph.bfs_spanning_tree(graph.generate_erdos_renyi(n, seed), 0).graph
    if kind == "digraph":
        return graph.generate_strongly_connected_digraph(n, seed)
    if kind == "file":
        g = graph.read_edge_list(args.file)
        return g if g.directed else graph.bfs_spanning_tree(g, 0).graph
    raise ValueError(f"unknown topology {kind!r}")


def cmd_consensus_demo(args) -> int:
    g = _demo_graph(args)
    n = g.n
    payloads = [consensus.TaggedMessage(i, i, 1) for i in range(n)]
    bound = consensus.default_rounds(g)
    result = consensus.run_dsf(g, payloads, rounds=bound, require_complete=False)
    label = "n + d_G - 1" if g.directed else "n - 1"
    print(f"{'directed' if g.directed else 'undirected tree'}: n={n}, links={g.num_links}")
    total = 0
    held = [{i} for i in range(n)]
    for rep in result.reports:
        total += len(rep.transmissions)
        for t in rep.deliveries:
            held[t.receiver].add(t.origin)
        print(f"round {rep.round:3d}: {len(rep.transmissions):4d} transmissions, "
              f"info-set sizes {[len(h) for h in held]}")
    print(f"total transmissions: {total}")
    print(f"completion round: {result.completion_round}; guaranteed bound ({label}): {bound}")
    if not g.directed:
        print(f"minimum transmissions into a leaf: {consensus.min_transmissions_lower_bound(g)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = [ln for rep in result.reports for ln in rep.to_json_lines()]
        (out / "rounds.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    if result.completion_round is None or result.completion_round > bound:
        print("error: set-consensus not reached within the guaranteed bound", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_bounds(args) -> int:
    if min(args.mu, args.L) <= 0 or args.grad0 < 0:
        print("error: mu and L must be positive, grad0 non-negative", file=sys.stderr)
        return EXIT_ERROR
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b = engines.theorem2_bounds(args.grad0, args.mu, args.L)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"k0 = {b.k0}")
    print(f"gamma = {b.gamma:.12g}")
    if b.k0 == 0:
        print("pure Newton phase from the start (k0 = 0)")
    else:
        print(f"damped Newton phase for k <= {b.k0}: |grad| drops by at least {args.mu ** 2 / (2 * args.L):.6g} per step")
    for eps in (1e-4, 1e-8, 1e-12):
        print(f"iterations for |x - x*| <= {eps:g}: {b.iterations_estimate(eps)}")
    return EXIT_OK


def cmd_validate_data(args) -> int:
    label = args.label_column
    try:
        label = int(label)
    except ValueError:
        pass
    prob = objectives.load_csv_dataset(args.data, label, normalize=not args.no_normalize, header=args.header,
                                       rho=args.rho)
    counts = {int(v): int(c) for v, c in zip(*np.unique(prob.labels, return_counts=True))}
    cert = objectives.certified_logistic_constants(prob)
    guide = objectives.make_covertype_style_config(prob.m)
    print(f"samples m = {prob.m}, features p = {prob.p}, label counts {counts}")
    print(f"feature range [{prob.features.min():.3g}, {prob.features.max():.3g}], rho = {prob.rho:g}")
    print(f"certified constants: mu = {cert.mu:.6g}, L = {cert.lipschitz_hessian:.6g}, M = {cert.hessian_upper:.6g}")
    print(f"guidance constants: mu = {guide.mu:g}, L = {guide.lipschitz_hessian:g}, M = {guide.hessian_upper:g}, "
          f"rho = {guide.rho:g} (not certified)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsfnewton", description="Distributed adaptive Newton simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p):
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--algorithm", choices=["dan", "dan-la", "gd", "polyak"])
        p.add_argument("--nodes", type=int)
        p.add_argument("--c", type=float)
        p.add_argument("--warm-start", type=int)
        p.add_argument("--cap", type=int)
        p.add_argument("--tol", type=float)

    p = sub.add_parser("run", help="run one experiment")
    run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a list or grid of experiments")
    run_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("consensus-demo", help="trace selective flooding round by round")
    p.add_argument("--topology", default="tree",
                   choices=["tree", "path", "star", "ring", "directed-ring", "erdos-renyi", "digraph", "file"])
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_consensus_demo)

    p = sub.add_parser("bounds", help="global convergence envelope of adaptive Newton")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--grad0", type=float, required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("validate-data", help="check a CSV dataset and report constants")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="-1")
    p.add_argument("--header", action="store_true")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_validate_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, objectives.DatasetError, graph.TopologyError, ValueError,
            engines.EngineError, consensus.ProtocolViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
