"""
Experiment orchestration: config -> topology + data partition + engine run
+ communication ledger + trace.

A master seed fans out into independent child streams, one per consumer
(topology, partition, problem), via ``SeedSequence`` spawn keys, so adding
a consumer never perturbs the others.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .engines import (StopRule, dan_message_scalars, dan_naive_message_scalars, danla_message_scalars,
                      gd_baseline_run, polyak_newton_run, run_dan, run_danla, theorem2_bounds, write_trace_csv)
from .graph import (bfs_spanning_tree, generate_erdos_renyi, generate_random_tree, is_strongly_connected,
                    read_edge_list)
from .ledger import CommLedger
from .objectives import (ProblemConstants, SumOracle, certified_logistic_constants, load_csv_dataset,
                         logistic_node_oracles, make_covertype_style_config, ordered_sum, partition_dataset,
                         synth_logistic, synth_quadratic)

log = logging.getLogger(__name__)

ALGORITHMS = ("dan", "dan-la", "gd", "polyak")
TOPOLOGIES = ("tree", "erdos-renyi", "file")
PROBLEMS = ("csv", "synth-quadratic", "synth-logistic")
CONSTANT_PRESETS = ("certified", "covertype-style", "explicit")

SEED_TOPOLOGY, SEED_PARTITION, SEED_PROBLEM = 0, 1, 2

DEFAULTS = {
    "algorithm": "dan",
    "seed": 0,
    "warm_start": 0,
    "topology": {"kind": "tree", "n_nodes": 5, "path": None},
    "problem": {"kind": "synth-quadratic", "p": 5, "m": 200, "mu": 1.0, "M": 10.0, "offset_scale": 1.0,
                "feature_scale": 0.5, "path": None, "label_column": -1, "header": False, "normalize": True,
                "rho": None, "ridge_split": "proportional"},
    "constants": {"preset": None, "mu": None, "L": None, "M": None, "c": 1.0, "smoothness": None},
    "x0": 0.0,
    "stop": {"tol": None, "rel_tol": 1e-10, "cap": 200},
    "solver": {"smw": False},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; message starts with the field path."""


def child_seed(master: int, consumer: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(consumer,))


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


@dataclass
class SimConfig:
    """Validated experiment configuration (nested plain dict underneath)."""

    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "SimConfig":
        cfg = cls(_merge(DEFAULTS, raw or {}), Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "SimConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        raw = yaml.safe_load(path.read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(raw, path.parent)

    def with_overrides(self, **flat) -> "SimConfig":
        """Apply dotted-path overrides such as ``{"stop.cap": 3}``; ``None`` values are ignored."""
        data = copy.deepcopy(self.data)
        for dotted, val in flat.items():
            if val is None:
                continue
            keys = dotted.split(".")
            node = data
            for key in keys[:-1]:
                node = node[key]
            if keys[-1] not in node:
                raise ConfigError(f"{dotted}: unknown field")
            node[keys[-1]] = val
        cfg = SimConfig(data, self.base_dir)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def validate(self) -> None:
        d = self.data
        if d["algorithm"] not in ALGORITHMS:
            raise ConfigError(f"algorithm: must be one of {ALGORITHMS}, got {d['algorithm']!r}")
        if not isinstance(d["seed"], int) or d["seed"] < 0:
            raise ConfigError("seed: must be a non-negative integer")
        if not isinstance(d["warm_start"], int) or d["warm_start"] < 0:
            raise ConfigError("warm_start: must be a non-negative integer")
        top = d["topology"]
        if top["kind"] not in TOPOLOGIES:
            raise ConfigError(f"topology.kind: must be one of {TOPOLOGIES}")
        if top["kind"] == "file":
            if not top["path"]:
                raise ConfigError("topology.path: required for kind 'file'")
            if not self.resolve(top["path"]).exists():
                raise ConfigError(f"topology.path: file not found: {self.resolve(top['path'])}")
        elif not isinstance(top["n_nodes"], int) or top["n_nodes"] < 1:
            raise ConfigError("topology.n_nodes: must be a positive integer")
        elif top["kind"] == "erdos-renyi" and top["n_nodes"] < 2:
            raise ConfigError("topology.n_nodes: erdos-renyi needs at least 2 nodes")
        prob = d["problem"]
        if prob["kind"] not in PROBLEMS:
            raise ConfigError(f"problem.kind: must be one of {PROBLEMS}")
        if prob["kind"] == "csv":
            if not prob["path"]:
                raise ConfigError("problem.path: required for kind 'csv'")
            if not self.resolve(prob["path"]).exists():
                raise ConfigError(f"problem.path: file not found: {self.resolve(prob['path'])}")
        else:
            if not isinstance(prob["p"], int) or prob["p"] < 1:
                raise ConfigError("problem.p: must be a positive integer")
        if prob["kind"] == "synth-logistic" and (not isinstance(prob["m"], int) or prob["m"] < 1):
            raise ConfigError("problem.m: must be a positive integer")
        if prob["kind"] == "synth-quadratic" and not 0 < prob["mu"] <= prob["M"]:
            raise ConfigError("problem.mu/problem.M: need 0 < mu <= M")
        if prob["ridge_split"] not in ("proportional", "equal"):
            raise ConfigError("problem.ridge_split: must be 'proportional' or 'equal'")
        const = d["constants"]
        if const["preset"] not in (None,) + CONSTANT_PRESETS:
            raise ConfigError(f"constants.preset: must be one of {CONSTANT_PRESETS}")
        if const["preset"] == "explicit":
            for key in ("mu", "L", "M"):
                if const[key] is None:
                    raise ConfigError(f"constants.{key}: required with preset 'explicit'")
        if const["c"] is None or const["c"] < 0:
            raise ConfigError("constants.c: must be >= 0")
        stop = d["stop"]
        if not isinstance(stop["cap"], int) or stop["cap"] < 1:
            raise ConfigError("stop.cap: must be a positive integer")
        if stop["tol"] is not None and stop["tol"] < 0:
            raise ConfigError("stop.tol: must be >= 0")

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, default=str)

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


@dataclass
class Problem:
    oracles: list
    constants: ProblemConstants
    smoothness: float
    x_star: np.ndarray | None
    p: int
    partition: list | None = None


@dataclass
class RunResult:
    config: SimConfig
    trace: object
    x_final: np.ndarray
    ledger: CommLedger
    bounds: object | None
    topology: object | None
    problem: Problem

    @property
    def stop_reason(self) -> str:
        return "converged" if self.trace.converged else "cap"

    def trace_csv(self) -> str:
        return write_trace_csv(self.trace)

    def summary(self) -> dict:
        p = self.problem.p
        out = {
            "config_hash": self.config.hash(),
            "algorithm": self.config["algorithm"],
            "iterations": self.trace.iterations,
            "updating_iterations": self.trace.updating_iterations,
            "converged": self.trace.converged,
            "stop_reason": self.stop_reason,
            "final_grad_norm": float(self.trace.records[-1].grad_norm) if self.trace.records else None,
            "total_bits_per_node": self.ledger.mean_payload_bits_per_node(),
            "total_bits_with_ids_per_node": float(self.ledger.bits_with_ids.mean()),
            "message_scalars": {"dan": dan_message_scalars(p), "dan_naive": dan_naive_message_scalars(p),
                                "dan_la": danla_message_scalars(p)},
        }
        if self.bounds is not None:
            b = self.bounds
            out["theorem2"] = {"k0": b.k0, "gamma": b.gamma, "clamped": b.clamped,
                               "estimate_eps_1e-10": b.iterations_estimate(1e-10)}
        return out

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.csv").write_text(self.trace_csv())
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=1))
        (out / "ledger.json").write_text(self.ledger.to_json())


@dataclass
class RunFailure:
    index: int
    error: str


def build_topology(cfg: SimConfig):
    """Flooding topology: a spanning tree (undirected) or a strongly connected digraph."""
    top = cfg["topology"]
    seed = child_seed(cfg["seed"], SEED_TOPOLOGY)
    if top["kind"] == "tree":
        return generate_random_tree(top["n_nodes"], seed)
    if top["kind"] == "erdos-renyi":
        return bfs_spanning_tree(generate_erdos_renyi(top["n_nodes"], seed), 0)
    g = read_edge_list(cfg.resolve(top["path"]))
    if g.directed:
        if not is_strongly_connected(g):
            raise ConfigError("topology.path: directed topology is not strongly connected")
        return g
    return bfs_spanning_tree(g, 0)


def build_problem(cfg: SimConfig, n: int) -> Problem:
    prob = cfg["problem"]
    const = cfg["constants"]
    pseed = child_seed(cfg["seed"], SEED_PROBLEM)
    c = const["c"]
    if prob["kind"] == "synth-quadratic":
        q = synth_quadratic(n, prob["p"], prob["mu"], prob["M"], pseed, offset_scale=prob["offset_scale"])
        # Hessian is constant: any positive Lipschitz constant is valid
        constants = ProblemConstants(prob["mu"], const["L"] or 1.0, prob["M"], c)
        oracles, x_star, p, partition = q.oracles, q.x_star, q.p, None
    else:
        if prob["kind"] == "synth-logistic":
            data = synth_logistic(prob["m"], prob["p"], pseed, rho=prob["rho"], feature_scale=prob["feature_scale"])
        else:
            data = load_csv_dataset(cfg.resolve(prob["path"]), prob["label_column"], prob["normalize"],
                                    prob["header"], prob["rho"])
        partition = partition_dataset(data.m, n, child_seed(cfg["seed"], SEED_PARTITION))
        oracles = logistic_node_oracles(data, partition, prob["ridge_split"])
        preset = const["preset"] or "certified"
        if preset == "covertype-style":
            guide = make_covertype_style_config(data.m)
            constants = guide.constants(c)
        else:
            constants = certified_logistic_constants(data, c)
        x_star, p = None, data.p
    if any(const[k] is not None for k in ("mu", "L", "M")):
        pick = lambda key, default: default if const[key] is None else float(const[key])
        constants = ProblemConstants(pick("mu", constants.mu), pick("L", constants.lipschitz_hessian),
                                     pick("M", constants.hessian_upper), c)
    smoothness = const["smoothness"]
    if smoothness is None:
        smoothness = constants.lipschitz_hessian if const["preset"] == "covertype-style" else constants.hessian_upper
    return Problem(oracles, constants, float(smoothness), x_star, p, partition)


def _x0(cfg: SimConfig, p: int) -> np.ndarray:
    x0 = cfg["x0"]
    if isinstance(x0, (int, float)):
        return np.full(p, float(x0))
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (p,):
        raise ConfigError(f"x0: expected {p} entries, got {x0.size}")
    return x0


def run_experiment(config: SimConfig) -> RunResult:
    """Build everything from the config and run the selected engine once."""
    cfg = config
    algorithm = cfg["algorithm"]
    centralized = algorithm in ("gd", "polyak")
    topology = build_topology(cfg)
    n = topology.n
    problem = build_problem(cfg, n)
    x0 = _x0(cfg, problem.p)
    st = cfg["stop"]
    stop = StopRule(cap=st["cap"], tol=st["tol"], rel_tol=st["rel_tol"])
    ledger = CommLedger(n)
    bounds = None
    log.info("run %s: algorithm=%s n=%d p=%d", cfg.hash(), algorithm, n, problem.p)
    if algorithm == "dan":
        trace = run_dan(problem.oracles, topology, x0, problem.constants, stop, problem.x_star, ledger,
                        warm_start=cfg["warm_start"])
    elif algorithm == "dan-la":
        trace = run_danla(problem.oracles, topology, x0, problem.constants, stop, problem.x_star, ledger,
                          warm_start=cfg["warm_start"], use_smw=bool(cfg["solver"]["smw"]))
    else:
        glob = SumOracle(problem.oracles)
        if algorithm == "polyak":
            trace = polyak_newton_run(glob, x0, problem.constants, stop, problem.x_star)
        else:
            trace = gd_baseline_run(glob, x0, problem.constants.mu, problem.smoothness, stop, problem.x_star)
    if algorithm in ("dan", "polyak"):
        g0 = float(np.linalg.norm(ordered_sum(o.gradient(x0) for o in problem.oracles)))
        bounds = theorem2_bounds(g0, problem.constants.mu, problem.constants.lipschitz_hessian)
    return RunResult(cfg, trace, trace.x_final, ledger, bounds, None if centralized else topology, problem)


def _run_safely(args):
    index, cfg = args
    try:
        return run_experiment(cfg)
    except Exception as exc:  # collected per run, sweep goes on
        return RunFailure(index, f"{type(exc).__name__}: {exc}")


def sweep(configs, workers: int = 1) -> list:
    """
    Run independent experiments; results keep the input order.

    Failed runs come back as :class:`RunFailure` entries instead of
    aborting the sweep.
    """
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one config")
    jobs = list(enumerate(configs))
    if workers <= 1:
        return [_run_safely(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_safely, jobs))
