"""Finite-time set-consensus flooding and distributed adaptive Newton methods."""

from .consensus import TaggedMessage, run_dsf
from .engines import (StopRule, danla_stepsize, danla_threshold, gd_baseline_run, polyak_newton_run,
                      polyak_stepsize, run_dan, run_danla, theorem2_bounds)
from .graph import Graph, SpanningTree, bfs_spanning_tree, diameter, generate_erdos_renyi, generate_random_tree
from .harness import SimConfig, run_experiment, sweep
from .ledger import CommLedger
from .objectives import ProblemConstants, synth_logistic, synth_quadratic

__version__ = "0.1.0"
