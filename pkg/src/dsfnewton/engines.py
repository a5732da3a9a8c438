"""
Second-order optimization engines.

* :func:`polyak_newton_run`: centralized damped Newton with Polyak's adaptive
  stepsize ``min(1, mu^2 / (L ||g||))``.
* :func:`run_dan`: every node floods its local gradient and Hessian, sums the
  set it receives and takes the same adaptive Newton step.
* :func:`run_danla`: every node floods a rank-1 compression of its Hessian
  innovation with an error bound; steps are only taken when the summed bound
  passes a threshold, with a stepsize co-designed from that threshold.
* :func:`gd_baseline_run`: centralized gradient descent with step ``2/(mu+l)``.

All nodes run identical arithmetic on identical inputs, so their states are
compared bit for bit after every iteration.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .consensus import TaggedMessage, run_dsf
from .graph import Graph
from .linalg import (DEFAULT_TOL, SMWBreakdown, SPDError, cholesky, from_upper_triangle, rank1_truncate,
                     smw_solve, spd_solve, symmetrize, upper_triangle)
from .objectives import ordered_sum

TRACE_COLUMNS = ["k", "grad_norm", "stepsize", "updated", "scalars_sent_per_node_cum",
                 "bits_sent_per_node_cum", "dist_to_opt"]


class EngineError(RuntimeError):
    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


class ConsensusViolation(EngineError):
    """Node states diverged although every node ran the same update."""


def dan_message_scalars(p: int) -> int:
    """Upper triangle of the Hessian plus the gradient."""
    return p * (p + 1) // 2 + p


def dan_naive_message_scalars(p: int) -> int:
    return p * p + p


def danla_message_scalars(p: int) -> int:
    """``(r, s, g, h)``: two scalars and two p-vectors."""
    return 2 * p + 2


# ---------------------------------------------------------------------------
# stepsizes and bounds

def polyak_stepsize(grad_norm: float, mu: float, L: float) -> float:
    if grad_norm == 0:
        return 1.0
    return min(1.0, mu * mu / (L * grad_norm))


def danla_threshold(mu: float, M: float, c: float) -> float:
    """
    Error-gate threshold ``(sqrt(Mc^2 + 3 mu^2) - Mc) / 3`` with ``Mc = M + c``.

    Evaluated as ``mu^2 / (sqrt(Mc^2 + 3 mu^2) + Mc)`` to avoid cancellation.
    """
    mc = M + c
    return mu * mu / (math.sqrt(mc * mc + 3.0 * mu * mu) + mc)


def danla_phi(mu: float, L: float, M: float, r_low: float) -> float:
    return 2.0 * mu * (mu - r_low) ** 2 / (L * (M + mu)) - 2.0 * r_low * (mu - r_low) / L


def danla_stepsize(grad_norm: float, r_hat: float, mu: float, L: float, M: float, c: float) -> float:
    r_low = danla_threshold(mu, M, c)
    if r_hat > r_low:
        return 0.0
    if grad_norm == 0:
        return 1.0
    return min(1.0, danla_phi(mu, L, M, r_low) / grad_norm)


@dataclass(frozen=True)
class Theorem2Bounds:
    """
    Global convergence envelope of the adaptive Newton iteration.

    ``k0`` is the last iteration of the damped phase; after it the gradient
    bound squares ``gamma`` every step.
    """

    k0: int
    gamma: float
    mu: float
    L: float
    grad0_norm: float
    clamped: bool = False

    def grad_bound(self, k: int) -> float:
        if k <= self.k0:
            return self.grad0_norm - self.mu ** 2 / (2.0 * self.L) * k
        return 2.0 * self.mu ** 2 / self.L * self._gpow(k)

    def dist_bound(self, k: int) -> float:
        if k <= self.k0:
            return self.mu / self.L * (self.k0 - k + 2.0 * self.gamma / (1.0 - self.gamma))
        q = self._gpow(k)
        return 2.0 * self.mu * q / (self.L * (1.0 - q))

    def _gpow(self, k: int) -> float:
        return self.gamma ** (2.0 ** min(k - self.k0, 1023))

    def iterations_estimate(self, eps: float) -> int:
        """Iterations until ``||x_k - x*|| <= eps``: ``k0 + log2 log_{1/gamma}(4 mu / (L eps))``."""
        arg = 4.0 * self.mu / (self.L * eps)
        if self.gamma <= 0.0 or arg <= 1.0:
            return self.k0
        inner = math.log(arg) / math.log(1.0 / self.gamma)
        if inner <= 1.0:
            return self.k0
        return self.k0 + math.ceil(math.log2(inner))


GAMMA_CLAMP = 0.5 - 1e-12


def theorem2_bounds(grad0_norm: float, mu: float, L: float) -> Theorem2Bounds:
    """
    ``k0 = max(0, ceil(2L||g0||/mu^2) - 2)`` and ``gamma = L||g0||/(2mu^2) - k0/4``.

    ``gamma`` reaches exactly 1/2 when ``2L||g0||/mu^2`` is an integer; it is
    then clamped just below 1/2 with a warning.
    """
    t = 2.0 * L * grad0_norm / (mu * mu)
    k0 = max(0, math.ceil(t) - 2)
    gamma = t / 4.0 - k0 / 4.0
    clamped = False
    if gamma >= 0.5:
        warnings.warn(f"gamma = {gamma!r} hits the 1/2 boundary; clamped to {GAMMA_CLAMP!r}", stacklevel=2)
        gamma, clamped = GAMMA_CLAMP, True
    return Theorem2Bounds(k0, max(0.0, gamma), mu, L, grad0_norm, clamped)


# ---------------------------------------------------------------------------
# traces

@dataclass
class IterationRecord:
    k: int
    grad_norm: float
    stepsize: float
    updated: bool
    scalars_sent: float = 0.0
    scalars_sent_cum: float = 0.0
    bits_sent_cum: float = 0.0
    dist_to_opt: float | None = None
    r_hat: float | None = None
    hessian_error: float | None = None
    phase: str = "newton"


@dataclass
class StopRule:
    """Stop at ``||g|| <= tol`` (default ``rel_tol * max(1, ||g0||)``) or after ``cap`` iterations."""

    cap: int = 200
    tol: float | None = None
    rel_tol: float = 1e-10

    def threshold(self, grad0_norm: float) -> float:
        return self.tol if self.tol is not None else self.rel_tol * max(1.0, grad0_norm)


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    converged: bool = False
    threshold: float = 0.0
    node_states: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def updating_iterations(self) -> int:
        return sum(r.updated for r in self.records)

    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    def max_consecutive_stalls(self) -> int:
        """Longest run of non-updating iterations, excluding the converged final row."""
        rows = self.records[:-1] if self.converged else self.records
        best = cur = 0
        for r in rows:
            if r.phase != "newton":
                continue
            cur = 0 if r.updated else cur + 1
            best = max(best, cur)
        return best


def write_trace_csv(trace: RunTrace, fh=None) -> str:
    """Serialize the trace rows; returns the CSV text (also written to ``fh``)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace.records:
        w.writerow([r.k, repr(float(r.grad_norm)), repr(float(r.stepsize)), int(r.updated),
                    repr(float(r.scalars_sent_cum)), repr(float(r.bits_sent_cum)),
                    "" if r.dist_to_opt is None else repr(float(r.dist_to_opt))])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_trace_csv(text: str) -> list:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        out.append({
            "k": int(row["k"]),
            "grad_norm": float(row["grad_norm"]),
            "stepsize": float(row["stepsize"]),
            "updated": bool(int(row["updated"])),
            "scalars_sent_per_node_cum": float(row["scalars_sent_per_node_cum"]),
            "bits_sent_per_node_cum": float(row["bits_sent_per_node_cum"]),
            "dist_to_opt": None if row["dist_to_opt"] == "" else float(row["dist_to_opt"]),
        })
    return out


def _dist(x, x_star):
    return None if x_star is None else float(np.linalg.norm(x - x_star))


def _same(arrays) -> bool:
    first = np.asarray(arrays[0])
    return all(np.asarray(a).tobytes() == first.tobytes() for a in arrays[1:])


# ---------------------------------------------------------------------------
# centralized engines

def polyak_newton_run(oracle, x0, constants, stop: StopRule | None = None, x_star=None) -> RunTrace:
    """
    Centralized damped Newton with Polyak's adaptive stepsize.

    This is the reference the distributed DAN iterates must reproduce
    exactly, so its arithmetic mirrors :func:`dan_iteration`.
    """
    stop = stop or StopRule()
    x = np.array(x0, dtype=float)
    trace = RunTrace(iterates=[x.copy()])
    for k in range(stop.cap):
        g = oracle.gradient(x)
        H = oracle.hessian(x)
        gn = float(np.linalg.norm(g))
        if k == 0:
            trace.threshold = stop.threshold(gn)
        if gn <= trace.threshold:
            trace.records.append(IterationRecord(k, gn, 0.0, False, dist_to_opt=_dist(x, x_star)))
            trace.converged = True
            break
        alpha = polyak_stepsize(gn, constants.mu, constants.lipschitz_hessian)
        try:
            d = spd_solve(H, g)
        except SPDError as exc:
            raise EngineError(str(exc), k) from exc
        trace.records.append(IterationRecord(k, gn, alpha, True, dist_to_opt=_dist(x, x_star)))
        x = x - alpha * d
        trace.iterates.append(x.copy())
    trace.x_final = x
    return trace


def gd_baseline_run(oracle, x0, mu: float, smoothness: float, stop: StopRule | None = None,
                    x_star=None) -> RunTrace:
    """Gradient descent with the fixed step ``2 / (mu + smoothness)``."""
    stop = stop or StopRule()
    step = 2.0 / (mu + smoothness)
    x = np.array(x0, dtype=float)
    trace = RunTrace(iterates=[x.copy()])
    for k in range(stop.cap):
        g = oracle.gradient(x)
        gn = float(np.linalg.norm(g))
        if k == 0:
            trace.threshold = stop.threshold(gn)
        if gn <= trace.threshold:
            trace.records.append(IterationRecord(k, gn, 0.0, False, dist_to_opt=_dist(x, x_star), phase="gd"))
            trace.converged = True
            break
        trace.records.append(IterationRecord(k, gn, step, True, dist_to_opt=_dist(x, x_star), phase="gd"))
        x = x - step * g
        trace.iterates.append(x.copy())
    trace.x_final = x
    return trace


# ---------------------------------------------------------------------------
# distributed engines

@dataclass
class DanNodeState:
    x: np.ndarray
    g: np.ndarray | None = None
    H: np.ndarray | None = None


@dataclass
class DanLaNodeState:
    x: np.ndarray
    H_local: np.ndarray
    H_hat: np.ndarray
    g_hat: np.ndarray | None = None
    r_hat: float = 0.0
    alpha: float = 0.0
    smw_base: tuple | None = None
    smw_pending: list = field(default_factory=list)


def _flood(topology, payloads, ledger):
    result = run_dsf(topology, payloads)
    if ledger is not None:
        ledger.record_dsf(result)
    return result


def _received(state) -> list:
    """Messages of one node's completed information set, ascending origin."""
    return [state.info[u] for u in sorted(state.info)]


def _check_identical(states, attrs, k):
    for attr in attrs:
        vals = [getattr(s, attr) for s in states]
        if not _same(vals):
            raise ConsensusViolation(f"node states differ in {attr!r}", k)


def dan_iteration(states, topology, oracles, constants, ledger=None, k=None, threshold: float = -1.0):
    """
    One DAN iteration: local evaluation, flooding of ``(g_i, H_i)`` and the
    common adaptive Newton step.

    If the aggregated gradient norm is ``<= threshold`` the nodes keep their
    iterates.  Returns ``(new_states, info)``; ``info`` carries the common
    gradient norm, stepsize and the flooding result.
    """
    _check_identical(states, ["x"], k)
    p = states[0].x.size
    scalars = dan_message_scalars(p)
    payloads = []
    for i, (st, orc) in enumerate(zip(states, oracles)):
        g = orc.gradient(st.x)
        H = orc.hessian(st.x)
        payloads.append(TaggedMessage(i, (g, upper_triangle(H)), scalars))
    flood = _flood(topology, payloads, ledger)

    new_states, norms, alphas = [], [], []
    for st, node in zip(states, flood.states):
        msgs = _received(node)
        g_bar = ordered_sum(m.payload[0] for m in msgs)
        H_bar = ordered_sum(from_upper_triangle(m.payload[1], p) for m in msgs)
        gn = float(np.linalg.norm(g_bar))
        alpha = polyak_stepsize(gn, constants.mu, constants.lipschitz_hessian)
        x = st.x
        if gn > threshold:
            try:
                x = st.x - alpha * spd_solve(H_bar, g_bar)
            except SPDError as exc:
                raise EngineError(str(exc), k) from exc
        norms.append(gn)
        alphas.append(alpha)
        new_states.append(DanNodeState(x, g_bar, H_bar))
    if not (_same(norms) and _same(alphas)):
        raise ConsensusViolation("aggregated gradients differ across nodes", k)
    _check_identical(new_states, ["x", "g", "H"], k)
    return new_states, {"grad_norm": norms[0], "alpha": alphas[0], "flood": flood}


def _single_node_topology():
    return Graph(1, False, frozenset())


def _warm_start(xs, topology, oracles, constants, steps, ledger, trace, x_star):
    """Gradient descent on the flooded gradient sum, identical at every node."""
    p = xs[0].size
    step = 2.0 / (constants.mu + constants.hessian_upper)
    for _ in range(steps):
        k = len(trace.records)
        payloads = [TaggedMessage(i, orc.gradient(x), p) for i, (x, orc) in enumerate(zip(xs, oracles))]
        flood = _flood(topology, payloads, ledger)
        g_bars = [ordered_sum(m.payload for m in _received(node)) for node in flood.states]
        if not _same(g_bars):
            raise ConsensusViolation("aggregated gradients differ across nodes", k)
        gn = float(np.linalg.norm(g_bars[0]))
        trace.records.append(_record(k, gn, step, True, ledger, xs[0], x_star, phase="warm"))
        xs = [x - step * g for x, g in zip(xs, g_bars)]
        if not _same(xs):
            raise ConsensusViolation("iterates differ across nodes", k)
        trace.iterates.append(xs[0].copy())
    return xs


def _record(k, gn, alpha, updated, ledger, x, x_star, **extra):
    rec = IterationRecord(k, gn, alpha, updated, dist_to_opt=_dist(x, x_star), **extra)
    if ledger is not None:
        rec.scalars_sent = float(np.mean(ledger.iterations[-1]["scalars"])) if ledger.iterations else 0.0
        rec.scalars_sent_cum = ledger.mean_scalars_per_node()
        rec.bits_sent_cum = ledger.mean_payload_bits_per_node()
    return rec


def _start(oracles, topology, x0, stop, warm_start, constants, ledger, x_star):
    n = len(oracles)
    if topology is None:
        if n != 1:
            raise ValueError("a topology is required for more than one node")
        topology = _single_node_topology()
    x0 = np.array(x0, dtype=float)
    trace = RunTrace(iterates=[x0.copy()])
    g0 = float(np.linalg.norm(ordered_sum(o.gradient(x0) for o in oracles)))
    trace.threshold = stop.threshold(g0)
    xs = [x0.copy() for _ in range(n)]
    if warm_start:
        xs = _warm_start(xs, topology, oracles, constants, warm_start, ledger, trace, x_star)
    return topology, trace, xs


def run_dan(oracles, topology, x0, constants, stop: StopRule | None = None, x_star=None, ledger=None,
            warm_start: int = 0) -> RunTrace:
    """
    Distributed Adaptive Newton over ``topology``.

    ``topology`` is a tree / :class:`SpanningTree` (undirected flooding) or
    a strongly connected digraph.  Every iteration floods ``n`` messages of
    ``p(p+1)/2 + p`` scalars.
    """
    stop = stop or StopRule()
    topology, trace, xs = _start(oracles, topology, x0, stop, warm_start, constants, ledger, x_star)
    states = [DanNodeState(x) for x in xs]
    while len(trace.records) < stop.cap:
        k = len(trace.records)
        x = states[0].x
        states, info = dan_iteration(states, topology, oracles, constants, ledger, k, trace.threshold)
        gn = info["grad_norm"]
        if gn <= trace.threshold:
            trace.records.append(_record(k, gn, 0.0, False, ledger, x, x_star))
            trace.converged = True
            break
        trace.records.append(_record(k, gn, info["alpha"], True, ledger, x, x_star))
        trace.iterates.append(states[0].x.copy())
    trace.x_final = states[0].x
    trace.node_states = states
    return trace


def danla_iteration(states, topology, oracles, constants, ledger=None, k=None, use_smw: bool = False,
                    tol: float = DEFAULT_TOL, diagnostics: bool = False):
    """
    One DAN-LA iteration for all nodes.

    Each node compresses its Hessian innovation to ``(s, h, r)``, floods
    ``(r, s, g, h)``, rebuilds the common Hessian estimate and error bound,
    and steps only if the bound passes the gate.

    Returns ``(new_states, info)`` with ``info`` holding the common gradient
    norm, error bound, stepsize and (with ``diagnostics``) the exact spectral
    error of the Hessian estimate.
    """
    _check_identical(states, ["x", "H_hat"], k)
    p = states[0].x.size
    n = len(states)
    mu, L, M, c = constants.mu, constants.lipschitz_hessian, constants.hessian_upper, constants.c
    scalars = danla_message_scalars(p)
    payloads, local_hessians, local_estimates = [], [], []
    for i, (st, orc) in enumerate(zip(states, oracles)):
        hess = orc.hessian(st.x)
        local_hessians.append(hess)
        try:
            inn = rank1_truncate(symmetrize(hess - st.H_local), tol)
        except ArithmeticError as exc:
            raise EngineError(str(exc), k) from exc
        local_estimates.append(st.H_local + inn.s * np.outer(inn.h, inn.h))
        g = orc.gradient(st.x)
        payloads.append(TaggedMessage(i, (inn.r, inn.s, g, inn.h), scalars))
    flood = _flood(topology, payloads, ledger)

    new_states = []
    for st, H_local, node in zip(states, local_estimates, flood.states):
        msgs = _received(node)
        g_hat = ordered_sum(m.payload[2] for m in msgs)
        updates = [(m.payload[1], m.payload[3]) for m in msgs]
        H_hat = st.H_hat
        for s, h in updates:
            H_hat = H_hat + s * np.outer(h, h)
        r_hat = ordered_sum(m.payload[0] for m in msgs)
        gn = float(np.linalg.norm(g_hat))
        alpha = danla_stepsize(gn, r_hat, mu, L, M, c)
        new = DanLaNodeState(st.x, H_local, H_hat, g_hat, r_hat, alpha, st.smw_base, list(st.smw_pending))
        if new.smw_base is not None:
            new.smw_pending.extend(updates)
            if len(new.smw_pending) > p:
                new.smw_base, new.smw_pending = None, []
        new_states.append(new)
    _check_identical(new_states, ["H_hat", "g_hat", "r_hat", "alpha"], k)
    info = {"grad_norm": float(np.linalg.norm(new_states[0].g_hat)), "r_hat": new_states[0].r_hat,
            "alpha": new_states[0].alpha, "flood": flood, "local_hessians": local_hessians}
    if diagnostics:
        H_true = ordered_sum(local_hessians)
        info["hessian_error"] = float(np.max(np.abs(np.linalg.eigvalsh(symmetrize(new_states[0].H_hat - H_true)))))
    info["smw"] = use_smw and n < p
    return new_states, info


def _danla_direction(st: DanLaNodeState, smw: bool, k, tol):
    try:
        if smw and st.smw_base is not None:
            try:
                return smw_solve(st.smw_base, st.smw_pending, st.g_hat, tol)
            except SMWBreakdown:
                pass
        factor = cholesky(st.H_hat)
        if smw:
            st.smw_base, st.smw_pending = factor, []
        return spd_solve(st.H_hat, st.g_hat, factor=factor)
    except SPDError as exc:
        raise EngineError(f"Hessian estimate not positive definite despite the error gate: {exc}", k) from exc


def run_danla(oracles, topology, x0, constants, stop: StopRule | None = None, x_star=None, ledger=None,
              warm_start: int = 0, use_smw: bool = False, tol: float = DEFAULT_TOL,
              diagnostics: bool = False) -> RunTrace:
    """
    DAN with rank-1 compressed Hessian innovations.

    Records carry ``updated=False`` for gated iterations (``alpha = 0``);
    with ``diagnostics`` each record also holds the exact spectral error of
    the common Hessian estimate.
    """
    stop = stop or StopRule()
    topology, trace, xs = _start(oracles, topology, x0, stop, warm_start, constants, ledger, x_star)
    p = xs[0].size
    states = [DanLaNodeState(x, np.zeros((p, p)), np.zeros((p, p))) for x in xs]
    while len(trace.records) < stop.cap:
        k = len(trace.records)
        states, info = danla_iteration(states, topology, oracles, constants, ledger, k, use_smw, tol, diagnostics)
        gn, alpha = info["grad_norm"], info["alpha"]
        x = states[0].x
        extra = {"r_hat": info["r_hat"], "hessian_error": info.get("hessian_error")}
        if gn <= trace.threshold:
            trace.records.append(_record(k, gn, 0.0, False, ledger, x, x_star, **extra))
            trace.converged = True
            break
        trace.records.append(_record(k, gn, alpha, alpha > 0, ledger, x, x_star, **extra))
        if alpha > 0:
            for st in states:
                st.x = st.x - alpha * _danla_direction(st, info["smw"], k, tol)
            _check_identical(states, ["x"], k)
        trace.iterates.append(states[0].x.copy())
    trace.x_final = states[0].x
    trace.node_states = states
    return trace
