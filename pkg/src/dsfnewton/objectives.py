"""
Objective oracles and data handling.

Each node owns an oracle for its local function ``f_i``; the global
objective is ``f = sum_i f_i``.  Sums over nodes are always accumulated in
ascending node order (:func:`ordered_sum`) so that a centralized evaluation
and a per-node aggregation follow the same floating-point path.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .linalg import symmetrize

# max |sigma''(z)| = 1 / (6 sqrt 3), attained at sigma(z) = 1/2 +- 1/(2 sqrt 3)
SIGMOID_CURVATURE_BOUND = 1.0 / (6.0 * math.sqrt(3.0))


class DatasetError(ValueError):
    pass


def ordered_sum(items):
    """Left-to-right sum; the single accumulation order used everywhere."""
    items = iter(items)
    acc = next(items)
    for it in items:
        acc = acc + it
    return acc


@dataclass(frozen=True)
class ProblemConstants:
    """
    Constants steering the stepsizes.

    ``mu``: strong convexity modulus, ``lipschitz_hessian``: Lipschitz
    constant of the Hessian, ``hessian_upper``: upper bound on the Hessian,
    ``c``: the DAN-LA balance parameter.
    """

    mu: float
    lipschitz_hessian: float
    hessian_upper: float
    c: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lipschitz_hessian > 0:
            raise ValueError(f"lipschitz_hessian must be positive, got {self.lipschitz_hessian}")
        if self.hessian_upper < self.mu:
            raise ValueError(f"hessian_upper ({self.hessian_upper}) must be >= mu ({self.mu})")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.c == 0 and not self.hessian_upper > self.mu:
            raise ValueError("c = 0 is only allowed when hessian_upper > mu")

    def with_c(self, c: float) -> "ProblemConstants":
        return ProblemConstants(self.mu, self.lipschitz_hessian, self.hessian_upper, c)


class ObjectiveOracle:
    """Value / gradient / Hessian evaluator of a twice differentiable function."""

    p: int

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, x):
        return self.value(x), self.gradient(x), self.hessian(x)


class QuadraticOracle(ObjectiveOracle):
    """``f(x) = 1/2 (x - b)^T A (x - b)``."""

    def __init__(self, A, b):
        self.A = symmetrize(A)
        self.b = np.asarray(b, dtype=float)
        self.p = self.b.size

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.b
        return 0.5 * float(d @ self.A @ d)

    def gradient(self, x):
        return self.A @ (np.asarray(x, dtype=float) - self.b)

    def hessian(self, x):
        return self.A.copy()


class SumOracle(ObjectiveOracle):
    """``f = sum_i f_i`` accumulated in list order."""

    def __init__(self, oracles):
        self.oracles = list(oracles)
        if not self.oracles:
            raise ValueError("SumOracle needs at least one term")
        self.p = self.oracles[0].p

    def value(self, x):
        return ordered_sum(o.value(x) for o in self.oracles)

    def gradient(self, x):
        return ordered_sum(o.gradient(x) for o in self.oracles)

    def hessian(self, x):
        return ordered_sum(o.hessian(x) for o in self.oracles)


# ---------------------------------------------------------------------------
# logistic regression

@dataclass
class LogisticProblem:
    """Features ``m x p`` in ``[-1, 1]``, binary labels, ridge coefficient ``rho``."""

    features: np.ndarray
    labels: np.ndarray
    rho: float

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise DatasetError("features must be m x p and labels length m")
        if not self.rho > 0:
            raise DatasetError(f"rho must be positive, got {self.rho}")
        if np.any(np.abs(self.features) > 1.0):
            raise DatasetError("feature entries must lie in [-1, 1]")
        bad = sorted(float(v) for v in set(np.unique(self.labels)) - {0.0, 1.0})
        if bad:
            raise DatasetError(f"labels must be 0/1, found {bad}")

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


def logistic_eval(prob: LogisticProblem, subset, x, ridge: float | None = None):
    """
    Logistic loss restricted to ``subset`` plus a share of the ridge term.

    The ridge share defaults to ``rho * |subset| / m`` so that summing over a
    partition reproduces the global loss exactly.

    Returns
    -------
    value, gradient, hessian
    """
    idx = np.asarray(subset, dtype=int)
    if ridge is None:
        ridge = prob.rho * idx.size / prob.m
    x = np.asarray(x, dtype=float)
    X = prob.features[idx]
    y = prob.labels[idx]
    z = X @ x
    sig = expit(z)
    # -[y ln s + (1-y) ln(1-s)] = log(1 + e^z) - y z
    value = float(np.sum(np.logaddexp(0.0, z) - y * z)) + 0.5 * ridge * float(x @ x)
    grad = X.T @ (sig - y) + ridge * x
    w = sig * (1.0 - sig)
    hess = symmetrize(X.T @ (X * w[:, None]) + ridge * np.eye(prob.p))
    return value, grad, hess


class LogisticOracle(ObjectiveOracle):
    def __init__(self, prob: LogisticProblem, subset, ridge: float | None = None):
        self.prob = prob
        self.subset = np.asarray(subset, dtype=int)
        self.ridge = prob.rho * self.subset.size / prob.m if ridge is None else float(ridge)
        self.p = prob.p

    def evaluate(self, x):
        return logistic_eval(self.prob, self.subset, x, self.ridge)

    def value(self, x):
        return self.evaluate(x)[0]

    def gradient(self, x):
        return self.evaluate(x)[1]

    def hessian(self, x):
        return self.evaluate(x)[2]


def logistic_node_oracles(prob: LogisticProblem, partition, ridge_split: str = "proportional") -> list:
    """One oracle per node.  ``ridge_split``: ``"proportional"`` or ``"equal"``."""
    n = len(partition)
    if ridge_split == "proportional":
        return [LogisticOracle(prob, part) for part in partition]
    if ridge_split == "equal":
        return [LogisticOracle(prob, part, prob.rho / n) for part in partition]
    raise ValueError(f"unknown ridge split {ridge_split!r}")


def certified_logistic_constants(prob: LogisticProblem, c: float = 1.0) -> ProblemConstants:
    """
    Constants that provably hold for the full logistic loss.

    ``mu = rho``; ``M = rho + lambda_max(X^T X) / 4``;
    ``L = max|sigma''| * sum_i ||x_i||^3``.
    """
    X = prob.features
    gram_top = float(np.linalg.eigvalsh(symmetrize(X.T @ X))[-1])
    upper = prob.rho + gram_top / 4.0
    lip = SIGMOID_CURVATURE_BOUND * float(np.sum(np.linalg.norm(X, axis=1) ** 3))
    return ProblemConstants(prob.rho, max(lip, np.finfo(float).tiny), upper, c)


@dataclass(frozen=True)
class GuidanceConstants:
    """Sample-count-scaled constants used to pick stepsizes (not certified bounds)."""

    mu: float
    lipschitz_hessian: float
    hessian_upper: float
    rho: float

    def constants(self, c: float = 1.0) -> ProblemConstants:
        return ProblemConstants(self.mu, self.lipschitz_hessian, self.hessian_upper, c)


def make_covertype_style_config(m: int) -> GuidanceConstants:
    """``mu = 0.02 m``, ``L = m``, ``M = 0.04 m``, ``rho = 0.01 m``."""
    return GuidanceConstants(0.02 * m, float(m), 0.04 * m, 0.01 * m)


def synth_logistic(m: int, p: int, seed, rho: float | None = None, feature_scale: float = 0.5,
                   weight_scale: float = 1.0) -> LogisticProblem:
    """
    Synthetic logistic-regression data.

    Features are uniform on ``[-feature_scale, feature_scale]``; labels are
    Bernoulli draws from a logistic model with Gaussian true weights.
    ``rho`` defaults to ``0.01 m``.
    """
    if not 0 < feature_scale <= 1:
        raise ValueError("feature_scale must be in (0, 1]")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-feature_scale, feature_scale, size=(m, p))
    w = weight_scale * rng.standard_normal(p) / feature_scale
    y = (rng.random(m) < expit(X @ w)).astype(float)
    return LogisticProblem(X, y, 0.01 * m if rho is None else rho)


# ---------------------------------------------------------------------------
# synthetic quadratics

@dataclass
class QuadraticProblem:
    oracles: list
    x_star: np.ndarray
    hessian: np.ndarray
    mu: float
    hessian_upper: float

    @property
    def p(self) -> int:
        return self.x_star.size

    def global_oracle(self) -> SumOracle:
        return SumOracle(self.oracles)


def _inv_sqrt(S):
    lam, V = np.linalg.eigh(S)
    return symmetrize((V / np.sqrt(lam)) @ V.T)


def synth_quadratic(n_nodes: int, p: int, mu: float, M: float, seed, local_rank: int | None = None,
                    offset_scale: float = 1.0) -> QuadraticProblem:
    """
    Random strongly convex quadratic split over ``n_nodes``.

    The global Hessian has spectrum inside ``[mu, M]`` (both ends attained
    up to a relative ``1e-8`` margin).  Local Hessians are congruent to
    random positive semidefinite matrices of rank ``local_rank``
    (full rank by default), so each ``A_i`` is PSD and they sum to the
    global Hessian.
    """
    if not 0 < mu <= M:
        raise ValueError("need 0 < mu <= M")
    rng = np.random.default_rng(seed)
    lo, hi = mu * (1 + 1e-8), M * (1 - 1e-8)
    if hi < lo:
        lo = hi = mu
    spectrum = np.sort(rng.uniform(lo, hi, size=p))
    spectrum[0] = lo
    if p > 1:
        spectrum[-1] = hi
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    H = symmetrize((Q * spectrum) @ Q.T)

    rank = p if local_rank is None else int(local_rank)
    if rank * n_nodes < p:
        raise ValueError(f"local_rank * n_nodes must be >= p to keep the sum positive definite")
    Bs = []
    for _ in range(n_nodes):
        G = rng.standard_normal((p, rank))
        B = G @ G.T
        if local_rank is None:
            B = B + 0.1 * np.eye(p)
        Bs.append(symmetrize(B))
    S = ordered_sum(Bs)
    T = _inv_sqrt(S)
    Hh = symmetrize(_sqrtm(H))
    As = [symmetrize(Hh @ T @ B @ T @ Hh) for B in Bs]
    bs = [offset_scale * rng.standard_normal(p) for _ in range(n_nodes)]
    oracles = [QuadraticOracle(A, b) for A, b in zip(As, bs)]
    A_tot = ordered_sum([o.A for o in oracles])
    rhs = ordered_sum([o.A @ o.b for o in oracles])
    x_star = np.linalg.solve(A_tot, rhs)
    return QuadraticProblem(oracles, x_star, A_tot, mu, M)


def _sqrtm(S):
    lam, V = np.linalg.eigh(S)
    return (V * np.sqrt(np.clip(lam, 0.0, None))) @ V.T


# ---------------------------------------------------------------------------
# partitions and CSV input

def partition_dataset(m: int, n_nodes: int, seed) -> list:
    """
    Seeded shuffle of ``range(m)`` cut into ``n_nodes`` near-equal blocks.

    Block sizes differ by at most one; larger blocks come first.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if m < n_nodes:
        raise ValueError(f"cannot partition {m} samples over {n_nodes} nodes")
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(block) for block in np.array_split(perm, n_nodes)]


def partition_to_json(partition) -> str:
    return json.dumps({str(i): [int(v) for v in part] for i, part in enumerate(partition)})


def partition_from_json(text: str) -> list:
    raw = json.loads(text)
    return [np.asarray(raw[str(i)], dtype=int) for i in range(len(raw))]


def load_csv_dataset(path, label_column=-1, normalize: bool = True, header: bool = False,
                     rho: float | None = None) -> LogisticProblem:
    """
    Read a numeric CSV into a :class:`LogisticProblem`.

    ``label_column`` is an index (negative allowed) or, with ``header``, a
    column name.  With ``normalize`` each feature is mapped affinely onto
    ``[-1, 1]``; constant columns become 0.  Rows and columns in error
    messages are 1-based file coordinates.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = None
    numbered = list(enumerate(rows, start=1))
    if header and numbered:
        names = numbered.pop(0)[1]
    numbered = [(ln, r) for ln, r in numbered if any(cell.strip() for cell in r)]
    if not numbered:
        raise DatasetError(f"{path}: no data rows")
    width = len(numbered[0][1])
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise DatasetError(f"{path}: label column {label_column!r} not in header")
        label_column = names.index(label_column)
    label_column = label_column % width

    data = np.empty((len(numbered), width))
    for r, (line, row) in enumerate(numbered):
        if len(row) != width:
            raise DatasetError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: cannot parse {cell!r} at row {line}, column {c + 1}") from None
    labels = data[:, label_column]
    bad = sorted(float(v) for v in set(np.unique(labels)) - {0.0, 1.0})
    if bad:
        raise DatasetError(f"{path}: labels must be 0/1, offending values {bad}")
    X = np.delete(data, label_column, axis=1)
    if normalize:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        X = np.where(span > 0, 2.0 * (X - lo) / safe - 1.0, 0.0)
        X = np.clip(X, -1.0, 1.0)
    m = X.shape[0]
    return LogisticProblem(X, labels, 0.01 * m if rho is None else rho)
