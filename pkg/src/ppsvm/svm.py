"""Soft-margin SVM trained by SMO over a cached Gram matrix.

The solver maximises the dual

    sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. sum_i a_i y_i = 0,  0 <= a_i <= C

choosing at every step the maximal KKT-violating pair (lowest index on
ties). It only ever touches kernel values, so training on protected vectors
is the same optimisation problem as training on the raw vectors whenever the
kernel is invariant under the protection.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .errors import DimensionMismatch, NonConvergence, NumericalError, SingleClassData
from .kernels import KernelSpec, cross_gram, gram


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-3
    max_passes: Optional[int] = None  # None -> 10 * n
    trace: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")

    def budget(self, n: int) -> int:
        """Pair-update budget: ``max_passes`` sweeps of ``n`` updates each."""
        passes = self.max_passes if self.max_passes is not None else 10 * n
        return passes * n

    def to_dict(self) -> dict:
        return {"tol": self.tol, "max_passes": self.max_passes, "trace": self.trace}

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        return cls(tol=d["tol"], max_passes=d.get("max_passes"), trace=bool(d.get("trace", False)))


@dataclass(frozen=True, eq=False)
class TrainingSet:
    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        y = np.asarray(self.labels).ravel()
        if X.ndim != 2:
            raise DimensionMismatch("samples must be a 2-D array of row vectors")
        if y.size != X.shape[0]:
            raise DimensionMismatch(f"{y.size} labels for {X.shape[0]} samples")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be +1 or -1")
        if not (np.any(y == 1) and np.any(y == -1)):
            raise SingleClassData("training set needs both +1 and -1 labels")
        object.__setattr__(self, "samples", np.ascontiguousarray(X))
        object.__setattr__(self, "labels", y.astype(np.int8))

    @property
    def n(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class DecisionScore:
    score: float
    label: int


def sign(u: float) -> int:
    """+1 for ``u > 0``, otherwise -1."""
    return 1 if u > 0 else -1


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: KernelSpec
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    C: float
    dual_objective: float
    config: SolverConfig = field(default_factory=SolverConfig)
    support_indices: Optional[np.ndarray] = None
    n_iter: int = 0
    trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"query dim {X.shape[1]} != model dim {self.dim}")
        return cross_gram(self.kernel, X, self.support_vectors) @ self.dual_coefs + self.bias


def dual_objective(alphas, labels, gram_matrix) -> float:
    """Value of the dual maximand for given multipliers."""
    a = np.asarray(alphas, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    K = np.asarray(gram_matrix, dtype=np.float64)
    if not (a.size == y.size == K.shape[0] == K.shape[1]):
        raise DimensionMismatch("alphas, labels and gram matrix sizes disagree")
    v = a * y
    return float(a.sum() - 0.5 * (v @ K @ v))


def _bias(alpha, y, K, C) -> float:
    s = K @ (alpha * y)
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        return float(np.mean(y[free] - s[free]))
    # No free multipliers: take the midpoint of the interval of biases that
    # satisfies every bound-multiplier KKT condition.
    at_zero = alpha == 0
    at_c = alpha == C
    lower = np.concatenate([(1 - s)[at_zero & (y > 0)], (-1 - s)[at_c & (y < 0)]])
    upper = np.concatenate([(-1 - s)[at_zero & (y < 0)], (1 - s)[at_c & (y > 0)]])
    if lower.size and upper.size:
        return float((lower.max() + upper.min()) / 2)
    return float(lower.max() if lower.size else upper.min())


def kkt_violation(alpha, labels, gram_matrix, bias, C) -> float:
    """Largest KKT violation, measured on ``y_i f(x_i)`` against the margin 1."""
    a = np.asarray(alpha, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    margin = y * (np.asarray(gram_matrix) @ (a * y) + bias)
    viol = np.zeros_like(margin)
    zero, full = a == 0, a == C
    free = ~zero & ~full
    viol[zero] = np.maximum(0.0, 1 - margin[zero])
    viol[full] = np.maximum(0.0, margin[full] - 1)
    viol[free] = np.abs(margin[free] - 1)
    return float(viol.max()) if viol.size else 0.0


def train(data: TrainingSet, kernel: KernelSpec, C: float,
          config: Optional[SolverConfig] = None, gram_matrix=None) -> SvmModel:
    """Fit a binary soft-margin SVM; raises ``NonConvergence`` rather than
    returning a partial model.

    ``gram_matrix`` lets callers that train several models on one sample
    pool (one-vs-rest) pass the kernel matrix once.
    """
    config = config or SolverConfig()
    if not C > 0:
        raise ValueError("C must be positive")
    C = float(C)
    y = data.labels.astype(np.float64)
    if gram_matrix is None:
        K = gram(kernel, data.samples)
    else:
        K = np.asarray(gram_matrix, dtype=np.float64)
        if K.shape != (data.n, data.n):
            raise DimensionMismatch(f"gram matrix shape {K.shape} does not match {data.n} samples")
    Q = np.ascontiguousarray(np.outer(y, y) * K)
    alpha, _, n_iter, converged, trace = _backend.smo_solve(
        Q, y, C, float(config.tol), config.budget(data.n), bool(config.trace))
    if not converged:
        raise NonConvergence(
            f"KKT violations above tol={config.tol} after {n_iter} pair updates")
    if trace is not None and trace.size > 1:
        drops = np.diff(trace)
        floor = -1e-12 * max(1.0, float(np.max(np.abs(trace))))
        if drops.min() < floor:
            raise NumericalError(f"dual objective decreased by {-drops.min():.3e}")
    b = _bias(alpha, y, K, C)
    sv = np.flatnonzero(alpha > 0)
    return SvmModel(
        kernel=kernel,
        support_vectors=data.samples[sv].copy(),
        dual_coefs=alpha[sv] * y[sv],
        bias=b,
        C=C,
        dual_objective=dual_objective(alpha, y, K),
        config=config,
        support_indices=sv,
        n_iter=int(n_iter),
        trace=trace,
    )


def predict(model: SvmModel, query) -> DecisionScore:
    q = np.asarray(query, dtype=np.float64).ravel()
    score = float(model.decision_function(q[None, :])[0])
    return DecisionScore(score, sign(score))


def full_alphas(model: SvmModel, n: int) -> np.ndarray:
    """Expand stored multipliers back to a length-``n`` vector over the training set."""
    if model.support_indices is None:
        raise ValueError("model does not record support indices")
    a = np.zeros(n)
    a[model.support_indices] = np.abs(model.dual_coefs)
    return a
