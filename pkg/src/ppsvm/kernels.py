"""Linear, RBF and polynomial kernels and their Gram matrices.

Kernels fall into two classes that survive orthonormal protection:

* class 1 depends only on ``||a - b||`` (RBF);
* class 2 depends only on ``<a, b>`` (linear, polynomial).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .errors import DimensionMismatch

#: Dimension at and above which squared distances use compensated summation.
COMPENSATED_MIN_DIM = 1024

_BLOCK_ELEMS = 1 << 22


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"
    POLYNOMIAL = "polynomial"


class KernelClass(enum.Enum):
    CLASS1 = 1  # distance-based
    CLASS2 = 2  # inner-product-based


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind
    gamma: Optional[float] = None
    degree: Optional[int] = None

    def __post_init__(self):
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is KernelKind.RBF:
            if self.gamma is None or not math.isfinite(self.gamma) or self.gamma <= 0:
                raise ValueError("rbf kernel needs gamma > 0")
            object.__setattr__(self, "gamma", float(self.gamma))
        elif self.gamma is not None:
            raise ValueError(f"gamma is not a parameter of the {kind.value} kernel")
        if kind is KernelKind.POLYNOMIAL:
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise ValueError("polynomial kernel needs an integer degree >= 1")
            object.__setattr__(self, "degree", int(self.degree))
        elif self.degree is not None:
            raise ValueError(f"degree is not a parameter of the {kind.value} kernel")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(KernelKind.LINEAR)

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls(KernelKind.RBF, gamma=gamma)

    @classmethod
    def polynomial(cls, degree: int) -> "KernelSpec":
        return cls(KernelKind.POLYNOMIAL, degree=degree)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.degree is not None:
            d["degree"] = self.degree
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], gamma=d.get("gamma"), degree=d.get("degree"))


def kernel_class(k: KernelSpec) -> KernelClass:
    return KernelClass.CLASS1 if k.kind is KernelKind.RBF else KernelClass.CLASS2


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError("expected a vector or a 2-D array of row vectors")
    return np.ascontiguousarray(X)


def sq_dists(A, B) -> np.ndarray:
    """Pairwise squared distances between rows of ``A`` and rows of ``B``.

    Differences are formed explicitly (no ``|a|^2 + |b|^2 - 2ab`` expansion).
    For ``d >= COMPENSATED_MIN_DIM`` each sum is Neumaier-compensated.
    """
    A, B = _as_rows(A), _as_rows(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dims differ: {A.shape[1]} vs {B.shape[1]}")
    d = A.shape[1]
    if d >= COMPENSATED_MIN_DIM:
        return _backend.sq_dists_compensated(A, B)
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, B.shape[0] * d))
    for s in range(0, A.shape[0], step):
        diff = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _from_inner(k: KernelSpec, ip: np.ndarray) -> np.ndarray:
    if k.kind is KernelKind.LINEAR:
        return ip
    return (1.0 + ip) ** k.degree


def cross_gram(k: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(A[i], B[j])``."""
    A, B = _as_rows(A), _as_rows(B)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"dims differ: {A.shape[1]} vs {B.shape[1]}")
    if k.kind is KernelKind.RBF:
        return np.exp(-k.gamma * sq_dists(A, B))
    return _from_inner(k, A @ B.T)


def gram(k: KernelSpec, rows) -> np.ndarray:
    """Symmetric Gram matrix over ``rows``; the lower triangle mirrors the upper."""
    X = _as_rows(rows)
    if X.shape[0] < 1:
        raise ValueError("gram needs at least one row")
    K = cross_gram(k, X, X)
    iu = np.triu_indices(K.shape[0], 1)
    K.T[iu] = K[iu]
    return K


def kernel_eval(k: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise DimensionMismatch(f"dims differ: {a.size} vs {b.size}")
    return float(cross_gram(k, a, b)[0, 0])
