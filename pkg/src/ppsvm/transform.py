"""Key-seeded random orthonormal transforms.

A :class:`SecretKey` deterministically regenerates an orthonormal matrix
``Q``; protecting a feature vector ``f`` means computing ``Q @ f``. Because
``Q`` is orthonormal, Euclidean distances, inner products and cosine
similarities between vectors protected with the same key are unchanged.

Randomness comes from a single pinned source: numpy's Philox4x64-10
counter-based bit generator keyed by ``(seed, scheme)``. Permutation indices
are drawn from its raw 64-bit output with Lemire's unbiased bounded-integer
method, so they do not depend on numpy's higher-level sampling code.
"""
from __future__ import annotations

import enum
import functools
import hashlib
import secrets
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _backend
from .errors import DegenerateMatrix, DimensionMismatch

PRNG_NAME = "philox4x64-10/lemire/v1"

_MASK64 = (1 << 64) - 1
_RANK_TOL = 1e-8
_MAX_REDRAWS = 3


class Scheme(str, enum.Enum):
    PERMUTATION = "permutation"
    SIGNED_PERMUTATION = "signed-permutation"
    GRAM_SCHMIDT = "gram-schmidt"

    @property
    def code(self) -> int:
        return _SCHEME_CODES[self]

    @property
    def is_permutation(self) -> bool:
        return self is not Scheme.GRAM_SCHMIDT


_SCHEME_CODES = {
    Scheme.PERMUTATION: 1,
    Scheme.SIGNED_PERMUTATION: 2,
    Scheme.GRAM_SCHMIDT: 3,
}


@dataclass(frozen=True)
class SecretKey:
    """Seed plus scheme; everything needed to regenerate a transform."""

    seed: int
    scheme: Scheme
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise TypeError("seed must be an integer")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))
        if isinstance(self.dim, bool) or int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @classmethod
    def random(cls, scheme: Scheme | str, dim: int) -> "SecretKey":
        """New key with a seed drawn from OS entropy."""
        return cls(secrets.randbits(64), Scheme(scheme), dim)

    @property
    def fingerprint(self) -> str:
        return key_fingerprint(self)


def key_fingerprint(key: SecretKey) -> str:
    """Stable identifier for pipeline consistency checks (not a MAC)."""
    text = f"{PRNG_NAME}|{key.scheme.value}|{key.dim}|{key.seed}"
    return hashlib.sha256(text.encode("ascii")).hexdigest()[:16]


class KeyStream:
    """Raw 64-bit draws from the pinned generator for one key."""

    def __init__(self, seed: int, scheme: Scheme, buffer: int = 256):
        self._bitgen = np.random.Philox(key=np.array([seed, scheme.code], dtype=np.uint64))
        self._buffer = buffer
        self._pending: list[int] = []

    @property
    def bit_generator(self) -> np.random.Philox:
        return self._bitgen

    def next_u64(self) -> int:
        if not self._pending:
            self._pending = self._bitgen.random_raw(self._buffer).tolist()[::-1]
        return self._pending.pop()

    def bounded(self, s: int) -> int:
        """Uniform integer in ``[0, s)`` (Lemire, with rejection)."""
        m = self.next_u64() * s
        low = m & _MASK64
        if low < s:
            threshold = ((1 << 64) - s) % s
            while low < threshold:
                m = self.next_u64() * s
                low = m & _MASK64
        return m >> 64


def fisher_yates(stream: KeyStream, d: int) -> np.ndarray:
    perm = list(range(d))
    for i in range(d - 1, 0, -1):
        j = stream.bounded(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.array(perm, dtype=np.int64)


def _readonly(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OrthonormalTransform:
    """Realisation of a key as an orthonormal matrix.

    Permutation schemes store only ``perm`` (and ``signs``): row ``i`` of the
    matrix has its single nonzero ``signs[i]`` in column ``perm[i]``.
    Gram-Schmidt transforms store the dense ``matrix``.
    """

    dim: int
    scheme: Scheme
    key_fingerprint: str
    perm: Optional[np.ndarray] = None
    signs: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("perm", "signs", "matrix"):
            _readonly(getattr(self, name))

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.copy()
        Q = np.zeros((self.dim, self.dim))
        vals = self.signs if self.signs is not None else 1.0
        Q[np.arange(self.dim), self.perm] = vals
        return Q

    def apply(self, X) -> np.ndarray:
        """``Q @ x`` for a vector, or row-wise for a 2-D batch."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise DimensionMismatch(f"vector dim {X.shape[-1]} != transform dim {self.dim}")
        if self.matrix is not None:
            return X @ self.matrix.T
        out = X[..., self.perm]
        if self.signs is not None:
            out = out * self.signs
        return out


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("feature vector has non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class ProtectedVector:
    values: np.ndarray
    key_fingerprint: str

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.array(self.values, dtype=np.float64).ravel()))

    @property
    def dim(self) -> int:
        return self.values.size


def _gram_schmidt(sample: Callable[[], np.ndarray]) -> np.ndarray:
    for _ in range(1 + _MAX_REDRAWS):
        Q, ok = _backend.mgs_orthonormalize(np.ascontiguousarray(sample()), _RANK_TOL)
        if ok:
            return Q
    raise DegenerateMatrix(f"sampled matrix rank-deficient on {1 + _MAX_REDRAWS} draws")


@functools.lru_cache(maxsize=64)
def generate_transform(key: SecretKey) -> OrthonormalTransform:
    """Regenerate the orthonormal transform for ``key`` (pure, cached)."""
    d = key.dim
    stream = KeyStream(key.seed, key.scheme)
    fp = key_fingerprint(key)
    if key.scheme is Scheme.GRAM_SCHMIDT:
        gen = np.random.Generator(stream.bit_generator)
        Q = _gram_schmidt(lambda: gen.standard_normal((d, d)))
        return OrthonormalTransform(d, key.scheme, fp, matrix=Q)
    perm = fisher_yates(stream, d)
    signs = None
    if key.scheme is Scheme.SIGNED_PERMUTATION:
        signs = np.array([-1.0 if stream.next_u64() >> 63 else 1.0 for _ in range(d)])
    return OrthonormalTransform(d, key.scheme, fp, perm=perm, signs=signs)


def protect(f, Q: OrthonormalTransform) -> ProtectedVector:
    values = f.values if isinstance(f, FeatureVector) else FeatureVector(f).values
    if values.size != Q.dim:
        raise DimensionMismatch(f"feature dim {values.size} != transform dim {Q.dim}")
    return ProtectedVector(Q.apply(values), Q.key_fingerprint)


def protect_all(rows, Q: OrthonormalTransform) -> np.ndarray:
    """Protect each row of a 2-D array; returns the protected rows."""
    X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return Q.apply(X)


def verify_orthonormal(Q, tol: float) -> bool:
    """True iff ``max |Q^T Q - I| <= tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    M = Q.dense() if isinstance(Q, OrthonormalTransform) else np.asarray(Q, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    err = M.T @ M - np.eye(M.shape[0])
    return bool(np.max(np.abs(err)) <= tol)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
