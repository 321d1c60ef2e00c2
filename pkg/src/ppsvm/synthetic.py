"""Synthetic identities standing in for face features.

Every vector is ``mean + centre_i + sigma * z``: a shared unit-norm "mean
face" with positive entries, an identity offset of length
``separation * sigma / sqrt(2)`` along its own direction (so identity
centres sit ``separation * sigma`` apart), and isotropic noise. ``sigma``
defaults to ``0.16 / sqrt(dim)``, which keeps vectors near unit norm and
within-identity squared distances around 0.05, a range where the RBF
width used in the face experiments (gamma = 81) is informative.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    dim: int
    train: Dict[int, np.ndarray]
    query: Dict[int, np.ndarray]
    attacker: Optional[np.ndarray]
    sigma: float
    separation: float
    seed: int

    @property
    def ids(self) -> list[int]:
        return sorted(self.train)


def _directions(gen: np.random.Generator, count: int, dim: int) -> np.ndarray:
    G = gen.standard_normal((dim, count))
    if count <= dim:
        Q, R = np.linalg.qr(G)
        return (Q * np.sign(np.diag(R))).T
    return (G / np.linalg.norm(G, axis=0)).T


def make_identities(n_identities: int = 8, n_train: int = 16, n_query: int = 16,
                    dim: int = 64, separation: float = 6.0, sigma: Optional[float] = None,
                    seed: int = 0, attacker: bool = True,
                    n_attacker: Optional[int] = None,
                    mean_norm: float = 1.0) -> SyntheticDataset:
    """Gaussian identity clusters; ids run 1..n_identities.

    With ``attacker`` an extra, non-enrolled identity contributes
    ``n_attacker`` (default ``n_query``) vectors for spoofing experiments.
    ``mean_norm=0`` drops the shared component (pure zero-mean clusters).
    """
    if n_identities < 1 or n_train < 1 or n_query < 1 or dim < 1:
        raise ValueError("counts and dim must be positive")
    sigma = 0.16 / np.sqrt(dim) if sigma is None else float(sigma)
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0x5E7], dtype=np.uint64)))

    mean = gen.uniform(0.2, 0.8, size=dim)
    mean *= mean_norm / np.linalg.norm(mean)
    n_people = n_identities + (1 if attacker else 0)
    offsets = _directions(gen, n_people, dim) * (separation * sigma / np.sqrt(2.0))

    def draw(person: int, count: int) -> np.ndarray:
        return mean + offsets[person] + sigma * gen.standard_normal((count, dim))

    train, query = {}, {}
    for p in range(n_identities):
        train[p + 1] = draw(p, n_train)
        query[p + 1] = draw(p, n_query)
    att = draw(n_identities, n_attacker or n_query) if attacker else None
    return SyntheticDataset(dim, train, query, att, sigma, float(separation), seed)
