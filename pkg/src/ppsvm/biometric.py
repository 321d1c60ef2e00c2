"""Face-style authentication on protected templates.

Covers block-mean feature extraction, a one-vs-rest bank with one SVM per
enrollee, thresholded accept/reject, FAR/FRR/EER curves, both key
conditions (one shared key, or one key per client), and the key-leak and
image-leak spoofing simulations.
"""
from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyImage, EmptyQuerySet, UnknownIdentity
from .kernels import KernelSpec, gram
from .svm import DecisionScore, SolverConfig, SvmModel, TrainingSet, sign, train
from .transform import (
    KeyStream,
    ProtectedVector,
    Scheme,
    SecretKey,
    generate_transform,
    key_fingerprint,
    protect_all,
)

log = logging.getLogger(__name__)

#: Block geometry that turns a 192x168 face crop into 38 x 32 = 1216 features.
FACE_BLOCK = (5, 5)
FACE_CROP = (190, 160)


# --------------------------------------------------------------------------
# feature extraction

def downsample(image, block, crop=None) -> np.ndarray:
    """Block-mean down-sampling of a 2-D image.

    The image is centre-cropped, to ``crop`` when given and otherwise to the
    largest multiple of ``block``, then tiled into non-overlapping blocks.
    Features are the block means in row-major block order.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be a 2-D pixel grid")
    bx, by = (int(b) for b in block)
    if bx < 1 or by < 1:
        raise ValueError("block sizes must be >= 1")
    X, Y = img.shape
    if crop is None:
        cx, cy = (X // bx) * bx, (Y // by) * by
    else:
        cx, cy = (int(c) for c in crop)
        if cx > X or cy > Y or cx % bx or cy % by:
            raise ValueError(f"crop {crop} must fit the image and be a multiple of {block}")
    if cx == 0 or cy == 0:
        raise EmptyImage(f"{X}x{Y} image holds no {bx}x{by} block")
    ox, oy = (X - cx) // 2, (Y - cy) // 2
    img = img[ox:ox + cx, oy:oy + cy]
    return img.reshape(cx // bx, bx, cy // by, by).mean(axis=(1, 3)).ravel()


# --------------------------------------------------------------------------
# keys

def derive_seeds(master_seed: int, count: int) -> list[int]:
    """``count`` distinct 64-bit seeds derived from one master seed."""
    stream = KeyStream(master_seed, Scheme.PERMUTATION)
    seeds: list[int] = []
    while len(seeds) < count:
        s = stream.next_u64()
        if s not in seeds:
            seeds.append(s)
    return seeds


def assign_keys(ids: Sequence[int], condition: int, scheme: Scheme | str, dim: int,
                master_seed: int) -> Dict[int, SecretKey]:
    """Keys for each id: one shared key (condition 1) or one per id (condition 2)."""
    scheme = Scheme(scheme)
    if condition == 1:
        (seed,) = derive_seeds(master_seed, 1)
        return {i: SecretKey(seed, scheme, dim) for i in ids}
    if condition == 2:
        seeds = derive_seeds(master_seed, len(ids))
        return {i: SecretKey(s, scheme, dim) for i, s in zip(ids, seeds)}
    raise ValueError(f"key condition must be 1 or 2, got {condition}")


def key_condition(keys: Mapping[int, SecretKey]) -> int:
    distinct = len(set(keys.values()))
    if distinct == 1:
        return 1
    if distinct == len(keys):
        return 2
    raise ValueError("keys must be all equal (condition 1) or all distinct (condition 2)")


# --------------------------------------------------------------------------
# enrollment

@dataclass(frozen=True, eq=False)
class Identity:
    id: int
    key: Optional[SecretKey]
    templates: np.ndarray

    def __post_init__(self):
        T = np.atleast_2d(np.asarray(self.templates, dtype=np.float64))
        if T.shape[0] < 1:
            raise ValueError(f"identity {self.id} has no templates")
        object.__setattr__(self, "templates", T)

    @property
    def key_fingerprint(self) -> Optional[str]:
        return key_fingerprint(self.key) if self.key is not None else None


@dataclass(frozen=True, eq=False)
class ClassifierBank:
    kernel: KernelSpec
    C: float
    models: Dict[int, SvmModel]
    key_fingerprints: Dict[int, Optional[str]] = field(default_factory=dict)

    @property
    def ids(self) -> list[int]:
        return sorted(self.models)

    @property
    def protected(self) -> bool:
        return any(fp is not None for fp in self.key_fingerprints.values())

    def model(self, claimed_id: int) -> SvmModel:
        try:
            return self.models[claimed_id]
        except KeyError:
            raise UnknownIdentity(f"identity {claimed_id} is not enrolled") from None

    def scores(self, claimed_id: int, queries) -> np.ndarray:
        return self.model(claimed_id).decision_function(queries)


def train_bank(identities: Sequence[Identity], kernel: KernelSpec, C: float,
               config: Optional[SolverConfig] = None, n_jobs: int = 1) -> ClassifierBank:
    """One-vs-rest bank over the pooled templates of all identities."""
    identities = sorted(identities, key=lambda ident: ident.id)
    ids = [ident.id for ident in identities]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate identity ids")
    pool = np.vstack([ident.templates for ident in identities])
    owner = np.concatenate([np.full(ident.templates.shape[0], ident.id) for ident in identities])

    K = gram(kernel, pool)

    def fit(i):
        return train(TrainingSet(pool, np.where(owner == i, 1, -1)), kernel, C, config, gram_matrix=K)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            models = dict(zip(ids, ex.map(fit, ids)))
    else:
        models = {i: fit(i) for i in ids}
    fps = {ident.id: ident.key_fingerprint for ident in identities}
    return ClassifierBank(kernel, float(C), models, fps)


def protect_identity(ident_id: int, raw, key: Optional[SecretKey]) -> Identity:
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    if key is None:
        return Identity(ident_id, None, raw)
    return Identity(ident_id, key, protect_all(raw, generate_transform(key)))


def enroll(identities: Mapping[int, np.ndarray], keys: Optional[Mapping[int, SecretKey]],
           kernel: KernelSpec, C: float, config: Optional[SolverConfig] = None,
           n_jobs: int = 1) -> ClassifierBank:
    """Protect every client's raw vectors with the client's key and train the bank.

    ``keys=None`` trains on the raw vectors (the unprotected baseline).
    """
    if keys is not None:
        missing = set(identities) - set(keys)
        if missing:
            raise UnknownIdentity(f"no key for identities {sorted(missing)}")
        key_condition({i: keys[i] for i in identities})
    idents = [protect_identity(i, X, keys[i] if keys is not None else None)
              for i, X in identities.items()]
    return train_bank(idents, kernel, C, config, n_jobs=n_jobs)


# --------------------------------------------------------------------------
# authentication

@dataclass(frozen=True)
class AuthResult:
    accepted: bool
    score: DecisionScore


def authenticate(bank: ClassifierBank, claimed_id: int, query, tau: float) -> AuthResult:
    """Accept iff the claimed identity's classifier scores ``query`` at ``tau`` or above."""
    model = bank.model(claimed_id)
    if isinstance(query, ProtectedVector):
        expected = bank.key_fingerprints.get(claimed_id)
        if expected is not None and query.key_fingerprint != expected:
            log.warning("query key %s differs from enrolled key %s for id %s",
                        query.key_fingerprint, expected, claimed_id)
        query = query.values
    s = float(model.decision_function(np.asarray(query, dtype=np.float64).ravel()[None, :])[0])
    return AuthResult(s >= tau, DecisionScore(s, sign(s)))


# --------------------------------------------------------------------------
# evaluation

@dataclass(frozen=True, eq=False)
class EvaluationReport:
    """FAR/FRR per threshold, averaged with equal weight over identities.

    ``frr`` and the EER fields are ``None`` for FAR-only attack reports.
    """

    thresholds: np.ndarray
    far: np.ndarray
    frr: Optional[np.ndarray] = None
    eer: Optional[float] = None
    eer_threshold: Optional[float] = None
    eer_interpolated: Optional[float] = None
    eer_threshold_interpolated: Optional[float] = None
    n_genuine: Dict[int, int] = field(default_factory=dict)
    n_impostor: Dict[int, int] = field(default_factory=dict)

    def _lookup(self, curve: np.ndarray, tau: float) -> float:
        # Curves are step functions with jumps only at grid points; a value
        # between grid points equals the value at the next grid point up.
        k = int(np.searchsorted(self.thresholds, tau, side="left"))
        return float(curve[min(k, len(curve) - 1)])

    def far_at(self, tau: float) -> float:
        return self._lookup(self.far, tau)

    def frr_at(self, tau: float) -> float:
        if self.frr is None:
            raise ValueError("report has no FRR curve")
        return self._lookup(self.frr, tau)


def default_tau_grid(*score_sets) -> np.ndarray:
    arrays = [np.asarray(s, dtype=np.float64).ravel() for s in score_sets]
    scores = np.concatenate(arrays) if arrays else np.empty(0)
    return np.concatenate([[-np.inf], np.unique(scores), [np.inf]])


def _accept_count(scores: np.ndarray, taus: np.ndarray) -> np.ndarray:
    s = np.sort(scores)
    return s.size - np.searchsorted(s, taus, side="left")


def _mean_rate(counts: list, sizes: list) -> np.ndarray:
    """Unweighted mean over ids of ``counts[i] / sizes[i]``.

    With a common denominator the integer counts are summed first so the
    rate is a single correctly rounded ``s / (N * n)``.
    """
    if len(set(sizes)) == 1:
        return np.sum(counts, axis=0) / (len(sizes) * sizes[0])
    return np.mean([c / n for c, n in zip(counts, sizes)], axis=0)


def equal_error_rate(thresholds, far, frr):
    """EER at the grid point minimising ``|FAR - FRR|`` plus the linearly
    interpolated crossing between the two straddling grid points.

    Returns ``(eer, tau, eer_interpolated, tau_interpolated)``.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    frr = np.asarray(frr, dtype=np.float64)
    diff = far - frr
    k = int(np.argmin(np.abs(diff)))
    eer, tau = float((far[k] + frr[k]) / 2), float(thresholds[k])
    crossing = np.flatnonzero(diff <= 0)
    if crossing.size == 0 or crossing[0] == 0:
        return eer, tau, eer, tau
    hi = int(crossing[0])
    lo = hi - 1
    t = diff[lo] / (diff[lo] - diff[hi])
    eer_i = float(far[lo] + t * (far[hi] - far[lo]))
    t_lo, t_hi = thresholds[lo], thresholds[hi]
    if np.isfinite(t_lo) and np.isfinite(t_hi):
        tau_i = float(t_lo + t * (t_hi - t_lo))
    else:
        tau_i = float(t_hi if np.isfinite(t_hi) else t_lo)
    return eer, tau, eer_i, tau_i


def report_from_scores(genuine: Optional[Mapping[int, np.ndarray]],
                       impostor: Mapping[int, np.ndarray],
                       tau_grid=None) -> EvaluationReport:
    """Build FAR/FRR curves from per-identity score sets.

    For identity ``i`` at threshold ``tau``: ``FRR_i`` is the fraction of its
    genuine scores below ``tau`` and ``FAR_i`` the fraction of impostor
    scores against it at or above ``tau``. Rates are plain means over ids.
    """
    ids = sorted(impostor)
    if not ids:
        raise EmptyQuerySet("no identities to evaluate")
    imp = {i: np.asarray(impostor[i], dtype=np.float64).ravel() for i in ids}
    gen = None
    if genuine is not None:
        if sorted(genuine) != ids:
            raise ValueError("genuine and impostor score sets cover different ids")
        gen = {i: np.asarray(genuine[i], dtype=np.float64).ravel() for i in ids}
    for i in ids:
        if imp[i].size == 0:
            raise EmptyQuerySet(f"no impostor queries against identity {i}")
        if gen is not None and gen[i].size == 0:
            raise EmptyQuerySet(f"no genuine queries for identity {i}")

    if tau_grid is None:
        taus = default_tau_grid(*imp.values(), *(gen.values() if gen else ()))
    else:
        taus = np.unique(np.asarray(tau_grid, dtype=np.float64))

    far = _mean_rate([_accept_count(imp[i], taus) for i in ids], [imp[i].size for i in ids])
    if gen is None:
        return EvaluationReport(taus, far, n_impostor={i: imp[i].size for i in ids})
    frr = _mean_rate([gen[i].size - _accept_count(gen[i], taus) for i in ids],
                     [gen[i].size for i in ids])
    eer, tau, eer_i, tau_i = equal_error_rate(taus, far, frr)
    return EvaluationReport(
        taus, far, frr, eer, tau, eer_i, tau_i,
        n_genuine={i: gen[i].size for i in ids},
        n_impostor={i: imp[i].size for i in ids},
    )


def impostors_from_genuine(genuine: Mapping[int, np.ndarray]) -> Dict[int, np.ndarray]:
    """Impostor queries against ``i``: every other identity's genuine queries."""
    ids = sorted(genuine)
    return {i: np.vstack([np.atleast_2d(genuine[j]) for j in ids if j != i]) for i in ids}


def evaluate(bank: ClassifierBank, genuine: Mapping[int, np.ndarray],
             impostor: Optional[Mapping[int, np.ndarray]] = None,
             tau_grid=None) -> EvaluationReport:
    """Score genuine and impostor queries (already protected) against the bank."""
    if impostor is None:
        impostor = impostors_from_genuine(genuine)
    g_scores, i_scores = {}, {}
    for i in bank.ids:
        if i not in genuine or np.asarray(genuine[i]).size == 0:
            raise EmptyQuerySet(f"no genuine queries for identity {i}")
        g_scores[i] = bank.scores(i, genuine[i])
        i_scores[i] = bank.scores(i, impostor[i])
    return report_from_scores(g_scores, i_scores, tau_grid)


# --------------------------------------------------------------------------
# spoofing

class AttackKind(str, enum.Enum):
    KEY_LEAK = "key-leak"
    IMAGE_LEAK = "image-leak"


@dataclass(frozen=True, eq=False)
class AttackScenario:
    """Key leak: the attacker protects their own images with a leaked client
    key. Image leak: the attacker protects a victim's leaked raw images with
    a key of the attacker's choosing."""

    kind: AttackKind
    victim_ids: tuple
    attacker_images: Optional[np.ndarray] = None
    leaked_key: Optional[SecretKey] = None
    leaked_images: Optional[Mapping[int, np.ndarray]] = None
    attacker_key: Optional[SecretKey] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "victim_ids", tuple(self.victim_ids))
        if not self.victim_ids:
            raise ValueError("attack needs at least one victim")
        if self.kind is AttackKind.KEY_LEAK:
            if self.leaked_key is None or self.attacker_images is None:
                raise ValueError("key leak needs the leaked key and the attacker's images")
        else:
            if self.attacker_key is None or self.leaked_images is None:
                raise ValueError("image leak needs the victims' images and the attacker's key")
            missing = set(self.victim_ids) - set(self.leaked_images)
            if missing:
                raise ValueError(f"no leaked images for victims {sorted(missing)}")

    @classmethod
    def key_leak(cls, victim_ids, attacker_images, leaked_key):
        return cls(AttackKind.KEY_LEAK, victim_ids, attacker_images=attacker_images,
                   leaked_key=leaked_key)

    @classmethod
    def image_leak(cls, leaked_images, attacker_key, victim_ids=None):
        ids = sorted(leaked_images) if victim_ids is None else victim_ids
        return cls(AttackKind.IMAGE_LEAK, ids, leaked_images=leaked_images,
                   attacker_key=attacker_key)

    def queries(self, victim: int) -> np.ndarray:
        if self.kind is AttackKind.KEY_LEAK:
            return protect_all(self.attacker_images, generate_transform(self.leaked_key))
        return protect_all(self.leaked_images[victim], generate_transform(self.attacker_key))


def simulate_attack(bank: ClassifierBank, scenario: AttackScenario,
                    tau_grid=None) -> EvaluationReport:
    """FAR-only report: per victim, the fraction of spoof queries accepted."""
    scores = {v: bank.scores(v, scenario.queries(v)) for v in scenario.victim_ids}
    return report_from_scores(None, scores, tau_grid)
