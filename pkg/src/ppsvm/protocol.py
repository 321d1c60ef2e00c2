"""End-to-end authentication experiment under one key condition.

Clients protect their training and query vectors with their own keys, the
server trains the one-vs-rest bank on whatever protected pool it receives,
and every enrolled client's queries double as impostor queries against the
others. Spoofing runs use a separate, non-enrolled attacker.

Attacker keys: under the shared-key condition the attacker is assumed to
hold the shared key like every other client; under per-client keys the
attacker has a key of their own.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np

from .biometric import (
    AttackScenario,
    ClassifierBank,
    EvaluationReport,
    assign_keys,
    derive_seeds,
    enroll,
    evaluate,
    simulate_attack,
)
from .kernels import KernelSpec
from .svm import SolverConfig
from .transform import Scheme, SecretKey, generate_transform, protect_all


@dataclass(frozen=True, eq=False)
class ProtocolResult:
    condition: Optional[int]
    bank: ClassifierBank
    keys: Optional[Dict[int, SecretKey]]
    attacker_key: Optional[SecretKey]
    report: EvaluationReport
    key_leak: Optional[EvaluationReport] = None
    image_leak: Optional[EvaluationReport] = None


def attacker_key_for(keys: Mapping[int, SecretKey], condition: int, master_seed: int) -> SecretKey:
    if condition == 1:
        return next(iter(keys.values()))
    any_key = next(iter(keys.values()))
    # the seed right after the clients' in the same derived sequence
    seed = derive_seeds(master_seed, len(keys) + 1)[-1]
    return SecretKey(seed, any_key.scheme, any_key.dim)


def run_protocol(train: Mapping[int, np.ndarray], query: Mapping[int, np.ndarray],
                 kernel: KernelSpec, C: float, condition: Optional[int],
                 scheme: Scheme | str = Scheme.PERMUTATION, key_seed: int = 0,
                 attacker_images: Optional[np.ndarray] = None,
                 leak_source: Optional[int] = None,
                 config: Optional[SolverConfig] = None, n_jobs: int = 1) -> ProtocolResult:
    """Run enrollment, evaluation and (with ``attacker_images``) both attacks.

    ``condition=None`` is the unprotected baseline: no keys, no attacks.
    ``leak_source`` picks whose key leaks in the key-leak attack (default:
    the lowest id); the attacker uses that single key against every victim.
    """
    ids = sorted(train)
    dim = np.atleast_2d(train[ids[0]]).shape[1]
    if condition is None:
        bank = enroll(train, None, kernel, C, config, n_jobs=n_jobs)
        genuine = {i: np.atleast_2d(query[i]) for i in ids}
        return ProtocolResult(None, bank, None, None, evaluate(bank, genuine))

    keys = assign_keys(ids, condition, scheme, dim, key_seed)
    bank = enroll(train, keys, kernel, C, config, n_jobs=n_jobs)
    genuine = {i: protect_all(query[i], generate_transform(keys[i])) for i in ids}
    report = evaluate(bank, genuine)
    att_key = attacker_key_for(keys, condition, key_seed)
    if attacker_images is None:
        return ProtocolResult(condition, bank, keys, att_key, report)

    source = ids[0] if leak_source is None else leak_source
    key_leak = simulate_attack(bank, AttackScenario.key_leak(ids, attacker_images, keys[source]))
    image_leak = simulate_attack(bank, AttackScenario.image_leak(
        {i: query[i] for i in ids}, att_key))
    return ProtocolResult(condition, bank, keys, att_key, report, key_leak, image_leak)
