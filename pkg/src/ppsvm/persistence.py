"""Versioned file formats for keys, vector sets, manifests, models, banks
and reports.

JSON documents carry ``"kind"`` and ``"version"`` at the top level; vector
sets and report curves are CSV. Doubles are written with ``repr`` (shortest
round-trip form), so ``load(save(x))`` reproduces every value bit for bit.
Non-finite doubles are stored as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from .biometric import ClassifierBank, EvaluationReport
from .errors import Corrupt, KindMismatch, VersionMismatch
from .kernels import KernelSpec
from .svm import SolverConfig, SvmModel
from .transform import PRNG_NAME, Scheme, SecretKey

FORMAT_VERSION = 1
KINDS = ("key", "vectorset", "manifest", "model", "bank", "report")


# --------------------------------------------------------------------------
# helpers

def _enc(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _dec(x) -> float:
    if isinstance(x, str):
        if x not in ("inf", "-inf", "nan"):
            raise Corrupt(f"bad float literal {x!r}")
        return float(x)
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise Corrupt(f"expected a number, got {x!r}")
    return float(x)


def _opt_enc(x):
    return None if x is None else _enc(x)


def _opt_dec(x):
    return None if x is None else _dec(x)


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(path, kind: str, payload: dict) -> None:
    doc = {"kind": kind, "version": FORMAT_VERSION, **payload}
    _atomic_write(path, json.dumps(doc, indent=1, allow_nan=False) + "\n")


def check_envelope(doc: Any, kind: str) -> dict:
    if not isinstance(doc, dict) or "kind" not in doc or "version" not in doc:
        raise Corrupt("missing kind/version envelope")
    if doc["kind"] not in KINDS:
        raise KindMismatch(f"unknown artifact kind {doc['kind']!r}")
    if doc["kind"] != kind:
        raise KindMismatch(f"expected a {kind} file, found {doc['kind']!r}")
    if doc["version"] != FORMAT_VERSION:
        raise VersionMismatch(f"{kind} format version {doc['version']!r} is not supported")
    return doc


def _load_json(path, kind: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise Corrupt(f"{path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise Corrupt(f"{path}: {exc}") from None
    return check_envelope(doc, kind)


def _require(doc: dict, *names):
    try:
        return [doc[n] for n in names]
    except KeyError as exc:
        raise Corrupt(f"missing field {exc}") from None


# --------------------------------------------------------------------------
# keys

def key_to_dict(key: SecretKey) -> dict:
    return {"scheme": key.scheme.value, "seed": key.seed, "dim": key.dim, "prng": PRNG_NAME}


def key_from_dict(doc: dict) -> SecretKey:
    scheme, seed, dim, prng = _require(doc, "scheme", "seed", "dim", "prng")
    if prng != PRNG_NAME:
        raise VersionMismatch(f"key was generated with {prng!r}, this build uses {PRNG_NAME!r}")
    try:
        return SecretKey(seed, Scheme(scheme), dim)
    except (TypeError, ValueError) as exc:
        raise Corrupt(str(exc)) from None


def save_key(key: SecretKey, path) -> None:
    _dump_json(path, "key", key_to_dict(key))


def load_key(path) -> SecretKey:
    return key_from_dict(_load_json(path, "key"))


# --------------------------------------------------------------------------
# vector sets

@dataclass(frozen=True, eq=False)
class VectorSet:
    """Rows of equal-length vectors; ``key_fingerprint`` is None for raw data."""

    values: np.ndarray
    key_fingerprint: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_2d(np.asarray(self.values, dtype=np.float64)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def save_vectors(vs: VectorSet, path) -> None:
    X = vs.values
    fp = vs.key_fingerprint or "none"
    lines = [f"# kind=vectorset version={FORMAT_VERSION} rows={X.shape[0]} dim={X.shape[1]} key={fp}"]
    lines += [",".join(repr(float(v)) for v in row) for row in X]
    _atomic_write(path, "\n".join(lines) + "\n")


def load_vectors(path) -> VectorSet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise Corrupt(f"{path}: {exc}") from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise Corrupt(f"{path}: missing vector set header")
    try:
        header = dict(item.split("=", 1) for item in lines[0][2:].split())
    except ValueError:
        raise Corrupt(f"{path}: malformed header") from None
    check_envelope({"kind": header.get("kind"), "version": _int_or_raw(header.get("version"))},
                   "vectorset")
    try:
        rows, dim = int(header["rows"]), int(header["dim"])
    except (KeyError, ValueError):
        raise Corrupt(f"{path}: header lacks rows/dim") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != rows:
        raise Corrupt(f"{path}: expected {rows} rows, found {len(body)}")
    try:
        X = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=np.float64)
    except ValueError as exc:
        raise Corrupt(f"{path}: {exc}") from None
    if X.size == 0:
        X = X.reshape(0, dim)
    if X.ndim != 2 or X.shape[1] != dim:
        raise Corrupt(f"{path}: rows do not all have {dim} values")
    fp = header.get("key", "none")
    return VectorSet(X, None if fp == "none" else fp)


def _int_or_raw(v):
    try:
        return int(v)
    except (TypeError, ValueError):
        return v


# --------------------------------------------------------------------------
# models and banks

def model_to_dict(m: SvmModel) -> dict:
    return {
        "kernel": {k: (_enc(v) if isinstance(v, float) else v) for k, v in m.kernel.to_dict().items()},
        "C": _enc(m.C),
        "bias": _enc(m.bias),
        "dual_objective": _enc(m.dual_objective),
        "solver": m.config.to_dict(),
        "n_iter": m.n_iter,
        "support_indices": None if m.support_indices is None else [int(i) for i in m.support_indices],
        "dual_coefs": [_enc(v) for v in m.dual_coefs],
        "support_vectors": [[_enc(v) for v in row] for row in m.support_vectors],
    }


def model_from_dict(doc: dict) -> SvmModel:
    kernel, C, bias, obj, solver, coefs, svs = _require(
        doc, "kernel", "C", "bias", "dual_objective", "solver", "dual_coefs", "support_vectors")
    try:
        kd = dict(kernel)
        if "gamma" in kd:
            kd["gamma"] = _dec(kd["gamma"])
        spec = KernelSpec.from_dict(kd)
        config = SolverConfig.from_dict(solver)
    except (KeyError, TypeError, ValueError) as exc:
        raise Corrupt(f"bad model header: {exc}") from None
    coefs = np.array([_dec(v) for v in coefs], dtype=np.float64)
    sv = np.array([[_dec(v) for v in row] for row in svs], dtype=np.float64)
    if sv.ndim != 2 or sv.shape[0] != coefs.size:
        raise Corrupt("support vectors and dual coefficients disagree")
    idx = doc.get("support_indices")
    return SvmModel(
        kernel=spec, support_vectors=sv, dual_coefs=coefs, bias=_dec(bias), C=_dec(C),
        dual_objective=_dec(obj), config=config,
        support_indices=None if idx is None else np.asarray(idx, dtype=np.int64),
        n_iter=int(doc.get("n_iter", 0)),
    )


def save_model(m: SvmModel, path) -> None:
    _dump_json(path, "model", model_to_dict(m))


def load_model(path) -> SvmModel:
    return model_from_dict(_load_json(path, "model"))


def save_bank(bank: ClassifierBank, path) -> None:
    _dump_json(path, "bank", {
        "kernel": {k: (_enc(v) if isinstance(v, float) else v) for k, v in bank.kernel.to_dict().items()},
        "C": _enc(bank.C),
        "models": [
            {"id": i, "key_fingerprint": bank.key_fingerprints.get(i),
             "model": model_to_dict(bank.models[i])}
            for i in bank.ids
        ],
    })


def load_bank(path) -> ClassifierBank:
    doc = _load_json(path, "bank")
    kernel, C, entries = _require(doc, "kernel", "C", "models")
    models, fps = {}, {}
    for e in entries:
        try:
            i = int(e["id"])
            models[i] = model_from_dict(e["model"])
        except (KeyError, TypeError, ValueError) as exc:
            raise Corrupt(f"bad bank entry: {exc}") from None
        fps[i] = e.get("key_fingerprint")
    try:
        kd = dict(kernel)
        if "gamma" in kd:
            kd["gamma"] = _dec(kd["gamma"])
        spec = KernelSpec.from_dict(kd)
    except (KeyError, TypeError, ValueError) as exc:
        raise Corrupt(f"bad bank kernel: {exc}") from None
    return ClassifierBank(spec, _dec(C), models, fps)


# --------------------------------------------------------------------------
# reports

def save_report(report: EvaluationReport, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.csv`` (tau, far, frr) and ``<prefix>.json`` (summary)."""
    prefix = Path(prefix)
    csv_path = prefix.with_name(prefix.name + ".csv")
    json_path = prefix.with_name(prefix.name + ".json")
    frr = report.frr
    rows = ["tau,far,frr"]
    for k, tau in enumerate(report.thresholds):
        rows.append(f"{float(tau)!r},{float(report.far[k])!r},"
                    + ("" if frr is None else repr(float(frr[k]))))
    _atomic_write(csv_path, "\n".join(rows) + "\n")
    _dump_json(json_path, "report", {
        "curve": csv_path.name,
        "far_only": frr is None,
        "eer": _opt_enc(report.eer),
        "eer_threshold": _opt_enc(report.eer_threshold),
        "eer_interpolated": _opt_enc(report.eer_interpolated),
        "eer_threshold_interpolated": _opt_enc(report.eer_threshold_interpolated),
        "n_genuine": {str(k): v for k, v in report.n_genuine.items()},
        "n_impostor": {str(k): v for k, v in report.n_impostor.items()},
    })
    return csv_path, json_path


def load_report(json_path) -> EvaluationReport:
    json_path = Path(json_path)
    doc = _load_json(json_path, "report")
    (curve,) = _require(doc, "curve")
    lines = (json_path.parent / curve).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "tau,far,frr":
        raise Corrupt(f"{curve}: bad header")
    taus, far, frr = [], [], []
    try:
        for ln in lines[1:]:
            t, a, r = ln.split(",")
            taus.append(float(t))
            far.append(float(a))
            frr.append(float(r) if r else None)
    except ValueError:
        raise Corrupt(f"{curve}: malformed row") from None
    far_only = bool(doc.get("far_only"))
    if not far_only and any(r is None for r in frr):
        raise Corrupt(f"{curve}: missing frr values")
    return EvaluationReport(
        np.array(taus), np.array(far), None if far_only else np.array(frr, dtype=np.float64),
        _opt_dec(doc.get("eer")), _opt_dec(doc.get("eer_threshold")),
        _opt_dec(doc.get("eer_interpolated")), _opt_dec(doc.get("eer_threshold_interpolated")),
        n_genuine={int(k): int(v) for k, v in doc.get("n_genuine", {}).items()},
        n_impostor={int(k): int(v) for k, v in doc.get("n_impostor", {}).items()},
    )


# --------------------------------------------------------------------------
# dataset manifest

@dataclass
class ManifestEntry:
    id: int
    train: Optional[str] = None
    query: Optional[str] = None
    key: Optional[str] = None
    train_images: List[str] = field(default_factory=list)
    query_images: List[str] = field(default_factory=list)


@dataclass
class Manifest:
    """Identities with their vector (or image) files, split and key files.

    Paths are stored relative to the manifest's directory; ``base`` is that
    directory once loaded.
    """

    dim: int
    identities: List[ManifestEntry]
    attacker: Optional[ManifestEntry] = None
    key_condition: Optional[int] = None
    block: Optional[tuple] = None
    crop: Optional[tuple] = None
    base: Path = field(default_factory=Path)

    def path(self, rel: str) -> Path:
        return self.base / rel

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.identities]


def _entry_to_dict(e: ManifestEntry) -> dict:
    d: Dict[str, Any] = {"id": e.id}
    for name in ("train", "query", "key"):
        if getattr(e, name) is not None:
            d[name] = getattr(e, name)
    if e.train_images:
        d["train_images"] = list(e.train_images)
    if e.query_images:
        d["query_images"] = list(e.query_images)
    return d


def _entry_from_dict(d: dict) -> ManifestEntry:
    try:
        return ManifestEntry(int(d["id"]), d.get("train"), d.get("query"), d.get("key"),
                             list(d.get("train_images", [])), list(d.get("query_images", [])))
    except (KeyError, TypeError, ValueError) as exc:
        raise Corrupt(f"bad manifest entry: {exc}") from None


def save_manifest(m: Manifest, path) -> None:
    payload: Dict[str, Any] = {
        "dim": m.dim,
        "key_condition": m.key_condition,
        "identities": [_entry_to_dict(e) for e in m.identities],
        "attacker": None if m.attacker is None else _entry_to_dict(m.attacker),
    }
    if m.block is not None:
        payload["block"] = list(m.block)
    if m.crop is not None:
        payload["crop"] = list(m.crop)
    _dump_json(path, "manifest", payload)


def load_manifest(path) -> Manifest:
    doc = _load_json(path, "manifest")
    dim, idents = _require(doc, "dim", "identities")
    entries = [_entry_from_dict(d) for d in idents]
    if len({e.id for e in entries}) != len(entries):
        raise Corrupt("duplicate identity ids in manifest")
    att = doc.get("attacker")
    return Manifest(
        dim=int(dim), identities=entries,
        attacker=None if att is None else _entry_from_dict(att),
        key_condition=doc.get("key_condition"),
        block=tuple(doc["block"]) if doc.get("block") else None,
        crop=tuple(doc["crop"]) if doc.get("crop") else None,
        base=Path(path).resolve().parent,
    )


# --------------------------------------------------------------------------
# images

def read_pgm(path) -> np.ndarray:
    """Binary 8-bit PGM (P5) as a 2-D uint8 array."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise Corrupt(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise Corrupt(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise Corrupt(f"{path}: bad PGM header") from None
    if not 0 < maxval < 256:
        raise Corrupt(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace byte ends the header
    pixels = data[pos:pos + width * height]
    if len(pixels) != width * height:
        raise Corrupt(f"{path}: truncated pixel data")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(image, path) -> None:
    img = np.asarray(image)
    if img.ndim != 2 or img.min() < 0 or img.max() > 255:
        raise ValueError("PGM image must be 2-D with values in 0..255")
    h, w = img.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.astype(np.uint8).tobytes())


def manifest_vectors(m: Manifest, entry: ManifestEntry, split: str) -> VectorSet:
    """Vectors of one identity's ``train`` or ``query`` split.

    Uses the vector file when the entry names one, otherwise extracts
    features from the listed PGM images with the manifest's block geometry.
    """
    from .biometric import downsample

    rel = getattr(entry, split)
    if rel is not None:
        vs = load_vectors(m.path(rel))
    else:
        images = getattr(entry, f"{split}_images")
        if not images:
            raise Corrupt(f"identity {entry.id} has no {split} vectors or images")
        if m.block is None:
            raise Corrupt("manifest lists images but no block geometry")
        vs = VectorSet(np.vstack([downsample(read_pgm(m.path(p)), m.block, m.crop) for p in images]))
    if vs.dim != m.dim:
        raise Corrupt(f"identity {entry.id} {split} vectors have dim {vs.dim}, manifest says {m.dim}")
    return vs
