"""``ppsvm`` command line.

Client side: ``keygen``, ``extract``, ``protect``. Server side: ``train``,
``authenticate``, ``evaluate``, ``attack-sim``. ``demo-synth`` writes a
synthetic dataset with its manifest and keys. Commands share state only
through files.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
Report CSV columns are ``tau,far,frr`` (``frr`` empty for attack reports).
``PPSVM_OUT_DIR`` sets the default output location when ``--out`` /
``--out-dir`` is omitted.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import persistence as io
from .biometric import (
    AttackScenario,
    Identity,
    assign_keys,
    authenticate,
    downsample,
    evaluate,
    key_condition,
    simulate_attack,
    train_bank,
)
from .errors import DataError, NumericalError, PpsvmError
from .kernels import KernelSpec
from .protocol import attacker_key_for
from .svm import SolverConfig
from .synthetic import make_identities
from .transform import Scheme, SecretKey, generate_transform, key_fingerprint, protect_all

log = logging.getLogger("ppsvm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
OUT_DIR_ENV = "PPSVM_OUT_DIR"


class UsageError(PpsvmError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers 'a,b', got {text!r}") from None
    return a, b


def _out_path(args, name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get(OUT_DIR_ENV)
    if not env:
        raise UsageError(f"--out is required (or set {OUT_DIR_ENV})")
    return Path(env) / name


# --------------------------------------------------------------------------
# commands

def cmd_keygen(args) -> int:
    try:
        if args.seed is None:
            key = SecretKey.random(args.scheme, args.dim)
        else:
            key = SecretKey(args.seed, args.scheme, args.dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    io.save_key(key, args.out)
    print(f"seed={key.seed} scheme={key.scheme.value} dim={key.dim} fingerprint={key_fingerprint(key)}")
    return EXIT_OK


def _image_files(paths) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.pgm")) if p.is_dir() else [p])
    if not files:
        raise DataError("no PGM images found")
    return files


def cmd_extract(args) -> int:
    rows = [downsample(io.read_pgm(f), args.block, args.crop) for f in _image_files(args.images)]
    io.save_vectors(io.VectorSet(np.vstack(rows)), args.out)
    print(f"{len(rows)} images -> {rows[0].size} features each")
    return EXIT_OK


def cmd_protect(args) -> int:
    key = io.load_key(args.key)
    vs = io.load_vectors(args.input)
    if vs.key_fingerprint is not None:
        raise DataError(f"{args.input} is already protected (key {vs.key_fingerprint})")
    out = protect_all(vs.values, generate_transform(key))
    io.save_vectors(io.VectorSet(out, key_fingerprint(key)), args.out)
    print(f"protected {out.shape[0]} vectors with key {key_fingerprint(key)}")
    return EXIT_OK


def _kernel_from_args(args) -> KernelSpec:
    try:
        if args.kernel == "rbf":
            if args.gamma is None:
                raise UsageError("--gamma is required for the rbf kernel")
            return KernelSpec.rbf(args.gamma)
        if args.kernel == "polynomial":
            if args.degree is None:
                raise UsageError("--degree is required for the polynomial kernel")
            return KernelSpec.polynomial(args.degree)
        return KernelSpec.linear()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _templates(m: io.Manifest, entry: io.ManifestEntry, split: str, protect: bool):
    """Vectors of one split as the server would see them, with the owner's key."""
    vs = io.manifest_vectors(m, entry, split)
    key = io.load_key(m.path(entry.key)) if protect and entry.key else None
    if protect and key is None:
        raise DataError(f"identity {entry.id} has no key in the manifest")
    if vs.key_fingerprint is not None:
        if key is None or vs.key_fingerprint != key_fingerprint(key):
            raise DataError(f"identity {entry.id} {split} vectors are protected with an unexpected key")
        return vs.values, key
    if key is None:
        return vs.values, None
    return protect_all(vs.values, generate_transform(key)), key


def cmd_train(args) -> int:
    kernel = _kernel_from_args(args)
    if not args.C > 0:
        raise UsageError("--C must be positive")
    m = io.load_manifest(args.manifest)
    protect = not args.no_protect
    idents, keys = [], {}
    for e in m.identities:
        X, key = _templates(m, e, "train", protect)
        idents.append(Identity(e.id, key, X))
        if key is not None:
            keys[e.id] = key
    cond = key_condition(keys) if protect else None
    config = SolverConfig(tol=args.tol)
    echo = {"kernel": kernel.to_dict(), "C": args.C, "solver": config.to_dict(),
            "key_condition": cond, "identities": len(idents)}
    print(json.dumps(echo))
    bank = train_bank(idents, kernel, args.C, config, n_jobs=args.jobs)
    io.save_bank(bank, args.out)
    return EXIT_OK


def cmd_authenticate(args) -> int:
    bank = io.load_bank(args.bank)
    vs = io.load_vectors(args.query)
    X = vs.values
    if args.key:
        if vs.key_fingerprint is not None:
            raise DataError("--key given but the query is already protected")
        key = io.load_key(args.key)
        X = protect_all(X, generate_transform(key))
    for row in X:
        res = authenticate(bank, args.id, row, args.tau)
        print(f"{'accept' if res.accepted else 'reject'} score={res.score.score!r}")
    return EXIT_OK


def _query_sets(m: io.Manifest, protect: bool):
    return {e.id: _templates(m, e, "query", protect)[0] for e in m.identities}


def _write_report(report, prefix: Path) -> None:
    csv_path, json_path = io.save_report(report, prefix)
    summary = {"eer": report.eer, "eer_threshold": report.eer_threshold,
               "csv": str(csv_path), "json": str(json_path)}
    if report.frr is None:
        summary = {"csv": str(csv_path), "json": str(json_path)}
    print(json.dumps(summary))


def cmd_evaluate(args) -> int:
    bank = io.load_bank(args.bank)
    m = io.load_manifest(args.manifest)
    if sorted(bank.ids) != sorted(m.ids):
        raise DataError("bank and manifest enroll different identities")
    report = evaluate(bank, _query_sets(m, bank.protected))
    _write_report(report, _out_path(args, "evaluate"))
    return EXIT_OK


def cmd_attack_sim(args) -> int:
    bank = io.load_bank(args.bank)
    m = io.load_manifest(args.manifest)
    if m.attacker is None:
        raise DataError("manifest has no attacker entry")
    ids = bank.ids
    if args.mode == "key-leak":
        source = args.leaked_id if args.leaked_id is not None else ids[0]
        entry = next((e for e in m.identities if e.id == source), None)
        if entry is None or entry.key is None:
            raise DataError(f"no key for identity {source} in the manifest")
        images = io.manifest_vectors(m, m.attacker, "query").values
        scenario = AttackScenario.key_leak(ids, images, io.load_key(m.path(entry.key)))
    else:
        if m.attacker.key is None:
            raise DataError("attacker entry has no key")
        leaked = {e.id: io.manifest_vectors(m, e, "query").values for e in m.identities}
        scenario = AttackScenario.image_leak(leaked, io.load_key(m.path(m.attacker.key)), ids)
    report = simulate_attack(bank, scenario)
    _write_report(report, _out_path(args, f"attack-{args.mode}"))
    return EXIT_OK


def cmd_demo_synth(args) -> int:
    if args.per_id < 2:
        raise UsageError("--per-id must be at least 2 (train + query)")
    if args.out_dir:
        out = Path(args.out_dir)
    elif os.environ.get(OUT_DIR_ENV):
        out = Path(os.environ[OUT_DIR_ENV]) / "demo"
    else:
        raise UsageError(f"--out-dir is required (or set {OUT_DIR_ENV})")
    n_train = args.per_id // 2
    ds = make_identities(args.identities, n_train, args.per_id - n_train, args.dim,
                         args.separation, seed=args.seed)
    keys = assign_keys(ds.ids, args.key_condition, args.scheme, args.dim, args.seed)
    att_key = attacker_key_for(keys, args.key_condition, args.seed)
    entries = []
    for i in ds.ids:
        io.save_vectors(io.VectorSet(ds.train[i]), out / "vectors" / f"id{i}_train.csv")
        io.save_vectors(io.VectorSet(ds.query[i]), out / "vectors" / f"id{i}_query.csv")
        io.save_key(keys[i], out / "keys" / f"id{i}.json")
        entries.append(io.ManifestEntry(i, f"vectors/id{i}_train.csv", f"vectors/id{i}_query.csv",
                                        f"keys/id{i}.json"))
    io.save_vectors(io.VectorSet(ds.attacker), out / "vectors" / "attacker_query.csv")
    io.save_key(att_key, out / "keys" / "attacker.json")
    attacker = io.ManifestEntry(0, None, "vectors/attacker_query.csv", "keys/attacker.json")
    io.save_manifest(io.Manifest(args.dim, entries, attacker, args.key_condition), out / "manifest.json")
    print(f"wrote {len(entries)} identities to {out / 'manifest.json'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ppsvm", description=__doc__.split("\n\n")[0],
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    schemes = [s.value for s in Scheme]

    s = sub.add_parser("keygen", help="write a secret key file")
    s.add_argument("--scheme", choices=schemes, required=True)
    s.add_argument("--dim", type=int, required=True)
    s.add_argument("--seed", type=int, help="64-bit seed (default: OS entropy, echoed)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("extract", help="block-mean features from PGM images")
    s.add_argument("--images", nargs="+", required=True, help="PGM files or directories")
    s.add_argument("--block", type=_pair, required=True, metavar="BX,BY")
    s.add_argument("--crop", type=_pair, metavar="X,Y", help="centre-crop size before tiling")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("protect", help="protect a vector set with a key")
    s.add_argument("--key", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_protect)

    s = sub.add_parser("train", help="train the one-vs-rest classifier bank")
    s.add_argument("--manifest", required=True)
    s.add_argument("--kernel", choices=["linear", "rbf", "polynomial"], required=True)
    s.add_argument("--gamma", type=float)
    s.add_argument("--degree", type=int)
    s.add_argument("--C", type=float, required=True)
    s.add_argument("--tol", type=float, default=1e-3, help="KKT tolerance")
    s.add_argument("--no-protect", action="store_true", help="train on raw vectors (baseline)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("authenticate", help="accept/reject queries for a claimed id")
    s.add_argument("--bank", required=True)
    s.add_argument("--id", type=int, required=True)
    s.add_argument("--query", required=True, help="vector set, one query per row")
    s.add_argument("--key", help="protect raw queries with this key first")
    s.add_argument("--tau", type=float, required=True)
    s.set_defaults(func=cmd_authenticate)

    s = sub.add_parser("evaluate", help="FAR/FRR/EER report over the manifest's queries")
    s.add_argument("--bank", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="report prefix; writes PREFIX.csv and PREFIX.json")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("attack-sim", help="FAR under a key-leak or image-leak attack")
    s.add_argument("--bank", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--mode", choices=["key-leak", "image-leak"], required=True)
    s.add_argument("--leaked-id", type=int, help="whose key leaks (default: lowest id)")
    s.add_argument("--out", help="report prefix; writes PREFIX.csv and PREFIX.json")
    s.set_defaults(func=cmd_attack_sim)

    s = sub.add_parser("demo-synth", help="write a synthetic dataset, keys and manifest")
    s.add_argument("--identities", type=int, default=8)
    s.add_argument("--per-id", type=int, default=32, help="vectors per identity, split in half")
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--separation", type=float, default=6.0, help="centre distance in noise sigmas")
    s.add_argument("--key-condition", type=int, choices=[1, 2], default=1)
    s.add_argument("--scheme", choices=schemes, default=Scheme.PERMUTATION.value)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_demo_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ppsvm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"ppsvm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"ppsvm: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
