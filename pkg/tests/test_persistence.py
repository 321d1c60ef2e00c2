import json

import numpy as np
import pytest

from ppsvm import errors
from ppsvm.biometric import assign_keys, enroll, report_from_scores
from ppsvm.kernels import KernelSpec
from ppsvm.persistence import (
    Manifest,
    ManifestEntry,
    VectorSet,
    check_envelope,
    load_bank,
    load_key,
    load_manifest,
    load_model,
    load_report,
    load_vectors,
    manifest_vectors,
    read_pgm,
    save_bank,
    save_key,
    save_manifest,
    save_model,
    save_report,
    save_vectors,
    write_pgm,
)
from ppsvm.svm import SolverConfig, TrainingSet, train
from ppsvm.synthetic import make_identities
from ppsvm.transform import PRNG_NAME, Scheme, SecretKey, key_fingerprint


def bump_version(path, version=999):
    doc = json.loads(path.read_text())
    doc["version"] = version
    path.write_text(json.dumps(doc))


class TestKey:
    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_round_trip(self, tmp_path, scheme):
        key = SecretKey(2**64 - 1, scheme, 1216)
        save_key(key, tmp_path / "k.json")
        back = load_key(tmp_path / "k.json")
        assert back == key and key_fingerprint(back) == key_fingerprint(key)

    def test_file_layout(self, tmp_path):
        save_key(SecretKey(5, Scheme.SIGNED_PERMUTATION, 3), tmp_path / "k.json")
        doc = json.loads((tmp_path / "k.json").read_text())
        assert doc == {"kind": "key", "version": 1, "scheme": "signed-permutation",
                       "seed": 5, "dim": 3, "prng": PRNG_NAME}

    def test_foreign_prng(self, tmp_path):
        p = tmp_path / "k.json"
        save_key(SecretKey(5, Scheme.PERMUTATION, 3), p)
        doc = json.loads(p.read_text())
        doc["prng"] = "mt19937/v0"
        p.write_text(json.dumps(doc))
        with pytest.raises(errors.VersionMismatch):
            load_key(p)

    def test_bad_seed(self, tmp_path):
        p = tmp_path / "k.json"
        save_key(SecretKey(5, Scheme.PERMUTATION, 3), p)
        p.write_text(p.read_text().replace('"seed": 5', '"seed": -5'))
        with pytest.raises(errors.Corrupt):
            load_key(p)


class TestEnvelope:
    def test_unknown_kind(self):
        with pytest.raises(errors.KindMismatch):
            check_envelope({"kind": "spreadsheet", "version": 1}, "key")

    def test_wrong_kind(self):
        with pytest.raises(errors.KindMismatch):
            check_envelope({"kind": "model", "version": 1}, "key")

    def test_missing(self):
        with pytest.raises(errors.Corrupt):
            check_envelope({"version": 1}, "key")
        with pytest.raises(errors.Corrupt):
            check_envelope([1, 2], "key")

    def test_version(self):
        with pytest.raises(errors.VersionMismatch):
            check_envelope({"kind": "key", "version": 2}, "key")


class TestVectors:
    def test_bit_exact(self, tmp_path, rng):
        X = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-300, 300, (7, 5))
        X[0, 0] = 5e-324
        save_vectors(VectorSet(X, "abcd"), tmp_path / "v.csv")
        back = load_vectors(tmp_path / "v.csv")
        assert back.values.tobytes() == X.tobytes() and back.key_fingerprint == "abcd"

    def test_raw_has_no_fingerprint(self, tmp_path):
        save_vectors(VectorSet([[1.0, 2.0]]), tmp_path / "v.csv")
        assert load_vectors(tmp_path / "v.csv").key_fingerprint is None

    def test_truncated(self, tmp_path, rng):
        p = tmp_path / "v.csv"
        save_vectors(VectorSet(rng.standard_normal((4, 3))), p)
        p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
        with pytest.raises(errors.Corrupt):
            load_vectors(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "v.csv"
        save_vectors(VectorSet([[1.0, 2.0], [3.0, 4.0]]), p)
        p.write_text(p.read_text().replace("3.0,4.0", "3.0"))
        with pytest.raises(errors.Corrupt):
            load_vectors(p)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "v.csv"
        p.write_text("1.0,2.0\n")
        with pytest.raises(errors.Corrupt):
            load_vectors(p)


class TestModel:
    @pytest.mark.parametrize("kernel", [KernelSpec.linear(), KernelSpec.rbf(81.0), KernelSpec.polynomial(3)])
    def test_predict_bit_exact(self, tmp_path, rng, kernel):
        X = rng.standard_normal((40, 6)) * 0.2
        y = np.where(X[:, 0] + 0.3 * X[:, 1] > 0, 1, -1)
        m = train(TrainingSet(X, y), kernel, 34.0, SolverConfig(tol=1e-4))
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        Q = rng.standard_normal((10, 6)) * 0.2
        assert back.decision_function(Q).tobytes() == m.decision_function(Q).tobytes()
        assert back.kernel == m.kernel and back.config == m.config
        assert back.dual_objective == m.dual_objective and back.bias == m.bias

    def test_truncated(self, tmp_path):
        m = train(TrainingSet([[-1.0], [1.0]], [-1, 1]), KernelSpec.linear(), 1.0)
        p = tmp_path / "m.json"
        save_model(m, p)
        p.write_text(p.read_text()[: len(p.read_text()) // 2])
        with pytest.raises(errors.Corrupt):
            load_model(p)

    def test_kind_mismatch(self, tmp_path):
        save_key(SecretKey(1, Scheme.PERMUTATION, 2), tmp_path / "k.json")
        with pytest.raises(errors.KindMismatch):
            load_model(tmp_path / "k.json")


def test_bank_round_trip(tmp_path):
    ds = make_identities(3, 6, 4, dim=8, seed=3)
    keys = assign_keys(ds.ids, 2, "permutation", 8, 1)
    bank = enroll(ds.train, keys, KernelSpec.rbf(81.0), 34.0)
    save_bank(bank, tmp_path / "b.json")
    back = load_bank(tmp_path / "b.json")
    assert back.ids == bank.ids and back.key_fingerprints == bank.key_fingerprints
    assert back.kernel == bank.kernel and back.C == bank.C
    for i in bank.ids:
        q = ds.query[i]
        assert back.scores(i, q).tobytes() == bank.scores(i, q).tobytes()


class TestReport:
    def test_round_trip(self, tmp_path, rng):
        r = report_from_scores({1: rng.normal(1, 1, 9), 2: rng.normal(1, 1, 9)},
                               {1: rng.normal(-1, 1, 13), 2: rng.normal(-1, 1, 13)})
        csv_path, json_path = save_report(r, tmp_path / "rep")
        assert csv_path.read_text().splitlines()[0] == "tau,far,frr"
        back = load_report(json_path)
        for name in ("thresholds", "far", "frr"):
            assert getattr(back, name).tobytes() == getattr(r, name).tobytes()
        assert (back.eer, back.eer_threshold, back.eer_interpolated) == (r.eer, r.eer_threshold, r.eer_interpolated)
        assert back.n_genuine == r.n_genuine and back.n_impostor == r.n_impostor
        assert csv_path.read_text().splitlines()[1].startswith("-inf,")

    def test_far_only(self, tmp_path):
        r = report_from_scores(None, {1: [0.1, 0.2]})
        _, j = save_report(r, tmp_path / "att")
        back = load_report(j)
        assert back.frr is None and back.eer is None
        assert back.far.tolist() == r.far.tolist()

    def test_version_999(self, tmp_path):
        _, j = save_report(report_from_scores({1: [1.0]}, {1: [0.0]}), tmp_path / "r")
        bump_version(j)
        with pytest.raises(errors.VersionMismatch):
            load_report(j)

    def test_truncated_curve(self, tmp_path):
        c, j = save_report(report_from_scores({1: [1.0]}, {1: [0.0]}), tmp_path / "r")
        c.write_text(c.read_text()[:-8])
        with pytest.raises(errors.Corrupt):
            load_report(j)


class TestManifest:
    def test_round_trip_relative_paths(self, tmp_path):
        m = Manifest(4, [ManifestEntry(1, "v/1_train.csv", "v/1_query.csv", "k/1.json"),
                         ManifestEntry(2, train_images=["a.pgm"], query_images=["b.pgm"])],
                     attacker=ManifestEntry(0, query="v/att.csv"), key_condition=2,
                     block=(2, 2), crop=(4, 4))
        save_manifest(m, tmp_path / "sub" / "manifest.json")
        back = load_manifest(tmp_path / "sub" / "manifest.json")
        assert back.identities == m.identities and back.attacker == m.attacker
        assert back.block == (2, 2) and back.crop == (4, 4) and back.key_condition == 2
        assert back.path("v/1_train.csv") == (tmp_path / "sub" / "v" / "1_train.csv").resolve()

    def test_duplicate_ids(self, tmp_path):
        save_manifest(Manifest(2, [ManifestEntry(1, "a"), ManifestEntry(1, "b")]), tmp_path / "m.json")
        with pytest.raises(errors.Corrupt):
            load_manifest(tmp_path / "m.json")

    def test_images_to_vectors(self, tmp_path, rng):
        imgs = [rng.integers(0, 256, (6, 5)).astype(np.uint8) for _ in range(2)]
        for n, im in enumerate(imgs):
            write_pgm(im, tmp_path / f"{n}.pgm")
        m = Manifest(4, [ManifestEntry(1, train_images=["0.pgm", "1.pgm"])], block=(2, 2), crop=(4, 4))
        save_manifest(m, tmp_path / "m.json")
        m = load_manifest(tmp_path / "m.json")
        vs = manifest_vectors(m, m.identities[0], "train")
        assert vs.values.shape == (2, 4)
        assert vs.values[0, 0] == imgs[0][1:3, 0:2].mean()

    def test_dim_check(self, tmp_path):
        save_vectors(VectorSet(np.ones((2, 3))), tmp_path / "v.csv")
        m = Manifest(4, [ManifestEntry(1, "v.csv")], base=tmp_path)
        with pytest.raises(errors.Corrupt):
            manifest_vectors(m, m.identities[0], "train")


class TestPgm:
    def test_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, (7, 3)).astype(np.uint8)
        write_pgm(img, tmp_path / "a.pgm")
        assert np.array_equal(read_pgm(tmp_path / "a.pgm"), img)

    def test_comment_in_header(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
        assert read_pgm(tmp_path / "c.pgm").tolist() == [[1, 2]]

    def test_truncated(self, tmp_path):
        (tmp_path / "t.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x01")
        with pytest.raises(errors.Corrupt):
            read_pgm(tmp_path / "t.pgm")

    def test_ascii_pgm_rejected(self, tmp_path):
        (tmp_path / "a.pgm").write_bytes(b"P2\n1 1\n255\n7\n")
        with pytest.raises(errors.Corrupt):
            read_pgm(tmp_path / "a.pgm")

    def test_16_bit_rejected(self, tmp_path):
        (tmp_path / "w.pgm").write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(errors.Corrupt):
            read_pgm(tmp_path / "w.pgm")
