import filecmp
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ppsvm import cli
from ppsvm.persistence import (
    VectorSet,
    load_bank,
    load_key,
    load_manifest,
    load_report,
    load_vectors,
    save_vectors,
    write_pgm,
)
from ppsvm.transform import Scheme, key_fingerprint

GOLDEN = json.loads((Path(__file__).parent / "golden" / "demo_synth_default.json").read_text())


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    assert cli.main(["demo-synth", "--out-dir", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def rbf_bank(demo):
    bank = demo / "bank_rbf.json"
    assert cli.main(["train", "--manifest", str(demo / "manifest.json"), "--kernel", "rbf",
                     "--gamma", "81", "--C", "34", "--out", str(bank)]) == 0
    return bank


class TestKeygen:
    @pytest.mark.parametrize("scheme,dim,seed", [("permutation", 1216, 7),
                                                 ("signed-permutation", 64, 0),
                                                 ("gram-schmidt", 8, 2**64 - 1)])
    def test_round_trip(self, tmp_path, capsys, scheme, dim, seed):
        code, out, _ = run(capsys, "keygen", "--scheme", scheme, "--dim", dim, "--seed", seed,
                           "--out", tmp_path / "k.json")
        key = load_key(tmp_path / "k.json")
        assert code == 0 and key.scheme is Scheme(scheme) and key.dim == dim and key.seed == seed
        assert f"fingerprint={key_fingerprint(key)}" in out

    def test_random_seed_echoed(self, tmp_path, capsys):
        code, out, _ = run(capsys, "keygen", "--scheme", "permutation", "--dim", 4, "--out", tmp_path / "k.json")
        assert code == 0 and f"seed={load_key(tmp_path / 'k.json').seed} " in out

    def test_unknown_scheme(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["keygen", "--scheme", "rot13", "--dim", "4", "--out", str(tmp_path / "k.json")])
        assert exc.value.code == cli.EXIT_USAGE

    @pytest.mark.parametrize("argv", [["--scheme", "permutation", "--dim", "0"],
                                      ["--scheme", "permutation", "--dim", "4", "--seed", "-1"]])
    def test_bad_values_are_usage_errors(self, tmp_path, capsys, argv):
        code, _, _ = run(capsys, "keygen", *argv, "--out", tmp_path / "k.json")
        assert code == cli.EXIT_USAGE
        assert not (tmp_path / "k.json").exists()


class TestTrain:
    def test_rbf_echo(self, demo, tmp_path, capsys):
        code, out, _ = run(capsys, "train", "--manifest", demo / "manifest.json", "--kernel", "rbf",
                           "--gamma", 81, "--C", 34, "--out", tmp_path / "b.json")
        echo = json.loads(out.splitlines()[0])
        assert code == 0
        assert echo["kernel"] == {"kind": "rbf", "gamma": 81.0} and echo["C"] == 34.0
        assert echo["key_condition"] == 1

    def test_linear(self, demo, tmp_path, capsys):
        code, out, _ = run(capsys, "train", "--manifest", demo / "manifest.json", "--kernel", "linear",
                           "--C", 1, "--jobs", 2, "--out", tmp_path / "b.json")
        assert code == 0 and json.loads(out)["kernel"] == {"kind": "linear"}
        assert load_bank(tmp_path / "b.json").ids == list(range(1, 9))

    def test_missing_gamma(self, demo, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--manifest", demo / "manifest.json", "--kernel", "rbf",
                           "--C", 1, "--out", tmp_path / "b.json")
        assert code == cli.EXIT_USAGE and "--gamma" in err

    def test_nonconvergence_exit_code(self, demo, tmp_path, capsys, monkeypatch):
        from ppsvm import svm

        monkeypatch.setattr(svm.SolverConfig, "budget", lambda self, n: 1)
        code, _, err = run(capsys, "train", "--manifest", demo / "manifest.json", "--kernel", "linear",
                           "--C", 1, "--out", tmp_path / "b.json")
        assert code == cli.EXIT_NUMERICAL and "numerical" in err

    def test_missing_manifest(self, tmp_path, capsys):
        code, _, _ = run(capsys, "train", "--manifest", tmp_path / "nope.json", "--kernel", "linear",
                         "--C", 1, "--out", tmp_path / "b.json")
        assert code == cli.EXIT_DATA


class TestAuthenticate:
    def test_reject_above_max(self, demo, rbf_bank, capsys):
        args = ["authenticate", "--bank", rbf_bank, "--id", 1, "--query", demo / "vectors" / "id1_query.csv",
                "--key", demo / "keys" / "id1.json"]
        code, out, _ = run(capsys, *args, "--tau", 1e9)
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 16 and all(ln.startswith("reject score=") for ln in lines)
        code, out, _ = run(capsys, *args, "--tau=-inf")
        assert all(ln.startswith("accept") for ln in out.splitlines())

    def test_unknown_id(self, demo, rbf_bank, capsys):
        code, _, err = run(capsys, "authenticate", "--bank", rbf_bank, "--id", 99, "--query",
                           demo / "vectors" / "id1_query.csv", "--tau", 0)
        assert code == cli.EXIT_DATA and "99" in err


class TestEvaluate:
    def test_golden_eer(self, demo, rbf_bank, tmp_path, capsys):
        code, out, _ = run(capsys, "evaluate", "--bank", rbf_bank, "--manifest", demo / "manifest.json",
                           "--out", tmp_path / "eval")
        summary = json.loads(out)
        golden = GOLDEN["rbf_gamma81_C34"]
        assert code == 0 and summary["eer"] < 0.05
        assert summary["eer"] == pytest.approx(golden["eer"], abs=1e-12)
        assert summary["eer_threshold"] == pytest.approx(golden["eer_threshold"], abs=1e-9)
        assert (tmp_path / "eval.csv").read_text().startswith("tau,far,frr\n")

    def test_golden_linear(self, demo, tmp_path, capsys):
        cli.main(["train", "--manifest", str(demo / "manifest.json"), "--kernel", "linear", "--C", "1",
                  "--out", str(tmp_path / "b.json")])
        capsys.readouterr()
        code, out, _ = run(capsys, "evaluate", "--bank", tmp_path / "b.json", "--manifest",
                           demo / "manifest.json", "--out", tmp_path / "e")
        assert json.loads(out)["eer"] == pytest.approx(GOLDEN["linear_C1"]["eer"], abs=1e-12)

    def test_out_dir_from_environment(self, demo, rbf_bank, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
        code, _, _ = run(capsys, "evaluate", "--bank", rbf_bank, "--manifest", demo / "manifest.json")
        assert code == 0 and (tmp_path / "evaluate.json").exists()

    def test_no_out_anywhere(self, demo, rbf_bank, capsys, monkeypatch):
        monkeypatch.delenv(cli.OUT_DIR_ENV, raising=False)
        code, _, _ = run(capsys, "evaluate", "--bank", rbf_bank, "--manifest", demo / "manifest.json")
        assert code == cli.EXIT_USAGE


class TestAttackSim:
    @pytest.mark.parametrize("mode", ["key-leak", "image-leak"])
    def test_writes_far_only_report(self, demo, rbf_bank, tmp_path, capsys, mode):
        code, _, _ = run(capsys, "attack-sim", "--bank", rbf_bank, "--manifest", demo / "manifest.json",
                         "--mode", mode, "--out", tmp_path / "att")
        rows = (tmp_path / "att.csv").read_text().splitlines()
        assert code == 0 and rows[0] == "tau,far,frr" and rows[1].endswith(",")
        assert json.loads((tmp_path / "att.json").read_text())["far_only"] is True

    def test_image_leak_condition_1_is_genuine_access(self, demo, rbf_bank, tmp_path, capsys):
        # the condition-1 attacker holds the shared key, so image leak == genuine acceptance
        run(capsys, "attack-sim", "--bank", rbf_bank, "--manifest", demo / "manifest.json",
            "--mode", "image-leak", "--out", tmp_path / "att")
        run(capsys, "evaluate", "--bank", rbf_bank, "--manifest", demo / "manifest.json",
            "--out", tmp_path / "ev")
        att, ev = load_report(tmp_path / "att.json"), load_report(tmp_path / "ev.json")
        for tau in np.union1d(att.thresholds, ev.thresholds):
            assert att.far_at(tau) == pytest.approx(1.0 - ev.frr_at(tau), abs=1e-15)


class TestDemoSynth:
    def test_byte_identical(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "demo-synth", "--seed", 3, "--identities", 3, "--per-id", 6, "--dim", 8,
                       "--out-dir", tmp_path / name)[0] == 0
        cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
        files = [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()]
        assert len(files) == 3 * 3 + 3
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        assert not cmp.diff_files

    @pytest.mark.parametrize("condition,distinct", [(1, 1), (2, 4)])
    def test_key_condition_fingerprints(self, tmp_path, capsys, condition, distinct):
        run(capsys, "demo-synth", "--identities", 4, "--per-id", 4, "--dim", 8,
            "--key-condition", condition, "--out-dir", tmp_path)
        m = load_manifest(tmp_path / "manifest.json")
        fps = {key_fingerprint(load_key(m.path(e.key))) for e in m.identities}
        assert len(fps) == distinct and m.key_condition == condition

    def test_per_id_too_small(self, tmp_path, capsys):
        assert run(capsys, "demo-synth", "--per-id", 1, "--out-dir", tmp_path)[0] == cli.EXIT_USAGE


class TestClientSide:
    def test_extract_then_protect(self, tmp_path, capsys, rng):
        for n in range(3):
            write_pgm(rng.integers(0, 256, (192, 168)).astype(np.uint8), tmp_path / "img" / f"{n}.pgm")
        code, _, _ = run(capsys, "extract", "--images", tmp_path / "img", "--block", "5,5",
                         "--crop", "190,160", "--out", tmp_path / "f.csv")
        assert code == 0 and load_vectors(tmp_path / "f.csv").values.shape == (3, 1216)
        run(capsys, "keygen", "--scheme", "permutation", "--dim", 1216, "--seed", 7, "--out", tmp_path / "k.json")
        code, _, _ = run(capsys, "protect", "--key", tmp_path / "k.json", "--in", tmp_path / "f.csv",
                         "--out", tmp_path / "p.csv")
        p = load_vectors(tmp_path / "p.csv")
        raw = load_vectors(tmp_path / "f.csv").values
        assert code == 0 and p.key_fingerprint == key_fingerprint(load_key(tmp_path / "k.json"))
        assert np.allclose(np.linalg.norm(p.values, axis=1), np.linalg.norm(raw, axis=1), rtol=1e-12)
        # protecting twice is refused
        code, _, _ = run(capsys, "protect", "--key", tmp_path / "k.json", "--in", tmp_path / "p.csv",
                         "--out", tmp_path / "pp.csv")
        assert code == cli.EXIT_DATA

    def test_protect_dim_mismatch(self, tmp_path, capsys):
        save_vectors(VectorSet(np.ones((2, 3))), tmp_path / "v.csv")
        run(capsys, "keygen", "--scheme", "permutation", "--dim", 4, "--seed", 1, "--out", tmp_path / "k.json")
        code, _, _ = run(capsys, "protect", "--key", tmp_path / "k.json", "--in", tmp_path / "v.csv",
                         "--out", tmp_path / "o.csv")
        assert code == cli.EXIT_DATA

    def test_bad_block(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["extract", "--images", str(tmp_path), "--block", "5", "--out", str(tmp_path / "x")])
        assert exc.value.code == cli.EXIT_USAGE


DOCUMENTED = {
    "keygen": ["--scheme", "--dim", "--seed", "--out"],
    "extract": ["--images", "--block", "--crop", "--out"],
    "protect": ["--key", "--in", "--out"],
    "train": ["--manifest", "--kernel", "--gamma", "--degree", "--C", "--out"],
    "authenticate": ["--bank", "--id", "--query", "--tau"],
    "evaluate": ["--bank", "--manifest", "--out"],
    "attack-sim": ["--bank", "--manifest", "--mode", "--out"],
    "demo-synth": ["--identities", "--per-id", "--dim", "--separation", "--key-condition", "--seed", "--out-dir"],
}


@pytest.mark.parametrize("command", sorted(DOCUMENTED))
def test_help_lists_flags(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([command, "--help"])
    out = capsys.readouterr().out
    assert exc.value.code == 0
    for flag in DOCUMENTED[command]:
        assert flag in out


def test_unknown_command_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == cli.EXIT_USAGE


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ppsvm.cli", "keygen", "--scheme", "gram-schmidt",
                          "--dim", "3", "--seed", "1", "--out", str(tmp_path / "k.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "scheme=gram-schmidt" in res.stdout
