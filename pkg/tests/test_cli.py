import json

import pytest

from metashield.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main, trial_seed
from metashield.config import ENV_VAR, ToolkitConfig, load


def run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(autouse=True)
def no_env_config(monkeypatch):
    monkeypatch.delenv(ENV_VAR, raising=False)


class TestDesign:
    def test_coupled_three_units(self, tmp_path):
        out = tmp_path / "design.json"
        code = run(["design", "--band", "16000:40000", "--tc-target", 0.15, "--coupling", "on",
                    "--out-config", out, "--out-csv", tmp_path / "tc.csv"])
        assert code == EXIT_OK
        assert len(load(out).array.units) == 3
        lines = (tmp_path / "tc.csv").read_text().splitlines()
        assert lines[0] == "f_hz,tc" and len(lines) == 2402

    def test_uncoupled_many_units(self, tmp_path):
        out = tmp_path / "design.json"
        code = run(["design", "--coupling", "off", "--tc-target", 0.2, "--out-config", out,
                    "--out-csv", tmp_path / "tc.csv"])
        assert code == EXIT_OK and len(load(out).array.units) >= 13

    def test_unreachable_target(self, tmp_path):
        code = run(["design", "--tc-target", 0.01, "--max-units", 2, "--out-config", tmp_path / "d.json",
                    "--out-csv", tmp_path / "tc.csv"])
        assert code == EXIT_DOMAIN

    @pytest.mark.parametrize(
        "flags",
        [["--band", "40000:16000"], ["--band", "abc"], ["--coupling", "maybe"], ["--tc-target", 1.5], ["--bogus"]],
    )
    def test_bad_flags(self, tmp_path, flags):
        assert run(["design", *flags, "--out-config", tmp_path / "d.json", "--out-csv", tmp_path / "c.csv"]) == EXIT_USAGE

    def test_no_subcommand(self):
        assert run([]) == EXIT_USAGE


class TestSimulateFilter:
    def test_array_csv(self, tmp_path):
        out = tmp_path / "f.csv"
        assert run(["simulate-filter", "--f-min", 16000, "--f-max", 40000, "--points", 2401, "--out", out]) == EXIT_OK
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        assert max(float(tc) for _, tc in rows) <= 0.15

    def test_missing_config(self, tmp_path):
        assert run(["--config", tmp_path / "nope.json", "simulate-filter", "--out", tmp_path / "f.csv"]) == EXIT_USAGE

    def test_env_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_VAR, str(tmp_path / "nope.json"))
        assert run(["simulate-filter", "--out", tmp_path / "f.csv"]) == EXIT_USAGE


class TestSimulateAttack:
    @pytest.mark.parametrize("defense, expected", [("mobile", 1.0), ("none", 0.0)])
    def test_inaudible_campaign(self, tmp_path, defense, expected):
        out = tmp_path / "r.json"
        code = run(["simulate-attack", "--kind", "inaudible", "--trials", 30, "--defense", defense,
                    "--words", "open,the,door", "--out", out])
        assert code == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["psr"] == expected and rep["trial_count"] == 30

    def test_same_seed_byte_identical(self, tmp_path):
        args = ["simulate-attack", "--kind", "adversarial", "--trials", 3, "--defense", "mobile", "--seed", 5,
                "--words", "a,b"]
        assert run([*args, "--out", tmp_path / "a.json"]) == EXIT_OK
        assert run([*args, "--out", tmp_path / "b.json"]) == EXIT_OK
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_dump_and_csv(self, tmp_path):
        code = run(["simulate-attack", "--kind", "clean", "--trials", 2, "--words", "hi", "--out", tmp_path / "r.json",
                    "--csv", tmp_path / "r.csv", "--dump-dir", tmp_path / "dump"])
        assert code == EXIT_OK
        manifest = json.loads((tmp_path / "dump" / "manifest.json").read_text())
        assert len(manifest) == 2
        assert all((tmp_path / "dump" / m["captured"]).exists() for m in manifest)
        assert (tmp_path / "r.csv").read_text().startswith("metric,value")

    @pytest.mark.parametrize(
        "flags",
        [["--kind", "loud"], ["--kind", "inaudible", "--carrier", 50000], ["--kind", "adversarial", "--snr", 3],
         ["--kind", "clean", "--trials", 0], ["--kind", "clean", "--input", "missing.wav"]],
    )
    def test_invalid_spec(self, tmp_path, flags):
        assert run(["simulate-attack", *flags, "--out", tmp_path / "r.json"]) == EXIT_USAGE


class TestEvaluate:
    def test_mobile(self, tmp_path):
        out = tmp_path / "e.json"
        code = run(["evaluate", "--defense", "mobile", "--trials", 6, "--commands", 2, "--out", out])
        assert code == EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["inaudible"]["psr"] == 1.0 and rep["clean"]["crr"] == 1.0


class TestExportStl:
    def test_writes_mesh_and_sidecar(self, tmp_path):
        out = tmp_path / "m.stl"
        assert run(["export-stl", "--preset", "speaker", "--out", out]) == EXIT_OK
        assert out.exists() and json.loads(out.with_suffix(".json").read_text())["preset"] == "speaker"

    def test_negative_spacing(self, tmp_path):
        assert run(["export-stl", "--spacing-mm", -0.1, "--out", tmp_path / "m.stl"]) == EXIT_DOMAIN

    def test_unwritable(self, tmp_path):
        assert run(["export-stl", "--out", tmp_path / "no" / "m.stl"]) == EXIT_USAGE


class TestCalibrate:
    def test_reproduces_defaults(self, tmp_path):
        out = tmp_path / "cal.json"
        assert run(["calibrate", "--out", out]) == EXIT_OK
        assert load(out) == ToolkitConfig()

    def test_impossible_band(self, tmp_path, capsys):
        targets = tmp_path / "t.json"
        targets.write_text(json.dumps({"band_tc_max": 0.001}))
        assert run(["calibrate", "--targets", targets, "--out", tmp_path / "cal.json"]) == EXIT_DOMAIN
        assert "band_tc_max" in capsys.readouterr().err

    def test_unknown_target_key(self, tmp_path):
        targets = tmp_path / "t.json"
        targets.write_text(json.dumps({"band": [1, 2]}))
        assert run(["calibrate", "--targets", targets, "--out", tmp_path / "cal.json"]) == EXIT_USAGE


class TestSeeds:
    def test_counter_derivation(self):
        seeds = [trial_seed(0, i) for i in range(100)]
        assert len(set(seeds)) == 100 and seeds == [trial_seed(0, i) for i in range(100)]
        assert trial_seed(1, 0) != trial_seed(0, 0)
