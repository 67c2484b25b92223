import csv
import shutil
from fractions import Fraction
from importlib.resources import files
from pathlib import Path

import pytest

from markov_cocycle.cli import main
from markov_cocycle.config import ConfigError, load_config, parse_config
from markov_cocycle.report import HarnessResult, emit_report

DATA = Path(str(files("markov_cocycle") / "data"))

BASE = """[experiment]
harness = theorem-a
[driving]
kind = cycle
n = 2
[cocycle]
matrices = period2.csv
"""


def parse(text):
    return parse_config(text, "t.cfg", DATA)


class TestConfig:
    def test_minimal(self):
        cfg = parse(BASE)
        assert cfg.harness == "theorem-a" and cfg.default_tol == 1e-9
        assert cfg.matrices == DATA / "period2.csv"

    @pytest.mark.parametrize("text,line,col,needle", [
        (BASE + "[tolerances]\ntol = abc\n", 9, 7, "bad value"),
        (BASE + "[tolerances]\ntol = -1\n", 9, 7, "positive"),
        (BASE + "bogus = 1\n", 8, 9, "unknown key"),
        (BASE.replace("n = 2", "n = 0"), 5, 5, "positive n"),
        (BASE + "ladder = 8, 4\n", 8, 10, "strictly increasing"),
        (BASE.replace("theorem-a", "nope"), 2, 11, "harness"),
        (BASE + "[extra]\n", 8, 1, "unknown section"),
        (BASE.replace("period2.csv", "missing.csv"), 7, 12, "not found"),
        (BASE + "maps = affine.txt\n", 6, 1, "exactly one"),
    ])
    def test_errors_carry_position(self, text, line, col, needle):
        with pytest.raises(ConfigError) as e:
            parse(text)
        assert (e.value.line, e.value.column) == (line, col)
        assert needle in e.value.message
        assert str(e.value).startswith(f"t.cfg:{line}:{col}: error:")

    def test_parse_error(self):
        with pytest.raises(ConfigError) as e:
            parse("key = 1\n")
        assert e.value.line == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.cfg")

    def test_bundled_configs_load(self):
        for p in sorted(DATA.glob("*.cfg")):
            load_config(p)


def run(tmp_path, name, *extra):
    out = tmp_path / name
    return main(["--config", str(DATA / f"{name}.cfg"), "--out", str(out), *extra]), out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestCLI:
    def test_period2_golden(self, tmp_path, capsys):
        code, out = run(tmp_path, "period2")
        assert code == 0
        assert "status: pass" in capsys.readouterr().out
        golden = {}
        for r in csv.DictReader(ln for ln in open(DATA / "period2_golden.csv")
                                if not ln.startswith("#")):
            golden[(r["fiber"], r["cell"])] = float(Fraction(int(r["numerator"]),
                                                             int(r["denominator"])))
        got = rows(out / "densities.csv")
        assert len(got) == 4
        for r in got:
            ref = golden[(r["fiber"], r["cell"])]
            for key in ("cesaro", "surrogate", "lift"):
                assert abs(float(r[key]) - ref) <= 1e-10

    def test_reruns_are_byte_identical(self, tmp_path):
        a = run(tmp_path / "a", "period2")[1]
        b = run(tmp_path / "b", "period2")[1]
        names = sorted(p.name for p in a.iterdir())
        assert names == sorted(p.name for p in b.iterdir())
        for n in names:
            assert (a / n).read_bytes() == (b / n).read_bytes()

    def test_met_and_skew(self, tmp_path):
        assert run(tmp_path, "met_rotation")[0] == 0
        assert run(tmp_path, "met_period2")[0] == 0
        code, out = run(tmp_path, "skew")
        assert code == 0
        assert [r["status"] for r in rows(out / "skew.csv")] == ["pass"] * 3

    def test_fibered_report(self, tmp_path):
        code, out = run(tmp_path, "affine_report")
        assert code == 0 and (out / "distortion.csv").exists()

    def test_lsv_ladder_fails(self, tmp_path):
        code, out = run(tmp_path, "lsv_ladder")
        assert code == 2
        for d in (64, 256, 1024):
            assert (out / f"ui_d{d}.csv").exists()
        uni = rows(out / "uniformity.csv")
        assert [int(r["resolution"]) for r in uni] == [64, 256, 1024]
        assert "CONTRADICTION" not in (out / "summary.txt").read_text()

    def test_inconclusive_exit(self, tmp_path):
        shutil.copy(DATA / "period2.csv", tmp_path)
        cfg = tmp_path / "b.cfg"
        cfg.write_text("[experiment]\nharness = theorem-a\n[driving]\nkind = bernoulli\n"
                       "alphabet = 2\nprobs = 0.5, 0.5\nfibers = 0, 1\n"
                       "[cocycle]\nmatrices = period2.csv\n[tolerances]\ntol = 1e-6\n")
        assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_config_error_exit(self, tmp_path, capsys):
        shutil.copy(DATA / "period2.csv", tmp_path)
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(BASE + "[tolerances]\ntol = zero\n")
        assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert f"{cfg}:9:7: error:" in capsys.readouterr().err

    def test_bad_jobs(self, tmp_path):
        assert run(tmp_path, "period2", "--jobs", "0")[0] == 1


def test_empty_report(tmp_path):
    written = emit_report([HarnessResult("empty", "pass")], tmp_path / "e")
    assert [p.name for p in written] == ["summary.txt"]
    assert (tmp_path / "e" / "summary.txt").read_text().startswith("status: pass\n")


def test_lift_harness(tmp_path):
    shutil.copy(DATA / "period2.csv", tmp_path)
    cfg = tmp_path / "l.cfg"
    cfg.write_text(BASE.replace("theorem-a", "lift") + "[tolerances]\ntol = 1e-12\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = {r["key"]: r["value"] for r in rows(tmp_path / "o" / "lift_report.csv")}
    assert rep["condition1"] == "pass" and rep["sweep_trivial"] == "true"
    assert abs(float(rep["fiber_mass_0"]) - 1) < 1e-10
