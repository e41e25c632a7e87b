import json
import subprocess
import sys

import pytest

from coopsci.cli import AXIS_FILES, MANIFEST, REPORT_ROWS, main
from coopsci.montecarlo import SIGMA_LABELS


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


class TestRun:
    def test_byte_identical(self, tmp_path, capsys):
        for name in ("a.csv", "b.csv"):
            assert main(["run", "--config", "nominal", "--seed", "7", "--trace-out", str(tmp_path / name)]) == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        out = kv(capsys.readouterr().out)
        assert float(out["mean_error_m"]) > 0 and float(out["max_error_m"]) >= float(out["mean_error_m"])

    def test_epochs_zero(self, tmp_path, capsys):
        assert main(["run", "--epochs", "0", "--trace-out", str(tmp_path / "t.csv")]) == 2
        assert "epochs must be > 0" in capsys.readouterr().err

    def test_noiseless(self, tmp_path, capsys):
        assert main(["run", "--config", "noiseless", "--trace-out", str(tmp_path / "t.csv")]) == 0
        assert float(kv(capsys.readouterr().out)["mean_error_m"]) < 1e-6

    def test_bad_config_file(self, tmp_path, capsys):
        p = tmp_path / "bad.yaml"
        p.write_text("scenario:\n  epochs: 10\n  bogus: 1\n")
        assert main(["run", "--config", str(p)]) == 2
        assert "scenario.bogus (line 3)" in capsys.readouterr().err

    def test_overrides(self, tmp_path, capsys):
        t = tmp_path / "t.csv"
        args = ["run", "--seed", "3", "--trace-out", str(t)]
        assert main(args) == 0
        base = kv(capsys.readouterr().out)
        assert main(args + ["--scenario.gps_period_r2=1", "--scenario.gps_dropout_r2", "0"]) == 0
        assert kv(capsys.readouterr().out) != base
        assert main(args + ["--scenario.nope=1"]) == 2
        assert main(args + ["--stray"]) == 2
        assert main(["run", "--seed", "notanint"]) == 2

    def test_runtime_failure(self, tmp_path, capsys, monkeypatch):
        import coopsci.cli as cli

        def boom(_):
            raise RuntimeError("disk on fire")

        monkeypatch.setattr(cli, "simulate", boom)
        assert main(["run", "--trace-out", str(tmp_path / "t.csv")]) == 1
        assert "disk on fire" in capsys.readouterr().err


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    root = tmp_path_factory.mktemp("sw")
    for w in (1, 4):
        assert main(["sweep", "--runs", "100", "--workers", str(w), "--seed", "5",
                     "--out-dir", str(root / f"w{w}")]) == 0
    return root


class TestSweepReport:
    def test_files_and_determinism(self, sweeps):
        a, b = sweeps / "w1", sweeps / "w4"
        for stem in AXIS_FILES.values():
            assert (a / f"{stem}.csv").read_bytes() == (b / f"{stem}.csv").read_bytes()
        assert (a / MANIFEST).read_bytes() == (b / MANIFEST).read_bytes()
        m = json.loads((a / MANIFEST).read_text())
        assert m["seed"] == 5 and m["config"]["sweep"]["num_runs"] == 100
        assert set(m["files"]) == {f"{s}.csv" for s in AXIS_FILES.values()} | {"runs.csv"}
        assert len(m["config_hash"]) == 64

    def test_report(self, sweeps, capsys):
        assert main(["report", "--out-dir", str(sweeps / "w1")]) == 0
        rep = sweeps / "w1" / "report"
        for stem in AXIS_FILES.values():
            table = (rep / f"table_{stem}.txt").read_text().splitlines()
            header = [c.strip() for c in table[1].split("|")]
            assert header[0] == "Metric"
            assert [r[0] for r in REPORT_ROWS] == [line.split("|")[0].strip() for line in table[3:]]
            assert (rep / f"plot_{stem}.csv").read_text().startswith("axis_value,mean_m,std_m\n")
        gps = (rep / "table_gps_noise.txt").read_text().splitlines()
        assert [c.strip() for c in gps[1].split("|")][1:] == list(SIGMA_LABELS)

    def test_report_missing(self, tmp_path):
        assert main(["report", "--out-dir", str(tmp_path)]) == 2

    def test_bad_workers(self, tmp_path):
        assert main(["sweep", "--runs", "2", "--workers", "0", "--out-dir", str(tmp_path)]) == 2


def test_console_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "coopsci.cli", "run", "--epochs", "0"], capture_output=True, text=True)
    assert r.returncode == 2 and "epochs" in r.stderr
    r = subprocess.run([sys.executable, "-m", "coopsci.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("coopsci")
