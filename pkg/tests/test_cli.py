"""End-to-end runs of the command-line interface."""
import json
import os

import pytest

from blockforge.cli import main
from blockforge.model import make_instance
from blockforge.mps import read_mps_file, write_mps
from blockforge.pipeline import ENV_PREFIX


@pytest.fixture(autouse=True)
def scrub_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith(ENV_PREFIX):
            monkeypatch.delenv(key)


def run(*argv):
    return main([str(a) for a in argv])


def test_genbench_writes_corpus(tmp_path):
    out = tmp_path / "bench"
    assert run("--seed", 3, "--out", out, "genbench", "--family",
               "bd-knapsack", "--k", 3, "--count", 2, "--width", 5) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "bd-knapsack-3-0.mps", "bd-knapsack-3-0.truth.json",
        "bd-knapsack-3-1.mps", "bd-knapsack-3-1.truth.json",
        "manifest.json",
    ]


def test_whole_pipeline(tmp_path, capsys):
    bench = tmp_path / "bench"
    work = tmp_path / "work"
    assert run("--seed", 8, "--out", bench, "genbench", "--family",
               "bd-knapsack", "--k", 3, "--count", 2, "--width", 5) == 0
    sources = sorted(str(p) for p in bench.glob("*.mps"))

    assert run("--out", work, "decompose", *sources) == 0
    assert run("--out", work, "buildlib", *sources) == 0
    lib = work / "library.json.gz"
    assert lib.exists()

    assert run("--seed", 8, "--out", work, "generate", *sources,
               "--lib", lib, "--count", 3) == 0
    children = sorted(work.glob("gen-8-*.mps"))
    assert len(children) == 3

    assert run("--out", work, "stats", "--corpus-a", *sources,
               "--corpus-b", *(str(c) for c in children)) == 0
    assert (work / "similarity.json").exists()
    assert "score" in capsys.readouterr().out

    assert run("--out", work, "visualize", sources[0]) == 0
    stem = os.path.basename(sources[0])[:-4]
    assert (work / f"{stem}.tinted.ppm").exists()

    assert run("--out", work, "feascheck", *sources) == 0
    feas = json.loads((work / "feasibility.json").read_text())
    assert feas["feasible_ratio"] == 1.0

    assert run("--seed", 8, "--out", work, "harden", *sources,
               "--lib", lib, "--iterations", 1) == 0
    traj = json.loads((work / "trajectory.json").read_text())
    assert traj["iterations"] == 1
    assert traj["mean_hardness"][-1] >= traj["mean_hardness"][0]
    assert read_mps_file(work / "hard-8-0.mps").name == "hard-8-0"


def test_detect_db_flag_reaches_detector(tmp_path):
    bench = tmp_path / "bench"
    assert run("--seed", 1, "--out", bench, "genbench", "--family",
               "dbbd-assignment", "--k", 3, "--count", 1) == 0
    src = next(bench.glob("*.mps"))
    assert run("--out", tmp_path / "w", "--detect-db", "decompose", src) == 0
    doc = json.loads(
        (tmp_path / "w" / f"{src.stem}.partition.json").read_text())
    assert doc["params"]["detect_db"] is True
    assert any(u["db_rows"] for u in doc["units"])


def test_config_file_flag_and_cli_precedence(tmp_path):
    conf = tmp_path / "bf.toml"
    conf.write_text(f'seed = 4\nout = "{tmp_path / "confout"}"\n')
    assert run("--config", conf, "genbench", "--family", "bd-knapsack",
               "--k", 3, "--count", 1, "--width", 5) == 0
    assert (tmp_path / "confout" / "bd-knapsack-4-0.mps").exists()
    # explicit flag beats the file
    assert run("--config", conf, "--seed", 6, "genbench", "--family",
               "bd-knapsack", "--k", 3, "--count", 1, "--width", 5) == 0
    assert (tmp_path / "confout" / "bd-knapsack-6-0.mps").exists()


def test_budget_flag_limits_oracle(tmp_path):
    inst = make_instance(
        "slow", [0.0] * 12,
        [(0, j, 1.0) for j in range(12)], ["="], [5.5])
    src = tmp_path / "slow.mps"
    src.write_bytes(write_mps(inst))
    assert run("--out", tmp_path / "o", "feascheck", src, "--budget", 7) == 0
    doc = json.loads((tmp_path / "o" / "feasibility.json").read_text())
    assert doc["results"][0]["status"] == "unknown"
    assert doc["results"][0]["nodes"] == 7


def test_bad_eta_reports_and_exits_nonzero(tmp_path, capsys):
    code = run("--eta", 2.0, "--out", tmp_path, "decompose", "whatever.mps")
    assert code == 1
    err = capsys.readouterr().err
    assert err.startswith("blockforge decompose: error:")
    assert "eta" in err


def test_missing_input_reports_and_exits_nonzero(tmp_path, capsys):
    code = run("--out", tmp_path, "decompose", tmp_path / "missing.mps")
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_command_rejected_by_parser():
    with pytest.raises(SystemExit):
        main(["frobnicate"])
