import json
import subprocess
import sys

import pytest

from spectral_perturb import cli
from spectral_perturb.coefficients import PRESETS
from spectral_perturb.geometry import DomainSpec

QUICK = ["--h", "0.03125", "--eps", "0.25", "0.125"]


def _config(tmp_path, **extra):
    data = {
        "schema": 1,
        "domain": DomainSpec.symmetric().to_dict(),
        "preset": {"preset": "laplacian"},
        "h": 1 / 32,
        "epsilon_schedule": [0.25, 0.125],
        "garding_trials": 50,
        **extra,
    }
    path = tmp_path / "study.json"
    path.write_text(json.dumps(data))
    return path


def test_presets_list(capsys):
    assert cli.main(["presets", "list"]) == 0
    assert capsys.readouterr().out.split() == list(PRESETS)


def test_presets_show(capsys):
    assert cli.main(["presets", "show", "lh_null_lagrangian"]) == 0
    assert json.loads(capsys.readouterr().out)["regime"] == "legendre_hadamard"
    assert cli.main(["presets", "show", "nope"]) == 1


def test_sweep_from_config(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", str(_config(tmp_path)), "--out", str(out), "--threads", "1"]) == 0
    for name in ("sweep.csv", "report.json", "convergence.gp", "records.jsonl", "summary.csv"):
        assert (out / name).is_file()
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("eps=") for line in lines) == 2
    assert any(line.startswith("fit a=") for line in lines)


def test_flags_override_config(tmp_path):
    out = tmp_path / "out"
    cfg = _config(tmp_path)
    assert cli.main(["sweep", "--config", str(cfg), "--eps", "0.25", "--k", "4", "--seed", "7",
                     "--out", str(out), "--threads", "1"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["epsilon_schedule"] == [0.25]
    assert report["config"]["k_max"] == 4 and report["config"]["seed"] == 7


def test_solve_misaligned(tmp_path, capsys):
    code = cli.main(["solve", "--preset", "lame_const", "--eps", "0.1", "--h", "0.03125", "--out", str(tmp_path)])
    assert code == 1
    assert "GridMisaligned" in capsys.readouterr().err


def test_solve_writes_pairs(tmp_path, capsys):
    code = cli.main(["solve", "--preset", "lame_const", "--eps", "0.25", "--h", "0.0625", "--k", "3",
                     "--out", str(tmp_path), "--export-matrices"])
    assert code == 0
    pairs = json.loads((tmp_path / "eigenpairs.json").read_text())
    assert len(pairs) == 3
    assert (tmp_path / "vector_3.txt").is_file()
    assert (tmp_path / "stiffness.coo").is_file() and (tmp_path / "mass.coo").is_file()
    assert capsys.readouterr().out.startswith("eps=0.25")


def test_solve_base_domain(tmp_path):
    assert cli.main(["solve", "--h", "0.0625", "--k", "2", "--out", str(tmp_path)]) == 0


def test_mesh(tmp_path):
    assert cli.main(["mesh", "--h", "0.0625", "--eps", "0.25", "--out", str(tmp_path)]) == 0
    mesh = json.loads((tmp_path / "mesh.json").read_text())
    assert set(mesh) == {"h", "vertices", "triangles", "interior_nodes", "labels"}


@pytest.mark.parametrize("argv", [[], ["bogus"], ["sweep", "--h", "abc"], ["presets"]])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 1


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["sweep", "--config", str(bad)]) == 1
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.json")]) == 1
    assert cli.main(["sweep", "--config", str(_config(tmp_path, schema=9))]) == 1


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    from spectral_perturb import study
    from spectral_perturb.errors import NoConvergence

    def boom(*a, **kw):
        raise NoConvergence("stalled")

    monkeypatch.setattr(study, "smallest_eigenpairs", boom)
    assert cli.main(["solve", "--h", "0.0625", "--out", str(tmp_path)]) == 2


def test_verification_failure_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, budgets={"reverse_holder": 1e-6})
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == 3
    assert "check failed: reverse_holder" in capsys.readouterr().err


def test_verify_enables_all_checks(tmp_path):
    cfg = _config(tmp_path, preset={"preset": "lame_const"}, caccioppoli_balls=5, korn_balls=5)
    assert cli.main(["verify", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == 0
    names = {json.loads(l)["name"] for l in (tmp_path / "o" / "records.jsonl").read_text().splitlines()}
    assert "corkscrew" in names and "garding" in names


def test_threads_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.default_threads() == 3
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(cli.ConfigError):
        cli.default_threads()


def test_cli_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    for d in ("a", "b"):
        assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    for name in ("sweep.csv", "report.json", "records.jsonl", "summary.csv", "convergence.gp"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize("sub", ["mesh", "solve", "sweep", "verify"])
def test_help_documents_flags_and_schema(sub):
    proc = subprocess.run([sys.executable, "-m", "spectral_perturb", sub, "--help"],
                          capture_output=True, text=True, check=True)
    for flag in ("--config", "--h", "--eps", "--k", "--preset", "--seed", "--out", "--threads"):
        assert flag in proc.stdout
    assert '"schema": 1' in proc.stdout
