import subprocess
import sys

import pytest

from acoustic_mac.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main

SCENARIO = """\
scheme = "proposed"
[traffic]
nodes_per_slot = 3
entry = 1
horizon_s = 4
"""


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(SCENARIO)
    return p


def test_size_cluster_overshoot(capsys):
    assert main(["size-cluster", "--qf-max", "0.1", "--pf", "0.01"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == (
        "closed-form: 11 (Q_f=0.1047, violates); search: 10 (Q_f=0.0956, satisfies)"
    )


def test_size_cluster_agreement(capsys):
    main(["size-cluster", "--qf-max", "0.19", "--pf", "0.1"])
    out = capsys.readouterr().out
    assert out.startswith("closed-form: 2 ") and "search: 2 " in out


def test_size_cluster_detection_check(capsys):
    main(["size-cluster", "--qf-max", "0.1", "--pf", "0.01", "--pd", "0.6,0.5", "--qd-min", "0.9"])
    out = capsys.readouterr().out.splitlines()[1]
    assert out == "2 members: Q_d=0.8000 (violates Q_d>=0.9); Q_f=0.0199 (satisfies)"


def test_size_cluster_invalid_probability(capsys):
    assert main(["size-cluster", "--qf-max", "0.1", "--pf", "1.0"]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_validate(scenario, capsys):
    assert main(["validate", "--scenario", str(scenario)]) == EXIT_OK
    assert capsys.readouterr().out.startswith("ok: scheme=proposed nodes=45 utilization=0.3600")


def test_validate_lists_all_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('scheme = "ieee802154-cap"\nextra = 1\n')
    assert main(["validate", "--scenario", str(bad)]) == EXIT_CONFIG
    err = capsys.readouterr().err.splitlines()
    assert len(err) == 2 and all(line.startswith("config error: ") for line in err)


def test_run_outputs_are_reproducible(scenario, tmp_path):
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["run", "--scenario", str(scenario), "--out", str(d), "--trace", "--queue-trace"]) == EXIT_OK
        outs.append(d)
    for f in ("run.csv", "delay.dat", "energy.dat", "trace.txt", "queue_trace.txt"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    assert (outs[0] / "run.csv").read_text().startswith("scheme,total_nodes,")


def test_run_seed_override(scenario, capsys):
    main(["run", "--scenario", str(scenario), "--seed", "2"])
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert row[8] == "2"


def test_runtime_error_code(scenario, monkeypatch, capsys):
    import acoustic_mac.cli as cli

    def boom(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "run", boom)
    assert main(["run", "--scenario", str(scenario)]) == EXIT_RUNTIME
    assert "kaboom" in capsys.readouterr().err


def test_sweep_writes_files(tmp_path):
    spec = tmp_path / "sweep.toml"
    spec.write_text('schemes = ["proposed", "ieee802154-cfp"]\nnodes_per_slot = [3, 6]\nhorizon_s = 2\n')
    out = tmp_path / "out"
    assert main(["sweep", "--spec", str(spec), "--out", str(out)]) == EXIT_OK
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2 * 2
    assert (out / "delay.dat").exists() and (out / "energy.dat").exists()


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "acoustic_mac", "run"], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "--scenario" in proc.stderr
