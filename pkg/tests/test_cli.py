import csv
import json
import os

import numpy as np
import pytest

from roacert.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def trained(workdir):
    model = str(workdir / "vdp.model")
    rc = main(["train", "--system", "vanderpol_reverse", "--hidden", "16",
               "--grid", "10", "--epochs", "5", "--seed", "0",
               "--out-dir", str(workdir), "--out", model])
    assert rc == 0
    return model


@pytest.fixture(scope="module")
def verified(workdir, trained):
    report = str(workdir / "vdp.report.csv")
    summary = str(workdir / "vdp.summary.json")
    rc = main(["verify", "--model", trained, "--out-dir", str(workdir),
               "--report", report, "--summary", summary])
    assert rc == 0
    return report, summary


def test_systems_lists_builtins(capsys):
    assert main(["systems"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "vanderpol_reverse" in out
    assert "quartic_interaction" in out


def test_train_outputs_exist(workdir, trained):
    assert os.path.exists(trained)
    assert os.path.exists(trained + ".log.csv")
    manifest = json.loads((workdir / "run_manifest.json").read_text())
    assert all(os.path.exists(p) for p in manifest["files"].values())
    with open(trained + ".log.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6  # epochs 0..5
    assert {"epoch", "smooth_loss", "hard_cardinality"} <= set(rows[0])


def test_train_deterministic_model_bytes(workdir):
    paths = []
    for tag in ("a", "b"):
        p = str(workdir / f"det_{tag}.model")
        rc = main(["train", "--system", "vanderpol_reverse", "--hidden", "8",
                   "--grid", "8", "--epochs", "3", "--seed", "5",
                   "--out-dir", str(workdir), "--out", p])
        assert rc == 0
        paths.append(p)
    assert open(paths[0], "rb").read() == open(paths[1], "rb").read()


def test_verify_outputs(workdir, verified):
    report, summary = verified
    doc = json.loads(open(summary).read())
    counts = doc["counts"]
    assert counts["certified"] >= 0
    assert counts["grid"] == 100
    assert doc["delta_sat"] == pytest.approx(1e-6 * 0.6)
    with open(report, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 100
    certified = sum(int(r["certified"]) for r in rows)
    assert certified == counts["certified"]
    # certified is a subset of members
    for r in rows:
        if int(r["certified"]):
            assert int(r["member_before"]) == 1


def test_verify_eps_clamp_warning(workdir, trained, capsys):
    rc = main(["verify", "--model", trained, "--eps", "1.0",
               "--out-dir", str(workdir),
               "--report", str(workdir / "clamp.report.csv"),
               "--summary", str(workdir / "clamp.summary.json")])
    assert rc == 0
    assert "clamping" in capsys.readouterr().out


def test_baseline_quadratic_and_optimized(workdir):
    certs = {}
    for kind in ("quadratic", "optimized"):
        rc = main(["baseline", "--system", "vanderpol_reverse",
                   "--kind", kind, "--epochs", "40", "--grid", "10",
                   "--out-dir", str(workdir)])
        assert rc == 0
        summary = workdir / f"vanderpol_reverse.{kind}.summary.json"
        certs[kind] = json.loads(summary.read_text())["counts"]["certified"]
    assert certs["quadratic"] > 0
    assert certs["optimized"] >= certs["quadratic"]


def test_report_figures(workdir, trained, verified):
    report, _ = verified
    rc = main(["report", "--model", trained, "--report", report,
               "--res", "40", "--out-dir", str(workdir),
               "--quadratic-model",
               str(workdir / "vanderpol_reverse.quadratic.model"),
               "--quadratic-summary",
               str(workdir / "vanderpol_reverse.quadratic.summary.json")])
    assert rc == 0
    for stem in ("V", "Vdot", "roa"):
        svg = (workdir / f"vanderpol_reverse_{stem}.svg").read_text()
        assert svg.startswith("<svg")
        assert "vanderpol_reverse" in svg
    fields = workdir / "vanderpol_reverse_fields.csv"
    with open(fields, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40 * 40
    # dumped fields match the model exactly at a spot-check point
    from roacert.lyapunov import load_model
    cand, _ = load_model(trained)
    r = rows[137]
    x = np.array([float(r["x1"]), float(r["x2"])])
    assert float(r["V"]) == pytest.approx(cand.V(x), rel=1e-12)


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["train"])  # missing --system
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--system", "vanderpol_reverse", "--hidden", "0"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["baseline", "--system", "vanderpol_reverse",
              "--kind", "cubic"])
    assert exc.value.code == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    missing = str(tmp_path / "nope.model")
    assert main(["verify", "--model", missing]) == 1
    assert "error:" in capsys.readouterr().err


def test_train_custom_config_file(tmp_path):
    cfg = tmp_path / "sys.conf"
    cfg.write_text('name = "lin"\nstates = ["x1", "x2"]\n'
                   'f = ["-x1", "-x2"]\ndomain = [[-1, 1], [-1, 1]]\n')
    rc = main(["train", "--system", str(cfg), "--hidden", "4", "--grid", "6",
               "--epochs", "2", "--out-dir", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "lin.model").exists()
