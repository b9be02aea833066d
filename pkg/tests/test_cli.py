import json

import pytest

from strongcsp.cli import main


@pytest.fixture
def ug_file(tmp_path):
    path = tmp_path / "ug.json"
    assert main(["gen", "--family", "ug", "--n", "80", "--d", "6", "--rng", "1", "--out", str(path)]) == 0
    return path


def test_gen_writes_instance(ug_file):
    d = json.loads(ug_file.read_text())
    assert d["schema"] == "strongcsp/instance" and d["family"] == "ug"


def test_gen_bad_spec():
    assert main(["gen", "--n", "10", "--d", "12", "--out", "/dev/null"]) == 2
    assert main(["gen", "--family", "tsp"]) == 2


def test_solve_ug(ug_file, tmp_path, capsys):
    out = tmp_path / "res.json"
    csv = tmp_path / "res.csv"
    assert main(["solve-ug", str(ug_file), "--delta", "0.05", "--out", str(out), "--csv", str(csv)]) == 0
    res = json.loads(out.read_text())
    assert res["verdict"]["passed"] and res["schema"] == "strongcsp/result"
    assert csv.read_text().startswith("problem,")


def test_solve_family_mismatch(ug_file):
    assert main(["solve-sep", str(ug_file), "--out", "/dev/null"]) == 2


def test_solve_missing_and_truncated(tmp_path, ug_file):
    assert main(["solve-ug", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(ug_file.read_text()[:100])
    assert main(["solve-ug", str(bad)]) == 2


@pytest.mark.parametrize("family,cmd,extra", [
    ("oct", "solve-oct", []),
    ("separator", "solve-sep", ["--gamma", "0.5"]),
    ("coloring", "solve-color", ["--delta", "0.1"]),
    ("subset-csp", "solve-subset", ["--trials", "3"]),
])
def test_solve_families(family, cmd, extra, tmp_path):
    inst = tmp_path / "i.json"
    n = "40" if family == "coloring" else "60"
    assert main(["gen", "--family", family, "--n", n, "--d", "4", "--out", str(inst)]) == 0
    assert main([cmd, str(inst), "--out", str(tmp_path / "r.json"), "--skip-decomp", *extra]) == 0


def test_decompose(ug_file, tmp_path):
    out = tmp_path / "d.json"
    assert main(["decompose", str(ug_file), "--delta", "0.05", "--out", str(out), "--csv", str(tmp_path / "d.csv")]) == 0
    d = json.loads(out.read_text())
    assert d["accepted"] and len(d["v_dd"]) > 0


def test_decompose_bad_delta(ug_file):
    assert main(["decompose", str(ug_file), "--delta", "2", "--out", "/dev/null"]) == 2


def test_gadget(tmp_path, capsys):
    assert main(["gadget", "--k", "4", "--eta", "0.05", "--m", "200", "--out", str(tmp_path / "g.json")]) == 0
    summary = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert summary["acceptance"] >= summary["completeness_bound"]
    assert main(["gadget", "--k", "4", "--mode", "mc", "--samples", "4000"]) == 0
    assert main(["gadget", "--k", "12"]) == 2


def test_run_and_report(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("families = ug\nn = 80\nseeds = 0..1\nd = 6\n")
    rep = tmp_path / "rep.json"
    assert main(["run", str(cfg), "--json", str(rep), "--csv", str(tmp_path / "rows.csv")]) == 0
    assert main(["report", str(rep), "--out", str(tmp_path / "summary.csv")]) == 0
    assert "mean_kept" in (tmp_path / "summary.csv").read_text()


def test_run_failures_exit_one(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("families = ug\nn = 10\nd = 12\n")
    assert main(["run", str(cfg), "--json", str(tmp_path / "r.json"), "--csv", str(tmp_path / "r.csv")]) == 1


def test_run_config_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert main(["run", str(cfg)]) == 2


def test_empty_run(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing\n")
    assert main(["run", str(cfg), "--json", str(tmp_path / "r.json")]) == 0


def test_report_spectrum(ug_file, tmp_path):
    out = tmp_path / "s.json"
    assert main(["report", "--spectrum", str(ug_file), "--top", "4", "--out", str(out)]) == 0
    ev = json.loads(out.read_text())["eigenvalues"]
    assert len(ev) == 4 and ev[0] == pytest.approx(1.0)


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["--help"]) == 0
