import json

import pytest

from planverify import corpus
from planverify.cli import main


@pytest.fixture
def plans(tmp_path):
    paths = {}
    for name in ("crossing.plan", "blind_drive.plan"):
        paths[name] = tmp_path / name
        paths[name].write_text(corpus.plan_text(name))
    paths["broken"] = tmp_path / "broken.plan"
    paths["broken"].write_text("def f(:\n    stop()\n")
    paths["unmapped"] = tmp_path / "unmapped.plan"
    paths["unmapped"].write_text("teleport(3)\n")
    return paths


def run_json(capsys, argv):
    code = main(argv)
    return code, json.loads(capsys.readouterr().out or "null")


def test_parse(plans, capsys):
    code, doc = run_json(capsys, ["parse", str(plans["crossing.plan"]), "--domain", "carla"])
    assert code == 0 and doc["diagnostics"] == [] and doc["ast"]
    assert main(["parse", str(plans["crossing.plan"]), "--format", "text"]) == 0
    assert "if " in capsys.readouterr().out


def test_parse_error_is_a_domain_error(plans, capsys):
    assert main(["parse", str(plans["broken"])]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "PlanSyntaxError" and err["line"] == 1


def test_missing_file_is_a_usage_error(tmp_path, capsys):
    assert main(["parse", str(tmp_path / "nope.plan")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_l2a_formats(plans, tmp_path, capsys):
    code, doc = run_json(capsys, ["l2a", str(plans["crossing.plan"])])
    assert code == 0 and len(doc["states"]) == 3
    dot = tmp_path / "a.dot"
    assert main(["l2a", str(plans["crossing.plan"]), "--format", "dot", "--dot", str(dot)]) == 0
    assert capsys.readouterr().out.startswith("digraph") and dot.read_text().startswith("digraph")


def test_l2a_unmapped(plans, capsys):
    assert main(["l2a", str(plans["unmapped"])]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["api"] == "teleport" and err["arguments"] == ["3"]
    assert main(["l2a", str(plans["unmapped"]), "--permissive"]) == 0


def test_check(plans, capsys):
    code, doc = run_json(capsys, ["check", str(plans["crossing.plan"]), "--spec", "phi1-literal"])
    assert code == 0 and doc["holds"] is True
    code, doc = run_json(capsys, ["check", str(plans["blind_drive.plan"]), "--formula", "G (pedestrian -> X stop)"])
    assert code == 0 and doc["holds"] is False and doc["counterexample"]
    assert main(["check", str(plans["crossing.plan"]), "--spec", "nonexistent"]) == 2
    capsys.readouterr()
    assert main(["check", str(plans["crossing.plan"]), "--formula", "G ("]) == 1
    assert json.loads(capsys.readouterr().err)["position"] == 3


def test_bad_config_is_a_usage_error(tmp_path, capsys):
    assert main(["train", "--tau", "0.3", "--out-dir", str(tmp_path)]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    assert main(["train", "--config", str(cfg)]) == 2


def test_stages_require_earlier_artifacts(tmp_path, capsys):
    assert main(["calibrate", "--out-dir", str(tmp_path)]) == 2
    assert main(["refine", "--out-dir", str(tmp_path)]) == 2


def test_full_pipeline(plans, tmp_path, capsys):
    out = ["--out-dir", str(tmp_path / "run"), "--seed", "4"]
    code, train = run_json(capsys, ["train", *out])
    assert code == 0 and train["parameter_count"] == 201216
    code, cal = run_json(capsys, ["calibrate", *out])
    assert code == 0 and cal["n"] > 0
    code, ver = run_json(capsys, ["verify", *out])
    assert code == 0 and 0 <= ver["accuracy"] <= 1
    code, one = run_json(capsys, ["verify", *out, "--plan", str(plans["crossing.plan"]), "--rule", "Yield to pedestrians."])
    assert code == 0 and one["nearest_centroid"] in ("safe", "unsafe") and one["y_star"] is None
    code, ref = run_json(capsys, ["refine", *out, "--tau", "0.9"])
    assert code == 0 and ref["tau"] == 0.9
    assert main(["verify", *out, "--plan", str(plans["crossing.plan"])]) == 2
    capsys.readouterr()
    report = tmp_path / "m.json"
    assert main(["report", str(tmp_path / "run" / "verdicts.jsonl"), "-o", str(report)]) == 0
    assert json.loads(report.read_text())["accuracy"] == ver["accuracy"]
