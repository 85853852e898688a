import json

import numpy as np
import pytest

from planverify.config import RunConfig
from planverify.pipeline import (
    ARTIFACTS, EmptyStream, Runner, VerdictRecord, load_tasks, metrics, read_verdicts, verdict_stream,
)


def verdict(i, y, y_hat_safe, y_star, rule="r1", p=0.9):
    complies = bool(y) == bool(y_hat_safe)
    return VerdictRecord(i, f"t{i // 2}", f"p{i}", rule, "prompt", "rule", f"plan {i}", y, y_hat_safe, complies, p,
                         "safe" if y_hat_safe else "unsafe", 0.5, 10, False, "why", y_star)


def test_metrics_all_correct():
    vs = [verdict(i, i % 2, 1, i % 2) for i in range(6)]
    m = metrics(vs)
    assert m["accuracy"] == 1.0 and m["interpreter_accuracy"] == 1.0
    assert m["labeled"] == 6 and sum(m["guarantee_histogram"]["counts"]) == 6


def test_metrics_half_correct():
    vs = [verdict(0, 1, 1, 1), verdict(1, 1, 0, 1), verdict(2, 0, 1, 0, rule="r2"), verdict(3, 0, 0, 0, rule="r2")]
    m = metrics(vs)
    assert m["accuracy"] == 0.5 and m["interpreter_accuracy"] == 1.0
    assert set(m["per_rule"]) == {"r1", "r2"}
    assert m["per_rule"]["r1"]["n"] == 2


def test_metrics_unlabeled_and_empty():
    m = metrics([VerdictRecord(0, "t", "p", "r", "", "", "x", 1, 1, True, 1.0, "safe", 0.0, 1, True, "")])
    assert m["labeled"] == 0 and "accuracy" not in m and m["low_support"] == 1
    assert m["guarantee_histogram"]["counts"][-1] == 1
    with pytest.raises(EmptyStream):
        metrics([])


def test_verdict_stream_round_trip(tmp_path):
    vs = [verdict(i, i % 2, 1, 1) for i in range(4)]
    p = tmp_path / "v.jsonl"
    p.write_text(verdict_stream(vs))
    assert read_verdicts(p) == vs
    with pytest.raises(ValueError):
        VerdictRecord.from_doc({**vs[0].to_doc(), "schema": "other"})


def test_synthetic_tasks_are_seeded():
    cfg = RunConfig(seed=1, train_tasks=10)
    assert [t.plans for t in load_tasks(cfg, "train")] == [t.plans for t in load_tasks(cfg, "train")]
    assert load_tasks(cfg, "train")[0].plans != load_tasks(cfg, "calibration")[0].plans


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    runner = Runner(RunConfig(seed=2, out_dir=str(out)))
    return runner, runner.run_all()


def test_full_run_writes_every_artifact(run):
    runner, summary = run
    for name in ARTIFACTS:
        assert runner.path(name).is_file(), name
    assert summary["train"]["parameter_count"] == 201216
    assert summary["verify"]["accuracy"] > summary["verify"]["interpreter_accuracy"]


def test_metrics_recomputed_from_stream(run):
    runner, _ = run
    stored = json.loads(runner.path("metrics").read_text())
    assert metrics(read_verdicts(runner.path("verdicts"))) == stored


def test_verdicts_follow_the_compliance_rule(run):
    runner, _ = run
    for v in read_verdicts(runner.path("verdicts")):
        assert v.complies == (v.y == v.y_hat_safe)
        assert 0.0 <= v.p_hat <= 1.0
        assert v.low_support == (v.support < 5)


def test_refine_exports_match_report(run):
    runner, summary = run
    sft = runner.path("sft").read_text().splitlines()
    dpo = runner.path("dpo").read_text().splitlines()
    assert len(sft) == summary["refine"]["sft"] and len(dpo) == summary["refine"]["dpo"]
    assert all(json.loads(line)["messages"][1]["role"] == "assistant" for line in sft)
    stricter = runner.refine(0.95)
    assert stricter["sft"] <= summary["refine"]["sft"]


def test_checkpoint_reloads(run):
    runner, _ = run
    params = runner.params()
    assert params.all_finite() and np.isfinite(runner.table().centroid_safe).all()
