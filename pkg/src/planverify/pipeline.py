"""Training, calibration, verification and refinement runs.

Every stage is deterministic for a fixed configuration when the mock
backends are used; artifacts are written with stable byte layouts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import corpus as bundled
from .automata import ts_from_doc
from .calibration import CalibrationTable, build_table, complies, guarantee
from .checker import check_plan
from .config import RunConfig
from .corpus import RuleEntry, SpecEntry
from .l2a import PropositionMapping
from .oracles import (
    DEFAULT_PROMPT,
    BackendUnavailable,
    Embedder,
    Interpreter,
    InterpreterOutput,
    UnparseableAnswer,
    embedding_text,
    make_backends,
)
from .plan_lang import PlanError, parse_plan
from .projector import ProjectorParams, TrainResult, checkpoint_bytes, classify, load_params, project, train
from .refine import Candidate, Diagnostic, build_dpo, build_sft, dpo_line, export_jsonl, group_by_task, sft_line
from .synth import Task, generate_tasks

log = logging.getLogger(__name__)

SCHEMA_VERDICT = "planverify.verdict/1"
SCHEMA_METRICS = "planverify.metrics/1"


class EmptyStream(ValueError):
    pass


@dataclass
class LatentRecord:
    task_id: str
    plan_id: str
    rule_id: str
    prompt: str
    rule: str
    plan: str
    y: int
    y_star: int
    rationale: str
    embedding: np.ndarray = field(repr=False)

    @property
    def y_safe(self) -> int:
        return int(self.y == self.y_star)


@dataclass(frozen=True)
class VerdictRecord:
    index: int
    task_id: str
    plan_id: str
    rule_id: str
    prompt: str
    rule: str
    plan: str
    y: int
    y_hat_safe: int
    complies: bool
    p_hat: float
    nearest_centroid: str
    d_prime: float
    support: int
    low_support: bool
    rationale: str
    y_star: int | None = None

    def to_doc(self) -> dict:
        doc = {"schema": SCHEMA_VERDICT}
        doc.update({k: getattr(self, k) for k in self.__dataclass_fields__})
        return doc

    @classmethod
    def from_doc(cls, doc) -> "VerdictRecord":
        if doc.get("schema") != SCHEMA_VERDICT:
            raise ValueError(f"unsupported verdict schema {doc.get('schema')!r}")
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__ if k in doc})

    def candidate(self) -> Candidate:
        return Candidate(self.task_id, self.prompt, self.rule, self.plan, self.p_hat, self.complies)


# --- corpus -------------------------------------------------------------------------


@dataclass
class Corpus:
    mapping: PropositionMapping
    specs: dict[str, SpecEntry]
    rules: list[RuleEntry]
    ts: object = None
    prompt_template: str = DEFAULT_PROMPT


def load_corpus(cfg: RunConfig) -> Corpus:
    mapping = PropositionMapping.load(cfg.mapping) if cfg.mapping else bundled.mapping(cfg.domain)
    specs = bundled.load_specs(cfg.specs or None)
    rules = bundled.load_rules(cfg.rules or None)
    ts = None
    if cfg.ts:
        ts = ts_from_doc(json.loads(Path(cfg.ts).read_text(encoding="utf-8")))
    template = Path(cfg.prompt).read_text(encoding="utf-8") if cfg.prompt else bundled.prompt_template()
    return Corpus(mapping, specs, rules, ts, template)


def load_tasks(cfg: RunConfig, stage: str) -> list[Task]:
    """Tasks for ``stage`` in {train, calibration, heldout}."""
    if cfg.corpus:
        root = Path(cfg.corpus)
        doc = json.loads((root / "tasks.json").read_text(encoding="utf-8"))
        out = []
        for t in doc["tasks"]:
            if t.get("stage", "heldout") != stage:
                continue
            plans = tuple((root / p).read_text(encoding="utf-8") for p in t["plans"])
            out.append(Task(t["id"], t["prompt"], plans))
        return out
    n = {"train": cfg.train_tasks, "calibration": cfg.calibration_tasks, "heldout": cfg.heldout_tasks}[stage]
    offset = {"train": 1, "calibration": 2, "heldout": 3}[stage]
    return generate_tasks(n, seed=cfg.seed * 1000 + offset, prefix=stage)


def stage_rules(corpus: Corpus, stage: str, domain: str) -> list[RuleEntry]:
    split = "test" if stage == "heldout" else "train"
    rules = [r for r in corpus.rules if r.split == split and r.domain == domain]
    if not rules:
        rules = [r for r in corpus.rules if r.domain == domain]
    if not rules:
        raise ValueError(f"no rules for domain {domain!r}")
    return rules


def assign_rules(tasks: Sequence[Task], rules: Sequence[RuleEntry], seed: int, stage: str) -> list[RuleEntry]:
    """One rule per task (both candidate plans are judged against it)."""
    rng = np.random.default_rng([seed, {"train": 1, "calibration": 2, "heldout": 3}.get(stage, 4), 17])
    return [rules[int(rng.integers(len(rules)))] for _ in tasks]


class Labeler:
    """Ground-truth labels from the model checker, memoized per (plan, spec)."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.cache: dict[tuple[str, str], int] = {}

    def __call__(self, plan: str, spec_id: str) -> int:
        key = (plan, spec_id)
        if key not in self.cache:
            spec = self.corpus.specs[spec_id]
            self.cache[key] = int(check_plan(parse_plan(plan), self.corpus.mapping, spec.formula, ts=self.corpus.ts).holds)
        return self.cache[key]


def collect_records(tasks: Sequence[Task], rules: Sequence[RuleEntry], corpus: Corpus,
                    interpreter: Interpreter, embedder: Embedder, labeler: Labeler | None = None,
                    skipped: list[dict] | None = None) -> list[LatentRecord]:
    """Interpreter labels, checker labels and embeddings for each (plan, rule)."""
    labeler = labeler or Labeler(corpus)
    items = []
    for task, rule in zip(tasks, rules):
        for j, plan in enumerate(task.plans):
            items.append((task, rule, j, plan))
    answers = interpreter.interpret_many([(plan, rule.text) for _, rule, _, plan in items])
    kept = []
    for (task, rule, j, plan), ans in zip(items, answers):
        pid = f"{task.id}/p{j}"
        if isinstance(ans, Exception):
            log.warning("skipping %s: %s", pid, ans)
            if skipped is not None:
                skipped.append({"plan_id": pid, "rule_id": rule.id, "error": type(ans).__name__, "message": str(ans)})
            continue
        try:
            y_star = labeler(plan, rule.spec)
        except (PlanError, ValueError) as exc:
            log.warning("skipping %s: %s", pid, exc)
            if skipped is not None:
                skipped.append({"plan_id": pid, "rule_id": rule.id, "error": type(exc).__name__, "message": str(exc)})
            continue
        kept.append((task, rule, pid, plan, ans, y_star))
    vectors = embedder.embed_many([embedding_text(plan, ans.rationale) for _, _, _, plan, ans, _ in kept])
    records = []
    for (task, rule, pid, plan, ans, y_star), vec in zip(kept, vectors):
        if isinstance(vec, Exception):
            if skipped is not None:
                skipped.append({"plan_id": pid, "rule_id": rule.id, "error": type(vec).__name__, "message": str(vec)})
            continue
        records.append(LatentRecord(task.id, pid, rule.id, task.prompt, rule.text, plan, ans.y, y_star, ans.rationale, vec))
    return records


def stage_records(cfg: RunConfig, stage: str, corpus: Corpus, interpreter: Interpreter, embedder: Embedder,
                  labeler: Labeler | None = None, skipped: list[dict] | None = None) -> list[LatentRecord]:
    tasks = load_tasks(cfg, stage)
    rules = assign_rules(tasks, stage_rules(corpus, stage, cfg.domain), cfg.seed, stage)
    return collect_records(tasks, rules, corpus, interpreter, embedder, labeler, skipped)


def arrays(records: Sequence[LatentRecord]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([r.embedding for r in records]) if records else np.zeros((0, 0))
    y = np.array([r.y_safe for r in records], dtype=int)
    return x, y


def record_keys(records: Sequence[LatentRecord]) -> list[str]:
    return [f"{r.plan_id}\x1f{r.rule_id}" for r in records]


# --- stages ----------------------------------------------------------------------------


def train_records(records: Sequence[LatentRecord], cfg: RunConfig) -> TrainResult:
    x, y = arrays(records)
    return train(x, y, cfg.train_config(), keys=record_keys(records))


def calibrate_records(records: Sequence[LatentRecord], params: ProjectorParams) -> CalibrationTable:
    x, y_safe = arrays(records)
    z = project(params, x)
    return build_table(z, y_safe, classify(params, z))


def verify_one(plan: str, rule: str, params: ProjectorParams, table: CalibrationTable,
               interpreter: Interpreter, embedder: Embedder, prompt: str = "", index: int = 0,
               task_id: str = "", plan_id: str = "", rule_id: str = "", y_star: int | None = None,
               answer: InterpreterOutput | None = None, embedding=None) -> VerdictRecord:
    """Interpreter label, latent safety prediction and guarantee for one plan."""
    ans = answer if answer is not None else interpreter.interpret(plan, rule)
    vec = embedding if embedding is not None else embedder.embed(embedding_text(plan, ans.rationale))
    z = project(params, vec)
    y_hat = int(classify(params, z))
    g = guarantee(table, z)
    return VerdictRecord(
        index=index, task_id=task_id, plan_id=plan_id, rule_id=rule_id, prompt=prompt, rule=rule, plan=plan,
        y=ans.y, y_hat_safe=y_hat, complies=complies(ans.y, y_hat), p_hat=g.p_hat,
        nearest_centroid=g.nearest_centroid, d_prime=g.d_prime, support=g.support, low_support=g.low_support,
        rationale=ans.rationale, y_star=y_star,
    )


def verify_records(records: Sequence[LatentRecord], params: ProjectorParams, table: CalibrationTable) -> list[VerdictRecord]:
    out = []
    for i, r in enumerate(records):
        ans = InterpreterOutput(r.y, r.rationale, r.rationale)
        out.append(verify_one(r.plan, r.rule, params, table, None, None, prompt=r.prompt, index=i,
                              task_id=r.task_id, plan_id=r.plan_id, rule_id=r.rule_id, y_star=r.y_star,
                              answer=ans, embedding=r.embedding))
    return out


# --- metrics ---------------------------------------------------------------------------


def metrics(verdicts: Sequence[VerdictRecord], bins: int = 10) -> dict:
    """Accuracy of final verdicts against checker labels, interpreter accuracy,
    compliance rates, per-rule breakdown and a guarantee histogram."""
    if not verdicts:
        raise EmptyStream("no verdict records")
    labeled = [v for v in verdicts if v.y_star is not None]

    def summary(vs: Sequence[VerdictRecord]) -> dict:
        n = len(vs)
        lab = [v for v in vs if v.y_star is not None]
        doc = {"n": n, "predicted_compliance_rate": sum(v.complies for v in vs) / n}
        if lab:
            doc["accuracy"] = sum(int(v.complies) == v.y_star for v in lab) / len(lab)
            doc["interpreter_accuracy"] = sum(v.y == v.y_star for v in lab) / len(lab)
            doc["compliance_rate"] = sum(v.y_star for v in lab) / len(lab)
        return doc

    hist = [0] * bins
    for v in verdicts:
        hist[min(int(v.p_hat * bins), bins - 1)] += 1
    per_rule: dict[str, list[VerdictRecord]] = {}
    for v in verdicts:
        per_rule.setdefault(v.rule_id, []).append(v)
    doc = {"schema": SCHEMA_METRICS}
    doc.update(summary(verdicts))
    doc["labeled"] = len(labeled)
    doc["low_support"] = sum(v.low_support for v in verdicts)
    doc["guarantee_histogram"] = {"edges": [i / bins for i in range(bins + 1)], "counts": hist}
    doc["per_rule"] = {k: summary(vs) for k, vs in sorted(per_rule.items())}
    return doc


# --- serialization ----------------------------------------------------------------------


def dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def verdict_stream(verdicts: Iterable[VerdictRecord]) -> str:
    return "".join(json.dumps(v.to_doc(), sort_keys=True, ensure_ascii=False) + "\n" for v in verdicts)


def read_verdicts(path) -> list[VerdictRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(VerdictRecord.from_doc(json.loads(line)))
    return out


# --- orchestration -----------------------------------------------------------------------


ARTIFACTS = {
    "checkpoint": "projector.ckpt",
    "train_report": "train_report.json",
    "calibration": "calibration.json",
    "verdicts": "verdicts.jsonl",
    "metrics": "metrics.json",
    "sft": "sft.jsonl",
    "dpo": "dpo.jsonl",
    "refine_report": "refine_report.json",
}


class Runner:
    """Runs stages against ``cfg.out_dir``; later stages read earlier artifacts."""

    def __init__(self, cfg: RunConfig, interpreter: Interpreter | None = None, embedder: Embedder | None = None):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.corpus = load_corpus(cfg)
        if interpreter is None or embedder is None:
            i, e = make_backends(cfg.backend, seed=cfg.seed, error_rate=cfg.error_rate, dim=cfg.embedding_dim,
                                 endpoint=cfg.endpoint, chat_model=cfg.chat_model, embedding_model=cfg.embedding_model,
                                 timeout=cfg.timeout, cache_dir=cfg.cache_dir or None, max_workers=cfg.concurrency,
                                 prompt_template=self.corpus.prompt_template)
            interpreter = interpreter or i
            embedder = embedder or e
        self.interpreter = interpreter
        self.embedder = embedder
        self.labeler = Labeler(self.corpus)

    def path(self, name: str) -> Path:
        return self.out / ARTIFACTS[name]

    def _write(self, name: str, data: str | bytes) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.path(name)
        if isinstance(data, bytes):
            p.write_bytes(data)
        else:
            p.write_text(data, encoding="utf-8")
        return p

    def records(self, stage: str, skipped: list[dict] | None = None) -> list[LatentRecord]:
        return stage_records(self.cfg, stage, self.corpus, self.interpreter, self.embedder, self.labeler, skipped)

    def train(self) -> dict:
        skipped: list[dict] = []
        recs = self.records("train", skipped)
        result = train_records(recs, self.cfg)
        self._write("checkpoint", checkpoint_bytes(result.params, {"records": len(recs)}))
        x, _ = arrays(recs)
        report = {
            "records": len(recs),
            "skipped": skipped,
            "safe": int(sum(r.y_safe for r in recs)),
            "parameter_count": result.params.parameter_count(),
            "epoch_losses": result.epoch_losses,
            "train_accuracy": result.train_accuracy,
            "interpreter_accuracy": sum(r.y == r.y_star for r in recs) / max(len(recs), 1),
        }
        self._write("train_report", dump_json(report))
        return report

    def params(self) -> ProjectorParams:
        return load_params(self.path("checkpoint"))

    def calibrate(self) -> CalibrationTable:
        recs = self.records("calibration")
        table = calibrate_records(recs, self.params())
        self._write("calibration", table.dumps())
        return table

    def table(self) -> CalibrationTable:
        return CalibrationTable.from_doc(json.loads(self.path("calibration").read_text(encoding="utf-8")))

    def verify(self) -> dict:
        recs = self.records("heldout")
        verdicts = verify_records(recs, self.params(), self.table())
        self._write("verdicts", verdict_stream(verdicts))
        report = metrics(verdicts)
        self._write("metrics", dump_json(report))
        return report

    def refine(self, tau: float | None = None) -> dict:
        tau = self.cfg.tau if tau is None else tau
        verdicts = read_verdicts(self.path("verdicts"))
        cands = [v.candidate() for v in verdicts]
        sft = build_sft(cands, tau)
        diags: list[Diagnostic] = []
        dpo = build_dpo(group_by_task(cands), diags)
        self._write("sft", export_jsonl(sft_line(r) for r in sft))
        self._write("dpo", export_jsonl(dpo_line(r) for r in dpo))
        report = {"tau": tau, "sft": len(sft), "dpo": len(dpo), "dropped": [d.__dict__ for d in diags]}
        self._write("refine_report", dump_json(report))
        return report

    def run_all(self) -> dict:
        return {"train": self.train(), "calibration": self.calibrate().n, "verify": self.verify(), "refine": self.refine()}
