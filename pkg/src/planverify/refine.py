"""Fine-tuning exports built from verification verdicts.

* SFT: verdicts that comply with a guarantee of at least ``tau``.
* DPO: per task, the candidate with the higher guarantee of compliance is
  preferred (``p_hat`` for a complying verdict, ``1 - p_hat`` otherwise).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.8


class MissingPair(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    """The fields of a verdict that refinement needs."""

    task_id: str
    prompt: str
    rule: str
    plan: str
    p_hat: float
    complies: bool


@dataclass(frozen=True)
class SftRecord:
    prompt: str
    rule: str
    plan: str
    p_hat: float
    complies: bool


@dataclass(frozen=True)
class DpoRecord:
    task_id: str
    prompt: str
    rule: str
    preferred: str
    rejected: str
    p_hat_preferred: float
    p_hat_rejected: float


@dataclass(frozen=True)
class Diagnostic:
    task_id: str
    reason: str


def ranking_score(c: Candidate) -> float:
    return c.p_hat if c.complies else 1.0 - c.p_hat


def build_sft(verdicts: Iterable[Candidate], tau: float = DEFAULT_TAU) -> list[SftRecord]:
    if not 0.5 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0.5, 1], got {tau}")
    return [SftRecord(v.prompt, v.rule, v.plan, v.p_hat, v.complies) for v in verdicts if v.complies and v.p_hat >= tau]


def group_by_task(verdicts: Iterable[Candidate]) -> dict[str, list[Candidate]]:
    groups: dict[str, list[Candidate]] = {}
    for v in verdicts:
        groups.setdefault(v.task_id, []).append(v)
    return groups


def build_dpo(pairs: Mapping[str, Sequence[Candidate]], diagnostics: list[Diagnostic] | None = None) -> list[DpoRecord]:
    """One preference record per task; ties and identical plans are dropped."""
    out = []
    for task_id, cands in pairs.items():
        if len(cands) != 2:
            raise MissingPair(f"task {task_id} has {len(cands)} candidate plans, expected 2")
        a, b = cands
        if a.plan == b.plan:
            _drop(diagnostics, task_id, "identical candidate plans")
            continue
        sa, sb = ranking_score(a), ranking_score(b)
        if sa == sb:
            _drop(diagnostics, task_id, f"tied guarantee of compliance {sa!r}")
            continue
        win, lose = (a, b) if sa > sb else (b, a)
        out.append(DpoRecord(task_id, win.prompt, win.rule, win.plan, lose.plan, ranking_score(win), ranking_score(lose)))
    return out


def _drop(diagnostics: list[Diagnostic] | None, task_id: str, reason: str) -> None:
    log.info("dropping preference pair for %s: %s", task_id, reason)
    if diagnostics is not None:
        diagnostics.append(Diagnostic(task_id, reason))


def user_message(prompt: str, rule: str) -> dict:
    return {"role": "user", "content": f"{prompt}\nRule: {rule}"}


def sft_line(r: SftRecord) -> str:
    doc = {"messages": [user_message(r.prompt, r.rule), {"role": "assistant", "content": r.plan}]}
    return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def dpo_line(r: DpoRecord) -> str:
    doc = {
        "input": {"messages": [user_message(r.prompt, r.rule)]},
        "preferred_output": [{"role": "assistant", "content": r.preferred}],
        "non_preferred_output": [{"role": "assistant", "content": r.rejected}],
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False)


def export_jsonl(lines: Iterable[str]) -> str:
    return "".join(line + "\n" for line in lines)
