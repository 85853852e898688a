"""Bundled fixtures: API tables, proposition mappings, specifications, rules
and example plans for the driving (carla), legged (go2) and aerial (px4)
domains."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .formula import Formula, parse_ltl
from .l2a import PropositionMapping
from .plan_lang import ApiTable

DOMAINS = ("carla", "go2", "px4")


def data_path(*parts: str) -> Path:
    return Path(__file__).resolve().parent.joinpath("data", *parts)


def _load_json(*parts: str) -> dict:
    with open(data_path(*parts), encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(frozen=True)
class SpecEntry:
    id: str
    base: str
    domain: str
    variant: str
    text: str

    @property
    def formula(self) -> Formula:
        return parse_ltl(self.text)


@dataclass(frozen=True)
class RuleEntry:
    id: str
    split: str
    domain: str
    spec: str
    text: str


@dataclass(frozen=True)
class FixtureCase:
    plan: str
    spec: str
    expect: bool


def api_table(domain: str) -> ApiTable:
    return ApiTable.from_doc(_load_json("apis", f"{domain}.json"))


def mapping(domain: str) -> PropositionMapping:
    return PropositionMapping.from_doc(_load_json("mappings", f"{domain}.json"))


def load_specs(path: str | Path | None = None) -> dict[str, SpecEntry]:
    doc = _load_json("specs.json") if path is None else json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != "planverify.specs/1":
        raise ValueError(f"unsupported specs schema {doc.get('schema')!r}")
    return {s["id"]: SpecEntry(s["id"], s.get("base", s["id"]), s["domain"], s.get("variant", ""), s["text"]) for s in doc["specs"]}


def load_rules(path: str | Path | None = None) -> list[RuleEntry]:
    doc = _load_json("rules.json") if path is None else json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != "planverify.rules/1":
        raise ValueError(f"unsupported rules schema {doc.get('schema')!r}")
    return [RuleEntry(r["id"], r["split"], r["domain"], r["spec"], r["text"]) for r in doc["rules"]]


def rules_for(split: str, domain: str = "carla") -> list[RuleEntry]:
    return [r for r in load_rules() if r.split == split and r.domain == domain]


def fixture_cases() -> list[FixtureCase]:
    doc = _load_json("fixtures.json")
    return [FixtureCase(c["plan"], c["spec"], bool(c["expect"])) for c in doc["cases"]]


def plan_text(name: str) -> str:
    return data_path("plans", name).read_text(encoding="utf-8")


def prompt_template() -> str:
    return data_path("prompt.txt").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def heuristics() -> dict:
    return _load_json("heuristics.json")
