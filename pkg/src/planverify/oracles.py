"""Interpreter and embedding backends.

Two implementations of each: a remote client speaking the usual
chat-completions / embeddings JSON protocol, and a deterministic offline mock.
The mock interpreter applies a keyword heuristic (see ``data/heuristics.json``)
and then flips its own label through a seeded channel, so that a corpus
contains both agreeing and disagreeing interpreter answers.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import requests

log = logging.getLogger(__name__)

DEFAULT_DIM = 1536
DEFAULT_ERROR_RATE = 0.2
API_KEY_ENV = "PLANVERIFY_API_KEY"


class BackendUnavailable(RuntimeError):
    pass


class UnparseableAnswer(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"no standalone Y/N verdict in response: {raw[:80]!r}")
        self.raw = raw


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class InterpreterOutput:
    y: int
    rationale: str
    raw: str

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y!r}")
        if not self.rationale:
            raise ValueError("rationale must be non-empty")


_YN = re.compile(r"(?<![A-Za-z0-9_'])([YyNn])(?![A-Za-z0-9_'])")


def parse_yes_no(text: str) -> int:
    """Label from the first standalone ``Y``/``N`` token (case-insensitive)."""
    m = _YN.search(text)
    if m is None:
        raise UnparseableAnswer(text)
    return 1 if m.group(1) in "Yy" else 0


def rationale_of(text: str) -> str:
    """Everything after the verdict letter, or the whole text if that is empty."""
    m = _YN.search(text)
    rest = text[m.end():] if m else text
    rest = rest.lstrip(" .:,;-\u2014\u2013\n\t")
    return rest.strip() or text.strip()


DEFAULT_PROMPT = (
    "Given the following plan in Python:\n\n{plan}\n\n"
    "Please analyze whether the code meets the rule: \n{rule}\n\n"
    "Please answer with a single letter 'Y' or 'N', indicating yes or no."
)


def build_prompt(plan: str, rule: str, template: str = DEFAULT_PROMPT) -> str:
    return template.replace("{plan}", plan.rstrip("\n")).replace("{rule}", rule)


def _unit(*parts: object) -> float:
    """Deterministic uniform number in [0, 1) from the given parts."""
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "big") / 2.0**64


def _check_inputs(plan: str, rule: str) -> None:
    if not plan or not plan.strip():
        raise ValueError("plan must be non-empty")
    if not rule or not rule.strip():
        raise ValueError("rule must be non-empty")


# --- interpreters ------------------------------------------------------------------


class Interpreter:
    def interpret(self, plan: str, rule: str) -> InterpreterOutput:
        raise NotImplementedError

    def interpret_many(self, pairs: Sequence[tuple[str, str]]) -> list[InterpreterOutput | Exception]:
        out: list[InterpreterOutput | Exception] = []
        for plan, rule in pairs:
            try:
                out.append(self.interpret(plan, rule))
            except (UnparseableAnswer, BackendUnavailable) as exc:
                out.append(exc)
        return out


@dataclass(frozen=True)
class HeuristicGroup:
    name: str
    rule_any: tuple[str, ...]
    rule_all: tuple[str, ...]
    plan_any: tuple[str, ...]
    checks: tuple[dict, ...]

    def matches(self, plan: str, rule: str) -> bool:
        text = rule.lower()
        if self.plan_any and not any(k in plan for k in self.plan_any):
            return False
        if self.rule_all and not all(k in text for k in self.rule_all):
            return False
        return not self.rule_any or any(k in text for k in self.rule_any)


class MockInterpreter(Interpreter):
    """Keyword heuristic plus a seeded label-flip channel.

    Each heuristic check is a regular expression that must be present
    (``"require"``) or absent (``"forbid"``) in the plan.  The heuristic label is
    1 when every check passes.  With probability ``error_rate`` (decided by a
    hash of seed, plan and rule) the emitted label is the opposite one.  The
    rationale always argues for the emitted label; hedged wording is more
    frequent on flipped answers.
    """

    def __init__(self, table: Mapping | None = None, error_rate: float = DEFAULT_ERROR_RATE, seed: int = 0):
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must lie in [0, 1]")
        if table is None:
            from .corpus import heuristics

            table = heuristics()
        self.error_rate = error_rate
        self.seed = seed
        self.hedge_flipped = float(table.get("hedge_rate_flipped", 0.0))
        self.hedge_correct = float(table.get("hedge_rate_correct", 0.0))
        self.hedges = tuple(table.get("hedges", ("It partially meets the rule.",)))
        self.groups = tuple(
            HeuristicGroup(
                g["name"],
                tuple(k.lower() for k in g.get("rule_any", ())),
                tuple(k.lower() for k in g.get("rule_all", ())),
                tuple(g.get("plan_any", ())),
                tuple(g["checks"]),
            )
            for g in table["groups"]
        )

    def group_for(self, plan: str, rule: str) -> HeuristicGroup | None:
        for g in self.groups:
            if g.matches(plan, rule):
                return g
        return None

    def heuristic(self, plan: str, rule: str) -> tuple[int, list[str], list[str]]:
        """Heuristic label with supporting and opposing evidence phrases."""
        group = self.group_for(plan, rule)
        if group is None:
            return 1, ["does not conflict with the rule"], []
        good, bad = [], []
        for c in group.checks:
            present = re.search(c["pattern"], plan) is not None
            ok = present if c["kind"] == "require" else not present
            phrase = c["present"] if present else c["absent"]
            (good if ok else bad).append(phrase)
        return (0 if bad else 1), good, bad

    def interpret(self, plan: str, rule: str) -> InterpreterOutput:
        _check_inputs(plan, rule)
        label, good, bad = self.heuristic(plan, rule)
        flipped = _unit(self.seed, "flip", plan, rule) < self.error_rate
        y = 1 - label if flipped else label
        hedge_p = self.hedge_flipped if flipped else self.hedge_correct
        hedged = _unit(self.seed, "hedge", plan, rule) < hedge_p
        rationale = self._rationale(y, good, bad, hedged, plan, rule)
        raw = ("Y" if y else "N") + ". " + rationale
        return InterpreterOutput(y, rationale, raw)

    def _rationale(self, y: int, good: list[str], bad: list[str], hedged: bool, plan: str, rule: str) -> str:
        if hedged:
            hedge = self.hedges[int(_unit(self.seed, "which", plan, rule) * len(self.hedges))]
            pros = " and ".join(good) or "follows the task"
            cons = " and ".join(bad) or "may not cover every case"
            if y:
                return f"{hedge} The plan {pros}, although it {cons}."
            return f"{hedge} The plan {pros}, but it {cons}."
        if y:
            return f"The plan {' and '.join(good or bad)}, so it meets the rule."
        return f"The plan {' and '.join(bad or good)}, so it does not meet the rule."


class RemoteInterpreter(Interpreter):
    """Chat-completions client with a Y/N answer protocol."""

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 30.0,
                 prompt_template: str = DEFAULT_PROMPT, cache: "DiskCache | None" = None,
                 max_workers: int = 4, session: requests.Session | None = None):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.prompt_template = prompt_template
        self.cache = cache
        self.max_workers = max(1, int(max_workers))
        self.session = session or requests.Session()

    def _complete(self, prompt: str) -> str:
        payload = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        doc = _post_json(self.session, self.url, payload, self.api_key, self.timeout, self.cache)
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed chat response: {exc}") from exc

    def interpret(self, plan: str, rule: str) -> InterpreterOutput:
        _check_inputs(plan, rule)
        raw = self._complete(build_prompt(plan, rule, self.prompt_template))
        y = parse_yes_no(raw)
        return InterpreterOutput(y, rationale_of(raw), raw)

    def interpret_many(self, pairs):
        return _fan_out(lambda pr: self.interpret(*pr), list(pairs), self.max_workers, (UnparseableAnswer, BackendUnavailable))


# --- embedders -----------------------------------------------------------------------


class Embedder:
    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


_WORD = re.compile(r"[a-z0-9_]+|[^\sa-z0-9_]")


def tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class MockEmbedder(Embedder):
    """Signed feature hashing of unigrams and bigrams, L2-normalized."""

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = 0):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = dim
        self.seed = seed
        self._memo: dict[str, tuple[int, float]] = {}

    def _bucket(self, feature: str) -> tuple[int, float]:
        hit = self._memo.get(feature)
        if hit is None:
            h = hashlib.blake2b(f"{self.seed}\x1f{feature}".encode("utf-8"), digest_size=8).digest()
            v = int.from_bytes(h, "big")
            hit = (v % self.dim, 1.0 if (v >> 63) & 1 else -1.0)
            if len(self._memo) < 200_000:
                self._memo[feature] = hit
        return hit

    def embed(self, text: str) -> np.ndarray:
        toks = tokens(text) if text else []
        if not toks:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        feats = toks + [a + " " + b for a, b in zip(toks, toks[1:])]
        for f in feats:
            i, s = self._bucket(f)
            vec[i] += s
        norm = float(np.sqrt(np.dot(vec, vec)))
        if norm == 0.0:
            # every feature cancelled out; fall back to a fixed unit vector
            vec[self._bucket("\x00empty")[0]] = 1.0
            return vec
        return vec / norm


class RemoteEmbedder(Embedder):
    def __init__(self, endpoint: str, model: str, dim: int = DEFAULT_DIM, api_key: str | None = None,
                 timeout: float = 30.0, cache: "DiskCache | None" = None, max_workers: int = 4,
                 session: requests.Session | None = None):
        self.url = endpoint.rstrip("/") + "/embeddings"
        self.model = model
        self.dim = dim
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.cache = cache
        self.max_workers = max(1, int(max_workers))
        self.session = session or requests.Session()

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        doc = _post_json(self.session, self.url, {"model": self.model, "input": text}, self.api_key, self.timeout, self.cache)
        try:
            values = doc["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"malformed embedding response: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(f"expected {self.dim} components, got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise BackendUnavailable("embedding contains non-finite values")
        return vec

    def embed_many(self, texts):
        results = _fan_out(self.embed, list(texts), self.max_workers, ())
        return results


# --- transport ------------------------------------------------------------------------


class DiskCache:
    """Response cache keyed by the SHA-256 of the canonical request."""

    def __init__(self, directory: str | os.PathLike):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @staticmethod
    def key(url: str, payload: Mapping) -> str:
        blob = json.dumps({"url": url, "payload": payload}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str):
        path = self.dir / f"{key}.json"
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except (FileNotFoundError, json.JSONDecodeError):
            return None

    def put(self, key: str, value) -> None:
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(value, fh, sort_keys=True)
                os.replace(tmp, self.dir / f"{key}.json")
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def _post_json(session: requests.Session, url: str, payload: Mapping, api_key: str, timeout: float,
               cache: DiskCache | None) -> dict:
    key = DiskCache.key(url, payload) if cache is not None else None
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        resp = session.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.Timeout as exc:
        raise BackendUnavailable(f"request to {url} timed out after {timeout}s") from exc
    except requests.RequestException as exc:
        raise BackendUnavailable(f"request to {url} failed: {exc}") from exc
    if resp.status_code >= 400:
        raise BackendUnavailable(f"{url} returned HTTP {resp.status_code}")
    try:
        doc = resp.json()
    except ValueError as exc:
        raise BackendUnavailable(f"{url} returned invalid JSON") from exc
    if cache is not None:
        cache.put(key, doc)
    return doc


def _fan_out(fn: Callable, items: list, max_workers: int, captured: tuple) -> list:
    """Apply ``fn`` with bounded concurrency; results keep input order."""

    def run(item):
        try:
            return fn(item)
        except captured as exc:  # type: ignore[misc]
            return exc

    if max_workers <= 1 or len(items) <= 1:
        return [run(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run, items))


def make_backends(backend: str = "mock", *, seed: int = 0, error_rate: float = DEFAULT_ERROR_RATE,
                  dim: int = DEFAULT_DIM, endpoint: str = "", chat_model: str = "", embedding_model: str = "",
                  timeout: float = 30.0, cache_dir: str | None = None, max_workers: int = 4,
                  prompt_template: str = DEFAULT_PROMPT) -> tuple[Interpreter, Embedder]:
    if backend == "mock":
        return MockInterpreter(error_rate=error_rate, seed=seed), MockEmbedder(dim=dim, seed=seed)
    if backend == "remote":
        if not endpoint:
            raise ValueError("remote backend requires an endpoint")
        cache = DiskCache(cache_dir) if cache_dir else None
        return (
            RemoteInterpreter(endpoint, chat_model, timeout=timeout, prompt_template=prompt_template,
                              cache=cache, max_workers=max_workers),
            RemoteEmbedder(endpoint, embedding_model, dim=dim, timeout=timeout, cache=cache, max_workers=max_workers),
        )
    raise ValueError(f"unknown backend {backend!r}")


def embedding_text(plan: str, rationale: str) -> str:
    """Text whose embedding represents a (plan, rationale) pair."""
    return plan.rstrip("\n") + "\n\n" + rationale

