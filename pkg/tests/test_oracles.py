import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planverify import corpus
from planverify.checker import check_plan
from planverify.oracles import (
    API_KEY_ENV, BackendUnavailable, DimensionMismatch, DiskCache, InterpreterOutput, MockEmbedder, MockInterpreter,
    RemoteEmbedder, RemoteInterpreter, UnparseableAnswer, build_prompt, embedding_text, make_backends, parse_yes_no,
    rationale_of,
)
from planverify.synth import generate_tasks

PLAN = corpus.plan_text("crossing.plan")
RULE = "Always yield to pedestrians."


# --- answer parsing -----------------------------------------------------------------------


@pytest.mark.parametrize("text, label", [
    ("Y", 1), ("N", 0), ("y.", 1), ("n", 0), ("Answer: Y. The plan stops.", 1), ("**N** because", 0),
    ("N.", 0),
])
def test_parse_yes_no(text, label):
    assert parse_yes_no(text) == label


@pytest.mark.parametrize("text", ["", "maybe", "Yesterday", "I don't know"])
def test_parse_yes_no_rejects(text):
    with pytest.raises(UnparseableAnswer):
        parse_yes_no(text)


def test_rationale_and_prompt():
    assert rationale_of("Y. It stops for pedestrians.") == "It stops for pedestrians."
    assert rationale_of("N") == "N"
    prompt = build_prompt("stop()\n", "Never move.")
    assert "stop()" in prompt and "Never move." in prompt and "{plan}" not in prompt
    with pytest.raises(ValueError):
        InterpreterOutput(2, "x", "x")


# --- mock interpreter ------------------------------------------------------------------------


def test_mock_interpreter_is_deterministic():
    a, b = MockInterpreter(seed=3), MockInterpreter(seed=3)
    assert a.interpret(PLAN, RULE) == b.interpret(PLAN, RULE)
    assert a.interpret_many([(PLAN, RULE)] * 3) == [a.interpret(PLAN, RULE)] * 3


def test_mock_error_rate_controls_flips():
    tasks = generate_tasks(300, seed=1)
    pairs = [(p, RULE) for t in tasks for p in t.plans]
    clean = MockInterpreter(error_rate=0.0)
    noisy = MockInterpreter(error_rate=0.2)
    flips = sum(clean.interpret(*pr).y != noisy.interpret(*pr).y for pr in pairs)
    assert 0.15 < flips / len(pairs) < 0.25
    always = MockInterpreter(error_rate=1.0)
    assert all(clean.interpret(*pr).y != always.interpret(*pr).y for pr in pairs[:50])


def test_mock_heuristic_tracks_the_checker():
    mapping, specs = corpus.mapping("carla"), corpus.load_specs()
    rules = corpus.rules_for("train", "carla")
    clean = MockInterpreter(error_rate=0.0)
    agree = total = 0
    for t in generate_tasks(60, seed=2):
        for plan in t.plans:
            for r in rules[::3]:
                y_star = check_plan(plan, mapping, specs[r.spec].formula).holds
                agree += clean.interpret(plan, r.text).y == int(y_star)
                total += 1
    assert agree / total > 0.6


def test_mock_routes_rules_to_groups():
    m = MockInterpreter()
    for r in corpus.load_rules():
        plan = {"carla": PLAN, "go2": corpus.plan_text("go2_avoid.plan"), "px4": corpus.plan_text("px4_square.plan")}[r.domain]
        assert m.group_for(plan, r.text) is not None, r.id


def test_mock_rejects_empty_inputs():
    with pytest.raises(ValueError):
        MockInterpreter().interpret("", RULE)
    with pytest.raises(ValueError):
        MockInterpreter().interpret(PLAN, " ")
    with pytest.raises(ValueError):
        MockInterpreter(error_rate=1.5)


# --- mock embedder ------------------------------------------------------------------------------


@given(st.text(min_size=1).filter(str.strip))
@settings(max_examples=100)
def test_mock_embedding_unit_norm(text):
    v = MockEmbedder().embed(text)
    assert v.shape == (1536,)
    assert np.all(np.isfinite(v))
    assert abs(np.linalg.norm(v) - 1.0) < 1e-9 or np.linalg.norm(v) == 0.0


def test_mock_embedding_deterministic_and_discriminative():
    e = MockEmbedder()
    a, b = e.embed("stop at the light"), e.embed("stop at the light")
    c = e.embed("accelerate through traffic")
    assert np.array_equal(a, b)
    assert float(a @ c) < 0.5
    assert MockEmbedder(dim=64).embed("x").shape == (64,)
    with pytest.raises(ValueError):
        e.embed("   ")
    assert embedding_text("p\n", "r") == "p\n\nr"


def test_make_backends():
    i, e = make_backends("mock", seed=2, dim=32)
    assert isinstance(i, MockInterpreter) and e.dim == 32
    with pytest.raises(ValueError):
        make_backends("remote")
    with pytest.raises(ValueError):
        make_backends("other")


# --- remote clients against a local server ---------------------------------------------------------


class FakeApi(BaseHTTPRequestHandler):
    mode = "ok"
    calls = 0
    headers_seen: list = []
    lock = threading.Lock()

    def log_message(self, *args):
        pass

    def do_POST(self):
        with FakeApi.lock:
            FakeApi.calls += 1
        FakeApi.headers_seen.append(self.headers.get("Authorization"))
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        mode = FakeApi.mode
        if mode == "error":
            self.send_response(503)
            self.end_headers()
            return
        if mode == "slow":
            time.sleep(1.0)
        if self.path.endswith("/chat/completions"):
            prompt = body["messages"][0]["content"]
            answer = "maybe" if mode == "garbled" else ("Y. It stops." if "stop" in prompt else "N. It never stops.")
            doc = {"choices": [{"message": {"role": "assistant", "content": answer}}]}
        else:
            dim = 3 if mode == "short" else 8
            doc = {"data": [{"embedding": [float(len(body["input"]) % 7)] * dim}]}
        data = json.dumps(doc).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def server():
    FakeApi.mode, FakeApi.calls, FakeApi.headers_seen = "ok", 0, []
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), FakeApi)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/v1"
    httpd.shutdown()
    httpd.server_close()


def test_remote_interpreter_round_trip(server, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    client = RemoteInterpreter(server, "chat-model")
    out = client.interpret("stop()\n", RULE)
    assert out.y == 1 and out.rationale == "It stops."
    assert client.interpret("go()\n", RULE).y == 0
    assert FakeApi.headers_seen[0] == "Bearer secret"


def test_remote_interpreter_fan_out_keeps_order(server):
    client = RemoteInterpreter(server, "m", api_key="", max_workers=4)
    plans = [("stop()\n" if i % 3 == 0 else f"go({i})\n", RULE) for i in range(12)]
    assert [o.y for o in client.interpret_many(plans)] == [1 if i % 3 == 0 else 0 for i in range(12)]


def test_remote_errors(server):
    client = RemoteInterpreter(server, "m", api_key="", timeout=0.3)
    FakeApi.mode = "garbled"
    with pytest.raises(UnparseableAnswer):
        client.interpret("stop()\n", RULE)
    assert isinstance(client.interpret_many([("stop()\n", RULE)])[0], UnparseableAnswer)
    FakeApi.mode = "error"
    with pytest.raises(BackendUnavailable):
        client.interpret("stop()\n", RULE)
    FakeApi.mode = "slow"
    with pytest.raises(BackendUnavailable, match="timed out"):
        client.interpret("stop()\n", RULE)
    with pytest.raises(BackendUnavailable):
        RemoteInterpreter("http://127.0.0.1:9/v1", "m", api_key="", timeout=0.5).interpret("stop()\n", RULE)


def test_remote_embedder(server):
    emb = RemoteEmbedder(server, "embed-model", dim=8, api_key="")
    v = emb.embed("hello")
    assert v.shape == (8,)
    assert [x.shape for x in emb.embed_many(["a", "bb", "ccc"])] == [(8,)] * 3
    FakeApi.mode = "short"
    with pytest.raises(DimensionMismatch):
        emb.embed("other text")
    with pytest.raises(ValueError):
        emb.embed("")


def test_disk_cache_avoids_repeat_requests(server, tmp_path):
    cache = DiskCache(tmp_path / "cache")
    client = RemoteInterpreter(server, "m", api_key="", cache=cache)
    first = client.interpret("stop()\n", RULE)
    calls = FakeApi.calls
    FakeApi.mode = "error"  # a cache hit must not touch the network
    assert client.interpret("stop()\n", RULE) == first
    assert FakeApi.calls == calls
    assert len(list((tmp_path / "cache").glob("*.json"))) == 1
    assert not list((tmp_path / "cache").glob("*.tmp"))
