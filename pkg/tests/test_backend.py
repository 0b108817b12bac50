import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentcollab.backend import (
    BudgetZero,
    ChatRequest,
    Finish,
    FixtureParseError,
    FunctionBackend,
    OpenAICompatibleBackend,
    ScopedBackend,
    ScriptedBackend,
    ScriptEntry,
    ScriptExhausted,
    TransportError,
    count_tokens,
    dump_script,
    load_script,
    truncate_tokens,
)
from agentcollab.domain import ChatMessage

MSGS = (ChatMessage("system", "You solve problems."), ChatMessage("user", "What is 1+1?"))


def req(tag="solver-draft", max_tokens=100):
    return ChatRequest(MSGS, max_tokens, tag=tag)


def test_count_tokens_examples():
    assert count_tokens("") == 0
    assert count_tokens("hello world") == 2
    assert count_tokens(" ".join(["w"] * 3000)) >= 1024


@given(st.text(), st.text())
def test_count_tokens_monotone_under_concatenation(a, b):
    assert count_tokens(a + b) >= count_tokens(a)


@given(st.text(), st.integers(0, 50))
def test_truncate_tokens_caps_count(text, limit):
    out = truncate_tokens(text, limit)
    assert count_tokens(out) == min(limit, count_tokens(text))
    assert text.startswith(out)


def test_scripted_entry_replayed(golden_backend):
    r = golden_backend.complete(req("solver-draft", max_tokens=32000))
    assert r.content.endswith("\\boxed{181}")
    assert r.finish is Finish.COMPLETE


def test_scripted_plain_entry_ends_with_boxed():
    b = ScriptedBackend([ScriptEntry("solver-draft", 0, "so x^2/100 = 181.25 and \\boxed{181}")])
    r = b.complete(req())
    assert r.content.endswith("\\boxed{181}")
    assert r.finish is Finish.COMPLETE
    assert r.tokens_out == count_tokens(r.content)


def test_budget_zero():
    with pytest.raises(BudgetZero):
        ScriptedBackend().complete(req(max_tokens=0))


def test_empty_script_is_exhausted():
    with pytest.raises(ScriptExhausted):
        ScriptedBackend().complete(req())


def test_unknown_tag_is_exhausted(golden_backend):
    with pytest.raises(ScriptExhausted):
        golden_backend.complete(req("ceo"))


def test_golden_script_answers_tags_in_order(golden_backend):
    for tag in ("recruiter", "solver-draft", "solver-critic", "evaluator"):
        assert golden_backend.complete(req(tag)).content.startswith("<think>")
    with pytest.raises(ScriptExhausted):
        golden_backend.complete(req("recruiter"))
    assert [a.tag for a in golden_backend.audit] == ["recruiter", "solver-draft", "solver-critic", "evaluator"]


def test_per_tag_cursor_and_reset():
    b = ScriptedBackend([ScriptEntry("a", 0, "first"), ScriptEntry("a", 1, "second"), ScriptEntry("b", 0, "other")])
    assert b.complete(req("a")).content == "first"
    assert b.complete(req("b")).content == "other"
    assert b.complete(req("a")).content == "second"
    b.reset()
    assert b.audit == []
    assert b.complete(req("a")).content == "first"


def test_scoped_lookup_prefers_exact_tag():
    b = ScriptedBackend([ScriptEntry("q1/judge", 0, "Yes"), ScriptEntry("judge", 0, "No")])
    assert ScopedBackend(b, "q1").complete(req("judge")).content == "Yes"
    assert ScopedBackend(b, "q2").complete(req("judge")).content == "No"


def test_long_scripted_response_is_length_capped():
    b = ScriptedBackend([ScriptEntry("x", 0, " ".join(["w"] * 50))])
    r = b.complete(req("x", max_tokens=10))
    assert r.finish is Finish.LENGTH_CAPPED
    assert r.tokens_out == 10 == count_tokens(r.content)


def test_duplicate_entries_rejected():
    with pytest.raises(FixtureParseError):
        ScriptedBackend([ScriptEntry("a", 0, "x"), ScriptEntry("a", 0, "y")])


def test_load_script_diagnostics(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"tag": "a", "index": 0, "content": "x"}\n{"tag": "a", "index": 0, "content": "y"}\n')
    with pytest.raises(FixtureParseError, match=r":2: duplicate"):
        load_script(p)
    p.write_text('{"tag": "a", "content": "x"}\n')
    with pytest.raises(FixtureParseError, match="missing field 'index'"):
        load_script(p)
    p.write_text("\n{not json\n")
    with pytest.raises(FixtureParseError, match=":2: invalid JSON"):
        load_script(p)
    p.write_text('{"tag": "a", "index": "0", "content": "x"}\n')
    with pytest.raises(FixtureParseError, match="'index' must be int"):
        load_script(p)


def test_dump_then_load_round_trip(tmp_path):
    entries = [ScriptEntry("a", 0, "x y", 2), ScriptEntry("b", 0, "z")]
    dump_script(entries, tmp_path / "s.jsonl")
    b = load_script(tmp_path / "s.jsonl")
    assert b.complete(req("a")).tokens_out == 2
    assert b.complete(req("b")).content == "z"


def test_concurrent_callers_consume_each_entry_once():
    n = 200
    b = ScriptedBackend([ScriptEntry("t", i, str(i)) for i in range(n)])
    seen = []
    lock = threading.Lock()

    def worker():
        for _ in range(n // 4):
            c = b.complete(req("t")).content
            with lock:
                seen.append(c)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(seen, key=int) == [str(i) for i in range(n)]
    assert len(b.audit) == n


def test_function_backend_caps_output():
    b = FunctionBackend(lambda r: "a b c d e")
    r = b.complete(req(max_tokens=3))
    assert (r.content, r.finish) == ("a b c", Finish.LENGTH_CAPPED)


# -- remote adapter ----------------------------------------------------------


def _ok(content="<think>r</think> \\boxed{2}", **extra):
    body = {
        "choices": [{"message": {"role": "assistant", "content": content, **extra}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 5},
    }
    return httpx.Response(200, json=body)


def _remote(handler, **kw):
    return OpenAICompatibleBackend(
        base_url="http://llm.test/v1", model_id="m1", api_key="secret",
        transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw,
    )


def test_remote_wire_format():
    captured = {}

    def handler(request):
        captured["url"] = str(request.url)
        captured["auth"] = request.headers["authorization"]
        captured["body"] = json.loads(request.content)
        return _ok()

    r = _remote(handler).complete(ChatRequest(MSGS, 256, temperature=0.5))
    assert captured["url"] == "http://llm.test/v1/chat/completions"
    assert captured["auth"] == "Bearer secret"
    assert captured["body"] == {
        "model": "m1",
        "messages": [{"role": "system", "content": MSGS[0].content}, {"role": "user", "content": MSGS[1].content}],
        "max_tokens": 256,
        "temperature": 0.5,
    }
    assert (r.content, r.tokens_in, r.tokens_out, r.finish) == ("<think>r</think> \\boxed{2}", 11, 5, Finish.COMPLETE)


def test_remote_retries_then_succeeds():
    calls = []
    sleeps = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return _ok()

    b = OpenAICompatibleBackend(
        base_url="http://llm.test", model_id="m", transport=httpx.MockTransport(handler),
        sleep=sleeps.append, backoff=0.5,
    )
    assert b.complete(req()).content.endswith("\\boxed{2}")
    assert sleeps == [0.5, 1.0]


def test_remote_exhausts_retries():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused")

    with pytest.raises(TransportError, match="after 3 attempts"):
        _remote(handler, retry_limit=2).complete(req())
    assert len(calls) == 3


def test_remote_client_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    with pytest.raises(TransportError, match="401"):
        _remote(handler).complete(req())
    assert len(calls) == 1


def test_remote_length_cap_and_reasoning_field():
    def handler(request):
        body = {
            "choices": [{"message": {"content": "\\boxed{2}", "reasoning_content": "thinking"}, "finish_reason": "length"}],
        }
        return httpx.Response(200, json=body)

    r = _remote(handler).complete(req())
    assert r.content == "<think>\nthinking\n</think>\n\\boxed{2}"
    assert r.finish is Finish.LENGTH_CAPPED
    assert r.tokens_out == count_tokens(r.content)


def test_remote_malformed_payload():
    with pytest.raises(TransportError, match="malformed"):
        _remote(lambda r: httpx.Response(200, json={"nope": 1})).complete(req())


def test_remote_needs_url_and_model(monkeypatch):
    monkeypatch.delenv("AGENTCOLLAB_BASE_URL", raising=False)
    with pytest.raises(ValueError):
        OpenAICompatibleBackend(model_id="m")
    with pytest.raises(ValueError):
        OpenAICompatibleBackend(base_url="http://x")
    monkeypatch.setenv("AGENTCOLLAB_BASE_URL", "http://env.test/")
    assert OpenAICompatibleBackend(model_id="m").base_url == "http://env.test"
