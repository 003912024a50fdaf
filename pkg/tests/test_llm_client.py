import json

import httpx
import pytest

from surveymirror.llm_client import (
    AuthenticationError,
    BackendError,
    CompletionRequest,
    HttpBackend,
    LLMClient,
    MalformedResponseError,
    RequestTag,
    ResponseCache,
    RetriesExhaustedError,
)


def ok(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def backend_with(handler, **kw):
    sleeps = []
    b = HttpBackend("test-model", base_url="http://llm.test/v1", api_key="k", transport=httpx.MockTransport(handler),
                    sleep=sleeps.append, seed=0, **kw)
    return b, sleeps


class Counting:
    model_id = "counting"

    def __init__(self, reply="[4]"):
        self.reply = reply
        self.calls = 0

    def complete(self, request):
        self.calls += 1
        return self.reply


def test_cache_key_covers_model_prompt_temperature_template_and_respondent():
    base = CompletionRequest("m", "p", tag=RequestTag("r1", "omni", "v1"))
    assert base.cache_key() == CompletionRequest("m", "p", tag=RequestTag("r1", "demo", "v1")).cache_key()
    for other in (CompletionRequest("m", "p", tag=RequestTag("r2", "omni", "v1")),CompletionRequest("m2", "p", tag=base.tag), CompletionRequest("m", "q", tag=base.tag),
                  CompletionRequest("m", "p", temperature=0.5, tag=base.tag),
                  CompletionRequest("m", "p", tag=RequestTag("r1", "omni", "v2"))):
        assert other.cache_key() != base.cache_key()


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest("m", "  ")
    with pytest.raises(ValueError):
        CompletionRequest("m", "p", temperature=-1)


def test_cache_hit_skips_backend(tmp_path):
    backend = Counting()
    client = LLMClient(backend, ResponseCache(tmp_path))
    req = client.request("hello")
    assert client.complete(req) == "[4]"
    assert client.complete(req) == "[4]"
    assert backend.calls == 1
    assert client.stats() == {"cache_hits": 1, "cache_misses": 1, "backend_calls": 1}
    doc = json.loads(next(tmp_path.glob("*.json")).read_text())
    assert doc["reply"] == "[4]" and doc["request"]["prompt"] == "hello" and "timestamp" in doc


def test_cache_shared_across_clients(tmp_path):
    LLMClient(Counting("[1]"), ResponseCache(tmp_path)).complete(CompletionRequest("counting", "x"))
    b = Counting("[2]")
    assert LLMClient(b, ResponseCache(tmp_path)).complete(CompletionRequest("counting", "x")) == "[1]"
    assert b.calls == 0


def test_corrupt_cache_entry_is_ignored(tmp_path):
    cache = ResponseCache(tmp_path)
    req = CompletionRequest("counting", "x")
    cache.path(req.cache_key()).write_text("{broken")
    assert LLMClient(Counting(), cache).complete(req) == "[4]"


def test_http_success_payload():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers["authorization"]
        seen["url"] = str(request.url)
        return ok("[3, 4]")

    b, _ = backend_with(handler)
    assert b.complete(CompletionRequest("test-model", "hi", max_tokens=20)) == "[3, 4]"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    assert [m["role"] for m in seen["body"]["messages"]] == ["system", "user"]
    assert seen["body"]["max_tokens"] == 20 and seen["body"]["temperature"] == 0


def test_auth_error_is_not_cached(tmp_path):
    b, sleeps = backend_with(lambda r: httpx.Response(401, text="bad key"))
    cache = ResponseCache(tmp_path)
    with pytest.raises(AuthenticationError):
        LLMClient(b, cache).complete(CompletionRequest("test-model", "hi"))
    assert len(cache) == 0 and sleeps == []


def test_missing_key(monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    with pytest.raises(AuthenticationError):
        HttpBackend("m").complete(CompletionRequest("m", "hi"))


def test_rate_limit_retried_then_succeeds():
    replies = iter([httpx.Response(429, headers={"retry-after": "2"}), httpx.Response(503), ok("[5]")])
    b, sleeps = backend_with(lambda r: next(replies))
    assert b.complete(CompletionRequest("test-model", "hi")) == "[5]"
    assert sleeps[0] == 2.0
    assert 1.0 <= sleeps[1] <= 2.0  # attempt 1: base 2, jittered into [1, 2]


def test_retries_exhausted():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectTimeout("slow", request=request)

    b, sleeps = backend_with(handler, max_retries=3, backoff_cap=4.0)
    with pytest.raises(RetriesExhaustedError):
        b.complete(CompletionRequest("test-model", "hi"))
    assert len(calls) == 4 and len(sleeps) == 3
    assert all(s <= 4.0 for s in sleeps)


def test_other_client_errors_fail_fast():
    b, sleeps = backend_with(lambda r: httpx.Response(400, text="bad request"))
    with pytest.raises(BackendError):
        b.complete(CompletionRequest("test-model", "hi"))
    assert sleeps == []


@pytest.mark.parametrize("response", [
    httpx.Response(200, text="not json"),
    httpx.Response(200, json={"choices": []}),
    httpx.Response(200, json={"choices": [{"message": {"content": None}}]}),
])
def test_malformed_bodies(response):
    b, _ = backend_with(lambda r: response)
    with pytest.raises(MalformedResponseError):
        b.complete(CompletionRequest("test-model", "hi"))
