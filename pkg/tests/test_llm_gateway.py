#!/usr/bin/env python3
"""
Test cases for the chat-completion gateway: fingerprints, mock scripts,
the record/replay cache and the live backend against a local stub server
"""

import json
import pytest
import sys
import os
import threading
from concurrent.futures import ThreadPoolExecutor

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from llm_gateway import (
    BackendConfig,
    BackendKind,
    CacheKey,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    FinishReason,
    LLMGateway,
    MockRule,
    MockScript,
    RequestTag,
    ResponseSource,
    RetryPolicy,
    cache_load,
    cache_store,
    fan_out,
    mock_respond,
)
from pace_errors import (
    BackendUnavailableError,
    CacheMissError,
    ConfigError,
    MockUnmatchedError,
    RejectedRequestError,
)


def _request(content, tag=RequestTag.ACTOR, **kwargs):
    return ChatRequest(
        model="m",
        messages=(ChatMessage(role="user", content=content),),
        request_tag=tag,
        **kwargs,
    )


class TestCacheKey:
    """Test cases for request fingerprints"""

    def test_same_request_same_fingerprint(self):
        """Fingerprints are stable and ignore the request tag"""
        a = CacheKey.from_request(_request("hello", RequestTag.ACTOR))
        b = CacheKey.from_request(_request("hello", RequestTag.EVAL))
        assert a == b
        assert len(a.fingerprint) == 64

    def test_decoding_settings_change_fingerprint(self):
        """Content, temperature and max_tokens are all part of the key"""
        base = CacheKey.from_request(_request("hello")).fingerprint
        assert CacheKey.from_request(_request("hello!")).fingerprint != base
        assert CacheKey.from_request(_request("hello", temperature=0.7)).fingerprint != base
        assert CacheKey.from_request(_request("hello", max_tokens=64)).fingerprint != base


class TestMockRespond:
    """Test cases for scripted mock responses"""

    def test_first_matching_rule_wins(self):
        """Rules are tried in order"""
        script = MockScript(rules=(
            MockRule(pattern="cat", response="first"),
            MockRule(pattern="cat", response="second"),
        ))
        assert mock_respond(_request("a cat"), script).content == "first"

    def test_capture_substitution(self):
        """$k is replaced by capture group k; unknown groups stay literal"""
        script = MockScript(rules=(MockRule(pattern=r"Input: (\w+)", response="got $1 and $2"),))
        response = mock_respond(_request("Input: cat"), script)

        assert response.content == "got cat and $2"
        assert response.source == ResponseSource.MOCK
        assert response.fingerprint == CacheKey.from_request(_request("Input: cat")).fingerprint

    def test_tag_filter_and_actor_rules_cover_eval(self):
        """Tagged rules only match their tag; actor rules also answer scoring calls"""
        script = MockScript(rules=(
            MockRule(tag=RequestTag.CRITIC, pattern=".", response="critic"),
            MockRule(tag=RequestTag.ACTOR, pattern=".", response="actor"),
        ))
        assert mock_respond(_request("x", RequestTag.CRITIC), script).content == "critic"
        assert mock_respond(_request("x", RequestTag.EVAL), script).content == "actor"
        with pytest.raises(MockUnmatchedError, match="mock unmatched request"):
            mock_respond(_request("x", RequestTag.UPDATE), script)

    def test_default_rule(self):
        """The default answers anything unmatched"""
        script = MockScript(rules=(MockRule(pattern="zzz", response="no"),), default="fallback")
        assert mock_respond(_request("abc"), script).content == "fallback"

    def test_patterns_span_lines(self):
        """Patterns are compiled with DOTALL"""
        script = MockScript(rules=(MockRule(pattern="a.b", response="ok"),))
        assert mock_respond(_request("a\nb"), script).content == "ok"

    def test_missing_script_is_config_error(self, tmp_path):
        """A mock backend without a readable script fails at construction"""
        backend = BackendConfig(kind=BackendKind.MOCK, mock_script=str(tmp_path / "none.json"))
        with pytest.raises(ConfigError):
            LLMGateway(backend)


class TestCache:
    """Test cases for the one-file-per-fingerprint cache"""

    def test_store_then_load(self, tmp_path):
        """A stored response comes back with source=cache"""
        request = _request("hello")
        key = CacheKey.from_request(request)
        response = ChatResponse(content="hi", source=ResponseSource.LIVE, fingerprint=key.fingerprint)
        cache_store(key, response, str(tmp_path), request)

        loaded = cache_load(key, str(tmp_path))
        assert loaded.content == "hi"
        assert loaded.source == ResponseSource.CACHE
        assert (tmp_path / f"{key.fingerprint}.json").exists()

        entry = json.loads((tmp_path / f"{key.fingerprint}.json").read_text())
        assert entry["request"]["messages"][0]["content"] == "hello"

    def test_identical_rewrite_is_noop(self, tmp_path):
        """Rewriting the same entry leaves the file untouched"""
        request = _request("hello")
        key = CacheKey.from_request(request)
        response = ChatResponse(content="hi", source=ResponseSource.LIVE)
        cache_store(key, response, str(tmp_path), request)
        path = tmp_path / f"{key.fingerprint}.json"
        before = path.stat().st_mtime_ns

        cache_store(key, response, str(tmp_path), request)
        assert path.stat().st_mtime_ns == before
        assert [p.name for p in tmp_path.iterdir()] == [path.name], "no temp files left behind"

    def test_concurrent_stores_leave_one_file(self, tmp_path):
        """Many writers on one key end with a single parseable entry"""
        request = _request("hello")
        key = CacheKey.from_request(request)
        response = ChatResponse(content="hi", source=ResponseSource.LIVE)
        start = threading.Barrier(16)

        def store(_):
            start.wait()
            cache_store(key, response, str(tmp_path), request)

        with ThreadPoolExecutor(max_workers=16) as pool:
            list(pool.map(store, range(16)))

        names = os.listdir(tmp_path)
        assert names == [f"{key.fingerprint}.json"]
        assert not [n for n in names if n.endswith(".tmp")]
        assert cache_load(key, str(tmp_path)).content == "hi"

    def test_distinct_keys_distinct_files(self, tmp_path):
        for text in ["a", "b", "c"]:
            request = _request(text)
            key = CacheKey.from_request(request)
            cache_store(key, ChatResponse(content=text.upper(), source=ResponseSource.LIVE), str(tmp_path), request)

        assert len(os.listdir(tmp_path)) == 3
        assert cache_load(CacheKey.from_request(_request("b")), str(tmp_path)).content == "B"

    def test_replay_miss(self, tmp_path):
        """Replay raises a cache miss naming the fingerprint"""
        gateway = LLMGateway(BackendConfig(kind=BackendKind.REPLAY, cache_dir=str(tmp_path)))
        request = _request("never recorded")

        with pytest.raises(CacheMissError) as excinfo:
            gateway.complete(request)
        assert str(excinfo.value) == f"cache miss: {CacheKey.from_request(request).fingerprint}"
        assert excinfo.value.exit_code == 4


class TestGatewayRequests:
    """Test cases for request construction and fan-out"""

    def test_build_request_defaults_and_system_prompt(self, tmp_path):
        """Decoding defaults apply and the optional system message comes first"""
        backend = BackendConfig(
            kind=BackendKind.REPLAY,
            cache_dir=str(tmp_path),
            system_prompt="You are helpful.",
            models={"critic": "critic-model"},
        )
        gateway = LLMGateway(backend)
        request = gateway.build_request(RequestTag.CRITIC, "text")

        assert [m.role for m in request.messages] == ["system", "user"]
        assert request.model == "critic-model"
        assert (request.temperature, request.top_p, request.max_tokens) == (0.0, 1.0, 512)
        assert gateway.build_request(RequestTag.UPDATE, "t", temperature=0.9).temperature == 0.9

    def test_missing_api_key_names_variable(self, monkeypatch):
        """The live backend refuses to start without its key"""
        monkeypatch.delenv("PACE_API_KEY", raising=False)
        with pytest.raises(ConfigError, match="PACE_API_KEY"):
            LLMGateway(BackendConfig(kind=BackendKind.LIVE))

    def test_fan_out_keeps_input_order(self):
        """Results come back in input order regardless of concurrency"""
        assert fan_out(lambda x: x * x, list(range(20)), 8) == [x * x for x in range(20)]
        assert fan_out(lambda x: x, [], 4) == []


class TestLiveBackend:
    """Test cases for the live backend against the local stub server"""

    def _gateway(self, stub_server, tmp_path, attempts=3):
        return LLMGateway(BackendConfig(
            kind=BackendKind.LIVE,
            base_url=stub_server.base_url,
            cache_dir=str(tmp_path / "cache"),
            retry=RetryPolicy(max_attempts=attempts, backoff_base_ms=0),
        ))

    def test_records_then_reads_through(self, stub_server, tmp_path):
        """First call hits the server, the repeat is served from the cache"""
        gateway = self._gateway(stub_server, tmp_path)
        request = gateway.build_request(RequestTag.CRITIC, "please give the critical advice")

        first = gateway.complete(request)
        assert first.content == "Mention MAGIC in the instruction."
        assert first.source == ResponseSource.LIVE
        assert first.finish_reason == FinishReason.STOP

        second = gateway.complete(request)
        assert second.source == ResponseSource.CACHE
        assert second.content == first.content
        assert stub_server.calls == 1

    def test_retries_server_errors(self, stub_server, tmp_path):
        """429 and 5xx are retried until success"""
        stub_server.failures = [500, 429]
        gateway = self._gateway(stub_server, tmp_path)
        response = gateway.complete(gateway.build_request(RequestTag.ACTOR, "anything"))

        assert response.content == "unknown"
        assert stub_server.calls == 3

    def test_exhausted_retries(self, stub_server, tmp_path):
        """Persistent failures end as BackendUnavailableError"""
        stub_server.failures = [503, 503]
        gateway = self._gateway(stub_server, tmp_path, attempts=2)

        with pytest.raises(BackendUnavailableError):
            gateway.complete(gateway.build_request(RequestTag.ACTOR, "anything"))

    def test_client_errors_are_rejected(self, stub_server, tmp_path):
        """4xx other than 429 is not retried"""
        stub_server.failures = [400]
        gateway = self._gateway(stub_server, tmp_path)

        with pytest.raises(RejectedRequestError) as excinfo:
            gateway.complete(gateway.build_request(RequestTag.ACTOR, "anything"))
        assert excinfo.value.status == 400
        assert stub_server.calls == 1


if __name__ == "__main__":
    pytest.main([__file__])
