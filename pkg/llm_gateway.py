# llm_gateway.py
"""
Uniform chat-completion gateway with live, replay and mock backends.

The live backend talks to any OpenAI-compatible endpoint through ChatOpenAI
and records every completion into a one-file-per-fingerprint cache; the
replay backend serves only from that cache; the mock backend answers from an
ordered list of regex rules so whole optimization runs can be scripted.
"""

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, TypeVar

import openai
from langchain_core.messages import BaseMessage, HumanMessage, SystemMessage
from langchain_core.runnables import RunnableLambda
from langchain_openai import ChatOpenAI
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pace_errors import (
    BackendUnavailableError,
    CacheMissError,
    CacheWriteError,
    ConfigError,
    MockUnmatchedError,
    RejectedRequestError,
)

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo"

# Enums
class RequestTag(str, Enum):
    """Role a request plays; eval marks actor-template executions used for scoring"""
    ACTOR = "actor"
    CRITIC = "critic"
    UPDATE = "update"
    EVAL = "eval"

class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"

class ResponseSource(str, Enum):
    LIVE = "live"
    CACHE = "cache"
    MOCK = "mock"

class BackendKind(str, Enum):
    LIVE = "live"
    REPLAY = "replay"
    MOCK = "mock"

# Request / response models
class ChatMessage(BaseModel):
    """One chat message"""
    model_config = ConfigDict(frozen=True)

    role: Literal["system", "user"] = Field(description="Message role")
    content: str = Field(description="Message text")

class ChatRequest(BaseModel):
    """One backend call; decoding defaults are temperature 0, top_p 1, max_tokens 512"""
    model_config = ConfigDict(frozen=True)

    model: str = Field(description="Model identifier, treated as opaque")
    messages: Tuple[ChatMessage, ...] = Field(min_length=1, description="Ordered chat messages")
    temperature: float = Field(default=0.0, ge=0.0)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    max_tokens: int = Field(default=512, gt=0)
    request_tag: RequestTag = Field(description="actor, critic, update or eval")

    def content_text(self) -> str:
        """Concatenated message content, the text mock rules match against"""
        return "\n".join(message.content for message in self.messages)

    def canonical(self) -> Dict[str, Any]:
        """The fingerprinted part of the request"""
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": float(self.temperature),
            "top_p": float(self.top_p),
            "max_tokens": int(self.max_tokens),
        }

class ChatResponse(BaseModel):
    """Completion text plus where it came from"""
    model_config = ConfigDict(frozen=True)

    content: str = Field(default="", description="Completion text")
    finish_reason: FinishReason = Field(default=FinishReason.STOP)
    source: ResponseSource = Field(description="live, cache or mock")
    fingerprint: str = Field(default="", description="Cache fingerprint of the request")

class CacheKey(BaseModel):
    """Stable fingerprint of (model, messages, temperature, top_p, max_tokens)"""
    model_config = ConfigDict(frozen=True)

    fingerprint: str

    @classmethod
    def from_request(cls, request: ChatRequest) -> "CacheKey":
        payload = json.dumps(
            request.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":")
        )
        return cls(fingerprint=hashlib.sha256(payload.encode("utf-8")).hexdigest())

# Backend configuration
class RetryPolicy(BaseModel):
    max_attempts: int = Field(default=5, ge=1)
    backoff_base_ms: int = Field(default=500, ge=0)

class BackendConfig(BaseModel):
    """Which backend to use and how to reach it"""
    kind: BackendKind = Field(default=BackendKind.LIVE)
    base_url: Optional[str] = Field(default=DEFAULT_BASE_URL, description="Live endpoint root")
    api_key_env: str = Field(default="PACE_API_KEY", description="Environment variable holding the API key")
    cache_dir: Optional[str] = Field(default=".pace_cache", description="Record/replay cache directory")
    mock_script: Optional[str] = Field(default=None, description="Path to a mock script")
    retry: RetryPolicy = Field(default_factory=RetryPolicy)
    timeout_s: float = Field(default=60.0, gt=0)

    # Decoding settings
    model: str = Field(default=DEFAULT_MODEL)
    models: Dict[str, str] = Field(default_factory=dict, description="Per-tag model override")
    system_prompt: Optional[str] = Field(default=None, description="Optional system message")
    temperature: float = Field(default=0.0, ge=0.0)
    top_p: float = Field(default=1.0, gt=0.0, le=1.0)
    max_tokens: int = Field(default=512, gt=0)

    @field_validator("models")
    @classmethod
    def _known_tags(cls, value: Dict[str, str]) -> Dict[str, str]:
        unknown = sorted(set(value) - {tag.value for tag in RequestTag})
        if unknown:
            raise ValueError(f"unknown request tags in models: {unknown}")
        return value

    @model_validator(mode="after")
    def _kind_requirements(self) -> "BackendConfig":
        if self.kind == BackendKind.LIVE and not self.base_url:
            raise ValueError("backend kind live requires base_url")
        if self.kind == BackendKind.MOCK and not self.mock_script:
            raise ValueError("backend kind mock requires mock_script")
        if self.kind == BackendKind.REPLAY and not self.cache_dir:
            raise ValueError("backend kind replay requires cache_dir")
        return self

# Mock scripts
class MockRule(BaseModel):
    """First matching rule wins; $k in the response is replaced by capture group k"""
    model_config = ConfigDict(frozen=True)

    tag: Optional[RequestTag] = Field(default=None, description="Restrict to one tag; None matches all")
    pattern: str
    response: str

    @field_validator("pattern")
    @classmethod
    def _compiles(cls, value: str) -> str:
        re.compile(value, re.DOTALL)
        return value

    def applies_to(self, tag: RequestTag) -> bool:
        if self.tag is None or self.tag == tag:
            return True
        # Scoring calls execute the actor template
        return self.tag == RequestTag.ACTOR and tag == RequestTag.EVAL

class MockScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    rules: Tuple[MockRule, ...] = Field(default=())
    default: Optional[str] = Field(default=None)

def load_mock_script(path: str) -> MockScript:
    """Load a JSON array of {tag, pattern, response} rules plus an optional {default: ...}"""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            items = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read mock script {path}: {e}") from e

    if not isinstance(items, list):
        raise ConfigError(f"mock script {path} must be a JSON array")

    rules: List[MockRule] = []
    default: Optional[str] = None
    try:
        for item in items:
            if "default" in item:
                default = item["default"]
            else:
                rules.append(MockRule(**item))
    except (TypeError, ValueError, re.error) as e:
        raise ConfigError(f"invalid mock rule in {path}: {e}") from e

    return MockScript(rules=tuple(rules), default=default)

_CAPTURE = re.compile(r"\$(\d+)")

def _substitute(template: str, match: "re.Match[str]") -> str:
    def group(ref: "re.Match[str]") -> str:
        index = int(ref.group(1))
        if index > (match.re.groups or 0):
            return ref.group(0)
        return match.group(index) or ""

    return _CAPTURE.sub(group, template)

def mock_respond(request: ChatRequest, script: MockScript) -> ChatResponse:
    """Answer from the first rule whose tag and pattern match the request"""
    text = request.content_text()
    content: Optional[str] = None

    for rule in script.rules:
        if not rule.applies_to(request.request_tag):
            continue
        match = re.search(rule.pattern, text, re.DOTALL)
        if match:
            content = _substitute(rule.response, match)
            break

    if content is None:
        if script.default is None:
            raise MockUnmatchedError()
        content = script.default

    return ChatResponse(
        content=content,
        finish_reason=FinishReason.STOP,
        source=ResponseSource.MOCK,
        fingerprint=CacheKey.from_request(request).fingerprint,
    )

# Record/replay cache
def _cache_path(directory: str, fingerprint: str) -> Path:
    return Path(directory) / f"{fingerprint}.json"

def cache_store(
    key: CacheKey,
    response: ChatResponse,
    directory: str,
    request: Optional[ChatRequest] = None,
) -> None:
    """Atomically write one cache file per fingerprint"""
    entry = {
        "fingerprint": key.fingerprint,
        "request": request.canonical() if request is not None else None,
        "response": {
            "content": response.content,
            "finish_reason": response.finish_reason.value,
        },
    }
    path = _cache_path(directory, key.fingerprint)

    try:
        if path.exists():
            with open(path, "r", encoding="utf-8") as handle:
                if json.load(handle) == entry:
                    return
    except (OSError, json.JSONDecodeError):
        pass  # unreadable entry gets rewritten

    tmp_name = None
    try:
        Path(directory).mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            "w", dir=directory, prefix=f".{key.fingerprint[:12]}-", suffix=".tmp",
            delete=False, encoding="utf-8",
        ) as handle:
            tmp_name = handle.name
            json.dump(entry, handle, ensure_ascii=False, sort_keys=True, indent=2)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise CacheWriteError(f"cache write failed: {e}") from e

def cache_load(key: CacheKey, directory: str) -> Optional[ChatResponse]:
    """Cached response for a fingerprint, or None"""
    path = _cache_path(directory, key.fingerprint)
    if not path.exists():
        return None
    try:
        with open(path, "r", encoding="utf-8") as handle:
            entry = json.load(handle)
        stored = entry["response"]
        return ChatResponse(
            content=stored["content"],
            finish_reason=FinishReason(stored["finish_reason"]),
            source=ResponseSource.CACHE,
            fingerprint=key.fingerprint,
        )
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        logger.warning(f"⚠️ Ignoring unreadable cache entry {path}: {e}")
        return None

# Gateway
class LLMGateway:
    """The model interface every optimizer and scoring call goes through"""

    def __init__(self, backend: BackendConfig):
        self.backend = backend
        self.mock_script: Optional[MockScript] = None
        self._api_key: Optional[str] = None
        self._clients: Dict[Tuple[str, float, float, int], ChatOpenAI] = {}
        self._lock = threading.Lock()

        if backend.kind == BackendKind.MOCK:
            self.mock_script = load_mock_script(backend.mock_script)
        elif backend.kind == BackendKind.LIVE:
            self._api_key = os.getenv(backend.api_key_env, "").strip()
            if not self._api_key:
                raise ConfigError(
                    f"missing API key: environment variable {backend.api_key_env} is not set"
                )

    def model_for(self, tag: RequestTag) -> str:
        return self.backend.models.get(tag.value, self.backend.model)

    def build_request(
        self, tag: RequestTag, content: str, temperature: Optional[float] = None
    ) -> ChatRequest:
        """Wrap rendered template text into a request with the configured decoding settings"""
        messages = []
        if self.backend.system_prompt:
            messages.append(ChatMessage(role="system", content=self.backend.system_prompt))
        messages.append(ChatMessage(role="user", content=content))

        return ChatRequest(
            model=self.model_for(tag),
            messages=tuple(messages),
            temperature=self.backend.temperature if temperature is None else temperature,
            top_p=self.backend.top_p,
            max_tokens=self.backend.max_tokens,
            request_tag=tag,
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        kind = self.backend.kind
        if kind == BackendKind.MOCK:
            return mock_respond(request, self.mock_script)

        key = CacheKey.from_request(request)
        cached = cache_load(key, self.backend.cache_dir) if self.backend.cache_dir else None
        if cached is not None:
            return cached
        if kind == BackendKind.REPLAY:
            raise CacheMissError(key.fingerprint)

        response = self._complete_live(request, key)
        if self.backend.cache_dir and response.finish_reason != FinishReason.ERROR:
            cache_store(key, response, self.backend.cache_dir, request)
        return response

    def _client_for(self, request: ChatRequest) -> ChatOpenAI:
        settings = (request.model, request.temperature, request.top_p, request.max_tokens)
        with self._lock:
            if settings not in self._clients:
                self._clients[settings] = ChatOpenAI(
                    model=request.model,
                    base_url=self.backend.base_url,
                    api_key=self._api_key,
                    temperature=request.temperature,
                    top_p=request.top_p,
                    max_tokens=request.max_tokens,
                    timeout=self.backend.timeout_s,
                    max_retries=0,
                )
            return self._clients[settings]

    def _complete_live(self, request: ChatRequest, key: CacheKey) -> ChatResponse:
        client = self._client_for(request)
        messages: List[BaseMessage] = [
            SystemMessage(content=m.content) if m.role == "system" else HumanMessage(content=m.content)
            for m in request.messages
        ]
        retry = self.backend.retry
        last_error: Optional[Exception] = None

        for attempt in range(1, retry.max_attempts + 1):
            try:
                reply = client.invoke(messages)
                break
            except openai.APIStatusError as e:
                if e.status_code != 429 and e.status_code < 500:
                    raise RejectedRequestError(e.status_code, e.message) from e
                last_error = e
            except (openai.APITimeoutError, openai.APIConnectionError) as e:
                last_error = e

            logger.warning(
                f"⚠️ {request.request_tag.value} call failed "
                f"(attempt {attempt}/{retry.max_attempts}): {last_error}"
            )
            if attempt < retry.max_attempts:
                time.sleep(retry.backoff_base_ms * (2 ** (attempt - 1)) / 1000.0)
        else:
            raise BackendUnavailableError(
                f"backend unavailable after {retry.max_attempts} attempts: {last_error}"
            )

        content = reply.content if isinstance(reply.content, str) else ""
        finish = (reply.response_metadata or {}).get("finish_reason")
        if finish == "length":
            finish_reason = FinishReason.LENGTH
        elif content or finish == "stop":
            finish_reason = FinishReason.STOP
        else:
            finish_reason = FinishReason.ERROR

        return ChatResponse(
            content=content,
            finish_reason=finish_reason,
            source=ResponseSource.LIVE,
            fingerprint=key.fingerprint,
        )

def complete(request: ChatRequest, backend: BackendConfig) -> ChatResponse:
    """One-shot completion through a fresh gateway"""
    return LLMGateway(backend).complete(request)

T = TypeVar("T")
R = TypeVar("R")

def fan_out(func: Callable[[T], R], items: Sequence[T], max_concurrency: int = 4) -> List[R]:
    """Apply func to items on a bounded thread pool; results keep input order"""
    if not items:
        return []
    return RunnableLambda(func).batch(list(items), config={"max_concurrency": max_concurrency})
