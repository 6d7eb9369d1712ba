"""
Shared fixtures: tiny tasks, mock-script backends and a local stub
OpenAI-compatible server.
"""

import json
import os
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from data_models import DemoPair, SplitSpec, TaskSpec
from llm_gateway import (
    BackendConfig,
    BackendKind,
    ChatMessage,
    ChatRequest,
    MockScript,
    RequestTag,
    load_mock_script,
    mock_respond,
)

FIXTURES_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")

WORDS = [
    "apple", "river", "stone", "cloud", "tiger", "piano", "lemon", "forest",
    "candle", "rocket", "silver", "garden", "window", "pencil", "island", "jacket",
    "honey", "violin", "kettle", "zebra",
]

# Critic advice carries the token that the actor needs to answer correctly
MAGIC_RULES = [
    {"tag": "critic", "pattern": "give the critical advice", "response": "Mention MAGIC in the instruction."},
    {
        "tag": "update",
        "pattern": r"instruction:(.*?)\. Based on the instruction they produced the following "
                   r"critical advices: Advice 1: ([^\n]*)",
        "response": "$1 $2",
    },
    {"tag": "update", "pattern": r"instruction:(.*?)\. Based on", "response": "$1 please"},
    {"tag": "actor", "pattern": r"Instruction: [^\n]*MAGIC[^\n]*\nInput: ([^\n]*),\nOutput:", "response": "$1"},
    {"default": "unknown"},
]

@pytest.fixture
def write_mock_script(tmp_path):
    """Write a rule list to a mock script file and return its path"""
    counter = {"n": 0}

    def _write(rules):
        counter["n"] += 1
        path = tmp_path / f"mock_script_{counter['n']}.json"
        path.write_text(json.dumps(rules), encoding="utf-8")
        return str(path)

    return _write

@pytest.fixture
def mock_backend(write_mock_script):
    """BackendConfig for a scripted mock backend"""

    def _backend(rules):
        return BackendConfig(kind=BackendKind.MOCK, mock_script=write_mock_script(rules), cache_dir=None)

    return _backend

@pytest.fixture
def identity_task():
    """Repeat-the-word task scored with exact_match"""
    return TaskSpec(
        name="identity",
        metric="exact_match",
        examples=tuple(DemoPair(input=w, outputs=(w,)) for w in WORDS),
        prompts=(),
    )

@pytest.fixture
def identity_split():
    """Fixed split: 8 train, 6 val, 6 test"""
    pairs = [DemoPair(input=w, outputs=(w,)) for w in WORDS]
    return SplitSpec(train=tuple(pairs[:8]), val=tuple(pairs[8:14]), test=tuple(pairs[14:]), seed=0)

@pytest.fixture
def magic_backend(mock_backend):
    return mock_backend(MAGIC_RULES)

class RecordingGateway:
    """Wraps a gateway and keeps every request it completes"""

    def __init__(self, gateway):
        self.inner = gateway
        self.backend = gateway.backend
        self.requests = []
        self._lock = threading.Lock()

    def build_request(self, *args, **kwargs):
        return self.inner.build_request(*args, **kwargs)

    def complete(self, request):
        with self._lock:
            self.requests.append(request)
        return self.inner.complete(request)

    def tagged(self, tag):
        return [r for r in self.requests if r.request_tag == tag]

@pytest.fixture
def recording():
    return RecordingGateway

# Stub OpenAI-compatible server
class StubServer:
    """Answers /chat/completions from an untagged mock script"""

    def __init__(self, script: MockScript):
        self.script = script
        self.calls = 0
        self.failures = []  # HTTP statuses to return before answering
        self._lock = threading.Lock()
        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                with stub._lock:
                    stub.calls += 1
                    status = stub.failures.pop(0) if stub.failures else 200

                if status != 200:
                    payload = {"error": {"message": "stub failure", "type": "stub", "code": status}}
                else:
                    request = ChatRequest(
                        model=body["model"],
                        messages=tuple(ChatMessage(role=m["role"], content=m["content"]) for m in body["messages"]),
                        request_tag=RequestTag.ACTOR,
                    )
                    content = mock_respond(request, stub.script).content
                    payload = {
                        "id": "chatcmpl-stub",
                        "object": "chat.completion",
                        "created": 0,
                        "model": body["model"],
                        "choices": [{
                            "index": 0,
                            "message": {"role": "assistant", "content": content},
                            "finish_reason": "stop",
                        }],
                        "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2},
                    }

                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self):
        self.thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

@pytest.fixture
def stub_server(tmp_path, monkeypatch):
    """Running stub server answering with the magic-world rules (tags dropped)"""
    rules = [{k: v for k, v in rule.items() if k != "tag"} for rule in MAGIC_RULES]
    path = tmp_path / "stub_script.json"
    path.write_text(json.dumps(rules), encoding="utf-8")
    monkeypatch.setenv("PACE_API_KEY", "stub-key")
    monkeypatch.delenv("PACE_BASE_URL", raising=False)

    server = StubServer(load_mock_script(str(path))).start()
    yield server
    server.stop()
