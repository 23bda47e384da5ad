"""Deterministic completions endpoint for offline dry runs.

The mock reads the rendered prompt, collects the answer-slot IDs of the
history lines from newest to oldest, and returns them as first-step
candidates with halving probabilities. Noise a real model would produce
is mixed in at fixed positions: a "None" abstention, a whitespace variant
of the top answer, a non-numeric token and an out-of-range ID.

Run standalone with ``python -m tkgforge.mock_endpoint --port 8000``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx

LINE = re.compile(r"^(\d+):\[([^,\]]+),([^,\]]+),([^,\]]+)\]$")
OUT_OF_RANGE = "99999"
HEADERS = ("Entity:", "Relation:", "History:", "Query:", "Answer:")


def _parse_prompt(prompt: str):
    history, query = [], None
    section = None
    for line in prompt.splitlines():
        if line in HEADERS:
            section = line[:-1]
            continue
        m = LINE.match(line)
        if not m:
            continue
        if section == "History":
            history.append(m.groups())
        elif section == "Query":
            query = m.groups()
    return history, query


def mock_top_tokens(prompt: str, top_k: int = 20) -> list[tuple[str, float]]:
    """``(token, logprob)`` pairs the mock returns for ``prompt``."""
    history, query = _parse_prompt(prompt)
    slot = 1 if query is not None and query[1] == "?" else 3
    cands = list(dict.fromkeys(line[slot] for line in reversed(history)))
    tokens = [c if i % 2 == 0 else " " + c for i, c in enumerate(cands)]
    tokens.insert(min(1, len(tokens)), "None")
    if cands:
        tokens.insert(2, " " + cands[0])
    tokens.insert(min(3, len(tokens)), "x")
    tokens.insert(min(4, len(tokens)), OUT_OF_RANGE)
    tokens = list(dict.fromkeys(tokens))[:top_k]
    return [(t, (i + 1) * math.log(0.5)) for i, t in enumerate(tokens)]


def completion_response(payload: dict, logprobs: bool = True) -> dict:
    prompt = payload.get("prompt", "")
    k = int(payload.get("logprobs") or 0)
    top = mock_top_tokens(prompt, max(k, 1))
    choice = {"index": 0, "text": top[0][0], "finish_reason": "length"}
    if logprobs and k:
        choice["logprobs"] = {
            "tokens": [top[0][0]],
            "token_logprobs": [top[0][1]],
            "top_logprobs": [dict(top)],
            "text_offset": [len(prompt)],
        }
    else:
        choice["logprobs"] = None
    return {
        "id": "mock-" + hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16],
        "object": "text_completion",
        "model": payload.get("model", "mock"),
        "choices": [choice],
    }


class _State:
    def __init__(self, fail_first: int = 0, logprobs: bool = True):
        self.fail_first = fail_first
        self.logprobs = logprobs
        self.requests = 0
        self.lock = threading.Lock()

    def handle(self, path: str, body: bytes) -> tuple[int, dict]:
        with self.lock:
            self.requests += 1
            n = self.requests
        if not path.rstrip("/").endswith("/completions"):
            return 404, {"error": f"unknown path {path}"}
        if n <= self.fail_first:
            return 503, {"error": "warming up"}
        try:
            payload = json.loads(body or b"{}")
        except json.JSONDecodeError:
            return 400, {"error": "invalid JSON"}
        return 200, completion_response(payload, self.logprobs)


class MockCompletionServer:
    """Threaded HTTP server on localhost; use as a context manager.

    ``fail_first`` makes the first n requests answer 503 (for retry tests)
    and ``logprobs=False`` simulates an endpoint without log-probabilities.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, fail_first: int = 0, logprobs: bool = True):
        self.state = _State(fail_first, logprobs)
        state = self.state

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length") or 0)
                status, body = state.handle(self.path, self.rfile.read(length))
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self.httpd.daemon_threads = True
        self._thread = None

    @property
    def base_url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    @property
    def requests(self) -> int:
        return self.state.requests

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def mock_transport(fail_first: int = 0, logprobs: bool = True) -> httpx.MockTransport:
    """In-process transport with the server's behaviour, for httpx clients."""
    state = _State(fail_first, logprobs)

    def handler(request: httpx.Request) -> httpx.Response:
        status, body = state.handle(request.url.path, request.content)
        return httpx.Response(status, json=body)

    transport = httpx.MockTransport(handler)
    transport.state = state
    return transport


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args(argv)
    server = MockCompletionServer(args.host, args.port)
    print(f"mock completions endpoint at {server.base_url}", flush=True)
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()


if __name__ == "__main__":
    main()
