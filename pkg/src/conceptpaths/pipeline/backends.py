"""Language-model backends behind one synchronous text-in/text-out call.

The pipeline drives fine-tuned models, hosted chat APIs, and scripted mocks
through the same interface: a :class:`BackendRequest` tagged with its stage
goes in, raw text comes out. Retries, temperature defaults, and all parsing
live outside the backend.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import requests

from .grammars import ALL_STAGES

# Stage-tagged decoding defaults; grammar-constrained stages decode greedily.
DECODING_PARAMS: dict[str, dict] = {
    "stage1_segment": {"temperature": 0.0, "max_tokens": 1024},
    "stage2_pairs": {"temperature": 0.0, "max_tokens": 512},
    "stage3_relations": {"temperature": 0.0, "max_tokens": 512},
    "stage4_refine": {"temperature": 0.0, "max_tokens": 64},
    "direct_generate": {"temperature": 0.0, "max_tokens": 512},
}


class BackendError(Exception):
    pass


@dataclass(frozen=True)
class BackendRequest:
    stage: str
    instruction: str
    input_text: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class BackendResponse:
    text: str
    usage: dict = field(default_factory=dict)


class Backend(Protocol):
    def complete(self, request: BackendRequest) -> BackendResponse: ...


class ScriptedMockBackend:
    """Replays a JSONL script of ``{"stage": ..., "response": ...}`` lines.

    Responses are consumed strictly in order; a call whose stage does not
    match the next scripted line is an error, as is running off the end.
    Deterministic by construction, which makes it the oracle backend.
    """

    def __init__(self, lines: list[dict]):
        for i, line in enumerate(lines):
            if "stage" not in line or "response" not in line:
                raise BackendError(f"script line {i} must have 'stage' and 'response'")
            if line["stage"] not in ALL_STAGES:
                raise BackendError(f"script line {i}: unknown stage {line['stage']!r}")
        self.lines = lines
        self.cursor = 0

    @classmethod
    def from_jsonl(cls, path: str) -> "ScriptedMockBackend":
        lines = []
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                raw = raw.strip()
                if raw:
                    lines.append(json.loads(raw))
        return cls(lines)

    def complete(self, request: BackendRequest) -> BackendResponse:
        if self.cursor >= len(self.lines):
            raise BackendError(f"script exhausted at call {self.cursor} (stage {request.stage})")
        line = self.lines[self.cursor]
        if line["stage"] != request.stage:
            raise BackendError(
                f"script line {self.cursor} expects stage {line['stage']!r}, pipeline asked for {request.stage!r}"
            )
        self.cursor += 1
        return BackendResponse(text=line["response"], usage={"scripted": True})


class CallbackBackend:
    """Programmatic backend for tests: delegates to a function of the request."""

    def __init__(self, fn: Callable[[BackendRequest], str]):
        self.fn = fn

    def complete(self, request: BackendRequest) -> BackendResponse:
        return BackendResponse(text=self.fn(request), usage={})


class HttpChatBackend:
    """Speaks the de-facto chat-completions JSON wire format.

    POSTs ``{"model": ..., "messages": [...], "temperature": ...}`` to the
    endpoint; the stage instruction rides as the system message and the input
    text as the user message.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        session: Optional[requests.Session] = None,
        timeout: float = 120.0,
        api_key: Optional[str] = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.session = session or requests.Session()
        self.timeout = timeout
        self.api_key = api_key

    def complete(self, request: BackendRequest) -> BackendResponse:
        params = {**DECODING_PARAMS.get(request.stage, {}), **request.params}
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.instruction},
                {"role": "user", "content": request.input_text},
            ],
            "temperature": params.get("temperature", 0.0),
        }
        if "max_tokens" in params:
            payload["max_tokens"] = params["max_tokens"]
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = self.session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        if resp.status_code != 200:
            raise BackendError(f"backend HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed chat response: {exc}") from exc
        return BackendResponse(text=text, usage=body.get("usage", {}))
