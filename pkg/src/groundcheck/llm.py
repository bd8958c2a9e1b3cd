"""Chat-completion access: HTTP provider, deterministic scripted mock, and
structured-output parsing shared by every prompt in the pipeline."""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import requests

from groundcheck.errors import (
    ConfigError,
    MockScriptError,
    ParseError,
    ProviderError,
    StructuredOutputError,
    TransportError,
)

REPROMPT_SUFFIX = "Your previous output was not valid JSON; output only the JSON."


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    sample_index: int = 0

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.sample_index < 0:
            raise ValueError("sample_index must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_token_count: int = 0
    output_token_count: int = 0


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = ""
    model_name: str = ""
    api_key_env: str = "GROUNDCHECK_API_KEY"
    timeout_seconds: float = 60.0
    max_retries: int = 2
    max_concurrent_requests: int = 4
    retry_backoff_seconds: float = 0.5

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")


def request_fingerprint(request: ChatRequest) -> str:
    """Stable hash of prompt text plus sample index, used to key mock scripts."""
    payload = f"{request.system_text}\x00{request.user_text}\x00{request.sample_index}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class MockProvider:
    """Deterministic scripted provider; no network, safe under concurrency.

    A script is a JSON object with any of:
      by_fingerprint: {fingerprint: entry} exact scripted responses,
      rules: [{"contains": [substr, ...], "sample_index": n?, "response": entry}]
             matched first-to-last against "system\\n\\nuser" text,
      responses: [entry, ...] consumed in call order,
      default: entry used when nothing else matches,
      delay_seconds: per-call sleep, for exercising the concurrency cap.

    An entry is either a response string or {"text": ..., "fail_times": n},
    which raises a transient failure for the first n calls that hit it.
    """

    def __init__(self, script: dict | None = None):
        script = dict(script or {})
        self.by_fingerprint = dict(script.get("by_fingerprint", {}))
        self.rules = list(script.get("rules", []))
        self._queue = list(script.get("responses", []))
        self.default = script.get("default")
        self.delay_seconds = float(script.get("delay_seconds", 0.0))
        self._fail_counts: dict[int, int] = {}
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_in_flight_seen = 0
        self.call_count = 0

    @classmethod
    def from_file(cls, path) -> "MockProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _resolve(self, request: ChatRequest):
        entry = self.by_fingerprint.get(request_fingerprint(request))
        if entry is not None:
            return entry
        haystack = f"{request.system_text}\n\n{request.user_text}"
        for rule in self.rules:
            wanted = rule.get("sample_index")
            if wanted is not None and wanted != request.sample_index:
                continue
            needles = rule.get("contains", [])
            if isinstance(needles, str):
                needles = [needles]
            if all(n in haystack for n in needles):
                return rule["response"]
        with self._lock:
            if self._queue:
                return self._queue.pop(0)
        if self.default is not None:
            return self.default
        raise MockScriptError(
            f"no scripted response for request (sample_index="
            f"{request.sample_index}): {request.user_text[:120]!r}")

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self._in_flight += 1
            self.call_count += 1
            self.max_in_flight_seen = max(self.max_in_flight_seen, self._in_flight)
        try:
            if self.delay_seconds:
                time.sleep(self.delay_seconds)
            entry = self._resolve(request)
            if isinstance(entry, dict):
                fail_times = int(entry.get("fail_times", 0))
                if fail_times:
                    key = id(entry)
                    with self._lock:
                        used = self._fail_counts.get(key, 0)
                        if used < fail_times:
                            self._fail_counts[key] = used + 1
                            raise TransportError("scripted transient failure")
                text = entry["text"]
            else:
                text = entry
            prompt_tokens = len(f"{request.system_text} {request.user_text}".split())
            return ChatResponse(text=text,
                                input_token_count=prompt_tokens,
                                output_token_count=len(text.split()))
        finally:
            with self._lock:
                self._in_flight -= 1


class HttpProvider:
    """Chat-completions wire protocol over HTTP with bearer-token auth."""

    RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})

    def __init__(self, config: ProviderConfig):
        self.config = config

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ConfigError(
                f"environment variable {self.config.api_key_env} is not set")
        return key

    def send(self, request: ChatRequest) -> ChatResponse:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = requests.post(
                url, json=payload,
                headers={"Authorization": f"Bearer {self._api_key()}"},
                timeout=self.config.timeout_seconds)
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code in self.RETRYABLE_STATUSES:
            raise TransportError(f"retryable status {resp.status_code}")
        if not 200 <= resp.status_code < 300:
            raise ProviderError(f"provider returned {resp.status_code}",
                                status=resp.status_code,
                                body_excerpt=resp.text[:200])
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}",
                                status=resp.status_code,
                                body_excerpt=resp.text[:200]) from exc
        usage = body.get("usage") or {}
        return ChatResponse(
            text=text,
            input_token_count=int(usage.get("prompt_tokens", 0) or 0),
            output_token_count=int(usage.get("completion_tokens", 0) or 0),
        )


class ChatGateway:
    """Retry with exponential backoff and a hard in-flight concurrency cap."""

    def __init__(self, provider, max_retries: int = 2,
                 retry_backoff_seconds: float = 0.5,
                 max_concurrent_requests: int = 4,
                 sleep=time.sleep):
        self.provider = provider
        self.max_retries = max_retries
        self.retry_backoff_seconds = retry_backoff_seconds
        self._semaphore = threading.Semaphore(max_concurrent_requests)
        self._sleep = sleep

    @classmethod
    def for_mock(cls, script: dict | None = None, **kwargs) -> "ChatGateway":
        return cls(MockProvider(script), **kwargs)

    def complete(self, request: ChatRequest) -> ChatResponse:
        last: TransportError | None = None
        with self._semaphore:
            for attempt in range(self.max_retries + 1):
                try:
                    return self.provider.send(request)
                except TransportError as exc:
                    last = exc
                    if attempt < self.max_retries and self.retry_backoff_seconds:
                        self._sleep(self.retry_backoff_seconds * (2 ** attempt))
        raise TransportError(
            f"exhausted {self.max_retries + 1} attempts: {last}") from last


class OutputShape(str, Enum):
    HYPOTHESIS = "hypothesis"
    CLAIMS = "claims"
    ENTITIES = "entities"
    GROUNDEDNESS = "groundedness"


_FENCE_RE = re.compile(r"```json\b[ \t]*\n?(.*?)```", re.DOTALL | re.IGNORECASE)


def _first_json_object(text: str) -> tuple[dict, int]:
    """First fenced json block, else first parseable top-level object."""
    match = _FENCE_RE.search(text)
    if match:
        try:
            obj, _ = json.JSONDecoder().raw_decode(match.group(1).strip())
            if isinstance(obj, dict):
                return obj, match.start()
        except ValueError:
            pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj, i
    raise ParseError("no JSON object found in model output")


def _string_list(value, key: str) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ParseError(f"{key!r} must be a list of strings")
    return list(value)


def parse_json_block_span(text: str, shape: OutputShape):
    """Parse the expected structured block; returns (typed value, block start)."""
    obj, start = _first_json_object(text)
    if shape is OutputShape.HYPOTHESIS:
        if "proposed_hypothesis" not in obj:
            raise ParseError("missing key 'proposed_hypothesis'")
        value = obj["proposed_hypothesis"]
        if not isinstance(value, str):
            raise ParseError("'proposed_hypothesis' must be a string")
        return value, start
    if shape is OutputShape.CLAIMS:
        if "claims" not in obj:
            raise ParseError("missing key 'claims'")
        return _string_list(obj["claims"], "claims"), start
    if shape is OutputShape.ENTITIES:
        if "entities" not in obj:
            raise ParseError("missing key 'entities'")
        return _string_list(obj["entities"], "entities"), start
    if shape is OutputShape.GROUNDEDNESS:
        if "groundedness" not in obj:
            raise ParseError("missing key 'groundedness'")
        value = obj["groundedness"]
        if value in (0, 1, "0", "1") or isinstance(value, bool):
            return bool(int(value)), start
        raise ParseError(f"'groundedness' must be 0 or 1, got {value!r}")
    raise ParseError(f"unknown shape {shape!r}")


def parse_json_block(text: str, shape: OutputShape):
    value, _ = parse_json_block_span(text, shape)
    return value


def complete_structured(gateway: ChatGateway, request: ChatRequest,
                        shape: OutputShape) -> tuple[ChatResponse, object, int]:
    """Complete and parse, with one bounded re-prompt on unparseable output.

    Returns (response, typed value, block start offset in response text).
    Raises StructuredOutputError after the second parse failure.
    """
    response = gateway.complete(request)
    try:
        value, start = parse_json_block_span(response.text, shape)
        return response, value, start
    except ParseError:
        pass
    retry = replace(request,
                    user_text=f"{request.user_text}\n\n{REPROMPT_SUFFIX}")
    response = gateway.complete(retry)
    try:
        value, start = parse_json_block_span(response.text, shape)
        return response, value, start
    except ParseError as exc:
        raise StructuredOutputError(str(exc), last_text=response.text) from exc
