"""Model gateway: one seam through which every model call flows.

Supports live calls against an HTTP chat-completion provider, recording
responses into a cassette file, and offline replay from a cassette.  Replay
never touches the network: a request with no recorded response raises
CassetteMiss.  See docs/cassette-format.md for the file format.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

logger = logging.getLogger(__name__)

MODES = ("live", "record", "replay")

DEFAULT_RETRIES = 3
DEFAULT_TIMEOUT_S = 60.0
DEFAULT_BACKOFF_S = 0.5


class GatewayError(Exception):
    """Base class for gateway failures."""


class GatewayUnavailable(GatewayError):
    """Provider did not yield a response within the retry budget."""


class CassetteMiss(GatewayError):
    """Replay mode saw a request with no recorded response."""


class CassetteConflict(GatewayError):
    """Record mode saw two different responses for the same fingerprint."""


class InvalidPolicy(ValueError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    text: str


@dataclass(frozen=True)
class ChatRequest:
    """A chat-completion request.

    ``tag`` carries caller context (conversation id and turn index) for
    error reporting; it is excluded from the request fingerprint.
    """

    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be non-empty")
        if not self.messages:
            raise ValueError("messages must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def fingerprint(req: ChatRequest) -> str:
    """Stable digest of the request content.

    Whitespace inside message texts is collapsed so that formatting-only
    differences replay against the same recording.  The tag and any
    timestamps are not part of the digest.
    """
    canon = {
        "model": req.model,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "messages": [
            {"role": m.role, "text": _normalize_ws(m.text)} for m in req.messages
        ],
    }
    payload = json.dumps(canon, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GatewayPolicy:
    """Retry, timeout, and rate-limit settings for live provider calls."""

    retries: int = DEFAULT_RETRIES  # additional attempts after the first
    timeout_s: float = DEFAULT_TIMEOUT_S
    rate_limit: tuple[int, float] | None = None  # (max requests, per seconds)
    backoff_s: float = DEFAULT_BACKOFF_S

    def validated(self) -> "GatewayPolicy":
        if self.retries <= 0:
            raise InvalidPolicy(f"retries must be positive, got {self.retries}")
        if self.timeout_s <= 0:
            raise InvalidPolicy(f"timeout_s must be positive, got {self.timeout_s}")
        if self.backoff_s < 0:
            raise InvalidPolicy(f"backoff_s must not be negative, got {self.backoff_s}")
        if self.rate_limit is not None:
            count, interval = self.rate_limit
            if count <= 0 or interval <= 0:
                raise InvalidPolicy(f"rate_limit values must be positive, got {self.rate_limit}")
        return self


class Provider(Protocol):
    def complete(self, req: ChatRequest, timeout_s: float) -> str: ...


class HTTPProvider:
    """Chat-completion provider over HTTP (POST {base_url}/chat/completions)."""

    def __init__(self, base_url: str, api_key: str = ""):
        import requests

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self._session = requests.Session()

    def complete(self, req: ChatRequest, timeout_s: float) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": req.model,
            "messages": [{"role": m.role, "content": m.text} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        try:
            resp = self._session.post(
                f"{self.base_url}/chat/completions",
                json=body, headers=headers, timeout=timeout_s,
            )
        except requests.RequestException as exc:
            raise GatewayError(f"provider request failed: {exc}") from exc
        if resp.status_code != 200:
            raise GatewayError(f"provider returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"provider returned malformed body: {exc}") from exc


class ScriptedProvider:
    """Returns canned responses in order; raises when the script runs out."""

    def __init__(self, responses: list[str] | None = None):
        self.responses = list(responses or [])
        self.requests_seen: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: ChatRequest, timeout_s: float) -> str:
        with self._lock:
            self.requests_seen.append(req)
            if not self.responses:
                raise GatewayError(f"scripted provider exhausted (tag={req.tag!r})")
            return self.responses.pop(0)


class FailingProvider:
    """Always fails; useful to prove a code path never reaches a provider."""

    def __init__(self, message: str = "provider should not be reached"):
        self.message = message
        self.calls = 0

    def complete(self, req: ChatRequest, timeout_s: float) -> str:
        self.calls += 1
        raise GatewayError(self.message)


class FlakyProvider:
    """Fails the first ``failures`` calls, then delegates to ``inner``."""

    def __init__(self, inner: Provider, failures: int):
        self.inner = inner
        self.failures = failures
        self.calls = 0

    def complete(self, req: ChatRequest, timeout_s: float) -> str:
        self.calls += 1
        if self.calls <= self.failures:
            raise GatewayError(f"transient failure {self.calls} (tag={req.tag!r})")
        return self.inner.complete(req, timeout_s)


class Cassette:
    """Append-only fingerprint-to-response log backed by a JSONL file."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: dict[str, str] = {}
        self.order: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        cassette = cls(path)
        raw = Path(path).read_text(encoding="utf-8")
        for line_no, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                fp, response = record["fp"], record["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise GatewayError(f"{path}:{line_no}: bad cassette record: {exc}") from exc
            if fp in cassette.entries and cassette.entries[fp] != response:
                raise CassetteConflict(f"{path}:{line_no}: conflicting responses for {fp}")
            if fp not in cassette.entries:
                cassette.order.append(fp)
            cassette.entries[fp] = response
        return cassette

    def lookup(self, fp: str) -> str | None:
        return self.entries.get(fp)

    def append(self, fp: str, response: str) -> None:
        with self._lock:
            existing = self.entries.get(fp)
            if existing is not None:
                if existing != response:
                    raise CassetteConflict(f"conflicting responses for fingerprint {fp}")
                return
            self.entries[fp] = response
            self.order.append(fp)
            if self.path is not None:
                line = json.dumps({"fp": fp, "response": response}, ensure_ascii=False)
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())

    def __len__(self) -> int:
        return len(self.entries)


class _SlidingWindowLimiter:
    """Caps how many requests may start within any window of ``interval_s``."""

    def __init__(self, max_requests: int, interval_s: float):
        self.max_requests = max_requests
        self.interval_s = interval_s
        self._starts: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                while self._starts and now - self._starts[0] >= self.interval_s:
                    self._starts.popleft()
                if len(self._starts) < self.max_requests:
                    self._starts.append(now)
                    return
                wait = self._starts[0] + self.interval_s - now
            time.sleep(max(wait, 0.001))


class ModelGateway:
    """Routes chat requests to a provider or a cassette, per mode."""

    def __init__(
        self,
        mode: str,
        provider: Provider | None = None,
        cassette: Cassette | None = None,
        policy: GatewayPolicy | None = None,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if mode in ("live", "record") and provider is None:
            raise ValueError(f"{mode} mode requires a provider")
        if mode in ("record", "replay") and cassette is None:
            raise ValueError(f"{mode} mode requires a cassette")
        self.mode = mode
        self.provider = provider
        self.cassette = cassette
        self.policy = (policy or GatewayPolicy()).validated()
        self._limiter = (
            _SlidingWindowLimiter(*self.policy.rate_limit)
            if self.policy.rate_limit is not None
            else None
        )

    def with_policy(
        self,
        retries: int | None = None,
        timeout_s: float | None = None,
        rate_limit: tuple[int, float] | None = None,
    ) -> "ModelGateway":
        """Derive a gateway with adjusted policy; values must be positive."""
        policy = GatewayPolicy(
            retries=self.policy.retries if retries is None else retries,
            timeout_s=self.policy.timeout_s if timeout_s is None else timeout_s,
            rate_limit=self.policy.rate_limit if rate_limit is None else rate_limit,
            backoff_s=self.policy.backoff_s,
        ).validated()
        return ModelGateway(self.mode, self.provider, self.cassette, policy)

    def chat(self, req: ChatRequest) -> ChatResponse:
        if self.mode == "replay":
            return self._replay(req)
        return self._call_provider(req)

    def _replay(self, req: ChatRequest) -> ChatResponse:
        assert self.cassette is not None
        fp = fingerprint(req)
        response = self.cassette.lookup(fp)
        if response is None:
            raise CassetteMiss(
                f"no recorded response for request {fp[:12]} (tag={req.tag!r})"
            )
        return ChatResponse(text=response, usage={"mode": "replay", "retries": 0})

    def _call_provider(self, req: ChatRequest) -> ChatResponse:
        assert self.provider is not None
        attempts = 1 + self.policy.retries
        last_error: Exception | None = None
        for attempt in range(attempts):
            if self._limiter is not None:
                self._limiter.acquire()
            try:
                text = self.provider.complete(req, self.policy.timeout_s)
            except GatewayError as exc:
                last_error = exc
                logger.warning("attempt %d/%d failed (tag=%r): %s",
                               attempt + 1, attempts, req.tag, exc)
                if attempt + 1 < attempts and self.policy.backoff_s:
                    time.sleep(self.policy.backoff_s * (2 ** attempt))
                continue
            if self.mode == "record":
                assert self.cassette is not None
                self.cassette.append(fingerprint(req), text)
            return ChatResponse(
                text=text, usage={"mode": self.mode, "retries": attempt}
            )
        raise GatewayUnavailable(
            f"provider failed after {attempts} attempts (tag={req.tag!r}): {last_error}"
        )


def live_gateway(provider: Provider, policy: GatewayPolicy | None = None) -> ModelGateway:
    return ModelGateway("live", provider=provider, policy=policy)


def record_gateway(
    provider: Provider, cassette_path: str | Path, policy: GatewayPolicy | None = None
) -> ModelGateway:
    path = Path(cassette_path)
    cassette = Cassette.load(path) if path.exists() else Cassette(path)
    return ModelGateway("record", provider=provider, cassette=cassette, policy=policy)


def replay_gateway(cassette_path: str | Path) -> ModelGateway:
    return ModelGateway("replay", cassette=Cassette.load(cassette_path))
