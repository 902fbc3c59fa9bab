"""Chat backends: a deterministic scripted replayer and an HTTP chat-completions client."""
from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence, runtime_checkable

import httpx

Message = Mapping[str, str]


class BackendError(Exception):
    pass


@runtime_checkable
class ChatBackend(Protocol):
    name: str

    def complete(self, messages: Sequence[Message], temperature: float) -> str: ...


@dataclass
class Call:
    messages: list[dict]
    temperature: float


class ScriptedBackend:
    """Replays a fixed queue of replies.

    An entry that is an exception instance is raised instead of returned, which
    lets tests script transport failures. With ``cycle`` the queue wraps
    around; otherwise running dry raises :class:`BackendError`.
    """

    def __init__(self, replies: Sequence[str | Exception], name: str = "scripted", cycle: bool = False):
        self.replies = list(replies)
        self.name = name
        self.cycle = cycle
        self.calls: list[Call] = []
        self._pos = 0

    def complete(self, messages: Sequence[Message], temperature: float) -> str:
        self.calls.append(Call([dict(m) for m in messages], temperature))
        if self._pos >= len(self.replies):
            if not self.cycle or not self.replies:
                raise BackendError(f"{self.name}: script exhausted after {self._pos} replies")
            self._pos = 0
        reply = self.replies[self._pos]
        self._pos += 1
        if isinstance(reply, Exception):
            raise reply
        return reply


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def _refill(self) -> None:
        now = self.clock()
        self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
        self._last = now

    def acquire(self, tokens: float = 1.0) -> float:
        """Take ``tokens``; returns the total time spent waiting."""
        waited = 0.0
        while True:
            with self._lock:
                self._refill()
                if self.tokens >= tokens:
                    self.tokens -= tokens
                    return waited
                wait = (tokens - self.tokens) / self.rate
            self.sleep(wait)
            waited += wait


# one limiter per endpoint, shared by every backend in the process
_LIMITERS: dict[str, TokenBucket] = {}
_LIMITERS_LOCK = threading.Lock()


def shared_limiter(key: str, rate: float) -> TokenBucket:
    with _LIMITERS_LOCK:
        if key not in _LIMITERS:
            _LIMITERS[key] = TokenBucket(rate)
        return _LIMITERS[key]


RETRY_STATUS = {408, 409, 425, 429}


class RemoteBackend:
    """Client for any endpoint speaking the common chat-completions wire shape.

    Transient failures (transport errors, 429 and 5xx) are retried with
    exponential backoff and jitter; a ``Retry-After`` header overrides the
    computed delay.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str | None = "OPENAI_API_KEY",
        *,
        max_retries: int = 5,
        backoff: float = 1.0,
        max_backoff: float = 60.0,
        timeout: float = 120.0,
        limiter: TokenBucket | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int = 0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.name = f"remote:{model}"
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.limiter = limiter
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self._jitter = random.Random(seed)
        self.attempts = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env) if self.api_key_env else None
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _delay(self, attempt: int, response: httpx.Response | None) -> float:
        if response is not None:
            after = response.headers.get("Retry-After")
            if after:
                try:
                    return min(float(after), self.max_backoff)
                except ValueError:
                    pass
        base = min(self.backoff * 2**attempt, self.max_backoff)
        return base * (0.5 + self._jitter.random() / 2)

    def complete(self, messages: Sequence[Message], temperature: float) -> str:
        payload = {"model": self.model, "messages": [dict(m) for m in messages], "temperature": temperature}
        url = f"{self.base_url}/chat/completions"
        last = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if self.limiter is not None:
                self.limiter.acquire()
            self.attempts += 1
            response = None
            try:
                response = self.client.post(url, json=payload, headers=self._headers())
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
            else:
                if response.status_code == 200:
                    return _first_choice(response)
                last = f"HTTP {response.status_code}"
                if response.status_code not in RETRY_STATUS and response.status_code < 500:
                    raise BackendError(f"{self.name}: {last}: {response.text[:200]}")
            if attempt < self.max_retries:
                self.sleep(self._delay(attempt, response))
        raise BackendError(f"{self.name}: giving up after {self.max_retries + 1} attempts ({last})")


def _first_choice(response: httpx.Response) -> str:
    try:
        data = response.json()
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed completion response: {exc}") from exc
    if not isinstance(content, str):
        raise BackendError("completion content is not text")
    return content


@dataclass
class BackendSpec:
    """Config entry describing how to build a backend for one role."""

    kind: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> BackendSpec:
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in ("scripted", "remote"):
            raise ValueError(f"unknown backend kind {kind!r}")
        if kind == "scripted" and "file" in d:
            path = Path(d.pop("file"))
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            d["replies"] = json.loads(path.read_text(encoding="utf-8"))
        return cls(kind, d)

    def build(self, seed: int = 0, problem_id: str | None = None) -> ChatBackend:
        opts = self.options
        if self.kind == "scripted":
            replies = opts.get("replies", [])
            by_problem = opts.get("replies_by_problem", {})
            if problem_id is not None and problem_id in by_problem:
                replies = by_problem[problem_id]
            return ScriptedBackend(replies, name=opts.get("name", "scripted"), cycle=opts.get("cycle", False))
        limiter = None
        if opts.get("rate_per_sec"):
            limiter = shared_limiter(opts["base_url"], float(opts["rate_per_sec"]))
        return RemoteBackend(
            opts["base_url"],
            opts["model"],
            opts.get("api_key_env", "OPENAI_API_KEY"),
            max_retries=int(opts.get("max_retries", 5)),
            backoff=float(opts.get("backoff", 1.0)),
            limiter=limiter,
            seed=seed,
        )
