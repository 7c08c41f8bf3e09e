"""Model client abstraction: scripted clients for deterministic runs and
tests, plus an HTTP chat client for live endpoints."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 2048


DEFAULT_SAMPLING = SamplingParams()


class ModelClient(Protocol):
    identity: str

    def send(self, system: str, user: str,
             params: SamplingParams = DEFAULT_SAMPLING) -> str:
        ...


class ScriptedClient:
    """Deterministic client: replies from a fixed script.

    The script is either a callable (system, user) -> text, or a sequence
    of texts consumed per call (the last entry repeats). Identical inputs
    with a callable script always produce identical outputs.
    """

    def __init__(self, script, identity: str = "scripted"):
        self.identity = identity
        self._lock = threading.Lock()
        self.calls: List[Tuple[str, str]] = []
        if callable(script):
            self._fn: Optional[Callable] = script
            self._queue: List[str] = []
        else:
            self._fn = None
            self._queue = list(script)
            if not self._queue:
                raise ValueError("scripted client needs at least one reply")
        self._cursor = 0

    def send(self, system: str, user: str,
             params: SamplingParams = DEFAULT_SAMPLING) -> str:
        with self._lock:
            self.calls.append((system, user))
            if self._fn is not None:
                return self._fn(system, user)
            reply = self._queue[min(self._cursor, len(self._queue) - 1)]
            self._cursor += 1
            return reply


@dataclass
class ClientConfig:
    endpoint: str
    model: str
    api_key_env: str = ""
    temperature: float = 0.7
    top_p: float = 0.95
    max_tokens: int = 2048

    @classmethod
    def from_dict(cls, doc: dict) -> "ClientConfig":
        return cls(endpoint=doc["endpoint"], model=doc["model"],
                   api_key_env=doc.get("api_key_env", ""),
                   temperature=float(doc.get("temperature", 0.7)),
                   top_p=float(doc.get("top_p", 0.95)),
                   max_tokens=int(doc.get("max_tokens", 2048)))


class HttpModelClient:
    """Chat-completions client with bounded backoff on rate limiting.

    Auth comes from the environment variable named in the config, never
    from the config file itself.
    """

    def __init__(self, config: ClientConfig, max_attempts: int = 5):
        self.config = config
        self.identity = config.model
        self.max_attempts = max_attempts

    def send(self, system: str, user: str,
             params: SamplingParams = DEFAULT_SAMPLING) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.config.model,
            "messages": [{"role": "system", "content": system},
                         {"role": "user", "content": user}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        delay = 1.0
        for attempt in range(self.max_attempts):
            resp = requests.post(self.config.endpoint, json=body,
                                 headers=headers, timeout=120)
            if resp.status_code == 429 or resp.status_code >= 500:
                time.sleep(delay)
                delay = min(delay * 2, 30.0)
                continue
            resp.raise_for_status()
            doc = resp.json()
            return doc["choices"][0]["message"]["content"]
        raise RuntimeError(
            f"model endpoint kept rate-limiting after "
            f"{self.max_attempts} attempts")
