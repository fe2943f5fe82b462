"""Generation backends.

Two providers share one surface (``complete`` for text, ``embed`` for
vectors): :class:`HttpProvider` talks to a chat-completions style service,
:class:`MockProvider` answers from a script so whole runs replay offline.
Every call either provider makes is appended to an optional
:class:`Transcript`.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
import threading
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Protocol

import httpx

from featgraft.errors import ConfigError, MockScriptError, ProviderError
from featgraft.vectors import EmbeddingVector

log = logging.getLogger(__name__)

DEFAULT_DIMENSION = 64


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    max_output_tokens: int = 4096
    temperature: float = 0.0
    response_format_hint: str = "free_text"

    def __post_init__(self):
        if not self.user_text.strip():
            raise ValueError("user_text must be non-empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.response_format_hint not in ("free_text", "json"):
            raise ValueError(f"unknown response_format_hint {self.response_format_hint!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    endpoint: str | None = None
    model_id: str = "mock"
    api_key_ref: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    backoff_base: float = 0.5
    dimension: int = DEFAULT_DIMENSION
    api_style: str = "openai"
    embedding_model_id: str | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http" and not (self.endpoint and self.api_key_ref):
            raise ConfigError("http provider needs an endpoint and an api key environment variable")
        if self.api_style not in ("openai", "watsonx"):
            raise ConfigError(f"unknown api_style {self.api_style!r}")
        if self.max_retries < 0 or self.dimension <= 0 or self.max_in_flight <= 0:
            raise ConfigError("max_retries >= 0, dimension > 0 and max_in_flight > 0 required")


class Provider(Protocol):
    def complete(self, req: CompletionRequest) -> str: ...

    def embed(self, text: str) -> EmbeddingVector: ...


class Transcript:
    """Append-only log of provider traffic, mirrored to a JSON-lines file when ``path`` is set."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.entries: list[dict] = []
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self.path.write_text("", encoding="utf-8")
            except OSError as exc:
                log.warning("transcript %s not writable (%s); file logging disabled", self.path, exc)
                self.path = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, direction: str, payload: dict) -> None:
        entry = {
            "direction": direction,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "payload": payload,
        }
        with self._lock:
            self.entries.append(entry)
            if self.path is not None:
                try:
                    with self.path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(entry, sort_keys=True) + "\n")
                except OSError as exc:
                    log.warning("transcript write failed (%s); file logging disabled", exc)
                    self.path = None

    def completions(self) -> list[dict]:
        return [e["payload"] for e in self.entries if e["direction"] == "completion"]

    @staticmethod
    def read(path: str | os.PathLike) -> list[dict]:
        text = Path(path).read_text(encoding="utf-8")
        return [json.loads(line) for line in text.splitlines() if line.strip()]


def mock_embedding(text: str, seed: int = 0, dimension: int = DEFAULT_DIMENSION) -> EmbeddingVector:
    """Deterministic unit vector derived from a seeded SHA-256 stream over ``text``.

    The empty string maps to the constant vector ``1/sqrt(d)`` in every slot.
    """
    if text == "":
        return EmbeddingVector((1.0 / math.sqrt(dimension),) * dimension)
    key = f"{seed}\0".encode() + text.encode("utf-8")
    comps: list[float] = []
    block = 0
    while len(comps) < dimension:
        digest = hashlib.sha256(key + block.to_bytes(4, "big")).digest()
        for (word,) in struct.iter_unpack(">Q", digest):
            comps.append(2.0 * (word + 0.5) / 2.0**64 - 1.0)
        block += 1
    comps = comps[:dimension]
    norm = math.sqrt(math.fsum(c * c for c in comps))
    return EmbeddingVector(tuple(c / norm for c in comps))


@dataclass
class ScriptEntry:
    response: str
    match: str | None = None
    ordinal: int | None = None

    def __post_init__(self):
        if (self.match is None) == (self.ordinal is None):
            raise MockScriptError("a script entry needs exactly one of 'match' or 'ordinal'")

    def matches(self, req: CompletionRequest, call_no: int) -> bool:
        if self.ordinal is not None:
            return self.ordinal == call_no
        return self.match in req.user_text or self.match in req.system_text


@dataclass
class MockScript:
    """Scripted responses for :class:`MockProvider`.

    JSON form::

        {"embedding_seed": 0,
         "responses": [{"match": "Target file: app.py", "response": "..."},
                       {"ordinal": 1, "response": "..."}]}

    ``ordinal`` counts completion calls from 1. ``recorded_embeddings`` maps
    the SHA-256 of an input text to a vector captured from a live run.
    """
    entries: list[ScriptEntry] = field(default_factory=list)
    embedding_seed: int = 0
    recorded_embeddings: dict[str, tuple[float, ...]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict) -> MockScript:
        unknown = set(doc) - {"embedding_seed", "responses", "recorded_embeddings"}
        if unknown:
            raise MockScriptError(f"unknown mock script keys: {sorted(unknown)}")
        entries = []
        for i, r in enumerate(doc.get("responses", [])):
            if not isinstance(r, dict) or not isinstance(r.get("response"), str):
                raise MockScriptError(f"responses[{i}] needs a string 'response'")
            entries.append(ScriptEntry(r["response"], r.get("match"), r.get("ordinal")))
        recorded = {k: tuple(v) for k, v in doc.get("recorded_embeddings", {}).items()}
        return cls(entries, int(doc.get("embedding_seed", 0)), recorded)

    @classmethod
    def load(cls, path: str | os.PathLike) -> MockScript:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MockScriptError(f"cannot read mock script {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise MockScriptError("mock script must be a JSON object")
        return cls.from_dict(doc)

    @classmethod
    def from_transcript(cls, path: str | os.PathLike, embedding_seed: int = 0) -> MockScript:
        """Turn a recorded run into a script that replays its responses in order."""
        entries = []
        recorded = {}
        for e in Transcript.read(path):
            payload = e["payload"]
            if e["direction"] == "completion" and "response" in payload:
                entries.append(ScriptEntry(payload["response"], ordinal=len(entries) + 1))
            elif e["direction"] == "embedding" and "vector" in payload:
                recorded[payload["input_sha256"]] = tuple(payload["vector"])
        return cls(entries, embedding_seed, recorded)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"embedding_seed": self.embedding_seed, "responses": []}
        for e in self.entries:
            rule = {"ordinal": e.ordinal} if e.ordinal is not None else {"match": e.match}
            out["responses"].append({**rule, "response": e.response})
        if self.recorded_embeddings:
            out["recorded_embeddings"] = {k: list(v) for k, v in self.recorded_embeddings.items()}
        return out


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class MockProvider:
    """Answers completions from a :class:`MockScript`; each entry is used at most once."""

    def __init__(self, script: MockScript, dimension: int = DEFAULT_DIMENSION,
                 transcript: Transcript | None = None):
        self.script = script
        self.dimension = dimension
        self.transcript = transcript
        self.calls = 0
        self._used = [False] * len(script.entries)
        self._lock = threading.Lock()

    @property
    def unused(self) -> list[ScriptEntry]:
        return [e for e, used in zip(self.script.entries, self._used) if not used]

    def complete(self, req: CompletionRequest) -> str:
        with self._lock:
            self.calls += 1
            call_no = self.calls
            for i, entry in enumerate(self.script.entries):
                if not self._used[i] and entry.matches(req, call_no):
                    self._used[i] = True
                    response = entry.response
                    break
            else:
                if self.transcript is not None:
                    self.transcript.record("completion", {"request": req.to_dict(),
                                                          "error": "no script entry"})
                raise MockScriptError(
                    f"mock script has no entry for completion #{call_no}: "
                    f"{req.user_text[:120]!r}")
        if self.transcript is not None:
            self.transcript.record("completion", {"request": req.to_dict(), "response": response})
        return response

    def embed(self, text: str) -> EmbeddingVector:
        recorded = self.script.recorded_embeddings.get(_sha(text))
        if recorded is not None:
            vec = EmbeddingVector(recorded)
        else:
            vec = mock_embedding(text, self.script.embedding_seed, self.dimension)
        if self.transcript is not None:
            self.transcript.record("embedding", {"input_sha256": _sha(text),
                                                 "vector": list(vec.values)})
        return vec


class _Retryable(Exception):
    pass


class HttpProvider:
    """Chat-completions and embeddings over HTTP(S) with bounded retries.

    ``api_style`` picks field names: ``openai`` (``/chat/completions``,
    ``/embeddings``) or ``watsonx`` (``/ml/v1/text/chat``, ``/ml/v1/text/embeddings``).
    """

    WATSONX_VERSION = "2024-05-01"

    def __init__(self, cfg: ProviderConfig, transcript: Transcript | None = None,
                 client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if cfg.kind != "http":
            raise ConfigError("HttpProvider needs an http provider config")
        key = os.environ.get(cfg.api_key_ref or "")
        if not key:
            raise ConfigError(f"environment variable {cfg.api_key_ref} is not set")
        self.cfg = cfg
        self.transcript = transcript
        self.client = client or httpx.Client(timeout=cfg.timeout)
        self.sleep = sleep
        self.attempts = 0
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)

    def _url(self, suffix: str) -> str:
        return self.cfg.endpoint.rstrip("/") + suffix

    def _post(self, url: str, body: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self.sleep(self.cfg.backoff_base * 2 ** (attempt - 1))
            self.attempts += 1
            try:
                with self._slots:
                    resp = self.client.post(url, json=body, headers=self._headers,
                                            timeout=self.cfg.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise _Retryable(f"HTTP {resp.status_code} from {url}")
                if resp.status_code >= 400:
                    raise ProviderError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
                return resp.json()
            except (httpx.TransportError, _Retryable) as exc:
                last = exc
                log.warning("provider attempt %d/%d failed: %s",
                            attempt + 1, self.cfg.max_retries + 1, exc)
            except ValueError as exc:
                raise ProviderError(f"non-JSON response from {url}") from exc
        raise ProviderError(f"provider unreachable after {self.cfg.max_retries + 1} attempts: {last}") from last

    def complete(self, req: CompletionRequest) -> str:
        messages = [{"role": "system", "content": req.system_text},
                    {"role": "user", "content": req.user_text}]
        if self.cfg.api_style == "watsonx":
            url = self._url(f"/ml/v1/text/chat?version={self.WATSONX_VERSION}")
            body = {"model_id": self.cfg.model_id, "messages": messages,
                    "parameters": {"temperature": req.temperature,
                                   "max_new_tokens": req.max_output_tokens}}
            if os.environ.get("WATSONX_PROJECT_ID"):
                body["project_id"] = os.environ["WATSONX_PROJECT_ID"]
        else:
            url = self._url("/chat/completions")
            body = {"model": self.cfg.model_id, "messages": messages,
                    "temperature": req.temperature, "max_tokens": req.max_output_tokens}
        try:
            doc = self._post(url, body)
        except ProviderError as exc:
            if self.transcript is not None:
                self.transcript.record("completion", {"request": req.to_dict(), "error": str(exc)})
            raise
        try:
            text = doc["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected completion payload: {str(doc)[:200]}") from exc
        if self.transcript is not None:
            self.transcript.record("completion", {"request": req.to_dict(), "response": text})
        return text

    def embed(self, text: str) -> EmbeddingVector:
        model = self.cfg.embedding_model_id or self.cfg.model_id
        if self.cfg.api_style == "watsonx":
            url = self._url(f"/ml/v1/text/embeddings?version={self.WATSONX_VERSION}")
            body = {"model_id": model, "inputs": [text]}
        else:
            url = self._url("/embeddings")
            body = {"model": model, "input": text}
        try:
            doc = self._post(url, body)
        except ProviderError as exc:
            if self.transcript is not None:
                self.transcript.record("embedding", {"input_sha256": _sha(text), "error": str(exc)})
            raise
        try:
            if self.cfg.api_style == "watsonx":
                values = doc["results"][0]["embedding"]
            else:
                values = doc["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected embedding payload: {str(doc)[:200]}") from exc
        if len(values) != self.cfg.dimension:
            raise ProviderError(f"embedding has {len(values)} components, configured {self.cfg.dimension}")
        vec = EmbeddingVector(tuple(values))
        if self.transcript is not None:
            self.transcript.record("embedding", {"input_sha256": _sha(text), "vector": list(vec.values)})
        return vec


def make_provider(cfg: ProviderConfig, script: MockScript | None = None,
                  transcript: Transcript | None = None) -> Provider:
    if cfg.kind == "mock":
        if script is None:
            raise ConfigError("mock provider needs a mock script")
        return MockProvider(script, cfg.dimension, transcript)
    return HttpProvider(cfg, transcript)
