"""Embedding, layout-scoring and text-completion providers.

Each interface has a deterministic local mock and an HTTP remote.  Remotes
are selected through ``LAYOUT_EMBED_URL``, ``LAYOUT_SCORER_URL`` and
``LAYOUT_LLM_URL``; unset variables fall back to the mocks.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import socket
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Protocol, Sequence

import numpy as np

EMBED_DIM = 512
SEMANTIC_DIM = 2048
DEFAULT_E_REF = 10.0


class ProviderError(RuntimeError):
    pass


class ProviderNetworkError(ProviderError):
    pass


class ProviderTimeoutError(ProviderError):
    pass


class ProviderSchemaError(ProviderError):
    def __init__(self, field: str, message: str = "missing field"):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SemanticScore:
    h_vl: np.ndarray
    score: float
    explanation: str


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


class SemanticScorer(Protocol):
    def score(self, summary: str) -> SemanticScore: ...


class LLMClient(Protocol):
    def complete(self, prompt: str) -> str: ...


def hash_expand(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Pseudo-random standard-normal vector keyed on ``(seed, text)``."""
    digest = hashlib.sha256(f"{seed}\x00{text}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
    return rng.standard_normal(dim)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


class MockEmbedder:
    """Deterministic text embedder.

    The lowercased text is split on whitespace; each token expands to a
    hashed random vector and the normalised sum is returned, so texts that
    share words share direction.
    """

    def __init__(self, dim: int = EMBED_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def _token(self, tok: str) -> np.ndarray:
        v = self._cache.get(tok)
        if v is None:
            v = hash_expand(tok, self.dim, self.seed)
            self._cache[tok] = v
        return v

    def embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split() or [""]
        acc = np.zeros(self.dim)
        for t in tokens:
            acc += self._token(t)
        return _unit(acc)


def mock_embed(text: str, seed: int = 0) -> np.ndarray:
    return MockEmbedder(seed=seed).embed(text)


_TOTAL_RE = re.compile(r"total=([-+0-9.eE]+|inf|nan)")


class MockScorer:
    """Energy-calibrated stand-in for a vision-language layout judge.

    score = clamp(1 - total / e_ref, 0, 1), read from the ``total=`` field of
    the layout summary.
    """

    def __init__(self, e_ref: float = DEFAULT_E_REF, seed: int = 0):
        self.e_ref = e_ref
        self.seed = seed

    def score(self, summary: str) -> SemanticScore:
        m = _TOTAL_RE.search(summary)
        if m is None:
            raise ProviderSchemaError("summary.total", "summary carries no energy total")
        total = float(m.group(1))
        s = float(np.clip(1.0 - total / self.e_ref, 0.0, 1.0))
        h = hash_expand(summary, SEMANTIC_DIM, self.seed) / np.sqrt(SEMANTIC_DIM)
        if s >= 0.8:
            verdict = "plausible and well organised"
        elif s >= 0.4:
            verdict = "partly plausible with some conflicts"
        else:
            verdict = "implausible; several constraints are violated"
        return SemanticScore(h, s, f"Layout is {verdict} (score {s:.2f}).")


def mock_score(summary: str, e_ref: float = DEFAULT_E_REF) -> SemanticScore:
    return MockScorer(e_ref).score(summary)


ROOM_KEYWORDS = {
    "bed": "bedroom",
    "toilet": "bathroom",
    "sofa": "living room",
    "stove": "kitchen",
}

_LIST_RE = re.compile(r"^(Possible rooms|Objects):\s*\[(.*)\]\s*$", re.MULTILINE)


class MockLLM:
    """Answers room-classification prompts by keyword lookup."""

    def complete(self, prompt: str) -> str:
        rooms, objects = [], []
        for label, body in _LIST_RE.findall(prompt):
            items = [s.strip() for s in body.split(",") if s.strip()]
            if label == "Possible rooms":
                rooms = items
            else:
                objects = items
        for obj in objects:
            room = ROOM_KEYWORDS.get(obj.lower())
            if room is not None and (not rooms or room in rooms):
                return room
        return rooms[0] if rooms else ""


def room_classifier_template() -> str:
    return resources.files("roomplace.resources").joinpath(
        "room_classifier_prompt.txt").read_text(encoding="utf-8")


def render_room_prompt(objects: Sequence[str], room_types: Sequence[str]) -> str:
    return (room_classifier_template()
            .replace("{room_types}", "[" + ", ".join(room_types) + "]")
            .replace("{objects}", "[" + ", ".join(objects) + "]"))


def classify_room_type(objects: Sequence[str], room_types: Sequence[str],
                       client: Optional[LLMClient] = None) -> str:
    if not objects or not room_types:
        raise ValueError("objects and room_types must both be non-empty")
    client = client or MockLLM()
    prompt = render_room_prompt(objects, room_types)
    try:
        answer = client.complete(prompt)
    except ProviderTimeoutError as exc:
        raise ProviderTimeoutError(f"{exc}\nprompt was:\n{prompt}") from exc
    return answer.strip().splitlines()[0].strip() if answer.strip() else ""


# --------------------------------------------------------------------------
# HTTP remotes


class RemoteClient:
    """JSON-over-POST client with one jittered retry and bounded concurrency."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 1,
                 backoff: float = 0.5, max_in_flight: int = 4):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def call(self, kind: str, payload) -> dict:
        body = json.dumps({"kind": kind, "payload": payload}).encode("utf-8")
        last: Exception = ProviderNetworkError("no attempt made")
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (1.0 + random.random()))
            try:
                with self._slots:
                    return self._post(body)
            except (ProviderNetworkError, ProviderTimeoutError) as exc:
                last = exc
        raise last

    def _post(self, body: bytes) -> dict:
        req = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"},
            method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as exc:
            raise ProviderNetworkError(f"{self.endpoint}: HTTP {exc.code}") from exc
        except (socket.timeout, TimeoutError) as exc:
            raise ProviderTimeoutError(f"{self.endpoint}: timed out after {self.timeout}s") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise ProviderTimeoutError(f"{self.endpoint}: timed out") from exc
            raise ProviderNetworkError(f"{self.endpoint}: {exc.reason}") from exc
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProviderSchemaError("$", "response is not JSON") from exc
        if not isinstance(doc, dict):
            raise ProviderSchemaError("$", "response is not an object")
        return doc


def _vector(doc: dict, dim: int) -> np.ndarray:
    if "vector" not in doc:
        raise ProviderSchemaError("vector")
    v = np.asarray(doc["vector"], dtype=np.float64)
    if v.shape != (dim,):
        raise ProviderSchemaError("vector", f"expected {dim} values, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ProviderSchemaError("vector", "non-finite values")
    return v


class RemoteEmbedder:
    def __init__(self, client: RemoteClient):
        self.client = client

    def embed(self, text: str) -> np.ndarray:
        v = _vector(self.client.call("embed", text), EMBED_DIM)
        n = np.linalg.norm(v)
        if n == 0:
            raise ProviderSchemaError("vector", "zero vector")
        return v / n


class RemoteScorer:
    def __init__(self, client: RemoteClient):
        self.client = client

    def score(self, summary: str) -> SemanticScore:
        doc = self.client.call("score", summary)
        h = _vector(doc, SEMANTIC_DIM)
        if "score" not in doc:
            raise ProviderSchemaError("score")
        s = float(doc["score"])
        if not 0.0 <= s <= 1.0:
            raise ProviderSchemaError("score", f"{s} outside [0, 1]")
        return SemanticScore(h, s, str(doc.get("explanation", "")))


class RemoteLLM:
    def __init__(self, client: RemoteClient):
        self.client = client

    def complete(self, prompt: str) -> str:
        doc = self.client.call("complete", prompt)
        if "text" not in doc or not isinstance(doc["text"], str):
            raise ProviderSchemaError("text")
        return doc["text"]


@dataclass
class Providers:
    embedder: EmbeddingProvider
    scorer: Optional[SemanticScorer]
    llm: LLMClient


def providers_from_env(env=None, with_scorer: bool = True) -> Providers:
    env = os.environ if env is None else env
    embed_url = env.get("LAYOUT_EMBED_URL")
    score_url = env.get("LAYOUT_SCORER_URL")
    llm_url = env.get("LAYOUT_LLM_URL")
    embedder = RemoteEmbedder(RemoteClient(embed_url)) if embed_url else MockEmbedder()
    scorer = None
    if with_scorer:
        scorer = RemoteScorer(RemoteClient(score_url)) if score_url else MockScorer()
    llm = RemoteLLM(RemoteClient(llm_url)) if llm_url else MockLLM()
    return Providers(embedder, scorer, llm)


def layout_summary(scene, layout, breakdown) -> str:
    """Plain-text description of a layout handed to a semantic scorer."""
    objs = scene.object_map
    lines = [f"room {scene.room.width:.2f} x {scene.room.depth:.2f} m"]
    if scene.room_type:
        lines.append(f"type {scene.room_type}")
    for p in layout.placements:
        o = objs[p.object_id]
        lines.append(
            f"{o.name} at ({p.x:.2f}, {p.y:.2f}) size {o.dims[0]:.2f}x{o.dims[1]:.2f} "
            f"rot {np.degrees(p.theta):.0f}"
        )
    for oid in layout.skipped:
        lines.append(f"{objs[oid].name} not placed")
    lines.append(
        "energy rel={:.4f} collision={:.4f} oob={:.4f} nav={:.4f} aff={:.4f} total={:.6f}".format(
            *breakdown.terms, breakdown.total)
    )
    return "\n".join(lines)
