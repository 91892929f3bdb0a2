"""Multi-label object-role prediction from (instruction, object) pairs.

Each pair is embedded as one joint text through an embedding provider; a
two-layer head maps the embedding to independent sigmoid scores for the
key, anchor and inference roles.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import learnkit as lk
from .providers import EMBED_DIM, MockEmbedder
from .validation import check_embeddings, check_multilabel, check_random_state

log = logging.getLogger(__name__)

ROLE_LABELS = ("key", "anchor", "inference")
MAX_TOKENS = 128
SEPARATOR = "[SEP]"


class RoleDatasetError(ValueError):
    pass


@dataclass(frozen=True)
class RoleExample:
    instruction: str
    object: str
    labels: tuple[int, int, int]


def joint_text(instruction: str, obj: str, max_tokens: int = MAX_TOKENS) -> str:
    """``instruction [SEP] object``, trimming the instruction to fit ``max_tokens``."""
    itoks, otoks = instruction.split(), obj.split()
    if not itoks or not otoks:
        raise ValueError("instruction and object must both be non-empty")
    room = max_tokens - 1 - len(otoks)
    if room < 1:
        raise ValueError(f"object name alone exceeds {max_tokens} tokens")
    return " ".join(itoks[:room] + [SEPARATOR] + otoks)


def encode_pair(instruction: str, obj: str, embedder=None) -> np.ndarray:
    embedder = embedder or MockEmbedder()
    return np.asarray(embedder.embed(joint_text(instruction, obj)), dtype=np.float64)


def bce_loss(probs, targets, eps: float = 0.0) -> float:
    """Binary cross-entropy summed over labels, averaged over examples."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    # 0 * log 0 counts as 0 so exact predictions cost nothing
    pos = np.where(y > 0, y * np.log(np.clip(p, eps or 1e-300, None)), 0.0)
    neg = np.where(y < 1, (1 - y) * np.log(np.clip(1 - p, eps or 1e-300, None)), 0.0)
    return float(-(pos + neg).sum() / p.shape[0])


class RoleHead(lk.Layer):
    def __init__(self, in_dim: int = EMBED_DIM, hidden: int = 128, rng=None,
                 init: str = "glorot"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.l1 = lk.Dense("role.l1", in_dim, hidden, rng, activation="relu", init=init)
        self.l2 = lk.Dense("role.l2", hidden, len(ROLE_LABELS), rng, init=init)

    def logits(self, X):
        h, c1 = self.l1.forward(X)
        z, c2 = self.l2.forward(h)
        return z, (c1, c2)

    def forward(self, X):
        z, cache = self.logits(X)
        return lk.sigmoid(z), cache

    def backward_logits(self, dz, cache):
        c1, c2 = cache
        (dh,) = self.l2.backward(dz, c2)
        return self.l1.backward(dh, c1)


def predict_roles(head: RoleHead, w, threshold: float = 0.5):
    probs, _ = head.forward(np.asarray(w, dtype=np.float64))
    return probs, (probs >= threshold).astype(int)


class RoleClassifier(BaseEstimator, ClassifierMixin):
    """Sigmoid multi-label head trained with BCE and Adam on minibatches.

    ``X`` is either an ``(n, embed_dim)`` array or a sequence of
    ``(instruction, object)`` pairs, embedded with ``embedder``.
    """

    def __init__(self, hidden_dim=128, learning_rate=3e-4, batch_size=16, epochs=50,
                 threshold=0.5, embedder=None, random_state=0):
        self.hidden_dim = hidden_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.threshold = threshold
        self.embedder = embedder
        self.random_state = random_state

    def _features(self, X) -> np.ndarray:
        if isinstance(X, np.ndarray) and X.dtype != object:
            return check_embeddings(X)
        X = list(X)
        if X and isinstance(X[0], (tuple, list)) and len(X[0]) == 2 and isinstance(X[0][0], str):
            emb = self.embedder or MockEmbedder()
            return np.stack([encode_pair(i, o, emb) for i, o in X])
        return check_embeddings(X)

    def fit(self, X, Y):
        W = self._features(X)
        Y = check_multilabel(Y, W.shape[0], len(ROLE_LABELS))
        for k, name in enumerate(ROLE_LABELS):
            if Y[:, k].min() == Y[:, k].max():
                log.warning("role %r is constant across the dataset", name)
        rng = check_random_state(self.random_state)
        self.head_ = RoleHead(W.shape[1], self.hidden_dim, rng)
        params = self.head_.params()
        self.loss_curve_ = []
        n = W.shape[0]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, self.batch_size):
                idx = order[s:s + self.batch_size]
                self.head_.zero_grad()
                z, cache = self.head_.logits(W[idx])
                p = lk.sigmoid(z)
                total += bce_loss(p, Y[idx]) * len(idx)
                self.head_.backward_logits((p - Y[idx]) / len(idx), cache)
                lk.adam_step(params, self.learning_rate)
            self.loss_curve_.append(total / n)
        self.n_features_in_ = W.shape[1]
        self.classes_ = np.array(ROLE_LABELS)
        return self

    def predict_proba(self, X) -> np.ndarray:
        W = self._features(X)
        probs, _ = self.head_.forward(W)
        return probs

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= self.threshold).astype(int)

    def per_class_accuracy(self, X, Y) -> dict:
        P = self.predict(X)
        Y = np.asarray(Y)
        return {name: float((P[:, k] == Y[:, k]).mean()) for k, name in enumerate(ROLE_LABELS)}

    def save(self, path) -> None:
        cfg = {"in_dim": int(self.n_features_in_), "hidden": int(self.hidden_dim),
               "threshold": float(self.threshold)}
        with open(path, "wb") as fh:
            fh.write(lk.save_params(self.head_.params(), cfg))

    def load(self, path) -> "RoleClassifier":
        with open(path, "rb") as fh:
            cfg, arrays = lk.load_params(fh.read())
        self.hidden_dim = cfg["hidden"]
        self.threshold = cfg["threshold"]
        self.head_ = RoleHead(cfg["in_dim"], cfg["hidden"], init="zeros")
        lk.assign_params(self.head_.params(), arrays)
        self.n_features_in_ = cfg["in_dim"]
        self.classes_ = np.array(ROLE_LABELS)
        return self


# --------------------------------------------------------------------------
# datasets


def load_role_dataset(text: str) -> list[RoleExample]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RoleDatasetError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise RoleDatasetError("dataset must be a JSON list")
    out = []
    for i, item in enumerate(doc):
        try:
            labels = tuple(int(bool(item["labels"][k])) for k in ROLE_LABELS)
            out.append(RoleExample(str(item["instruction"]), str(item["object"]), labels))
        except (KeyError, TypeError) as exc:
            raise RoleDatasetError(f"[{i}]: missing field {exc}") from exc
    return out


def dump_role_dataset(examples: Sequence[RoleExample]) -> str:
    return json.dumps([
        {"instruction": e.instruction, "object": e.object,
         "labels": {k: bool(v) for k, v in zip(ROLE_LABELS, e.labels)}}
        for e in examples], indent=2)


def dataset_arrays(examples: Sequence[RoleExample]):
    X = [(e.instruction, e.object) for e in examples]
    Y = np.array([e.labels for e in examples], dtype=float)
    return X, Y


_ITEMS = ["bread", "cup", "book", "apple", "plate", "towel", "phone", "mug", "bottle",
          "letter", "soup", "milk", "shirt", "remote", "keys"]
_ANCHORS = ["counter", "table", "shelf", "desk", "nightstand", "cabinet", "sofa", "bed"]
# verb -> implied device (None when nothing is implied)
_VERBS = {
    "warm": "microwave", "heat": "stove", "chill": "refrigerator", "wash": "sink",
    "iron": "ironing_board", "put": None, "place": None, "leave": None,
}
_DISTRACTORS = ["lamp", "plant", "rug", "chair", "mirror", "clock", "curtain", "painting"]


def synthetic_role_dataset(n: int = 600, seed: int = 0) -> list[RoleExample]:
    """Templated instructions with key / anchor / implied-device / distractor objects.

    About two in five instructions with a device name it as the destination,
    which then carries both the anchor and the inference role.
    """
    rng = np.random.default_rng(seed)
    verbs = sorted(_VERBS)
    out: list[RoleExample] = []
    while len(out) < n:
        verb = verbs[int(rng.integers(len(verbs)))]
        item = _ITEMS[int(rng.integers(len(_ITEMS)))]
        device = _VERBS[verb]
        if device is not None and rng.random() < 0.4:
            anchor = device
            text = f"{verb} the {item} in the {device}"
        else:
            anchor = _ANCHORS[int(rng.integers(len(_ANCHORS)))]
            text = f"{verb} the {item} and bring it to the {anchor}"
        pool = [(item, (1, 0, 0)), (anchor, (0, 1, int(anchor == device)))]
        if device is not None and anchor != device:
            pool.append((device, (0, 0, 1)))
        pool.append((_DISTRACTORS[int(rng.integers(len(_DISTRACTORS)))], (0, 0, 0)))
        obj, labels = pool[int(rng.integers(len(pool)))]
        out.append(RoleExample(text, obj, labels))
    return out


def per_class_accuracy(pred, Y) -> dict:
    pred, Y = np.asarray(pred), np.asarray(Y)
    return {name: float((pred[:, k] == Y[:, k]).mean()) for k, name in enumerate(ROLE_LABELS)}
