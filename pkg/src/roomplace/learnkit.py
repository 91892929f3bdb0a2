"""Small differentiable layers with hand-written backward passes.

Every layer follows one protocol::

    out, cache = layer.forward(*inputs)
    grads = layer.backward(d_out, cache)   # tuple, one entry per input

``backward`` accumulates parameter gradients into ``Param.grad`` and returns
input gradients (``None`` for inputs that are not differentiable, such as an
adjacency matrix or an action mask).  All arithmetic is float64.
"""

from __future__ import annotations

import json
import math
import struct
from typing import Iterable, Optional

import numpy as np

CHECKPOINT_MAGIC = b"RPCK"
CHECKPOINT_VERSION = 1


class Param:
    """A named float64 tensor with its gradient and Adam moments."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.t = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Layer:
    def params(self) -> list[Param]:
        out = []
        for v in self.__dict__.values():
            if isinstance(v, Param):
                out.append(v)
            elif isinstance(v, Layer):
                out.extend(v.params())
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


# --------------------------------------------------------------------------
# primitives


class Dense(Layer):
    """y = act(x W^T + b); x may be a vector or a batch of row vectors."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng=None,
                 activation: Optional[str] = None, init: str = "glorot"):
        if activation not in (None, "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        w = glorot(rng, in_dim, out_dim) if init == "glorot" else np.zeros((out_dim, in_dim))
        self.W = Param(name + ".W", w)
        self.b = Param(name + ".b", np.zeros(out_dim))
        self.in_dim, self.out_dim = in_dim, out_dim
        self.activation = activation

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.W.name}: expected input dim {self.in_dim}, got {x.shape[-1]}")
        z = x @ self.W.value.T + self.b.value
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        return y, (x, z)

    def backward(self, dy, cache):
        x, z = cache
        if self.activation == "relu":
            dy = dy * (z > 0)
        if x.ndim == 1:
            self.W.grad += np.outer(dy, x)
            self.b.grad += dy
        else:
            self.W.grad += dy.T @ x
            self.b.grad += dy.sum(axis=0)
        return (dy @ self.W.value,)


class MLP(Layer):
    """Two-layer global-state encoder: W2 relu(W1 x + b1) + b2."""

    def __init__(self, name: str, in_dim: int, hidden: int, out_dim: int, rng):
        self.l1 = Dense(name + ".l1", in_dim, hidden, rng, activation="relu")
        self.l2 = Dense(name + ".l2", hidden, out_dim, rng)

    def forward(self, x):
        h, c1 = self.l1.forward(x)
        y, c2 = self.l2.forward(h)
        return y, (c1, c2)

    def backward(self, dy, cache):
        c1, c2 = cache
        (dh,) = self.l2.backward(dy, c2)
        return self.l1.backward(dh, c1)


def mean_neighbour_matrix(adj: np.ndarray) -> np.ndarray:
    """Row-normalised adjacency; isolated nodes get an all-zero row."""
    adj = np.asarray(adj, dtype=np.float64)
    deg = adj.sum(axis=1, keepdims=True)
    return np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)


class SageConv(Layer):
    """h_i <- relu(W_self h_i + W_neigh mean_{j in N(i)} h_j + b)."""

    def __init__(self, name: str, in_dim: int, out_dim: int, rng):
        self.W_self = Param(name + ".W_self", glorot(rng, in_dim, out_dim))
        self.W_neigh = Param(name + ".W_neigh", glorot(rng, in_dim, out_dim))
        self.b = Param(name + ".b", np.zeros(out_dim))

    def forward(self, X, A):
        X = np.asarray(X, dtype=np.float64)
        N = mean_neighbour_matrix(A)
        agg = N @ X
        z = X @ self.W_self.value.T + agg @ self.W_neigh.value.T + self.b.value
        return np.maximum(z, 0.0), (X, N, agg, z)

    def backward(self, dy, cache):
        X, N, agg, z = cache
        dz = dy * (z > 0)
        self.W_self.grad += dz.T @ X
        self.W_neigh.grad += dz.T @ agg
        self.b.grad += dz.sum(axis=0)
        dagg = dz @ self.W_neigh.value
        dX = dz @ self.W_self.value + N.T @ dagg
        return (dX, None)


class GraphEncoder(Layer):
    """Two SageConv rounds followed by global mean pooling over nodes."""

    def __init__(self, name: str, in_dim: int, hidden: int, rng):
        self.c1 = SageConv(name + ".c1", in_dim, hidden, rng)
        self.c2 = SageConv(name + ".c2", hidden, hidden, rng)

    def forward(self, X, A):
        h1, k1 = self.c1.forward(X, A)
        h2, k2 = self.c2.forward(h1, A)
        return h2.mean(axis=0), (k1, k2, h2.shape[0])

    def backward(self, dy, cache):
        k1, k2, m = cache
        dh2 = np.broadcast_to(dy / m, (m, dy.shape[0]))
        dh1, _ = self.c2.backward(dh2, k2)
        return self.c1.backward(dh1, k1)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class MultiHeadAttention(Layer):
    """Scaled dot-product attention of query rows over key/value rows."""

    def __init__(self, name: str, dim: int, heads: int, rng):
        if dim % heads:
            raise ValueError("dim must be divisible by heads")
        self.heads, self.dim = heads, dim
        self.q = Dense(name + ".q", dim, dim, rng)
        self.k = Dense(name + ".k", dim, dim, rng)
        self.v = Dense(name + ".v", dim, dim, rng)
        self.o = Dense(name + ".o", dim, dim, rng)

    def _split(self, x):
        n = x.shape[0]
        return x.reshape(n, self.heads, self.dim // self.heads).transpose(1, 0, 2)

    def _merge(self, x):
        h, n, dk = x.shape
        return x.transpose(1, 0, 2).reshape(n, h * dk)

    def forward(self, Xq, Xkv):
        Q, cq = self.q.forward(Xq)
        K, ck = self.k.forward(Xkv)
        V, cv = self.v.forward(Xkv)
        Qh, Kh, Vh = self._split(Q), self._split(K), self._split(V)
        scale = 1.0 / math.sqrt(self.dim // self.heads)
        S = Qh @ Kh.transpose(0, 2, 1) * scale
        P = softmax(S)
        Oh = P @ Vh
        out, co = self.o.forward(self._merge(Oh))
        return out, (cq, ck, cv, co, Qh, Kh, Vh, P, scale)

    def backward(self, dy, cache):
        cq, ck, cv, co, Qh, Kh, Vh, P, scale = cache
        (dO,) = self.o.backward(dy, co)
        dOh = self._split(dO)
        dP = dOh @ Vh.transpose(0, 2, 1)
        dVh = P.transpose(0, 2, 1) @ dOh
        dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True))
        dQh = dS @ Kh * scale
        dKh = dS.transpose(0, 2, 1) @ Qh * scale
        (dXq,) = self.q.backward(self._merge(dQh), cq)
        (dXk,) = self.k.backward(self._merge(dKh), ck)
        (dXv,) = self.v.backward(self._merge(dVh), cv)
        return (dXq, dXk + dXv)


class FeedForward(Layer):
    """Residual refinement y = x + W2 relu(W1 x + b1) + b2."""

    def __init__(self, name: str, dim: int, hidden: int, rng):
        self.l1 = Dense(name + ".l1", dim, hidden, rng, activation="relu")
        self.l2 = Dense(name + ".l2", hidden, dim, rng)

    def forward(self, x):
        h, c1 = self.l1.forward(x)
        y, c2 = self.l2.forward(h)
        return x + y, (c1, c2)

    def backward(self, dy, cache):
        c1, c2 = cache
        (dh,) = self.l2.backward(dy, c2)
        (dx,) = self.l1.backward(dh, c1)
        return (dy + dx,)


FUSION_MECHANISMS = ("cross", "self", "concat")


class ContextFusion(Layer):
    """Fuse the global and local feature vectors into one h_d vector.

    ``cross``: the global vector queries the local one (one token each) with
    a residual connection; ``self``: attention over the two-token stack, then
    token mean; ``concat``: a dense map of the concatenation.  Every variant
    ends with the same residual feed-forward refinement.
    """

    def __init__(self, name: str, dim: int, rng, mechanism: str = "cross",
                 heads: int = 4, ffn_mult: int = 2):
        if mechanism not in FUSION_MECHANISMS:
            raise ValueError(f"unknown fusion mechanism {mechanism!r}")
        self.mechanism = mechanism
        if mechanism == "concat":
            self.proj = Dense(name + ".proj", 2 * dim, dim, rng)
        else:
            self.attn = MultiHeadAttention(name + ".attn", dim, heads, rng)
        self.ffn = FeedForward(name + ".ffn", dim, ffn_mult * dim, rng)

    def forward(self, hg, hl):
        if self.mechanism == "cross":
            a, ca = self.attn.forward(hg[None, :], hl[None, :])
            z = hg + a[0]
        elif self.mechanism == "self":
            X = np.stack([hg, hl])
            a, ca = self.attn.forward(X, X)
            z = (X + a).mean(axis=0)
        else:
            z, ca = self.proj.forward(np.concatenate([hg, hl]))
        f, cf = self.ffn.forward(z)
        return f, (ca, cf)

    def backward(self, df, cache):
        ca, cf = cache
        (dz,) = self.ffn.backward(df, cf)
        if self.mechanism == "cross":
            dq, dkv = self.attn.backward(dz[None, :], ca)
            return (dz + dq[0], dkv[0])
        if self.mechanism == "self":
            dX = np.broadcast_to(dz / 2.0, (2, dz.shape[0]))
            dq, dkv = self.attn.backward(dX, ca)
            dX = dX + dq + dkv
            return (dX[0], dX[1])
        (dcat,) = self.proj.backward(dz, ca)
        n = dz.shape[0]
        return (dcat[:n], dcat[n:])


class LayerNorm(Layer):
    def __init__(self, name: str, dim: int, eps: float = 1e-5):
        self.gain = Param(name + ".gain", np.ones(dim))
        self.bias = Param(name + ".bias", np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        mu = x.mean()
        xc = x - mu
        var = (xc * xc).mean()
        inv = 1.0 / math.sqrt(var + self.eps)
        xhat = xc * inv
        return self.gain.value * xhat + self.bias.value, (xhat, inv)

    def backward(self, dy, cache):
        xhat, inv = cache
        self.gain.grad += dy * xhat
        self.bias.grad += dy
        dxhat = dy * self.gain.value
        n = dxhat.shape[0]
        dx = inv / n * (n * dxhat - dxhat.sum() - xhat * (dxhat * xhat).sum())
        return (dx,)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class GatedProjection(Layer):
    """f = compress(layernorm(P(x) * sigmoid(G(x)))) with output dim h_d/2."""

    def __init__(self, name: str, in_dim: int, dim: int, rng):
        self.P = Dense(name + ".P", in_dim, dim, rng)
        self.G = Dense(name + ".G", in_dim, dim, rng)
        self.norm = LayerNorm(name + ".norm", dim)
        self.compress = Dense(name + ".compress", dim, dim // 2, rng)
        self.in_dim = in_dim

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"gated projection expects {self.in_dim} inputs, got {x.shape[-1]}")
        p, cp = self.P.forward(x)
        g, cg = self.G.forward(x)
        s = sigmoid(g)
        u = p * s
        n, cn = self.norm.forward(u)
        f, cc = self.compress.forward(n)
        return f, (cp, cg, p, s, cn, cc)

    def backward(self, df, cache):
        cp, cg, p, s, cn, cc = cache
        (dn,) = self.compress.backward(df, cc)
        (du,) = self.norm.backward(dn, cn)
        (dx1,) = self.P.backward(du * s, cp)
        (dx2,) = self.G.backward(du * p * s * (1.0 - s), cg)
        return (dx1 + dx2,)


class PolicyHead(Layer):
    """Dense logits followed by a masked softmax; masked actions get probability 0."""

    def __init__(self, name: str, in_dim: int, n_actions: int, rng, init: str = "zeros"):
        self.dense = Dense(name, in_dim, n_actions, rng, init=init)

    def forward(self, f, mask=None):
        z, cd = self.dense.forward(f)
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if not mask.any():
                raise ValueError("policy mask has no valid action")
            z = np.where(mask, z, -np.inf)
        probs = softmax(z)
        return probs, (cd, probs)

    def backward(self, dprobs, cache):
        cd, probs = cache
        dz = probs * (dprobs - (dprobs * probs).sum())
        return (*self.dense.backward(dz, cd), None)

    def backward_logits(self, dz, cache):
        cd, _ = cache
        return self.dense.backward(dz, cd)


class ValueHead(Layer):
    def __init__(self, name: str, in_dim: int, rng):
        self.dense = Dense(name, in_dim, 1, rng)

    def forward(self, f):
        v, c = self.dense.forward(f)
        return v, c

    def backward(self, dv, cache):
        return self.dense.backward(np.atleast_1d(dv), cache)


def masked_entropy(probs: np.ndarray) -> float:
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum())


# --------------------------------------------------------------------------
# optimisation


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.param = name


def clip_grad_norm(params: Iterable[Param], max_norm: float) -> float:
    params = list(params)
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    if max_norm is not None and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total


def adam_step(params: Iterable[Param], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update over ``params`` in place."""
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(p.name)
    for p in params:
        p.t += 1
        p.m = beta1 * p.m + (1.0 - beta1) * p.grad
        p.v = beta2 * p.v + (1.0 - beta2) * p.grad * p.grad
        mhat = p.m / (1.0 - beta1 ** p.t)
        vhat = p.v / (1.0 - beta2 ** p.t)
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)


# --------------------------------------------------------------------------
# finite-difference checking


def grad_check(layer: Layer, inputs, eps: float = 1e-5, seed: int = 0,
               wrt_inputs: Optional[Iterable[int]] = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    The scalar probed is ``L = sum(R * out)`` for a fixed random ``R``.  Errors
    are ``|a - n| / max(|a|, |n|, floor)`` over every parameter entry and every
    differentiable input entry, where ``floor = 1e-6 * max(1, |L|)`` sits above
    the round-off noise of the central difference.
    """
    rng = np.random.default_rng(seed)
    inputs = [np.array(x, dtype=np.float64) if isinstance(x, np.ndarray) else x for x in inputs]
    out, _ = layer.forward(*inputs)
    R = rng.standard_normal(np.shape(out))

    def loss():
        o, _ = layer.forward(*inputs)
        return float((R * o).sum())

    layer.zero_grad()
    out, cache = layer.forward(*inputs)
    floor = 1e-6 * max(1.0, abs(float((R * out).sum())))
    d_inputs = layer.backward(R, cache)
    if wrt_inputs is None:
        wrt_inputs = [i for i, g in enumerate(d_inputs) if g is not None]

    worst = 0.0

    def compare(arr, analytic):
        nonlocal worst
        flat = arr.reshape(-1)
        an = np.asarray(analytic).reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + eps
            lp = loss()
            flat[k] = old - eps
            lm = loss()
            flat[k] = old
            num = (lp - lm) / (2 * eps)
            err = abs(an[k] - num) / max(abs(an[k]), abs(num), floor)
            worst = max(worst, err)

    for p in layer.params():
        compare(p.value, p.grad.copy())
    for i in wrt_inputs:
        compare(inputs[i], d_inputs[i])
    layer.zero_grad()
    return worst


# --------------------------------------------------------------------------
# checkpoints


class CheckpointError(ValueError):
    pass


def save_params(params: Iterable[Param], config: dict) -> bytes:
    """Serialise named parameters to a versioned binary blob.

    Layout: magic, u32 version, u32 header length, JSON header (config plus
    name/shape/offset per array), then row-major little-endian float64 data.
    """
    params = list(params)
    entries, offset = [], 0
    for p in params:
        entries.append({"name": p.name, "shape": list(p.shape), "offset": offset})
        offset += p.value.size
    header = json.dumps({"config": config, "params": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in params)
    return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header)) + header + body


def load_params(blob: bytes) -> tuple[dict, dict]:
    """Inverse of :func:`save_params`; returns ``(config, {name: array})``."""
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[12:12 + hlen])
    data = np.frombuffer(blob[12 + hlen:], dtype="<f8")
    arrays = {}
    for e in header["params"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = data[e["offset"]:e["offset"] + n].reshape(e["shape"]).astype(np.float64)
    return header["config"], arrays


def assign_params(params: Iterable[Param], arrays: dict):
    for p in params:
        if p.name not in arrays:
            raise CheckpointError(f"checkpoint lacks parameter {p.name!r}")
        a = arrays[p.name]
        if a.shape != p.shape:
            raise CheckpointError(f"shape mismatch for {p.name}: {a.shape} vs {p.shape}")
        p.value = a.copy()
        p.grad = np.zeros_like(p.value)
        p.m = np.zeros_like(p.value)
        p.v = np.zeros_like(p.value)
        p.t = 0
