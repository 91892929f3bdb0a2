"""Small instances of every differentiable layer plus matching random inputs."""

import numpy as np

from roomplace import learnkit as lk


def _adjacency(gen, m):
    a = (gen.random((m, m)) < 0.5).astype(float)
    a = np.triu(a, 1)
    return a + a.T


def layer_cases(seed):
    gen = np.random.default_rng(seed)
    h = 8
    m = 4
    mask = gen.random(12) < 0.7
    mask[0] = True
    return {
        "dense": (lk.Dense("d", 5, 7, gen), [gen.standard_normal(5)]),
        "dense_relu_batch": (lk.Dense("d", 5, 7, gen, activation="relu"), [gen.standard_normal((3, 5))]),
        "mlp": (lk.MLP("g", 5, h, h, gen), [gen.standard_normal(5)]),
        "sage": (lk.SageConv("s", 6, h, gen), [gen.standard_normal((m, 6)), _adjacency(gen, m)]),
        "graph_encoder": (lk.GraphEncoder("e", 6, h, gen), [gen.standard_normal((m, 6)), _adjacency(gen, m)]),
        "attention": (lk.MultiHeadAttention("a", h, 4, gen), [gen.standard_normal((2, h)), gen.standard_normal((3, h))]),
        "fusion_cross": (lk.ContextFusion("f", h, gen, "cross"), [gen.standard_normal(h), gen.standard_normal(h)]),
        "fusion_self": (lk.ContextFusion("f", h, gen, "self"), [gen.standard_normal(h), gen.standard_normal(h)]),
        "fusion_concat": (lk.ContextFusion("f", h, gen, "concat"), [gen.standard_normal(h), gen.standard_normal(h)]),
        "layer_norm": (lk.LayerNorm("n", h), [gen.standard_normal(h)]),
        "gated_projection": (lk.GatedProjection("p", 20, h, gen), [gen.standard_normal(20)]),
        "policy_head": (lk.PolicyHead("pi", h, 12, gen, init="glorot"), [gen.standard_normal(h), mask]),
        "value_head": (lk.ValueHead("v", h + h // 2, gen), [gen.standard_normal(h + h // 2)]),
    }
