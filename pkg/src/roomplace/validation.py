"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers

import numpy as np

from .scene import SceneSpec


def check_scenes(scenes) -> list[SceneSpec]:
    if isinstance(scenes, SceneSpec):
        scenes = [scenes]
    scenes = list(scenes)
    bad = [type(s).__name__ for s in scenes if not isinstance(s, SceneSpec)]
    if bad:
        raise TypeError(f"expected SceneSpec items, got {bad[0]}")
    if not scenes:
        raise ValueError("at least one scene is required")
    return scenes


def check_embeddings(X, dim=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"expected a non-empty 2-D array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"expected {dim} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinity")
    return X


def check_multilabel(Y, n_samples: int, n_labels: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (n_samples, n_labels):
        raise ValueError(f"expected targets of shape {(n_samples, n_labels)}, got {Y.shape}")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("targets must be 0 or 1")
    return Y


def check_positive(name: str, value, integer: bool = False):
    kind = numbers.Integral if integer else numbers.Real
    if not isinstance(value, kind) or isinstance(value, bool) or value <= 0:
        raise ValueError(f"{name} must be a positive {'integer' if integer else 'number'}, got {value!r}")
    return value


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise ValueError(f"cannot seed a generator from {seed!r}")
