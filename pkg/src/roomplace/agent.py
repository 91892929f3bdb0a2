"""Actor-critic placement agent.

The encoder fuses a global-state MLP with a GraphSAGE view of the partial
layout; the actor reads the fused vector, the critic reads it concatenated
with a gated projection of the semantic scorer's feature vector.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import learnkit as lk
from .energy import EMPTY_PRIOR, EnergyBreakdown, EnergyWeights, PriorTable, total_energy
from .env import EnvConfig, PlacementEnv, NODE_GEOM_DIM
from .providers import EMBED_DIM, SEMANTIC_DIM, MockEmbedder, ProviderError, layout_summary
from .scene import Layout, SceneSpec
from .validation import check_scenes

log = logging.getLogger(__name__)

STATE_DIM = 5


class CheckpointMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 128
    fusion: str = "cross"
    sff: bool = True
    heads: int = 4
    canvas_cols: int = 40
    canvas_rows: int = 40
    embed_dim: int = EMBED_DIM
    seed: int = 0

    @property
    def n_actions(self) -> int:
        return self.canvas_cols * self.canvas_rows * 4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 1
    lr: float = 1e-4
    gamma: float = 0.99
    policy_weight: float = 1.0
    value_weight: float = 0.5
    aux_weight: float = 0.1
    entropy_weight: float = 0.01
    aux_enabled: bool = True
    alpha: float = 0.5
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        for name in ("policy_weight", "value_weight", "aux_weight", "entropy_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class ActorCritic(lk.Layer):
    def __init__(self, config: ModelConfig = ModelConfig()):
        self.config = config
        h = config.hidden_dim
        rng = np.random.default_rng(config.seed)
        self.global_mlp = lk.MLP("global", STATE_DIM, h, h, rng)
        self.graph = lk.GraphEncoder("local", config.embed_dim + NODE_GEOM_DIM, h, rng)
        self.fusion = lk.ContextFusion("fusion", h, rng, config.fusion, config.heads)
        if config.sff:
            self.semantic = lk.GatedProjection("semantic", SEMANTIC_DIM, h, rng)
        self.actor = lk.PolicyHead("actor", h, config.n_actions, rng, init="zeros")
        self.critic = lk.ValueHead("critic", h + h // 2, rng)

    def encode(self, s_g, X, A):
        hg, cg = self.global_mlp.forward(s_g)
        hl, cl = self.graph.forward(X, A)
        f, cf = self.fusion.forward(hg, hl)
        return f, (cg, cl, cf)

    def backward_encode(self, df, cache):
        cg, cl, cf = cache
        dhg, dhl = self.fusion.backward(df, cf)
        self.graph.backward(dhl, cl)
        self.global_mlp.backward(dhg, cg)

    def semantic_features(self, h_vl):
        h = self.config.hidden_dim
        if h_vl is None or not self.config.sff:
            return np.zeros(h // 2), None
        return self.semantic.forward(h_vl)

    def value(self, f, f_s):
        v, c = self.critic.forward(np.concatenate([f, f_s]))
        return float(v[0]), c

    def to_bytes(self) -> bytes:
        return lk.save_params(self.params(), asdict(self.config))

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ActorCritic":
        cfg, arrays = lk.load_params(blob)
        model = cls(ModelConfig(**cfg))
        lk.assign_params(model.params(), arrays)
        return model


@dataclass
class EpisodeTrace:
    """Per-step record of one rollout."""

    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    entropies: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    semantic: list = field(default_factory=list)     # r_vlm or None
    caches: list = field(default_factory=list)

    @property
    def available(self) -> list:
        return [s is not None for s in self.semantic]

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class LossReport:
    l_policy: float
    l_value: float
    l_aux: float
    entropy: float
    total: float


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def compute_losses(trace: EpisodeTrace, config: TrainConfig) -> LossReport:
    """Policy, value, auxiliary and entropy terms and their weighted total."""
    T = len(trace)
    if T == 0:
        raise ValueError("empty trace")
    G = discounted_returns(trace.rewards, config.gamma)
    V = np.asarray(trace.values, dtype=float)
    A = G - V
    logp = np.asarray(trace.log_probs, dtype=float)
    l_policy = float(-(logp * A).sum() / T)
    l_value = float(((V - G) ** 2).sum() / T)
    l_aux = 0.0
    if config.aux_enabled:
        l_aux = float(sum((v - s) ** 2 for v, s in zip(V, trace.semantic) if s is not None))
    entropy = float(np.sum(trace.entropies) / T)
    total = (config.policy_weight * l_policy + config.value_weight * l_value
             + config.aux_weight * l_aux - config.entropy_weight * entropy)
    return LossReport(l_policy, l_value, l_aux, entropy, total)


class _NameCache:
    """Memoises embeddings by object name for the length of a run."""

    def __init__(self, embedder):
        self.embedder = embedder
        self._memo: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        v = self._memo.get(text)
        if v is None:
            v = np.asarray(self.embedder.embed(text), dtype=float)
            self._memo[text] = v
        return v


def act(model: ActorCritic, env: PlacementEnv, embedder, rng=None,
        mode: str = "sample", keep_cache: bool = False):
    """Choose an action for the pending object.

    Returns ``(action, log_prob, value, entropy, probs, cache)``.  Greedy mode
    takes the arg-max, lowest index on ties.
    """
    s_g = env.encode_global_state()
    graph = env.encode_local_graph(embedder)
    mask = env.action_mask()
    f, enc_cache = model.encode(s_g, graph.X, graph.A)
    probs, pcache = model.actor.forward(f, mask)
    f_s, _ = model.semantic_features(None)
    value, vcache = model.value(f, f_s)
    if mode == "greedy":
        a = int(np.argmax(probs))
    elif mode == "sample":
        cdf = np.cumsum(probs)
        a = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        a = min(a, len(probs) - 1)
        while probs[a] == 0.0:
            a -= 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    ent = lk.masked_entropy(probs)
    cache = (enc_cache, pcache, vcache, f) if keep_cache else None
    return a, float(math.log(probs[a])), value, ent, probs, cache


def _query_scorer(scorer, scene, layout, breakdown):
    summary = layout_summary(scene, layout, breakdown)
    for attempt in range(2):
        try:
            return scorer.score(summary)
        except ProviderError as exc:
            log.warning("scorer failed (attempt %d): %s", attempt + 1, exc)
    return None


def rollout(model: ActorCritic, env: PlacementEnv, embedder, rng, config: TrainConfig,
            scorer=None) -> tuple[EpisodeTrace, Optional[np.ndarray]]:
    """Sample one episode; the semantic score (if any) arrives at the last step."""
    env.reset()
    trace = EpisodeTrace()
    while not env.done:
        a, lp, v, ent, probs, cache = act(model, env, embedder, rng, "sample", keep_cache=True)
        out = env.step(a)
        trace.actions.append(a)
        trace.rewards.append(out.reward_g)
        trace.values.append(v)
        trace.log_probs.append(lp)
        trace.entropies.append(ent)
        trace.probs.append(probs)
        trace.semantic.append(None)
        trace.caches.append(cache)
    h_vl = None
    use_scorer = scorer is not None and (model.config.sff or config.alpha > 0)
    if use_scorer and len(trace):
        res = _query_scorer(scorer, env.scene, env.layout, env.breakdown)
        if res is not None:
            trace.semantic[-1] = res.score
            trace.rewards[-1] += config.alpha * res.score
            h_vl = res.h_vl
    return trace, h_vl


def accumulate_gradients(model: ActorCritic, trace: EpisodeTrace, config: TrainConfig,
                         h_vl=None) -> LossReport:
    """Back-propagate the weighted loss of one episode into ``model``'s grads."""
    T = len(trace)
    h = model.config.hidden_dim
    # the terminal critic input gains the semantic features once they exist
    s_cache = None
    if h_vl is not None and model.config.sff:
        f_s, s_cache = model.semantic_features(h_vl)
        enc_cache, pcache, _, f = trace.caches[-1]
        v, vcache = model.value(f, f_s)
        trace.values[-1] = v
        trace.caches[-1] = (enc_cache, pcache, vcache, f)

    report = compute_losses(trace, config)
    G = discounted_returns(trace.rewards, config.gamma)
    V = np.asarray(trace.values)
    adv = G - V
    for t in range(T):
        enc_cache, pcache, vcache, f = trace.caches[t]
        probs = trace.probs[t]
        onehot = np.zeros_like(probs)
        onehot[trace.actions[t]] = 1.0
        dz = -config.policy_weight * adv[t] / T * (onehot - probs)
        if config.entropy_weight:
            logp = np.log(probs, out=np.zeros_like(probs), where=probs > 0)
            dz += config.entropy_weight / T * probs * (logp + trace.entropies[t])
        dv = config.value_weight * 2.0 * (V[t] - G[t]) / T
        if config.aux_enabled and trace.semantic[t] is not None:
            dv += config.aux_weight * 2.0 * (V[t] - trace.semantic[t])
        (df,) = model.actor.backward_logits(dz, pcache)
        (dfhat,) = model.critic.backward(np.array([dv]), vcache)
        df = df + dfhat[:h]
        if t == T - 1 and s_cache is not None:
            model.semantic.backward(dfhat[h:], s_cache)
        model.backward_encode(df, enc_cache)
    return report


@dataclass
class EpochStats:
    epoch: int
    mean_energy: float
    mean_cnt: float
    l_policy: float
    l_value: float
    l_aux: float
    entropy: float

    CSV_HEADER = "epoch,mean_E_total,mean_CNT,l_policy,l_value,l_aux,entropy"

    def csv_row(self) -> str:
        return ",".join([str(self.epoch)] + [repr(float(x)) for x in (
            self.mean_energy, self.mean_cnt, self.l_policy, self.l_value, self.l_aux, self.entropy)])


def train(scenes: Sequence[SceneSpec], model_config: ModelConfig = ModelConfig(),
          train_config: TrainConfig = TrainConfig(), env_config: Optional[EnvConfig] = None,
          embedder=None, scorer=None, prior: PriorTable = EMPTY_PRIOR,
          callback=None) -> tuple[ActorCritic, list[EpochStats]]:
    """Train an actor-critic on ``scenes``; deterministic given the seeds."""
    if not scenes:
        raise ValueError("train needs at least one scene")
    env_config = env_config or EnvConfig(canvas_cols=model_config.canvas_cols,
                                         canvas_rows=model_config.canvas_rows)
    if env_config.n_actions != model_config.n_actions:
        raise CheckpointMismatchError("environment canvas does not match the model")
    model = ActorCritic(model_config)
    embedder = _NameCache(embedder or MockEmbedder())
    rng = np.random.default_rng(train_config.seed)
    envs = [PlacementEnv(s, env_config, prior) for s in scenes]
    params = model.params()
    curve = []
    for epoch in range(train_config.epochs):
        order = rng.permutation(len(envs))
        energies, cnts, reports = [], [], []
        for i in order:
            env = envs[i]
            model.zero_grad()
            trace, h_vl = rollout(model, env, embedder, rng, train_config, scorer)
            if len(trace):
                reports.append(accumulate_gradients(model, trace, train_config, h_vl))
                lk.clip_grad_norm(params, train_config.grad_clip)
                lk.adam_step(params, train_config.lr)
            energies.append(env.breakdown.total)
            cnts.append(100.0 * len(env.placements) / len(env.order))
        mean = (lambda xs: float(np.mean(xs)) if xs else 0.0)
        stats = EpochStats(
            epoch + 1, mean(energies), mean(cnts),
            mean([r.l_policy for r in reports]), mean([r.l_value for r in reports]),
            mean([r.l_aux for r in reports]), mean([r.entropy for r in reports]))
        curve.append(stats)
        log.info("epoch %d: E=%.4f CNT=%.1f", stats.epoch, stats.mean_energy, stats.mean_cnt)
        if callback is not None:
            callback(stats, model)
    return model, curve


def solve_scene(model: ActorCritic, scene: SceneSpec, embedder=None,
                env_config: Optional[EnvConfig] = None, prior: PriorTable = EMPTY_PRIOR,
                mode: str = "greedy", seed: int = 0) -> tuple[Layout, EnergyBreakdown]:
    """Roll out the policy once and return the final layout and its energy."""
    cfg = model.config
    env_config = env_config or EnvConfig(canvas_cols=cfg.canvas_cols, canvas_rows=cfg.canvas_rows)
    if env_config.n_actions != cfg.n_actions:
        raise CheckpointMismatchError(
            f"checkpoint expects {cfg.n_actions} actions, environment has {env_config.n_actions}")
    if not isinstance(embedder, _NameCache):
        embedder = _NameCache(embedder or MockEmbedder())
    rng = np.random.default_rng(seed)
    env = PlacementEnv(scene, env_config, prior, score_steps=False)
    t0 = time.perf_counter()
    while not env.done:
        a, *_ = act(model, env, embedder, rng, mode)
        env.step(a)
    elapsed = time.perf_counter() - t0
    n = max(len(env.order), 1)
    layout = Layout(tuple(env.placements), tuple(env.skipped), elapsed / n)
    return layout, total_energy(scene, layout, prior, env_config.weights, env_config.nav_resolution)


class PlacementAgent(BaseEstimator):
    """Scikit-learn style wrapper: ``fit`` on scenes, ``predict`` layouts."""

    def __init__(self, hidden_dim=128, fusion="cross", sff=True, aux_loss=True,
                 epochs=50, learning_rate=1e-4, gamma=0.99, policy_weight=1.0,
                 value_weight=0.5, aux_weight=0.1, entropy_weight=0.01, alpha=0.5,
                 grad_clip=5.0, resolution=0.25, max_cells=40, delta_reward=False,
                 energy_weights=None, prior=None, embedder=None, scorer=None,
                 random_state=0):
        self.hidden_dim = hidden_dim
        self.fusion = fusion
        self.sff = sff
        self.aux_loss = aux_loss
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.policy_weight = policy_weight
        self.value_weight = value_weight
        self.aux_weight = aux_weight
        self.entropy_weight = entropy_weight
        self.alpha = alpha
        self.grad_clip = grad_clip
        self.resolution = resolution
        self.max_cells = max_cells
        self.delta_reward = delta_reward
        self.energy_weights = energy_weights
        self.prior = prior
        self.embedder = embedder
        self.scorer = scorer
        self.random_state = random_state

    def _model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.hidden_dim, fusion=self.fusion, sff=self.sff,
                           canvas_cols=self.max_cells, canvas_rows=self.max_cells,
                           seed=self.random_state)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.learning_rate, gamma=self.gamma,
                           policy_weight=self.policy_weight, value_weight=self.value_weight,
                           aux_weight=self.aux_weight, entropy_weight=self.entropy_weight,
                           aux_enabled=self.aux_loss, alpha=self.alpha,
                           grad_clip=self.grad_clip, seed=self.random_state)

    def _env_config(self) -> EnvConfig:
        return EnvConfig(resolution=self.resolution, canvas_cols=self.max_cells,
                         canvas_rows=self.max_cells, delta_reward=self.delta_reward,
                         weights=self.energy_weights or EnergyWeights())

    def fit(self, scenes, y=None):
        scenes = check_scenes(scenes)
        self.model_, self.curve_ = train(
            scenes, self._model_config(), self._train_config(), self._env_config(),
            self.embedder, self.scorer, self.prior or EMPTY_PRIOR)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("PlacementAgent is not fitted yet; call fit or load")

    def solve(self, scene: SceneSpec, mode: str = "greedy", seed: int = 0):
        self._check_fitted()
        return solve_scene(self.model_, scene, self.embedder, self._env_config(),
                           self.prior or EMPTY_PRIOR, mode, seed)

    def predict(self, scenes) -> list[Layout]:
        return [self.solve(s)[0] for s in check_scenes(scenes)]

    def score(self, scenes, y=None) -> float:
        """Negated mean total energy of greedy layouts (higher is better)."""
        return -float(np.mean([self.solve(s)[1].total for s in check_scenes(scenes)]))

    def save(self, path) -> None:
        self._check_fitted()
        with open(path, "wb") as fh:
            fh.write(self.model_.to_bytes())

    def load(self, path) -> "PlacementAgent":
        with open(path, "rb") as fh:
            model = ActorCritic.from_bytes(fh.read())
        cfg = model.config
        self.hidden_dim, self.fusion, self.sff = cfg.hidden_dim, cfg.fusion, cfg.sff
        self.max_cells = cfg.canvas_cols
        self.model_ = model
        return self
