"""Intent-conditioned action generation via conditional flow matching.

The conditioning context concatenates a task one-hot, proprioception, a
low-dimensional scene encoding and a fixed-slot intent embedding built
from extracted keyframes. A small feed-forward network regresses the
velocity field v(a_tau, tau) = a - eps along the linear interpolation
a_tau = (1 - tau) * eps + tau * a, and inference integrates that field
with Euler steps from a fresh Gaussian draw.

Everything is deterministic given explicit seeds: dataset shuffling,
per-step noise draws and inference noise all derive from the caller's
seed through ``seeding.derive_seed``. A trained network is immutable at
inference time and may be shared across rollout workers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatch, ContractViolation, NumericFault, TrainingFault
from .keyframe import KeyframeSet
from .net import VectorFieldNet
from .seeding import derive_seed, rng_from
from .trajectory import Trajectory

CHECKPOINT_FORMAT_VERSION = 1

# subkey tags for deriving independent seed streams
_S_INIT, _S_SHUFFLE, _S_NOISE = 11, 12, 13


@dataclass(frozen=True)
class PolicyConfig:
    """Shapes, workspace bounds and normalization for one trained policy.

    Actions are ``[dx, dy, grasp]`` rows: displacements are divided by
    ``action_scale`` (the environment's max step) and the grasp command is
    mapped from [0, 1] to [-1, 1], so the network sees O(1) targets.
    """

    action_dim: int = 3
    horizon: int = 8
    n_slots: int = 16
    bounds_lo: tuple[float, ...] = (0.0, 0.0, 0.0)
    bounds_hi: tuple[float, ...] = (1.0, 1.0, 1.0)
    task_ids: tuple[str, ...] = ("transfer", "organize2", "mirror")
    n_object_slots: int = 2
    n_target_slots: int = 2
    hidden: tuple[int, ...] = (128, 128, 128)
    action_scale: float = 0.02
    grasp_scale: float = 2.0
    n_flow_steps: int = 10

    def __post_init__(self) -> None:
        if self.action_dim < 2 or self.horizon < 1 or self.n_slots < 2:
            raise ContractViolation("action_dim >= 2, horizon >= 1, n_slots >= 2 required")
        lo, hi = np.asarray(self.bounds_lo), np.asarray(self.bounds_hi)
        if lo.shape != (self.action_dim,) or hi.shape != (self.action_dim,):
            raise ContractViolation(
                f"bounds must have length action_dim={self.action_dim}: {self.bounds_lo}, {self.bounds_hi}"
            )
        if np.any(hi <= lo):
            raise ContractViolation("bounds_hi must exceed bounds_lo in every dimension")
        if self.action_scale <= 0 or self.n_flow_steps < 1:
            raise ContractViolation("action_scale must be positive, n_flow_steps >= 1")

    @property
    def intent_dim(self) -> int:
        return self.n_slots * (self.action_dim + 1)

    @property
    def proprio_dim(self) -> int:
        return 3  # x, y, grasp flag

    @property
    def scene_dim(self) -> int:
        return 4 * self.n_object_slots + 3 * self.n_target_slots

    @property
    def context_dim(self) -> int:
        return len(self.task_ids) + self.proprio_dim + self.scene_dim + self.intent_dim

    @property
    def chunk_dim(self) -> int:
        return self.horizon * self.action_dim

    @property
    def input_dim(self) -> int:
        return 1 + self.chunk_dim + self.context_dim


@dataclass(frozen=True)
class IntentEmbedding:
    """Fixed-width keyframe encoding: per slot d coords plus a validity flag."""

    vector: np.ndarray
    n_keyframes: int

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=float)
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise ContractViolation("intent vector must be a finite 1-d array")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class Observation:
    """What the policy sees at one control step, in workspace units.

    ``scene`` packs per-object slots [x, y, held, valid] then per-target
    slots [x, y, valid]; unused slots are zero with valid = 0.
    """

    proprio: np.ndarray
    scene: np.ndarray
    task_id: str

    def __post_init__(self) -> None:
        p = np.asarray(self.proprio, dtype=float)
        s = np.asarray(self.scene, dtype=float)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(s))):
            raise ContractViolation("observation vectors must be finite")
        object.__setattr__(self, "proprio", p)
        object.__setattr__(self, "scene", s)


@dataclass(frozen=True)
class ActionChunk:
    """H consecutive [dx, dy, grasp] action rows in workspace units."""

    actions: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.actions, dtype=float)
        if a.ndim != 2 or not np.all(np.isfinite(a)):
            raise ContractViolation(f"actions must be a finite (H, d) array, got shape {a.shape}")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]


def subsample_indices(n: int, k: int) -> list[int]:
    """Uniform index subsample keeping both endpoints: round(i*(n-1)/(k-1))."""
    if n <= k:
        return list(range(n))
    return [round(i * (n - 1) / (k - 1)) for i in range(k)]


def encode_intent(keyframes: KeyframeSet, source: Trajectory, config: PolicyConfig) -> IntentEmbedding:
    """Pack keyframe points into fixed slots, normalized to [-1, 1].

    More keyframes than slots are uniformly subsampled, always keeping
    the first and last. Unused slots stay zero with validity flag 0.
    """
    if source.dim != config.action_dim:
        raise ContractViolation(
            f"trajectory dim {source.dim} does not match configured dim {config.action_dim}"
        )
    idx = [keyframes.indices[i] for i in subsample_indices(len(keyframes.indices), config.n_slots)]
    pts = source.points[idx]
    lo = np.asarray(config.bounds_lo)
    hi = np.asarray(config.bounds_hi)
    normalized = 2.0 * (pts - lo) / (hi - lo) - 1.0
    d = config.action_dim
    vec = np.zeros(config.intent_dim)
    for slot, row in enumerate(normalized):
        base = slot * (d + 1)
        vec[base : base + d] = row
        vec[base + d] = 1.0
    return IntentEmbedding(vector=vec, n_keyframes=len(idx))


def build_context(obs: Observation, intent: IntentEmbedding, config: PolicyConfig) -> np.ndarray:
    """Concatenate [task one-hot, proprio, scene, intent], normalizing positions."""
    if obs.task_id not in config.task_ids:
        raise ContractViolation(f"unknown task {obs.task_id!r}, trained on {config.task_ids}")
    if obs.proprio.shape != (config.proprio_dim,):
        raise ContractViolation(f"proprio shape {obs.proprio.shape} != ({config.proprio_dim},)")
    if obs.scene.shape != (config.scene_dim,):
        raise ContractViolation(f"scene shape {obs.scene.shape} != ({config.scene_dim},)")
    if intent.vector.shape != (config.intent_dim,):
        raise ContractViolation(f"intent width {intent.vector.shape} != ({config.intent_dim},)")
    lo = np.asarray(config.bounds_lo[:2])
    hi = np.asarray(config.bounds_hi[:2])

    def npos(xy: np.ndarray) -> np.ndarray:
        return 2.0 * (xy - lo) / (hi - lo) - 1.0

    onehot = np.zeros(len(config.task_ids))
    onehot[config.task_ids.index(obs.task_id)] = 1.0
    proprio = np.concatenate([npos(obs.proprio[:2]), obs.proprio[2:]])
    scene = obs.scene.copy()
    for i in range(config.n_object_slots):
        base = 4 * i
        if scene[base + 3] > 0:
            scene[base : base + 2] = npos(scene[base : base + 2])
    off = 4 * config.n_object_slots
    for i in range(config.n_target_slots):
        base = off + 3 * i
        if scene[base + 2] > 0:
            scene[base : base + 2] = npos(scene[base : base + 2])
    return np.concatenate([onehot, proprio, scene, intent.vector])


def normalize_chunk(actions: np.ndarray, config: PolicyConfig) -> np.ndarray:
    """Flatten an (H, d) action block into the network's O(1) target space.

    The grasp channel maps {0, 1} to {-grasp_scale, +grasp_scale}; a wider
    scale buys headroom against flow noise around the 0.5 pick threshold.
    """
    a = np.asarray(actions, dtype=float)
    if a.shape != (config.horizon, config.action_dim):
        raise ContractViolation(f"chunk shape {a.shape} != ({config.horizon}, {config.action_dim})")
    out = a.copy()
    out[:, :-1] /= config.action_scale
    out[:, -1] = (2.0 * out[:, -1] - 1.0) * config.grasp_scale
    return out.ravel()


def denormalize_chunk(flat: np.ndarray, config: PolicyConfig) -> ActionChunk:
    a = np.asarray(flat, dtype=float).reshape(config.horizon, config.action_dim).copy()
    a[:, :-1] *= config.action_scale
    a[:, -1] = np.clip((a[:, -1] / config.grasp_scale + 1.0) / 2.0, 0.0, 1.0)
    return ActionChunk(actions=a)


def interpolate_action(target, eps, tau: float) -> np.ndarray:
    """Linear bridge (1 - tau) * eps + tau * target between noise and action."""
    if not np.isfinite(tau) or not 0.0 <= tau <= 1.0:
        raise ContractViolation(f"tau must lie in [0, 1], got {tau}")
    t = np.asarray(getattr(target, "actions", target), dtype=float)
    e = np.asarray(getattr(eps, "actions", eps), dtype=float)
    if t.shape != e.shape:
        raise ContractViolation(f"shape mismatch: target {t.shape}, eps {e.shape}")
    return (1.0 - tau) * e + tau * t


def draw_flow_noise(seed: int, batch_size: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """The (eps, tau) draws used by one CFM loss evaluation: eps ~ N(0, I)
    per element, tau ~ Uniform[0, 1] per element, in that stream order."""
    rng = rng_from(seed)
    eps = rng.standard_normal((batch_size, dim))
    tau = rng.uniform(0.0, 1.0, batch_size)
    return eps, tau


def cfm_loss_and_grad(
    net: VectorFieldNet, contexts: np.ndarray, target_chunks: np.ndarray, seed: int
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Flow-matching regression loss and its exact parameter gradient.

    Per batch element draws one (eps, tau), forms the interpolated chunk
    and regresses the network output onto the velocity target a - eps.
    The loss is the batch mean of the squared error norm, so duplicating
    batch elements changes nothing.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    targets = np.atleast_2d(np.asarray(target_chunks, dtype=float))
    if len(contexts) == 0:
        raise ContractViolation("batch must be nonempty")
    if len(contexts) != len(targets):
        raise ContractViolation(f"batch mismatch: {len(contexts)} contexts, {len(targets)} chunks")
    eps, tau = draw_flow_noise(seed, len(targets), targets.shape[1])
    a_tau = (1.0 - tau)[:, None] * eps + tau[:, None] * targets
    x = np.concatenate([tau[:, None], a_tau, contexts], axis=1)
    return net.mse_loss_and_grad(x, targets - eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not 0.0 <= self.momentum < 1.0:
            raise ContractViolation("learning_rate >= 0 and momentum in [0, 1) required")


@dataclass
class TrainResult:
    net: VectorFieldNet
    loss_history: list[float]


def train(
    contexts: np.ndarray,
    target_chunks: np.ndarray,
    config: TrainConfig,
    hidden: tuple[int, ...] = (128, 128, 128),
) -> TrainResult:
    """Plain SGD over the CFM objective; fully deterministic given the seed.

    Shuffling, per-step noise and initialization all derive from
    ``config.seed``. A numeric fault aborts with TrainingFault carrying
    the last parameters that finished an epoch.
    """
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    targets = np.atleast_2d(np.asarray(target_chunks, dtype=float))
    n = len(contexts)
    if n == 0:
        raise ContractViolation("training set must be nonempty")
    if len(targets) != n:
        raise ContractViolation(f"got {n} contexts but {len(targets)} chunks")
    net = VectorFieldNet(
        input_dim=1 + targets.shape[1] + contexts.shape[1],
        output_dim=targets.shape[1],
        hidden=hidden,
        seed=derive_seed(config.seed, _S_INIT),
    )
    velocity = None
    history: list[float] = []
    last_good = net.get_flat_params()
    for epoch in range(config.epochs):
        perm = rng_from(config.seed, _S_SHUFFLE, epoch).permutation(n)
        losses = []
        try:
            for step, start in enumerate(range(0, n, config.batch_size)):
                idx = perm[start : start + config.batch_size]
                loss, grads = cfm_loss_and_grad(
                    net, contexts[idx], targets[idx], seed=derive_seed(config.seed, _S_NOISE, epoch, step)
                )
                velocity = net.sgd_step(grads, config.learning_rate, config.momentum, velocity)
                losses.append(loss)
        except NumericFault as fault:
            raise TrainingFault(
                f"numeric fault during epoch {epoch}: {fault}",
                last_good={"flat_params": last_good, "epochs_completed": epoch},
                epoch=epoch,
            ) from fault
        history.append(float(np.mean(losses)))
        last_good = net.get_flat_params()
    return TrainResult(net=net, loss_history=history)


def infer_chunk(net: VectorFieldNet, context: np.ndarray, n_steps: int, seed: int) -> np.ndarray:
    """Euler-integrate the learned field from a^0 = eps ~ N(0, I) to a^1.

    Returns the integrated chunk in the network's normalized action space;
    callers map it back to workspace units with ``denormalize_chunk``.
    """
    if n_steps < 1:
        raise ContractViolation(f"n_steps must be >= 1, got {n_steps}")
    context = np.asarray(context, dtype=float)
    a = rng_from(seed).standard_normal(net.output_dim)
    dt = 1.0 / n_steps
    for k in range(n_steps):
        x = np.concatenate([[k * dt], a, context])
        a = a + dt * net.forward(x)
        if not np.all(np.isfinite(a)):
            raise NumericFault(f"non-finite flow state at step {k + 1}/{n_steps}")
    return a


@dataclass
class AssistPolicy:
    """A trained vector-field network plus everything needed to query it."""

    net: VectorFieldNet
    config: PolicyConfig

    def act_chunk(self, obs: Observation, intent: IntentEmbedding, seed: int) -> ActionChunk:
        ctx = build_context(obs, intent, self.config)
        flat = infer_chunk(self.net, ctx, self.config.n_flow_steps, seed)
        return denormalize_chunk(flat, self.config)


def save_checkpoint(
    path: str | Path, policy: AssistPolicy, train_config: TrainConfig | None = None
) -> None:
    """Versioned JSON checkpoint: shapes, parameters, bounds and config."""
    net = policy.net
    params: dict[str, list] = {}
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        params[f"W{layer}"] = w.tolist()
        params[f"b{layer}"] = b.tolist()
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "policy_config": asdict(policy.config),
        "train_config": asdict(train_config) if train_config is not None else None,
        "layer_shapes": [list(s) for s in net.layer_shapes],
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
        f.write("\n")


def load_checkpoint(path: str | Path) -> tuple[AssistPolicy, TrainConfig | None]:
    """Load a checkpoint, rejecting shape mismatches with an explicit diff."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointMismatch(
            f"unsupported checkpoint version {version}",
            [f"expected format_version {CHECKPOINT_FORMAT_VERSION}, found {version}"],
        )
    cfg_dict = dict(payload["policy_config"])
    for key in ("bounds_lo", "bounds_hi", "task_ids", "hidden"):
        cfg_dict[key] = tuple(cfg_dict[key])
    config = PolicyConfig(**cfg_dict)
    net = VectorFieldNet(
        input_dim=config.input_dim,
        output_dim=config.chunk_dim,
        hidden=config.hidden,
        seed=0,
    )
    expected = [tuple(s) for s in net.layer_shapes]
    stored = [tuple(s) for s in payload["layer_shapes"]]
    if expected != stored:
        diff = [
            f"layer {i}: expected {e}, checkpoint has {s}"
            for i, (e, s) in enumerate(zip(expected, stored))
            if e != s
        ]
        if len(expected) != len(stored):
            diff.append(f"layer count: expected {len(expected)}, checkpoint has {len(stored)}")
        raise CheckpointMismatch("checkpoint shapes do not match declared architecture", diff)
    for layer in range(len(net.weights)):
        w = np.asarray(payload["params"][f"W{layer}"], dtype=float)
        b = np.asarray(payload["params"][f"b{layer}"], dtype=float)
        if w.shape != net.weights[layer].shape or b.shape != net.biases[layer].shape:
            raise CheckpointMismatch(
                "parameter array shape mismatch",
                [
                    f"W{layer}: expected {net.weights[layer].shape}, found {w.shape}",
                    f"b{layer}: expected {net.biases[layer].shape}, found {b.shape}",
                ],
            )
        net.weights[layer] = w
        net.biases[layer] = b
    train_config = None
    if payload.get("train_config") is not None:
        train_config = TrainConfig(**payload["train_config"])
    return AssistPolicy(net=net, config=config), train_config
