"""Experiment harness: training pipelines, ablations and diagnostics.

Implements the full desk-scale loop: synthesize expert demos, build the
perturbed/truncated/keyframed training set, fit the flow-matching policy
and evaluate rollouts against synthetic operators. Every cell of every
experiment derives all of its randomness from the config seed, so a rerun
with the same config is byte-identical in all output files.

Rollouts execute inferred chunks fully before re-querying (open loop
within a chunk, closed loop across chunks) with a global step cap of 4x
the expert demo length for the same layout.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractViolation, TrainingFault
from .keyframe import extract_keyframes
from .perturb import build_kernel, sample_perturbed, truncate_random
from .policy import (
    AssistPolicy,
    IntentEmbedding,
    PolicyConfig,
    TrainConfig,
    TrainResult,
    build_context,
    encode_intent,
    normalize_chunk,
    train,
)
from .seeding import derive_seed
from .simenv import (
    PROFILES,
    TASKS,
    EpisodeTrace,
    OperatorProfile,
    Task,
    WorldState,
    expert_action,
    expert_rollout,
    is_success,
    observe,
    operator_rollout,
    reset,
    step,
)

SCHEMA_VERSION = "1"

# seed-stream subkeys
_S_TRAIN_LAYOUT, _S_PERTURB, _S_TRUNC, _S_TRAIN, _S_EVAL, _S_FLOW = 31, 32, 33, 34, 35, 36

ROLLOUT_CAP_FACTOR = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment run: grids, training budget, seeds and output paths."""

    task_ids: tuple[str, ...] = ("transfer",)
    sigma_grid: tuple[float, ...] = (0.0, 0.05, 0.4)
    eta_grid: tuple[float, ...] = (0.01, 0.03, 0.09, 0.27, 0.81)
    profiles: tuple[str, ...] = ("novice", "intermediate", "expert")
    rollouts_per_cell: int = 200
    sigma: float = 0.05
    eta: float = 0.04
    min_fraction: float = 0.6
    n_layouts: int = 48
    n_perturb: int = 3
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.02
    momentum: float = 0.0
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.task_ids or not self.sigma_grid or not self.eta_grid or not self.profiles:
            raise ContractViolation("task/sigma/eta/profile grids must be nonempty")
        if self.rollouts_per_cell < 1:
            raise ContractViolation(f"rollouts_per_cell must be >= 1, got {self.rollouts_per_cell}")
        for t in self.task_ids:
            if t not in TASKS:
                raise ContractViolation(f"unknown task {t!r}; available: {sorted(TASKS)}")
        for p in self.profiles:
            if p not in PROFILES:
                raise ContractViolation(f"unknown profile {p!r}; available: {sorted(PROFILES)}")

    @property
    def primary_task(self) -> Task:
        return TASKS[self.task_ids[0]]

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            seed=derive_seed(self.seed, _S_TRAIN),
        )

    @staticmethod
    def from_json(path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        for key in ("task_ids", "sigma_grid", "eta_grid", "profiles"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return ExperimentConfig(**raw)

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2)
            f.write("\n")


@dataclass(frozen=True)
class RolloutRecord:
    """One evaluated episode, in the episode-log schema."""

    task_id: str
    seed: int
    profile: str
    operator_steps: int
    rollout_steps: int
    success: bool
    keyframe_count: int
    sigma: float
    eta: float


def write_episode_log(path: str | Path, records: Iterable[RolloutRecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(asdict(r)))
            f.write("\n")
            n += 1
    return n


@dataclass
class ResultTable:
    """Rows of one experiment plus the episode records behind them."""

    label: str
    rows: list[dict]
    records: list[RolloutRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        for row in self.rows:
            rate = row.get("success_rate")
            if rate is not None and not (0.0 <= rate <= 1.0):
                raise ContractViolation(f"success_rate {rate} outside [0, 1] in row {row}")

    def to_csv(self, path: str | Path) -> None:
        fieldnames = list(self.rows[0].keys()) if self.rows else []
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(self.rows)

    def summary(self) -> str:
        lines = [f"== {self.label} =="]
        for row in self.rows:
            parts = [f"{k}={row[k]}" for k in row]
            lines.append("  " + "  ".join(parts))
        return "\n".join(lines)

    def row_for(self, condition: str) -> dict:
        for row in self.rows:
            if row.get("condition") == condition:
                return row
        raise KeyError(condition)


def default_policy_config(task: Task, horizon: int = 8) -> PolicyConfig:
    """Policy shapes for the shipped 2D environment (grasp is the third dim)."""
    return PolicyConfig(
        action_dim=3,
        horizon=horizon,
        bounds_lo=(task.bounds_lo[0], task.bounds_lo[1], 0.0),
        bounds_hi=(task.bounds_hi[0], task.bounds_hi[1], 1.0),
        task_ids=tuple(sorted(TASKS)),
        action_scale=task.max_step,
    )


#: grasp channel is excluded from Gaussian perturbation by default
PERTURB_MASK = (1.0, 1.0, 0.0)


def perturbed_intent(
    demo, sigma: float, eta: float, min_fraction: float, seed: int, pconfig: PolicyConfig
) -> tuple[IntentEmbedding, int, int]:
    """One pass of the preprocessing pipeline: perturb, truncate, keyframe,
    encode. Returns (intent, keyframe count, truncated length)."""
    kernel = build_kernel(len(demo), demo.dim, sigma, mask=PERTURB_MASK)
    sample = sample_perturbed(
        demo, kernel, seed=derive_seed(seed, 1), bounds=(pconfig.bounds_lo, pconfig.bounds_hi)
    )
    truncated = truncate_random(sample.trajectory, min_fraction, seed=derive_seed(seed, 2))
    ks = extract_keyframes(truncated, eta)
    return encode_intent(ks, truncated, pconfig), len(ks.indices), len(truncated)


def chunk_targets(trace: EpisodeTrace, horizon: int) -> np.ndarray:
    """Per-step action chunks from an episode, zero-padded past the end."""
    T = trace.n_steps
    acts = np.vstack([trace.actions, np.zeros((horizon, 3))])
    return np.stack([acts[t : t + horizon].ravel() for t in range(T)])


def build_training_arrays(
    task: Task,
    sigma: float,
    eta: float,
    min_fraction: float,
    n_layouts: int,
    n_perturb: int,
    seed: int,
    pconfig: PolicyConfig,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Assemble (context, target chunk) pairs for one training cell.

    Intents come from perturbed + truncated copies of each expert demo;
    supervision (observations and action chunks) always comes from the
    clean demo, so the policy learns to act on noisy intent.
    """
    contexts: list[np.ndarray] = []
    chunks: list[np.ndarray] = []
    keyframe_counts: list[int] = []
    for li in range(n_layouts):
        layout_seed = derive_seed(seed, _S_TRAIN_LAYOUT, li)
        trace = expert_rollout(task, layout_seed)
        demo = trace.trajectory
        flat_chunks = chunk_targets(trace, pconfig.horizon)
        norm_chunks = np.stack(
            [
                normalize_chunk(flat_chunks[t].reshape(pconfig.horizon, 3), pconfig)
                for t in range(trace.n_steps)
            ]
        )
        obs_ctx = [observe(trace.states[t], task) for t in range(trace.n_steps)]
        for pi in range(n_perturb):
            intent, n_kf, _ = perturbed_intent(
                demo, sigma, eta, min_fraction, derive_seed(seed, _S_PERTURB, li, pi), pconfig
            )
            keyframe_counts.append(n_kf)
            for t in range(trace.n_steps):
                contexts.append(build_context(obs_ctx[t], intent, pconfig))
                chunks.append(norm_chunks[t])
    info = {
        "n_layouts": n_layouts,
        "n_perturb": n_perturb,
        "n_pairs": len(contexts),
        "train_mean_keyframes": float(np.mean(keyframe_counts)),
    }
    return np.stack(contexts), np.stack(chunks), info


def train_policy(
    config: ExperimentConfig, task: Task, sigma: float, eta: float
) -> tuple[AssistPolicy, TrainResult, dict]:
    """Train one cell's policy; raises TrainingFault on numeric failure."""
    pconfig = default_policy_config(task)
    contexts, chunks, info = build_training_arrays(
        task, sigma, eta, config.min_fraction, config.n_layouts, config.n_perturb, config.seed, pconfig
    )
    result = train(contexts, chunks, config.train_config(), hidden=pconfig.hidden)
    return AssistPolicy(net=result.net, config=pconfig), result, info


@dataclass
class RolloutOutcome:
    record: RolloutRecord
    final_state: WorldState
    goal_target: int | None = None
    states: list[WorldState] | None = None


def rollout_assisted(
    policy: AssistPolicy,
    task: Task,
    profile: OperatorProfile,
    layout_seed: int,
    eta: float,
    sigma: float = 0.0,
    intent_fraction: float = 1.0,
) -> RolloutOutcome:
    """One full assisted episode: operator demo -> keyframes -> intent ->
    chunked policy rollout from the same initial layout.

    ``intent_fraction`` < 1 truncates the operator demo to that prefix
    before keyframing, modelling a concise partial demonstration.
    """
    goal_target = int(layout_seed) % task.n_targets if task.task_id == "mirror" else None
    op = operator_rollout(task, profile, layout_seed, goal_target=goal_target)
    demo = op.trajectory
    if intent_fraction < 1.0:
        demo = demo.prefix(max(2, int(round(intent_fraction * len(demo)))))
    ks = extract_keyframes(demo, eta)
    intent = encode_intent(ks, demo, policy.config)
    return rollout_with_intent(
        policy,
        task,
        layout_seed,
        intent,
        keyframe_count=len(ks.indices),
        operator_steps=op.n_steps,
        profile=profile.label,
        eta=eta,
        sigma=sigma,
        goal_target=goal_target,
    )


def rollout_with_intent(
    policy: AssistPolicy,
    task: Task,
    layout_seed: int,
    intent: IntentEmbedding,
    keyframe_count: int = 0,
    operator_steps: int = 0,
    profile: str = "",
    eta: float = 0.0,
    sigma: float = 0.0,
    goal_target: int | None = None,
    collect_states: bool = False,
) -> RolloutOutcome:
    """Chunked closed-loop rollout from a fresh layout under a fixed intent."""
    expert_trace = expert_rollout(task, layout_seed, goal_target=goal_target)
    cap = ROLLOUT_CAP_FACTOR * expert_trace.n_steps
    state = reset(task, layout_seed)
    states = [state] if collect_states else None
    steps = 0
    chunk_idx = 0
    done = is_success(state, task)
    while not done and steps < cap:
        obs = observe(state, task)
        chunk = policy.act_chunk(obs, intent, seed=derive_seed(layout_seed, _S_FLOW, chunk_idx))
        chunk_idx += 1
        for action in chunk.actions:
            state = step(state, action, task)
            steps += 1
            if states is not None:
                states.append(state)
            if is_success(state, task):
                done = True
                break
            if steps >= cap:
                break
    record = RolloutRecord(
        task_id=task.task_id,
        seed=int(layout_seed),
        profile=profile,
        operator_steps=int(operator_steps),
        rollout_steps=steps,
        success=done,
        keyframe_count=int(keyframe_count),
        sigma=float(sigma),
        eta=float(eta),
    )
    return RolloutOutcome(record=record, final_state=state, goal_target=goal_target, states=states)


def _eval_seeds(config: ExperimentConfig) -> list[int]:
    return [derive_seed(config.seed, _S_EVAL, r) for r in range(config.rollouts_per_cell)]


def _cell_rows(records: list[RolloutRecord]) -> dict:
    return {
        "success_rate": float(np.mean([r.success for r in records])),
        "mean_operator_steps": float(np.mean([r.operator_steps for r in records])),
        "mean_rollout_steps": float(np.mean([r.rollout_steps for r in records])),
        "mean_keyframes": float(np.mean([r.keyframe_count for r in records])),
        "rollouts": len(records),
    }


def run_noise_ablation(config: ExperimentConfig) -> ResultTable:
    """Sweep the perturbation scale sigma, evaluating against novice intents.

    Every cell trains its own policy (same seeds, same training budget)
    on datasets differing only in sigma; a training numeric fault marks
    the cell failed and the sweep continues.
    """
    if 0.0 not in config.sigma_grid:
        raise ContractViolation(f"sigma grid must include 0, got {config.sigma_grid}")
    task = config.primary_task
    novice = PROFILES["novice"]
    seeds = _eval_seeds(config)
    rows: list[dict] = []
    records: list[RolloutRecord] = []
    for sigma in config.sigma_grid:
        row: dict = {"condition": f"sigma={sigma:g}", "sigma": sigma, "eta": config.eta}
        try:
            policy, result, info = train_policy(config, task, sigma=sigma, eta=config.eta)
        except TrainingFault as fault:
            row.update({"failed": f"training fault at epoch {fault.epoch}", "success_rate": None})
            rows.append(row)
            continue
        cell = [
            rollout_assisted(policy, task, novice, s, eta=config.eta, sigma=sigma).record
            for s in seeds
        ]
        records.extend(cell)
        row.update(_cell_rows(cell))
        row.update({"final_train_loss": result.loss_history[-1], "failed": ""})
        rows.append(row)
    return ResultTable(label="noise_ablation", rows=rows, records=records)


def run_budget_ablation(config: ExperimentConfig) -> ResultTable:
    """Sweep the keyframe error budget eta at fixed sigma."""
    lo, hi = min(config.eta_grid), max(config.eta_grid)
    if hi < 10 * lo:
        raise ContractViolation(f"eta grid must span at least one decade, got {config.eta_grid}")
    task = config.primary_task
    novice = PROFILES["novice"]
    seeds = _eval_seeds(config)
    rows: list[dict] = []
    records: list[RolloutRecord] = []
    for eta in config.eta_grid:
        row: dict = {"condition": f"eta={eta:g}", "sigma": config.sigma, "eta": eta}
        try:
            policy, result, info = train_policy(config, task, sigma=config.sigma, eta=eta)
        except TrainingFault as fault:
            row.update({"failed": f"training fault at epoch {fault.epoch}", "success_rate": None})
            rows.append(row)
            continue
        cell = [
            rollout_assisted(policy, task, novice, s, eta=eta, sigma=config.sigma).record
            for s in seeds
        ]
        records.extend(cell)
        row.update(_cell_rows(cell))
        row.update(
            {
                "train_mean_keyframes": info["train_mean_keyframes"],
                "final_train_loss": result.loss_history[-1],
                "failed": "",
            }
        )
        rows.append(row)
    return ResultTable(label="budget_ablation", rows=rows, records=records)


def run_cross_operator(config: ExperimentConfig) -> ResultTable:
    """Raw operator replay vs. the assisted pipeline across proficiency tiers.

    Both methods see the same layout seeds per profile, so comparisons
    are paired. Per-method rows carry the success SD across profiles.
    """
    for required in ("novice", "intermediate", "expert"):
        if required not in config.profiles:
            raise ContractViolation(f"cross-operator run needs profile {required!r}")
    task = config.primary_task
    seeds = _eval_seeds(config)
    policy, _, _ = train_policy(config, task, sigma=config.sigma, eta=config.eta)
    rows: list[dict] = []
    records: list[RolloutRecord] = []
    rates: dict[str, dict[str, float]] = {"raw": {}, "assisted": {}}
    for name in config.profiles:
        profile = PROFILES[name]
        raw_cell: list[RolloutRecord] = []
        assisted_cell: list[RolloutRecord] = []
        for s in seeds:
            goal = int(s) % task.n_targets if task.task_id == "mirror" else None
            op = operator_rollout(task, profile, s, goal_target=goal)
            raw_cell.append(
                RolloutRecord(
                    task_id=task.task_id,
                    seed=int(s),
                    profile=name,
                    operator_steps=op.n_steps,
                    rollout_steps=0,
                    success=op.success,
                    keyframe_count=0,
                    sigma=config.sigma,
                    eta=config.eta,
                )
            )
            assisted_cell.append(
                rollout_assisted(policy, task, profile, s, eta=config.eta, sigma=config.sigma).record
            )
        records.extend(raw_cell)
        records.extend(assisted_cell)
        for method, cell in (("raw", raw_cell), ("assisted", assisted_cell)):
            row = {"condition": f"{method}:{name}", "method": method, "profile": name}
            row.update(_cell_rows(cell))
            row["std_dev"] = None
            rows.append(row)
            rates[method][name] = row["success_rate"]
    for method in ("raw", "assisted"):
        values = [rates[method][p] for p in config.profiles]
        rows.append(
            {
                "condition": f"{method}:all",
                "method": method,
                "profile": "all",
                "success_rate": float(np.mean(values)),
                "mean_operator_steps": None,
                "mean_rollout_steps": None,
                "mean_keyframes": None,
                "rollouts": len(seeds) * len(config.profiles),
                "std_dev": float(np.std(values)),
            }
        )
    return ResultTable(label="cross_operator", rows=rows, records=records)


class ExpertStepPolicy:
    """Scripted expert wrapped in the per-step policy protocol."""

    def __init__(self, task: Task, goal_target: int | None = None):
        self.task = task
        self.goal_target = goal_target

    def begin_episode(self, state0: WorldState, layout_seed: int) -> None:
        pass

    def __call__(self, state: WorldState) -> np.ndarray:
        return expert_action(state, self.task, self.goal_target)


class AssistStepPolicy:
    """Trained policy wrapped in the per-step protocol.

    The intent is rebuilt at episode start from the layout's own expert
    demo (in-distribution conditioning); actions come from the current
    inferred chunk, re-queried every ``horizon`` steps.
    """

    def __init__(self, policy: AssistPolicy, task: Task, eta: float):
        self.policy = policy
        self.task = task
        self.eta = eta
        self._intent: IntentEmbedding | None = None
        self._buffer: list[np.ndarray] = []
        self._seed = 0
        self._chunk_idx = 0

    def begin_episode(self, state0: WorldState, layout_seed: int) -> None:
        demo = expert_rollout(self.task, layout_seed).trajectory
        ks = extract_keyframes(demo, self.eta)
        self._intent = encode_intent(ks, demo, self.policy.config)
        self._buffer = []
        self._seed = layout_seed
        self._chunk_idx = 0

    def __call__(self, state: WorldState) -> np.ndarray:
        if self._intent is None:
            raise ContractViolation("begin_episode must run before querying actions")
        if not self._buffer:
            obs = observe(state, self.task)
            chunk = self.policy.act_chunk(
                obs, self._intent, seed=derive_seed(self._seed, _S_FLOW, self._chunk_idx)
            )
            self._chunk_idx += 1
            self._buffer = list(chunk.actions)
        return self._buffer.pop(0)


def _clip_action(action: np.ndarray, task: Task) -> np.ndarray:
    a = np.asarray(action, dtype=float).copy()
    norm = float(np.linalg.norm(a[:2]))
    if norm > task.max_step:
        a[:2] *= task.max_step / norm
    a[2] = 1.0 if a[2] >= 0.5 else 0.0
    return a


def estimate_loss_decomposition(
    policy, expert, task: Task, n: int, seeds: Sequence[int]
) -> dict:
    """Empirical split of the imitation gap into supervised loss and shift.

    ``supervised`` is the mean squared discrepancy between policy and
    expert actions along expert rollouts; ``shift`` is the same mean
    along the policy's own rollouts minus ``supervised``. Actions are
    compared after clipping to the environment's effective command
    (displacement capped at max_step, grasp thresholded), so magnitudes
    are commensurate. Policy rollouts exceeding the step cap are
    truncated and counted in ``truncated``.
    """
    if n < 1:
        raise ContractViolation(f"n must be >= 1, got {n}")
    if len(seeds) < n:
        raise ContractViolation(f"need {n} seeds, got {len(seeds)}")
    sup_terms: list[float] = []
    pol_terms: list[float] = []
    truncated = 0
    for i in range(n):
        layout_seed = int(seeds[i])
        state = reset(task, layout_seed)
        policy.begin_episode(state, layout_seed)
        expert.begin_episode(state, layout_seed)
        cap = ROLLOUT_CAP_FACTOR * expert_rollout(task, layout_seed).n_steps
        # expert-induced states
        while not is_success(state, task) and state.step_count < cap:
            a_exp = _clip_action(expert(state), task)
            a_pol = _clip_action(policy(state), task)
            sup_terms.append(float(np.sum((a_pol - a_exp) ** 2)))
            state = step(state, a_exp, task)
        # policy-induced states
        state = reset(task, layout_seed)
        policy.begin_episode(state, layout_seed)
        expert.begin_episode(state, layout_seed)
        while not is_success(state, task) and state.step_count < cap:
            a_pol = _clip_action(policy(state), task)
            a_exp = _clip_action(expert(state), task)
            pol_terms.append(float(np.sum((a_pol - a_exp) ** 2)))
            state = step(state, a_pol, task)
        if not is_success(state, task):
            truncated += 1
    supervised = float(np.mean(sup_terms))
    shift = float(np.mean(pol_terms)) - supervised
    return {"supervised": supervised, "shift": shift, "truncated": truncated}
