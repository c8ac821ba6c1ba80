"""Deterministic 2D pick-and-place environment with synthetic operators.

A point agent moves inside an axis-aligned box, grasps the nearest object
within reach and releases it at target regions. Dynamics are a pure
transition function on immutable states: (task, seed, action sequence)
fully determines every state, and parallel rollouts just use independent
seeds.

Demonstrations come from two controllers. The scripted expert is a
memoryless waypoint follower that provably completes every task; it
stands in for the supervising policy. Synthetic operators replay the
expert's waypoint plan corrupted by per-waypoint Gaussian bias, per-step
tremor and overshoot past waypoints, producing proficiency tiers whose
raw success rates are ordered expert >= intermediate >= novice.

Demo trajectories record (x, y, grasp command) per point, where point t
carries the grasp command of the step that produced it; replaying the
derived actions through ``step`` reproduces the demo exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations
from typing import Sequence

import numpy as np

from .errors import ContractViolation, ControllerFailure, LayoutError
from .policy import Observation
from .seeding import rng_from
from .trajectory import Trajectory

#: control period in seconds used for demo timestamps
DT = 0.05

# seed-stream subkeys
_S_LAYOUT, _S_OPERATOR = 21, 22


@dataclass(frozen=True)
class Task:
    """Task identity plus the environment geometry it is played in."""

    task_id: str
    n_objects: int
    n_targets: int
    bounds_lo: tuple[float, float] = (0.0, 0.0)
    bounds_hi: tuple[float, float] = (1.0, 1.0)
    max_step: float = 0.02
    grasp_radius: float = 0.06
    target_radius: float = 0.05
    margin: float = 0.12
    min_separation: float = 0.22

    def __post_init__(self) -> None:
        if self.n_objects < 1 or self.n_targets < self.n_objects:
            raise ContractViolation(
                f"need n_targets >= n_objects >= 1, got {self.n_objects}/{self.n_targets}"
            )
        if self.max_step <= 0 or self.grasp_radius <= 0 or self.target_radius <= 0:
            raise ContractViolation("max_step, grasp_radius and target_radius must be positive")

    @property
    def pick_tol(self) -> float:
        return 0.5 * self.grasp_radius

    @property
    def place_tol(self) -> float:
        return 0.5 * self.target_radius


TASKS: dict[str, Task] = {
    "transfer": Task("transfer", n_objects=1, n_targets=1),
    "organize2": Task("organize2", n_objects=2, n_targets=2),
    "mirror": Task("mirror", n_objects=1, n_targets=2),
}


@dataclass(frozen=True)
class OperatorProfile:
    """Synthetic operator noise tier; expert has the smallest parameters."""

    label: str
    tremor_sigma: float
    waypoint_bias_sigma: float
    overshoot_gain: float

    def __post_init__(self) -> None:
        if self.tremor_sigma < 0 or self.waypoint_bias_sigma < 0 or self.overshoot_gain < 1.0:
            raise ContractViolation(
                "tremor/bias must be >= 0 and overshoot_gain >= 1: "
                f"{self.tremor_sigma}, {self.waypoint_bias_sigma}, {self.overshoot_gain}"
            )


PROFILES: dict[str, OperatorProfile] = {
    "novice": OperatorProfile("novice", tremor_sigma=0.012, waypoint_bias_sigma=0.055, overshoot_gain=1.5),
    "intermediate": OperatorProfile("intermediate", tremor_sigma=0.006, waypoint_bias_sigma=0.032, overshoot_gain=1.25),
    "expert": OperatorProfile("expert", tremor_sigma=0.002, waypoint_bias_sigma=0.010, overshoot_gain=1.05),
}


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of the scene; ``step`` returns fresh values."""

    agent: np.ndarray  # (2,)
    grasp: bool
    objects: np.ndarray  # (n_objects, 2)
    held: tuple[bool, ...]
    targets: np.ndarray  # (n_targets, 2)
    target_radius: float
    bounds_lo: tuple[float, float]
    bounds_hi: tuple[float, float]
    step_count: int = 0

    def __post_init__(self) -> None:
        agent = np.asarray(self.agent, dtype=float)
        objects = np.atleast_2d(np.asarray(self.objects, dtype=float))
        targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        lo, hi = np.asarray(self.bounds_lo), np.asarray(self.bounds_hi)
        if sum(self.held) > 1:
            raise ContractViolation(f"at most one object may be held, got {self.held}")
        if self.step_count < 0:
            raise ContractViolation(f"step_count must be >= 0, got {self.step_count}")
        for name, arr in (("agent", agent[None]), ("objects", objects), ("targets", targets)):
            if np.any(arr < lo - 1e-12) or np.any(arr > hi + 1e-12):
                raise ContractViolation(f"{name} positions outside bounds {lo}..{hi}")
        for arr in (agent, objects, targets):
            arr.setflags(write=False)
        object.__setattr__(self, "agent", agent)
        object.__setattr__(self, "objects", objects)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "held", tuple(bool(h) for h in self.held))

    @property
    def held_index(self) -> int | None:
        for i, h in enumerate(self.held):
            if h:
                return i
        return None


def reset(task: Task, seed: int) -> WorldState:
    """Deterministic random layout with pairwise separation enforced."""
    rng = rng_from(seed, _S_LAYOUT)
    lo = np.asarray(task.bounds_lo) + task.margin
    hi = np.asarray(task.bounds_hi) - task.margin
    n_points = 1 + task.n_objects + task.n_targets
    for _ in range(1000):
        pts = rng.uniform(lo, hi, size=(n_points, 2))
        diffs = pts[:, None, :] - pts[None, :, :]
        dists = np.sqrt((diffs**2).sum(-1)) + np.eye(n_points) * 1e9
        if dists.min() >= task.min_separation:
            return WorldState(
                agent=pts[0],
                grasp=False,
                objects=pts[1 : 1 + task.n_objects],
                held=(False,) * task.n_objects,
                targets=pts[1 + task.n_objects :],
                target_radius=task.target_radius,
                bounds_lo=task.bounds_lo,
                bounds_hi=task.bounds_hi,
            )
    raise LayoutError(
        f"could not place {n_points} entities with separation {task.min_separation} (seed {seed})"
    )


def step(state: WorldState, action: Sequence[float], task: Task) -> WorldState:
    """Apply one [dx, dy, grasp] action; invalid magnitudes clip, never raise.

    Displacement is clipped to ``task.max_step`` by norm and the agent to
    the bounds; a held object tracks the agent exactly. A grasp command
    >= 0.5 picks the nearest object within ``task.grasp_radius`` when the
    hand is empty, < 0.5 releases.
    """
    a = np.asarray(action, dtype=float).ravel()
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ContractViolation(f"action must be 3 finite values [dx, dy, grasp], got {a}")
    disp = a[:2]
    norm = float(np.linalg.norm(disp))
    if norm > task.max_step:
        disp = disp * (task.max_step / norm)
    agent = np.clip(state.agent + disp, state.bounds_lo, state.bounds_hi)
    objects = np.array(state.objects)
    held = list(state.held)
    if state.held_index is not None:
        objects[state.held_index] = agent
    if a[2] >= 0.5:
        if state.held_index is None:
            dists = np.linalg.norm(objects - agent, axis=1)
            nearest = int(np.argmin(dists))
            if dists[nearest] <= task.grasp_radius:
                held[nearest] = True
                objects[nearest] = agent
    else:
        held = [False] * len(held)
    return WorldState(
        agent=agent,
        grasp=any(held),
        objects=objects,
        held=tuple(held),
        targets=state.targets,
        target_radius=state.target_radius,
        bounds_lo=state.bounds_lo,
        bounds_hi=state.bounds_hi,
        step_count=state.step_count + 1,
    )


def is_success(state: WorldState, task: Task) -> bool:
    """True iff every object is released inside a target, one per target."""
    if any(state.held):
        return False
    n = len(state.objects)
    for perm in permutations(range(len(state.targets)), n):
        ok = all(
            np.linalg.norm(state.objects[i] - state.targets[perm[i]]) <= state.target_radius
            for i in range(n)
        )
        if ok:
            return True
    return False


def observe(state: WorldState, task: Task, n_object_slots: int = 2, n_target_slots: int = 2) -> Observation:
    """Slot-packed observation in workspace units (see policy.Observation)."""
    proprio = np.array([state.agent[0], state.agent[1], 1.0 if state.grasp else 0.0])
    scene = np.zeros(4 * n_object_slots + 3 * n_target_slots)
    for i in range(min(len(state.objects), n_object_slots)):
        scene[4 * i : 4 * i + 2] = state.objects[i]
        scene[4 * i + 2] = 1.0 if state.held[i] else 0.0
        scene[4 * i + 3] = 1.0
    off = 4 * n_object_slots
    for i in range(min(len(state.targets), n_target_slots)):
        scene[off + 3 * i : off + 3 * i + 2] = state.targets[i]
        scene[off + 3 * i + 2] = 1.0
    return Observation(proprio=proprio, scene=scene, task_id=task.task_id)


def _placed_objects(state: WorldState) -> list[bool]:
    out = []
    for i in range(len(state.objects)):
        near = np.linalg.norm(state.targets - state.objects[i], axis=1) <= state.target_radius
        out.append(not state.held[i] and bool(near.any()))
    return out


def _occupied_targets(state: WorldState) -> list[bool]:
    occ = [False] * len(state.targets)
    for i in range(len(state.objects)):
        if state.held[i]:
            continue
        dists = np.linalg.norm(state.targets - state.objects[i], axis=1)
        j = int(np.argmin(dists))
        if dists[j] <= state.target_radius:
            occ[j] = True
    return occ


def _target_for_held(state: WorldState, held: int, goal_target: int | None) -> int:
    """Deterministic target choice for the carried object.

    Other unplaced objects (at rest) greedily claim their nearest free
    target in index order; the carried object takes the lowest-index
    remainder. The choice never depends on the agent's position, so it
    cannot flip mid-carry.
    """
    if goal_target is not None:
        return goal_target
    free = [j for j, occ in enumerate(_occupied_targets(state)) if not occ]
    placed = _placed_objects(state)
    claimed: set[int] = set()
    for i in range(len(state.objects)):
        if i == held or placed[i]:
            continue
        options = [j for j in free if j not in claimed]
        dists = [np.linalg.norm(state.targets[j] - state.objects[i]) for j in options]
        claimed.add(options[int(np.argmin(dists))])
    remainder = [j for j in free if j not in claimed]
    return remainder[0]


def expert_action(state: WorldState, task: Task, goal_target: int | None = None) -> np.ndarray:
    """Memoryless waypoint controller standing in for the supervising policy.

    Approaches the lowest-index unplaced object, grasps within pick
    tolerance, carries to its assigned target and releases. Returns the
    null action once the task is solved.
    """
    held = state.held_index
    if held is None:
        placed = _placed_objects(state)
        todo = [i for i, p in enumerate(placed) if not p]
        if not todo:
            return np.zeros(3)
        obj = state.objects[todo[0]]
        if np.linalg.norm(obj - state.agent) > task.pick_tol:
            return np.array([obj[0] - state.agent[0], obj[1] - state.agent[1], 0.0])
        return np.array([0.0, 0.0, 1.0])
    target = state.targets[_target_for_held(state, held, goal_target)]
    if np.linalg.norm(target - state.agent) > task.place_tol:
        return np.array([target[0] - state.agent[0], target[1] - state.agent[1], 1.0])
    return np.array([0.0, 0.0, 0.0])


@dataclass
class EpisodeTrace:
    """One executed episode: states, the actions that produced them, and
    the demo trajectory (positions + grasp command channel)."""

    states: list[WorldState]
    actions: np.ndarray  # (T, 3)
    trajectory: Trajectory
    success: bool

    @property
    def n_steps(self) -> int:
        return len(self.actions)


def _record_episode(states: list[WorldState], actions: list[np.ndarray], task: Task, seed: int, label: str) -> EpisodeTrace:
    points = np.zeros((len(states), 3))
    for t, s in enumerate(states):
        points[t, :2] = s.agent
        points[t, 2] = actions[t - 1][2] if t > 0 else 0.0
    traj = Trajectory(
        points=points,
        timestamps=DT * np.arange(len(states)),
        task_id=task.task_id,
        meta={"layout_seed": str(int(seed)), "controller": label},
    )
    # effective actions: realized displacement (post clipping) + grasp command
    effective = np.zeros((len(actions), 3))
    effective[:, :2] = points[1:, :2] - points[:-1, :2]
    effective[:, 2] = [a[2] for a in actions]
    return EpisodeTrace(
        states=states,
        actions=effective,
        trajectory=traj,
        success=is_success(states[-1], task),
    )


def _step_budget(state: WorldState, task: Task) -> int:
    span = np.linalg.norm(np.asarray(task.bounds_hi) - np.asarray(task.bounds_lo))
    legs = 2 * task.n_objects + 1
    return int(legs * span / task.max_step) + 20 * legs + 100


def expert_rollout(task: Task, seed: int, goal_target: int | None = None) -> EpisodeTrace:
    """Run the scripted expert from a fresh layout; always succeeds."""
    if task.task_id == "mirror" and goal_target is None:
        goal_target = int(seed) % task.n_targets
    state = reset(task, seed)
    states = [state]
    actions: list[np.ndarray] = []
    budget = _step_budget(state, task)
    while not is_success(state, task):
        if len(actions) >= budget:
            raise ControllerFailure(
                f"expert exceeded {budget} steps on {task.task_id} seed {seed}"
            )
        a = expert_action(state, task, goal_target)
        state = step(state, a, task)
        states.append(state)
        actions.append(a)
    return _record_episode(states, actions, task, seed, "expert")


def expert_demo(task: Task, seed: int) -> Trajectory:
    return expert_rollout(task, seed).trajectory


def _expert_waypoints(task: Task, seed: int, goal_target: int | None) -> list[tuple[np.ndarray, float, float]]:
    """Semantic waypoints (position, grasp command after arrival, arrival
    tolerance) for the layout, using exactly the expert controller's
    object/target choices and stop distances."""
    state = reset(task, seed)
    waypoints: list[tuple[np.ndarray, float, float]] = []
    order = list(range(len(state.objects)))
    sim = state
    for _ in order:
        placed = _placed_objects(sim)
        todo = [i for i, p in enumerate(placed) if not p]
        i = todo[0]
        waypoints.append((np.array(sim.objects[i]), 1.0, task.pick_tol))
        # teleport-pick to evaluate the carry assignment from the right scene
        objects = np.array(sim.objects)
        held = [False] * len(objects)
        held[i] = True
        objects[i] = sim.agent
        sim = replace(sim, objects=objects, held=tuple(held), grasp=True)
        j = _target_for_held(sim, i, goal_target if task.task_id == "mirror" else None)
        waypoints.append((np.array(sim.targets[j]), 0.0, task.place_tol))
        objects = np.array(sim.objects)
        objects[i] = sim.targets[j]
        sim = replace(sim, objects=objects, held=(False,) * len(objects), grasp=False)
    return waypoints


def operator_rollout(task: Task, profile: OperatorProfile, seed: int, goal_target: int | None = None) -> EpisodeTrace:
    """Replay the expert's waypoint plan with operator noise.

    Waypoints are shifted by Gaussian bias, approached past an overshoot
    point, and every step carries tremor noise; grasp commands fire at
    the (possibly displaced) waypoints whether or not an object is there.
    May or may not reach success. Bias directions are drawn before
    tremor, so profiles share them for a given seed.
    """
    if task.task_id == "mirror" and goal_target is None:
        goal_target = int(seed) % task.n_targets
    rng = rng_from(seed, _S_OPERATOR)
    plan = _expert_waypoints(task, seed, goal_target)
    bias = rng.standard_normal((len(plan), 2)) * profile.waypoint_bias_sigma
    lo = np.asarray(task.bounds_lo)
    hi = np.asarray(task.bounds_hi)

    state = reset(task, seed)
    states = [state]
    actions: list[np.ndarray] = []
    budget = 3 * _step_budget(state, task)
    grasp_cmd = 0.0
    prev_anchor = np.array(state.agent)
    for w, (wp, cmd_after, arrive_tol) in enumerate(plan):
        target = np.clip(wp + bias[w], lo, hi)
        subgoals = []
        if profile.overshoot_gain > 1.0:
            shoot = prev_anchor + profile.overshoot_gain * (target - prev_anchor)
            shoot = np.clip(shoot, lo, hi)
            if np.linalg.norm(shoot - target) > arrive_tol:
                subgoals.append((shoot, task.pick_tol))
        subgoals.append((target, arrive_tol))
        for sub, tol in subgoals:
            while np.linalg.norm(sub - state.agent) > tol:
                if len(actions) >= budget:
                    return _record_episode(states, actions, task, seed, profile.label)
                disp = sub - state.agent
                disp = disp + rng.standard_normal(2) * profile.tremor_sigma
                a = np.array([disp[0], disp[1], grasp_cmd])
                state = step(state, a, task)
                states.append(state)
                actions.append(a)
        grasp_cmd = cmd_after
        a = np.array([0.0, 0.0, grasp_cmd])
        state = step(state, a, task)
        states.append(state)
        actions.append(a)
        prev_anchor = np.array(state.agent)
    return _record_episode(states, actions, task, seed, profile.label)


def operator_demo(task: Task, profile: OperatorProfile, seed: int) -> Trajectory:
    return operator_rollout(task, profile, seed).trajectory
