"""Trajectory container and piecewise-linear geometry.

Everything downstream (perturbation, keyframe extraction, intent encoding)
works on the same structure: an ordered sequence of d-dimensional points
with strictly increasing timestamps. Distances are Euclidean over the
point coordinates; an optional per-dimension weight mask lets callers
down-weight or exclude channels from the metric. Timestamps never enter
the metric.

All types are immutable after construction and all operations are pure
functions, so they are safe to call from any number of concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractViolation

#: absolute tolerance used when comparing distances against budgets
BUDGET_ATOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Timestamped sequence of d-dimensional points.

    Arrays are copied and marked read-only at construction, so instances
    can be shared freely across threads.
    """

    points: np.ndarray
    timestamps: np.ndarray
    task_id: str = ""
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        ts = np.asarray(self.timestamps, dtype=float)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ContractViolation(f"points must have shape (n, d) with d >= 1, got {pts.shape}")
        if ts.ndim != 1 or len(ts) != len(pts):
            raise ContractViolation(
                f"timestamps length {ts.shape} does not match {len(pts)} points"
            )
        if len(pts) < 2:
            raise ContractViolation(f"a trajectory needs at least 2 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("points contain NaN or Inf")
        if not np.all(np.isfinite(ts)):
            raise ContractViolation("timestamps contain NaN or Inf")
        if ts[0] < 0:
            raise ContractViolation(f"timestamps must be non-negative, start at {ts[0]}")
        if np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0))
            raise ContractViolation(
                f"timestamps must be strictly increasing, violated at index {bad + 1}"
            )
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_steps(self) -> int:
        """Number of transitions, i.e. T for a (T+1)-point trajectory."""
        return len(self.points) - 1

    def prefix(self, n: int) -> "Trajectory":
        """The first ``n`` points as a new trajectory (n >= 2)."""
        if not 2 <= n <= len(self):
            raise ContractViolation(f"prefix length {n} outside [2, {len(self)}]")
        if n == len(self):
            return self
        return Trajectory(self.points[:n], self.timestamps[:n], self.task_id, self.meta)

    def with_points(self, points: np.ndarray, **meta_updates: str) -> "Trajectory":
        """Same timestamps/task, new points (used by the perturbation sampler)."""
        meta = dict(self.meta)
        meta.update(meta_updates)
        return Trajectory(points, self.timestamps, self.task_id, meta)


def _validated_mask(mask: Sequence[float] | None, dim: int) -> np.ndarray | None:
    if mask is None:
        return None
    m = np.asarray(mask, dtype=float)
    if m.shape != (dim,):
        raise ContractViolation(f"mask shape {m.shape} does not match dimension {dim}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise ContractViolation("mask weights must be finite and non-negative")
    return m


def point_segment_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance from point ``p`` to the closed segment [a, b].

    Degenerates to plain point distance when ``a == b``. When the
    orthogonal projection of ``p`` falls outside the segment the distance
    to the nearer endpoint is returned.
    """
    p, a, b = (np.asarray(x, dtype=float) for x in (p, a, b))
    if not (p.shape == a.shape == b.shape) or p.ndim != 1:
        raise ContractViolation(f"dimension mismatch: {p.shape}, {a.shape}, {b.shape}")
    if not all(np.all(np.isfinite(x)) for x in (p, a, b)):
        raise ContractViolation("point_segment_distance requires finite inputs")
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def min_distances_to_polyline(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Distance from each row of ``points`` to the piecewise-linear curve
    through ``vertices``; vectorized over all (point, segment) pairs."""
    points = np.asarray(points, dtype=float)
    vertices = np.asarray(vertices, dtype=float)
    a = vertices[:-1]  # (S, d)
    ab = vertices[1:] - a  # (S, d)
    denom = np.einsum("sd,sd->s", ab, ab)  # (S,)
    ap = points[:, None, :] - a[None, :, :]  # (N, S, d)
    t = np.einsum("nsd,sd->ns", ap, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0.0, t / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    diff = ap - t[:, :, None] * ab[None, :, :]
    d2 = np.einsum("nsd,nsd->ns", diff, diff)
    return np.sqrt(np.maximum(d2.min(axis=1), 0.0))


def directed_hausdorff(
    raw: Trajectory, polyline: Trajectory, mask: Sequence[float] | None = None
) -> float:
    """Worst-case distance from the raw points to the polyline curve.

    Computes max over raw points of the min distance to any segment of
    ``polyline``. Directed on purpose: distances from polyline vertices
    back to the raw trajectory are NOT considered, so the result is not
    symmetric in its arguments.
    """
    if raw.dim != polyline.dim:
        raise ContractViolation(f"dimension mismatch: raw d={raw.dim}, polyline d={polyline.dim}")
    m = _validated_mask(mask, raw.dim)
    pts, verts = raw.points, polyline.points
    if m is not None:
        pts, verts = pts * m, verts * m
    return float(min_distances_to_polyline(pts, verts).max())


def _keyframe_indices(keyframes, source: Trajectory) -> np.ndarray:
    """Accepts a KeyframeSet or a plain index sequence; validates against source."""
    idx = np.asarray(getattr(keyframes, "indices", keyframes), dtype=int)
    if idx.ndim != 1 or len(idx) < 2:
        raise ContractViolation(f"need at least 2 keyframe indices, got {idx.tolist()}")
    if np.any(np.diff(idx) <= 0):
        raise ContractViolation(f"keyframe indices must be strictly increasing: {idx.tolist()}")
    if idx[0] != 0 or idx[-1] != source.n_steps:
        raise ContractViolation(
            f"keyframes must span the trajectory: got [{idx[0]}, {idx[-1]}], want [0, {source.n_steps}]"
        )
    return idx


def reconstruct_linear(keyframes, source: Trajectory) -> Trajectory:
    """Piecewise-linear reconstruction through the selected source points.

    The returned trajectory holds the keyframe vertices at their original
    timestamps; evaluate it at intermediate times with ``interpolate_at``.
    """
    idx = _keyframe_indices(keyframes, source)
    return Trajectory(
        source.points[idx], source.timestamps[idx], source.task_id, source.meta
    )


def interpolate_at(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    """Evaluate the trajectory at arbitrary times by linear interpolation.

    Times outside the covered span clamp to the end points.
    """
    times = np.asarray(times, dtype=float)
    out = np.empty((len(times), traj.dim))
    for k in range(traj.dim):
        out[:, k] = np.interp(times, traj.timestamps, traj.points[:, k])
    return out
