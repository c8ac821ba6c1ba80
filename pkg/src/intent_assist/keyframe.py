"""Minimal-cardinality keyframe extraction under a geometric error budget.

A keyframe set is an index subsequence 0 = t_0 < ... < t_L = T of the
source trajectory whose linear reconstruction stays within a budget eta
of the raw points. Feasibility is judged per segment: an edge (i, j) is
usable iff every raw point k with i <= k <= j lies within eta of the
segment [x_i, x_j]. That is a sufficient condition for the global
worst-case reconstruction error to stay within eta (a point near its
assigned segment is at least as close to the full curve), so every
extracted set also passes the global check in ``validate_keyframes``.

The solver builds the feasibility DAG over indices and takes a
minimum-link path from 0 to T; ties between equal-cardinality solutions
break toward the lexicographically smallest index sequence. O(T^3)
worst case, vectorized per source index, which is ample at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .trajectory import (
    BUDGET_ATOL,
    Trajectory,
    _validated_mask,
    directed_hausdorff,
    point_segment_distance,
    reconstruct_linear,
)

#: brute-force enumeration refuses sources longer than this
BRUTE_FORCE_MAX_POINTS = 14


@dataclass(frozen=True)
class KeyframeSet:
    """Strictly increasing index subsequence with its error budget.

    ``achieved_error`` is the worst-case deviation of the reconstruction,
    guaranteed <= eta (+1e-12 rounding slack) by the solver.
    """

    indices: tuple[int, ...]
    eta: float
    achieved_error: float

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 2:
            raise ContractViolation(f"keyframe set needs >= 2 indices, got {idx}")
        if idx[0] != 0:
            raise ContractViolation(f"keyframe indices must start at 0, got {idx[0]}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation(f"keyframe indices must be strictly increasing: {idx}")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ContractViolation(f"eta must be finite and >= 0, got {self.eta}")
        if not np.isfinite(self.achieved_error) or self.achieved_error < 0:
            raise ContractViolation(f"achieved_error must be finite and >= 0, got {self.achieved_error}")
        if self.achieved_error > self.eta + BUDGET_ATOL:
            raise ContractViolation(
                f"achieved_error {self.achieved_error} exceeds budget {self.eta}"
            )
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


def _check_eta(eta: float) -> float:
    eta = float(getattr(eta, "eta", eta))
    if not np.isfinite(eta) or eta <= 0:
        raise ContractViolation(f"error budget must be positive and finite, got {eta}")
    return eta


def _feasible_row(pts: np.ndarray, i: int, eta: float) -> np.ndarray:
    """Boolean feasibility of edges (i, j) for all j > i, vectorized.

    Entry j-i-1 is True iff every point k in [i, j] lies within eta of
    the segment [pts[i], pts[j]].
    """
    tail = pts[i:]  # (n, d); rel index 0 is the edge source
    rel = tail - tail[0]
    n = len(rel)
    sq = np.einsum("kd,kd->k", rel, rel)  # |rel_k|^2
    dots = rel @ rel.T  # dot(rel_k, rel_j)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(sq[None, :] > 0.0, dots / sq[None, :], 0.0)  # (k, j)
    t = np.clip(t, 0.0, 1.0)
    # squared distance from point k to the segment [0, rel_j]
    d2 = sq[:, None] - 2.0 * t * dots + t * t * sq[None, :]
    # points beyond j never constrain edge (i, j)
    lower = np.arange(n)[:, None] <= np.arange(n)[None, :]
    d2 = np.where(lower, d2, 0.0)
    worst = np.sqrt(np.maximum(d2.max(axis=0), 0.0))
    feasible = worst[1:] <= eta + BUDGET_ATOL
    # the adjacent edge is feasible by definition (both points lie on the
    # segment); guard it against rounding noise in the d2 expansion
    feasible[0] = True
    return feasible


def extract_keyframes(
    source: Trajectory, eta: float, mask: Sequence[float] | None = None
) -> KeyframeSet:
    """Minimum-cardinality keyframes whose reconstruction stays within eta.

    Ties between equal-cardinality solutions break toward the
    lexicographically smallest index sequence. Deterministic: identical
    input yields identical indices.
    """
    eta = _check_eta(eta)
    m = _validated_mask(mask, source.dim)
    pts = source.points if m is None else source.points * m
    T = source.n_steps

    # backward DP: links[i] = fewest edges from i to T; adjacent edges are
    # always feasible (both points sit on the segment), so links is finite
    rows: list[np.ndarray] = [np.empty(0, dtype=bool)] * T
    links = np.zeros(T + 1, dtype=int)
    for i in range(T - 1, -1, -1):
        row = _feasible_row(pts, i, eta)
        rows[i] = row
        links[i] = 1 + links[i + 1 : T + 1][row].min()

    # forward greedy reconstruction gives the lexicographically smallest
    # among all minimum-link paths
    indices = [0]
    i = 0
    while i < T:
        js = np.nonzero(rows[i])[0] + i + 1
        nxt = js[links[js] == links[i] - 1][0]
        indices.append(int(nxt))
        i = int(nxt)

    achieved = validate_keyframes(source, tuple(indices), mask=mask)
    return KeyframeSet(indices=tuple(indices), eta=eta, achieved_error=achieved)


def _subset_feasible(pts: np.ndarray, indices: Sequence[int], eta: float) -> bool:
    """Per-segment criterion, checked point by point via the scalar primitive."""
    for a, b in zip(indices, indices[1:]):
        for k in range(a, b + 1):
            if point_segment_distance(pts[k], pts[a], pts[b]) > eta + BUDGET_ATOL:
                return False
    return True


def brute_force_keyframes(
    source: Trajectory, eta: float, mask: Sequence[float] | None = None
) -> KeyframeSet:
    """Exhaustive oracle: first feasible subset in (cardinality, lex) order.

    Enumerates every index subset containing {0, T}. Exponential, so it
    refuses sources longer than BRUTE_FORCE_MAX_POINTS.
    """
    eta = _check_eta(eta)
    if len(source) > BRUTE_FORCE_MAX_POINTS:
        raise ContractViolation(
            f"brute force enumerates 2^(n-2) subsets; refusing n={len(source)} > {BRUTE_FORCE_MAX_POINTS}"
        )
    m = _validated_mask(mask, source.dim)
    pts = source.points if m is None else source.points * m
    T = source.n_steps
    interior = range(1, T)
    for extra in range(0, T):
        for middle in combinations(interior, extra):
            candidate = (0, *middle, T)
            if _subset_feasible(pts, candidate, eta):
                achieved = validate_keyframes(source, candidate, mask=mask)
                return KeyframeSet(indices=candidate, eta=eta, achieved_error=achieved)
    raise AssertionError("unreachable: the full index set is always feasible")


def validate_keyframes(
    source: Trajectory, keyframes: KeyframeSet | Sequence[int], mask: Sequence[float] | None = None
) -> float:
    """Recompute the global reconstruction error for a keyframe set.

    Returns directed_hausdorff(source, reconstruction); callers assert
    it stays within their budget.
    """
    reconstruction = reconstruct_linear(keyframes, source)
    return directed_hausdorff(source, reconstruction, mask=mask)
