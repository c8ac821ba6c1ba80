"""Tests for minimal-cardinality keyframe extraction."""

from __future__ import annotations

import numpy as np
import pytest

from intent_assist.errors import ContractViolation
from intent_assist.keyframe import (
    KeyframeSet,
    brute_force_keyframes,
    extract_keyframes,
    validate_keyframes,
)
from intent_assist.trajectory import Trajectory


def l_shape():
    return Trajectory([[0, 0], [1, 0], [2, 0], [2, 1], [2, 2]], [0, 1, 2, 3, 4])


def random_walk(rng, n, d=2, scale=0.15):
    pts = np.cumsum(rng.normal(0, scale, size=(n, d)), axis=0)
    return Trajectory(pts, np.arange(n, dtype=float))


# ------------------------------------------------------------ KeyframeSet


def test_keyframeset_invariants():
    ks = KeyframeSet((0, 2, 4), eta=0.5, achieved_error=0.1)
    assert len(ks) == 3
    with pytest.raises(ContractViolation):
        KeyframeSet((1, 2), eta=0.5, achieved_error=0.0)  # must start at 0
    with pytest.raises(ContractViolation):
        KeyframeSet((0, 2, 2), eta=0.5, achieved_error=0.0)  # strictly increasing
    with pytest.raises(ContractViolation):
        KeyframeSet((0,), eta=0.5, achieved_error=0.0)  # >= 2 entries
    with pytest.raises(ContractViolation):
        KeyframeSet((0, 2), eta=0.1, achieved_error=0.5)  # error above budget


# ------------------------------------------------------- extract_keyframes


def test_collinear_points_compress_to_endpoints():
    src = Trajectory([[0, 0], [1, 0], [2, 0], [3, 0]], [0, 1, 2, 3])
    ks = extract_keyframes(src, 0.01)
    assert ks.indices == (0, 3)
    assert ks.achieved_error <= 0.01 + 1e-12


def test_l_shape_three_keyframes():
    ks = extract_keyframes(l_shape(), 0.1)
    assert ks.indices == (0, 2, 4)
    bf = brute_force_keyframes(l_shape(), 0.1)
    assert bf.indices == (0, 2, 4)


def test_huge_budget_gives_two_point_floor():
    rng = np.random.default_rng(3)
    src = random_walk(rng, 10)
    span = np.linalg.norm(src.points.max(0) - src.points.min(0))
    ks = extract_keyframes(src, 10 * span + 1.0)
    assert ks.indices == (0, 9)


def test_tiny_budget_keeps_all_indices():
    rng = np.random.default_rng(4)
    src = random_walk(rng, 8)
    ks = extract_keyframes(src, 1e-15)
    assert ks.indices == tuple(range(8))


def test_extraction_requires_positive_eta():
    with pytest.raises(ContractViolation):
        extract_keyframes(l_shape(), 0.0)
    with pytest.raises(ContractViolation):
        extract_keyframes(l_shape(), -1.0)


def test_duplicate_consecutive_points_compress_away():
    src = Trajectory([[0, 0], [0, 0], [0, 0], [1, 0], [1, 0], [2, 0]], [0, 1, 2, 3, 4, 5])
    ks = extract_keyframes(src, 0.01)
    assert ks.indices == (0, 5)


def test_determinism():
    rng = np.random.default_rng(9)
    src = random_walk(rng, 40)
    a = extract_keyframes(src, 0.1)
    b = extract_keyframes(src, 0.1)
    assert a.indices == b.indices


def test_feasibility_on_larger_instances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        src = random_walk(rng, 120)
        eta = float(rng.uniform(0.05, 0.5))
        ks = extract_keyframes(src, eta)
        assert validate_keyframes(src, ks) <= eta + 1e-12


def test_monotone_in_eta():
    rng = np.random.default_rng(12)
    for _ in range(10):
        src = random_walk(rng, 30)
        etas = np.geomspace(0.01, 1.0, 8)
        cards = [len(extract_keyframes(src, e).indices) for e in etas]
        assert all(a >= b for a, b in zip(cards, cards[1:]))


def test_matches_brute_force_cardinality_and_ties():
    rng = np.random.default_rng(13)
    for _ in range(40):
        n = int(rng.integers(4, 13))
        d = int(rng.integers(1, 4))
        src = random_walk(rng, n, d=d)
        eta = float(rng.uniform(0.05, 0.6))
        fast = extract_keyframes(src, eta)
        slow = brute_force_keyframes(src, eta)
        assert fast.indices == slow.indices


def test_mask_changes_the_metric():
    src = Trajectory([[0, 0, 0], [1, 0, 5], [2, 0, 0]], [0, 1, 2])
    assert extract_keyframes(src, 0.1, mask=(1, 1, 0)).indices == (0, 2)
    assert extract_keyframes(src, 0.1, mask=(1, 1, 1)).indices == (0, 1, 2)


# ---------------------------------------------------- brute_force_keyframes


def test_brute_force_huge_budget():
    rng = np.random.default_rng(14)
    src = random_walk(rng, 9)
    assert brute_force_keyframes(src, 100.0).indices == (0, 8)


def test_brute_force_refuses_long_sources():
    rng = np.random.default_rng(15)
    src = random_walk(rng, 15)
    with pytest.raises(ContractViolation, match="refusing"):
        brute_force_keyframes(src, 0.1)


# ------------------------------------------------------- validate_keyframes


def test_validate_all_indices_zero_error():
    rng = np.random.default_rng(16)
    src = random_walk(rng, 12)
    assert validate_keyframes(src, tuple(range(12))) == 0.0


def test_validate_l_shape_two_point_error():
    # distance of (2, 0) to the diagonal (0,0)-(2,2)
    assert validate_keyframes(l_shape(), (0, 4)) == pytest.approx(2 / np.sqrt(2), abs=1e-12)


def test_validate_rejects_invalid_indices():
    with pytest.raises(ContractViolation):
        validate_keyframes(l_shape(), (0, 9))


def test_extracted_sets_always_validate():
    rng = np.random.default_rng(17)
    for _ in range(10):
        src = random_walk(rng, 25)
        eta = float(rng.uniform(0.02, 0.4))
        ks = extract_keyframes(src, eta)
        assert validate_keyframes(src, ks) == pytest.approx(ks.achieved_error)
        assert ks.achieved_error <= eta + 1e-12
