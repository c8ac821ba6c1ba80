"""Tests for the trajectory container and geometric primitives."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intent_assist.errors import ContractViolation
from intent_assist.trajectory import (
    Trajectory,
    directed_hausdorff,
    interpolate_at,
    point_segment_distance,
    reconstruct_linear,
)

from oracles import naive_directed_hausdorff, naive_point_segment_distance


def random_trajectory(rng, n=None, d=2):
    n = n or rng.integers(2, 13)
    return Trajectory(rng.uniform(-1, 1, size=(n, d)), np.arange(n, dtype=float))


# ---------------------------------------------------------------- Trajectory


def test_trajectory_basic_fields():
    t = Trajectory([[0, 0], [1, 1]], [0.0, 0.5], task_id="demo", meta={"k": "v"})
    assert len(t) == 2
    assert t.dim == 2
    assert t.n_steps == 1
    assert t.meta["k"] == "v"


def test_trajectory_rejects_single_point():
    with pytest.raises(ContractViolation):
        Trajectory([[0, 0]], [0.0])


def test_trajectory_rejects_non_monotone_timestamps():
    with pytest.raises(ContractViolation, match="strictly increasing"):
        Trajectory([[0, 0], [1, 1], [2, 2]], [0.0, 1.0, 1.0])


def test_trajectory_rejects_negative_start_time():
    with pytest.raises(ContractViolation):
        Trajectory([[0, 0], [1, 1]], [-1.0, 0.0])


def test_trajectory_rejects_nan():
    with pytest.raises(ContractViolation, match="NaN"):
        Trajectory([[0, np.nan], [1, 1]], [0.0, 1.0])


def test_trajectory_rejects_length_mismatch():
    with pytest.raises(ContractViolation):
        Trajectory([[0, 0], [1, 1]], [0.0, 1.0, 2.0])


def test_trajectory_is_immutable():
    t = Trajectory([[0, 0], [1, 1]], [0, 1])
    with pytest.raises(ValueError):
        t.points[0, 0] = 5.0
    with pytest.raises(Exception):
        t.points = np.zeros((2, 2))


def test_prefix_returns_exact_leading_points():
    t = Trajectory([[0, 0], [1, 0], [2, 0], [3, 0]], [0, 1, 2, 3])
    p = t.prefix(2)
    assert np.array_equal(p.points, t.points[:2])
    with pytest.raises(ContractViolation):
        t.prefix(1)


# ------------------------------------------------- point_segment_distance


def test_psd_orthogonal_projection_onto_interior():
    assert point_segment_distance((0, 1), (0, 0), (2, 0)) == pytest.approx(1.0)


def test_psd_endpoint_coincidence():
    assert point_segment_distance((0, 0), (0, 0), (1, 0)) == 0.0


def test_psd_degenerate_segment_is_point_distance():
    assert point_segment_distance((3, 4), (0, 0), (0, 0)) == pytest.approx(5.0)


def test_psd_dimension_mismatch():
    with pytest.raises(ContractViolation):
        point_segment_distance((0, 1, 2), (0, 0), (2, 0))


@given(st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_psd_never_exceeds_endpoint_distances(seed):
    rng = np.random.default_rng(seed)
    p, a, b = rng.uniform(-2, 2, size=(3, 3))
    d = point_segment_distance(p, a, b)
    assert d <= min(np.linalg.norm(p - a), np.linalg.norm(p - b)) + 1e-12
    assert d >= 0.0
    assert d == pytest.approx(naive_point_segment_distance(p, a, b), abs=1e-12)


# ------------------------------------------------------- directed_hausdorff


def test_hausdorff_identity_is_zero():
    rng = np.random.default_rng(0)
    for _ in range(5):
        t = random_trajectory(rng)
        assert directed_hausdorff(t, t) == 0.0


def test_hausdorff_middle_point_above_segment():
    raw = Trajectory([[0, 0], [1, 1], [2, 0]], [0, 1, 2])
    poly = Trajectory([[0, 0], [2, 0]], [0, 2])
    assert directed_hausdorff(raw, poly) == pytest.approx(1.0)


def test_hausdorff_asymmetry_witness():
    a = Trajectory([[0, 0], [2, 0]], [0, 1])
    b = Trajectory([[0, 0], [1, 1], [2, 0]], [0, 1, 2])
    assert directed_hausdorff(a, b) == pytest.approx(0.0)
    assert directed_hausdorff(b, a) == pytest.approx(1.0)
    assert directed_hausdorff(a, b) != directed_hausdorff(b, a)


def test_hausdorff_dimension_mismatch():
    a = Trajectory([[0, 0], [1, 1]], [0, 1])
    b = Trajectory([[0, 0, 0], [1, 1, 1]], [0, 1])
    with pytest.raises(ContractViolation):
        directed_hausdorff(a, b)


def test_hausdorff_matches_naive_oracle_on_random_inputs():
    rng = np.random.default_rng(42)
    for _ in range(50):
        d = int(rng.integers(1, 4))
        raw = random_trajectory(rng, n=int(rng.integers(2, 13)), d=d)
        poly = random_trajectory(rng, n=int(rng.integers(2, 6)), d=d)
        expected = naive_directed_hausdorff(raw.points.tolist(), poly.points.tolist())
        assert directed_hausdorff(raw, poly) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_hausdorff_appending_polyline_vertices_never_increases(seed):
    rng = np.random.default_rng(seed)
    raw = random_trajectory(rng, n=6)
    poly_pts = rng.uniform(-1, 1, size=(3, 2))
    extended = np.vstack([poly_pts, rng.uniform(-1, 1, size=(2, 2))])
    poly = Trajectory(poly_pts, np.arange(3, dtype=float))
    bigger = Trajectory(extended, np.arange(5, dtype=float))
    assert directed_hausdorff(raw, bigger) <= directed_hausdorff(raw, poly) + 1e-12


def test_hausdorff_splitting_a_segment_keeps_distance():
    raw = Trajectory([[0, 0], [1, 1], [2, 0]], [0, 1, 2])
    poly = Trajectory([[0, 0], [2, 0]], [0, 2])
    split = Trajectory([[0, 0], [1, 0], [2, 0]], [0, 1, 2])
    assert directed_hausdorff(raw, split) == pytest.approx(directed_hausdorff(raw, poly))


def test_hausdorff_mask_excludes_channel():
    raw = Trajectory([[0, 0, 9], [1, 0, -9]], [0, 1])
    poly = Trajectory([[0, 0, 0], [1, 0, 0]], [0, 1])
    assert directed_hausdorff(raw, poly, mask=(1, 1, 0)) == pytest.approx(0.0)
    assert directed_hausdorff(raw, poly, mask=(1, 1, 1)) == pytest.approx(9.0)
    with pytest.raises(ContractViolation):
        directed_hausdorff(raw, poly, mask=(1, 1))


# ------------------------------------------------------- reconstruct_linear


def test_reconstruct_all_indices_is_identity():
    rng = np.random.default_rng(1)
    t = random_trajectory(rng, n=7)
    r = reconstruct_linear(range(7), t)
    assert np.array_equal(r.points, t.points)
    assert np.array_equal(r.timestamps, t.timestamps)


def test_reconstruct_collinear_midpoint():
    src = Trajectory([[0, 0], [1, 0], [2, 0]], [0, 1, 2])
    r = reconstruct_linear((0, 2), src)
    assert np.allclose(interpolate_at(r, [1.0]), [[1.0, 0.0]])


def test_reconstruct_midpoint_error_matches_hausdorff():
    src = Trajectory([[0, 0], [1, 1], [2, 0]], [0, 1, 2])
    r = reconstruct_linear((0, 2), src)
    assert np.allclose(interpolate_at(r, [1.0]), [[1.0, 0.0]])
    assert directed_hausdorff(src, r) == pytest.approx(1.0)


def test_reconstruct_rejects_bad_indices():
    src = Trajectory([[0, 0], [1, 1], [2, 0]], [0, 1, 2])
    with pytest.raises(ContractViolation):
        reconstruct_linear((0, 5), src)
    with pytest.raises(ContractViolation):
        reconstruct_linear((2, 0), src)
    with pytest.raises(ContractViolation):
        reconstruct_linear((0, 1), src)  # must span to the last index
