"""Gaussian trajectory perturbation and temporal truncation.

Operator variability is modeled as a narrow Gaussian tube around a clean
demonstration: independent per-timestep noise with covariance blocks
Lambda_t, stacked block-diagonally over the trajectory. Truncation keeps
a random prefix so the downstream policy learns to act on partial
demonstrations.

Sampling is pure given an explicit seed; concurrent callers derive
per-sample seeds with ``seeding.derive_seed`` instead of sharing
generator state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .seeding import rng_from
from .trajectory import Trajectory, _validated_mask

_SYM_ATOL = 1e-12
_PSD_EIG_FLOOR = -1e-12


@dataclass(frozen=True)
class PerturbationKernel:
    """Per-timestep covariance blocks defining the Gaussian tube.

    ``blocks`` has shape (n_points, d, d); every block must be symmetric
    and positive semi-definite. ``schedule_name`` records how the blocks
    were generated, for dataset provenance.
    """

    blocks: np.ndarray
    schedule_name: str = ""

    def __post_init__(self) -> None:
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 3 or blocks.shape[1] != blocks.shape[2]:
            raise ContractViolation(f"blocks must have shape (n, d, d), got {blocks.shape}")
        if len(blocks) < 2:
            raise ContractViolation(f"kernel needs >= 2 blocks, got {len(blocks)}")
        if not np.all(np.isfinite(blocks)):
            raise ContractViolation("covariance blocks contain NaN or Inf")
        asym = np.abs(blocks - blocks.transpose(0, 2, 1)).max()
        if asym > _SYM_ATOL:
            raise ContractViolation(f"covariance blocks asymmetric by {asym:g}")
        eigs = np.linalg.eigvalsh(blocks)
        if eigs.min() < _PSD_EIG_FLOOR:
            raise ContractViolation(f"covariance block not PSD: min eigenvalue {eigs.min():g}")
        blocks = blocks.copy()
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def max_std(self) -> float:
        """Largest per-timestep standard deviation in any direction."""
        eigs = np.linalg.eigvalsh(self.blocks)
        return float(np.sqrt(max(eigs.max(), 0.0)))


@dataclass(frozen=True)
class PerturbedSample:
    """One draw from the perturbation distribution around a clean source."""

    trajectory: Trajectory
    source_id: str
    noise_scale: float
    seed: int


def build_kernel(
    n_points: int,
    d: int,
    sigma: float,
    mask: Sequence[float] | None = None,
    schedule: str = "constant",
) -> PerturbationKernel:
    """Isotropic kernel Lambda_t = sigma^2 * diag(mask).

    ``schedule="ramp"`` scales sigma linearly from 0 at the first point to
    its full value at the last, for operators that drift late in a motion.
    """
    if n_points < 2:
        raise ContractViolation(f"kernel length must be >= 2, got {n_points}")
    if not np.isfinite(sigma) or sigma < 0:
        raise ContractViolation(f"sigma must be finite and >= 0, got {sigma}")
    m = _validated_mask(mask, d)
    if m is None:
        m = np.ones(d)
    if schedule == "constant":
        scales = np.full(n_points, sigma)
    elif schedule == "ramp":
        scales = sigma * np.arange(n_points) / (n_points - 1)
    else:
        raise ContractViolation(f"unknown schedule {schedule!r}")
    blocks = scales[:, None, None] ** 2 * np.diag(m)[None, :, :]
    name = f"isotropic(sigma={sigma:g},schedule={schedule},mask={m.tolist()})"
    return PerturbationKernel(blocks=blocks, schedule_name=name)


def _block_sqrts(blocks: np.ndarray) -> np.ndarray:
    """Symmetric square roots of PSD blocks (eigendecomposition, clipped)."""
    w, v = np.linalg.eigh(blocks)
    w = np.sqrt(np.clip(w, 0.0, None))
    return np.einsum("nij,nj,nkj->nik", v, w, v)


def sample_perturbed(
    source: Trajectory,
    kernel: PerturbationKernel,
    seed: int,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    source_id: str | None = None,
) -> PerturbedSample:
    """Draw one perturbed trajectory from the Gaussian tube around ``source``.

    Noise is independent per timestep; timestamps, task id and length are
    untouched. Deterministic given ``seed``. When ``bounds`` (per-dimension
    lo/hi arrays) is given, samples are clamped into the box and the number
    of clamped coordinates is recorded in the output meta.
    """
    if len(kernel) != len(source):
        raise ContractViolation(
            f"kernel length {len(kernel)} does not match trajectory length {len(source)}"
        )
    if kernel.dim != source.dim:
        raise ContractViolation(f"kernel dim {kernel.dim} does not match trajectory dim {source.dim}")
    rng = rng_from(seed)
    eps = rng.standard_normal(source.points.shape)
    diag = np.einsum("nii->ni", kernel.blocks)
    if np.array_equal(kernel.blocks, diag[:, :, None] * np.eye(source.dim)[None]):
        noise = eps * np.sqrt(diag)
    else:
        noise = np.einsum("nij,nj->ni", _block_sqrts(kernel.blocks), eps)
    points = source.points + noise
    meta_updates = {"seed": str(int(seed))}
    if bounds is not None:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
        clamped = np.clip(points, lo, hi)
        n_clamped = int(np.sum(clamped != points))
        points = clamped
        if n_clamped:
            meta_updates["clamped"] = str(n_clamped)
    sid = source_id if source_id is not None else str(source.meta.get("id", source.task_id))
    trajectory = source.with_points(points, **meta_updates)
    return PerturbedSample(
        trajectory=trajectory, source_id=sid, noise_scale=kernel.max_std, seed=int(seed)
    )


def truncate_random(source: Trajectory, min_fraction: float, seed: int) -> Trajectory:
    """Keep a random prefix of the trajectory, cropping only at the end.

    The prefix length is uniform on [ceil(min_fraction * n), n] and never
    drops below 2 points. Deterministic given ``seed``.
    """
    if not (0.0 < min_fraction <= 1.0) or not np.isfinite(min_fraction):
        raise ContractViolation(f"min_fraction must be in (0, 1], got {min_fraction}")
    n = len(source)
    lo = max(2, int(np.ceil(min_fraction * n)))
    length = int(rng_from(seed).integers(lo, n + 1))
    return source.prefix(length)
