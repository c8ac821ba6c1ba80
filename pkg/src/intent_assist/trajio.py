"""Line-delimited JSON trajectory files.

One record per line: ``{"task_id": ..., "timestamps": [...] | "dt": x,
"points": [[...], ...], "meta": {...}}``. ``dt`` is shorthand for uniform
timestamps ``0, dt, 2*dt, ...``. Read errors carry the 1-based line number.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ContractViolation, TrajectoryFormatError
from .trajectory import Trajectory


def trajectory_to_record(traj: Trajectory) -> dict:
    return {
        "task_id": traj.task_id,
        "timestamps": traj.timestamps.tolist(),
        "points": traj.points.tolist(),
        "meta": dict(traj.meta),
    }


def trajectory_from_record(record: dict) -> Trajectory:
    if "points" not in record:
        raise KeyError("points")
    points = record["points"]
    if "timestamps" in record:
        timestamps = record["timestamps"]
    elif "dt" in record:
        dt = float(record["dt"])
        if dt <= 0:
            raise ContractViolation(f"dt must be positive, got {dt}")
        timestamps = dt * np.arange(len(points))
    else:
        raise KeyError("timestamps or dt")
    return Trajectory(
        points=np.asarray(points, dtype=float),
        timestamps=np.asarray(timestamps, dtype=float),
        task_id=str(record.get("task_id", "")),
        meta={str(k): str(v) for k, v in record.get("meta", {}).items()},
    )


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> int:
    """Write one JSON record per line; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for traj in trajectories:
            f.write(json.dumps(trajectory_to_record(traj)))
            f.write("\n")
            n += 1
    return n


def iter_trajectories(path: str | Path) -> Iterator[Trajectory]:
    """Stream trajectories from a file, rejecting malformed lines.

    Non-monotone timestamps, dimension mismatches and missing fields all
    raise TrajectoryFormatError naming the offending line.
    """
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise TrajectoryFormatError(f"line {lineno}: invalid JSON ({e})") from e
            try:
                yield trajectory_from_record(record)
            except KeyError as e:
                raise TrajectoryFormatError(f"line {lineno}: missing field {e}") from e
            except (ContractViolation, TypeError, ValueError) as e:
                raise TrajectoryFormatError(f"line {lineno}: {e}") from e


def read_trajectories(path: str | Path) -> list[Trajectory]:
    return list(iter_trajectories(path))
