"""Tests for the line-delimited trajectory file format."""

from __future__ import annotations

import json

import numpy as np
import pytest

from intent_assist.errors import TrajectoryFormatError
from intent_assist.trajectory import Trajectory
from intent_assist.trajio import read_trajectories, write_trajectories


def test_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    trajs = [
        Trajectory(rng.uniform(0, 1, (4, 3)), [0, 0.1, 0.2, 0.35], task_id="transfer", meta={"id": "a"}),
        Trajectory(rng.uniform(0, 1, (2, 3)), [0, 1.0], task_id="organize2"),
    ]
    path = tmp_path / "demos.jsonl"
    assert write_trajectories(path, trajs) == 2
    back = read_trajectories(path)
    assert len(back) == 2
    for orig, loaded in zip(trajs, back):
        assert np.array_equal(orig.points, loaded.points)
        assert np.array_equal(orig.timestamps, loaded.timestamps)
        assert orig.task_id == loaded.task_id
        assert dict(orig.meta) == dict(loaded.meta)


def test_dt_shorthand(tmp_path):
    path = tmp_path / "dt.jsonl"
    path.write_text(json.dumps({"task_id": "t", "dt": 0.5, "points": [[0, 0], [1, 1], [2, 2]]}) + "\n")
    (t,) = read_trajectories(path)
    assert np.allclose(t.timestamps, [0.0, 0.5, 1.0])


def test_non_monotone_timestamps_rejected_with_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"timestamps": [0, 1], "points": [[0, 0], [1, 1]]})
    bad = json.dumps({"timestamps": [0, 0], "points": [[0, 0], [1, 1]]})
    path.write_text(good + "\n" + bad + "\n")
    with pytest.raises(TrajectoryFormatError, match="line 2"):
        read_trajectories(path)


def test_invalid_json_names_line(tmp_path):
    path = tmp_path / "broken.jsonl"
    path.write_text('{"timestamps": [0, 1], "points": [[0, 0], [1, 1]]}\nnot json\n')
    with pytest.raises(TrajectoryFormatError, match="line 2"):
        read_trajectories(path)


def test_missing_field_names_line(tmp_path):
    path = tmp_path / "missing.jsonl"
    path.write_text(json.dumps({"timestamps": [0, 1]}) + "\n")
    with pytest.raises(TrajectoryFormatError, match="line 1"):
        read_trajectories(path)


def test_blank_lines_skipped(tmp_path):
    path = tmp_path / "gaps.jsonl"
    rec = json.dumps({"timestamps": [0, 1], "points": [[0, 0], [1, 1]]})
    path.write_text("\n" + rec + "\n\n")
    assert len(read_trajectories(path)) == 1
