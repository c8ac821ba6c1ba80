"""HTTP service backing the teleoperation UI.

Three endpoints: GET /api/task publishes the active layout (including the
workspace bounds the client maps screen coordinates against), POST
/api/reset reseeds it, and POST /api/demo turns a sketched trajectory
into keyframes, an intent embedding and an autonomous rollout.

The service is stateless between requests except for the active episode
per session id; that map is accessed under a lock. Every response carries
a schema_version field.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .errors import ContractViolation, NumericFault
from .experiments import SCHEMA_VERSION, rollout_with_intent
from .keyframe import extract_keyframes
from .policy import AssistPolicy, encode_intent, load_checkpoint
from .simenv import DT, TASKS, Task, WorldState, reset
from .trajectory import Trajectory


class ResetRequest(BaseModel):
    seed: Optional[int] = None
    session_id: str = "default"


class DemoRequest(BaseModel):
    points: list[list[float]] = Field(default_factory=list)
    timestamps: Optional[list[float]] = None
    session_id: str = "default"


@dataclass
class _Session:
    seed: int
    state0: WorldState


def _state_frame(state: WorldState) -> dict:
    return {
        "agent": [float(state.agent[0]), float(state.agent[1])],
        "grasp": bool(state.grasp),
        "objects": [[float(x), float(y)] for x, y in state.objects],
        "held": list(state.held),
    }


def _layout_payload(task: Task, session_id: str, session: _Session) -> dict:
    s = session.state0
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session_id,
        "seed": session.seed,
        "task_id": task.task_id,
        "bounds": {"lo": list(task.bounds_lo), "hi": list(task.bounds_hi)},
        "agent": [float(s.agent[0]), float(s.agent[1])],
        "objects": [[float(x), float(y)] for x, y in s.objects],
        "targets": [[float(x), float(y)] for x, y in s.targets],
        "target_radius": task.target_radius,
        "grasp_radius": task.grasp_radius,
        "max_step": task.max_step,
    }


def create_app(
    checkpoint_path: str | Path | None = None,
    policy: AssistPolicy | None = None,
    task_id: str = "transfer",
    eta: float = 0.04,
    default_seed: int = 0,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service around a trained checkpoint (or an in-memory policy)."""
    if policy is None:
        if checkpoint_path is None:
            raise ContractViolation("serve needs a trained checkpoint or an in-memory policy")
        policy, _ = load_checkpoint(checkpoint_path)
    task = TASKS[task_id]
    app = FastAPI(title="intent-assist", version=SCHEMA_VERSION)
    lock = threading.Lock()
    sessions: dict[str, _Session] = {}
    seed_counter = {"next": int(default_seed)}

    def _get_session(session_id: str) -> _Session:
        with lock:
            if session_id not in sessions:
                seed = seed_counter["next"]
                seed_counter["next"] += 1
                sessions[session_id] = _Session(seed=seed, state0=reset(task, seed))
            return sessions[session_id]

    @app.exception_handler(NumericFault)
    async def _numeric_fault(request: Request, exc: NumericFault):
        trace_id = uuid.uuid4().hex
        return JSONResponse(
            status_code=500,
            content={"schema_version": SCHEMA_VERSION, "error": str(exc), "trace_id": trace_id},
        )

    @app.exception_handler(ContractViolation)
    async def _contract(request: Request, exc: ContractViolation):
        return JSONResponse(
            status_code=400,
            content={"schema_version": SCHEMA_VERSION, "error": str(exc)},
        )

    @app.get("/api/task")
    async def get_task(session_id: str = "default"):
        session = _get_session(session_id)
        return _layout_payload(task, session_id, session)

    @app.post("/api/reset")
    async def post_reset(body: ResetRequest):
        with lock:
            if body.seed is None:
                seed = seed_counter["next"]
                seed_counter["next"] += 1
            else:
                seed = int(body.seed)
            sessions[body.session_id] = _Session(seed=seed, state0=reset(task, seed))
            session = sessions[body.session_id]
        return _layout_payload(task, body.session_id, session)

    @app.post("/api/demo")
    async def post_demo(body: DemoRequest):
        if len(body.points) < 2:
            return JSONResponse(
                status_code=400,
                content={
                    "schema_version": SCHEMA_VERSION,
                    "error": "trajectory needs >= 2 points",
                    "field": "points",
                },
            )
        session = _get_session(body.session_id)
        points = np.asarray(body.points, dtype=float)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            return JSONResponse(
                status_code=400,
                content={
                    "schema_version": SCHEMA_VERSION,
                    "error": "points must be [x, y] or [x, y, grasp] rows",
                    "field": "points",
                },
            )
        if points.shape[1] == 2:  # sketches without a grasp channel get zeros
            points = np.hstack([points, np.zeros((len(points), 1))])
        timestamps = (
            np.asarray(body.timestamps, dtype=float)
            if body.timestamps is not None
            else DT * np.arange(len(points))
        )
        demo = Trajectory(points=points, timestamps=timestamps, task_id=task.task_id)
        with lock:
            keyframes = extract_keyframes(demo, eta)
            intent = encode_intent(keyframes, demo, policy.config)
            outcome = rollout_with_intent(
                policy,
                task,
                session.seed,
                intent,
                keyframe_count=len(keyframes.indices),
                operator_steps=demo.n_steps,
                eta=eta,
                collect_states=True,
            )
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": body.session_id,
            "success": outcome.record.success,
            "operator_steps": outcome.record.operator_steps,
            "rollout_steps": outcome.record.rollout_steps,
            "keyframe_indices": list(keyframes.indices),
            "keyframes": demo.points[list(keyframes.indices)].tolist(),
            "rollout": [_state_frame(s) for s in (outcome.states or [])],
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
