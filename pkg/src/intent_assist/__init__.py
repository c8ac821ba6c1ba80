"""Assistive-teleoperation sandbox: intent perturbation, keyframe
extraction and an intent-conditioned flow-matching policy, evaluated in a
deterministic 2D manipulation environment."""

from .errors import (
    CheckpointMismatch,
    ContractViolation,
    ControllerFailure,
    LayoutError,
    NumericFault,
    TrainingFault,
    TrajectoryFormatError,
)
from .keyframe import KeyframeSet, brute_force_keyframes, extract_keyframes, validate_keyframes
from .perturb import PerturbationKernel, PerturbedSample, build_kernel, sample_perturbed, truncate_random
from .policy import (
    ActionChunk,
    AssistPolicy,
    IntentEmbedding,
    Observation,
    PolicyConfig,
    TrainConfig,
    cfm_loss_and_grad,
    encode_intent,
    infer_chunk,
    interpolate_action,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .net import VectorFieldNet
from .simenv import PROFILES, TASKS, OperatorProfile, Task, WorldState
from .trajectory import Trajectory, directed_hausdorff, point_segment_distance, reconstruct_linear
from .trajio import read_trajectories, write_trajectories

__version__ = "0.1.0"
