"""Exception types shared across the package."""

from __future__ import annotations


class ContractViolation(ValueError):
    """An argument or state violated a documented precondition or invariant."""


class TrajectoryFormatError(ValueError):
    """A trajectory file record could not be parsed; message carries the line number."""


class NumericFault(RuntimeError):
    """A computation produced a non-finite value.

    ``batch_index`` points at the first offending batch element when the
    fault occurred inside a batched loss evaluation, else it is None.
    """

    def __init__(self, message: str, batch_index: int | None = None):
        super().__init__(message)
        self.batch_index = batch_index


class TrainingFault(RuntimeError):
    """Training aborted on a numeric fault; carries the last good parameters."""

    def __init__(self, message: str, last_good: dict, epoch: int):
        super().__init__(message)
        self.last_good = last_good
        self.epoch = epoch


class LayoutError(RuntimeError):
    """Rejection sampling could not place the requested scene entities."""


class ControllerFailure(RuntimeError):
    """The scripted expert failed to finish a task; indicates an environment bug."""


class CheckpointMismatch(ValueError):
    """A checkpoint's stored shapes disagree with the declared architecture.

    ``diff`` lists one human-readable line per mismatching entry.
    """

    def __init__(self, message: str, diff: list[str]):
        super().__init__(message + "\n" + "\n".join(diff))
        self.diff = diff
