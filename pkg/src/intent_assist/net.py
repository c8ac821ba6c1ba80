"""Small feed-forward network with hand-written backpropagation.

Tanh hidden layers, linear output, float64 throughout. Gradients are
exact analytic derivatives of the batch-mean squared error; the test
suite checks every path against central finite differences. No autodiff
framework on purpose: the whole parameter set is a list of (W, b) pairs
that plain SGD can walk deterministically.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, NumericFault
from .seeding import rng_from


class VectorFieldNet:
    """MLP mapping (flow time, noisy chunk, context) -> velocity.

    The network itself is agnostic of that decomposition: it sees a flat
    input row and returns a flat output row. Construction is deterministic
    given ``seed``; a constructed instance is treated as immutable during
    inference (training code mutates parameters through ``sgd_step``).
    """

    def __init__(
        self,
        input_dim: int,
        output_dim: int,
        hidden: tuple[int, ...] = (128, 128, 128),
        seed: int = 0,
    ):
        if input_dim < 1 or output_dim < 1 or any(h < 1 for h in hidden):
            raise ContractViolation(
                f"layer sizes must be positive: in={input_dim}, hidden={hidden}, out={output_dim}"
            )
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden = tuple(int(h) for h in hidden)
        sizes = [self.input_dim, *self.hidden, self.output_dim]
        rng = rng_from(seed)
        # Xavier-style scaling keeps tanh pre-activations in range
        self.weights = [
            rng.standard_normal((m, n)) / np.sqrt(m) for m, n in zip(sizes, sizes[1:])
        ]
        self.biases = [np.zeros(n) for n in sizes[1:]]

    @property
    def layer_shapes(self) -> list[tuple[int, ...]]:
        shapes: list[tuple[int, ...]] = []
        for w, b in zip(self.weights, self.biases):
            shapes.append(w.shape)
            shapes.append(b.shape)
        return shapes

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Deterministic forward pass; x is (B, input_dim) or (input_dim,)."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=float))
        if h.shape[1] != self.input_dim:
            raise ContractViolation(f"input width {h.shape[1]} != expected {self.input_dim}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
        out = h @ self.weights[-1] + self.biases[-1]
        return out[0] if squeeze else out

    def _forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w + b)
            acts.append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, acts

    def _backward(
        self, acts: list[np.ndarray], d_out: np.ndarray
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.weights)  # type: ignore[list-item]
        delta = d_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grads[layer] = (acts[layer].T @ delta, delta.sum(axis=0))
            if layer > 0:
                # d tanh(z) = 1 - tanh(z)^2, with acts[layer] = tanh(z)
                delta = (delta @ self.weights[layer].T) * (1.0 - acts[layer] ** 2)
        return grads

    def mse_loss_and_grad(
        self, x: np.ndarray, targets: np.ndarray
    ) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
        """Batch-mean squared error sum_d (pred - target)^2 and its exact gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        if x.shape[0] != targets.shape[0]:
            raise ContractViolation(f"batch mismatch: {x.shape[0]} inputs, {targets.shape[0]} targets")
        pred, acts = self._forward_cached(x)
        err = pred - targets
        per_row = np.einsum("bd,bd->b", err, err)
        loss = float(per_row.mean())
        if not np.isfinite(loss):
            bad = np.nonzero(~np.isfinite(per_row))[0]
            idx = int(bad[0]) if len(bad) else None
            raise NumericFault(f"non-finite loss at batch index {idx}", batch_index=idx)
        grads = self._backward(acts, 2.0 * err / x.shape[0])
        return loss, grads

    def sgd_step(
        self,
        grads: list[tuple[np.ndarray, np.ndarray]],
        learning_rate: float,
        momentum: float = 0.0,
        velocity: list[tuple[np.ndarray, np.ndarray]] | None = None,
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        """In-place parameter update; returns the (possibly new) velocity buffers."""
        if velocity is None:
            velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in grads]
        for layer, (gw, gb) in enumerate(grads):
            vw, vb = velocity[layer]
            vw = momentum * vw - learning_rate * gw
            vb = momentum * vb - learning_rate * gb
            velocity[layer] = (vw, vb)
            self.weights[layer] += vw
            self.biases[layer] += vb
        return velocity

    # flat parameter views, used by the finite-difference checks and checkpoints

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params(),):
            raise ContractViolation(f"expected {self.n_params()} params, got {flat.shape}")
        pos = 0
        for layer in range(len(self.weights)):
            w, b = self.weights[layer], self.biases[layer]
            self.weights[layer] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[layer] = flat[pos : pos + b.size].copy()
            pos += b.size

    def copy(self) -> "VectorFieldNet":
        dup = VectorFieldNet.__new__(VectorFieldNet)
        dup.input_dim = self.input_dim
        dup.output_dim = self.output_dim
        dup.hidden = self.hidden
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    parts = []
    for gw, gb in grads:
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)
