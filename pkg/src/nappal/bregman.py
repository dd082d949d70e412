"""Quadratic Bregman kernels and their distances.

Only separable quadratic kernels are provided, ``K(u) = 1/2 sum_j w_j u_j^2``:
the Euclidean kernel (all weights one) and the diagonal-weighted kernel. Both
are additive over blocks, so the u-subproblem splits per block and per
coordinate.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["BregmanKernel", "kernel_value", "kernel_gradient", "distance",
           "block_distances"]


@dataclass(frozen=True)
class BregmanKernel:
    """Separable quadratic kernel.

    Attributes
    ----------
    kind : {"euclidean", "diagonal"}
    weights : ndarray or None
        Per-coordinate weights (concatenated over blocks) for the diagonal
        kind; ``None`` for the Euclidean kind.
    """

    kind: str = "euclidean"
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "euclidean":
            if self.weights is not None:
                raise ValueError("the Euclidean kernel takes no weights")
        elif self.kind == "diagonal":
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ValueError("diagonal weights must be finite and > 0")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def euclidean(cls):
        return cls("euclidean")

    @classmethod
    def diagonal(cls, block_weights):
        """Build from a single weight vector or a list of per-block vectors."""
        if isinstance(block_weights, (list, tuple)):
            block_weights = np.concatenate(
                [np.atleast_1d(np.asarray(w, dtype=float)) for w in block_weights])
        return cls("diagonal", block_weights)

    @property
    def beta(self):
        """Strong-convexity modulus."""
        return 1.0 if self.weights is None else float(self.weights.min())

    @property
    def L_K(self):
        """Lipschitz modulus of the kernel gradient."""
        return 1.0 if self.weights is None else float(self.weights.max())

    def coordinate_weights(self, n):
        if self.weights is None:
            return np.ones(n)
        if self.weights.size != n:
            raise ValueError(f"kernel has {self.weights.size} weights, need {n}")
        return self.weights


def _check(K, u):
    u = np.asarray(u, dtype=float)
    if K.weights is not None and u.shape != K.weights.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {K.weights.shape}")
    return u


def kernel_value(K, u):
    u = _check(K, u)
    return 0.5 * float(np.sum(K.coordinate_weights(u.size) * u * u))


def kernel_gradient(K, u):
    u = _check(K, u)
    return u.copy() if K.weights is None else K.weights * u


def distance(K, u, u_prev):
    """Bregman distance ``K(u) - K(u') - <grad K(u'), u - u'>``."""
    u, u_prev = _check(K, u), _check(K, u_prev)
    if u.shape != u_prev.shape:
        raise ValueError("dimension mismatch")
    diff = u - u_prev
    return 0.5 * float(np.sum(K.coordinate_weights(diff.size) * diff * diff))


def block_distances(K, u, u_prev, blocks):
    """Per-block distances; they sum to ``distance(K, u, u_prev)``."""
    u, u_prev = _check(K, u), _check(K, u_prev)
    w = K.coordinate_weights(u.size)
    diff = u - u_prev
    out = []
    start = 0
    for size in blocks:
        sl = slice(start, start + size)
        out.append(0.5 * float(np.sum(w[sl] * diff[sl] * diff[sl])))
        start += size
    return out
