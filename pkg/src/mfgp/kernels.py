"""Squared-exponential ARD kernels and their log-parameter derivatives.

The kernel convention is

    g(x, x') = variance * exp(-0.5 * sum_d w_d (x_d - x'_d)^2)

with the ARD weights ``w_d`` acting as inverse squared length scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KernelParams:
    """Variance and per-dimension ARD weights of one squared-exponential kernel."""

    variance: float
    ard_weights: tuple[float, ...]

    def __post_init__(self):
        weights = tuple(float(w) for w in np.atleast_1d(self.ard_weights))
        object.__setattr__(self, "ard_weights", weights)
        object.__setattr__(self, "variance", float(self.variance))
        if not self.variance > 0 or not np.isfinite(self.variance):
            raise ValueError(f"kernel variance must be positive, got {self.variance}")
        if len(weights) == 0:
            raise ValueError("at least one ARD weight is required")
        if not all(w > 0 and np.isfinite(w) for w in weights):
            raise ValueError(f"ARD weights must be positive, got {weights}")

    @property
    def dim(self) -> int:
        return len(self.ard_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.ard_weights, dtype=float)

    def to_log(self) -> np.ndarray:
        """Unconstrained encoding ``[log variance, log w_1, ..., log w_D]``."""
        return np.log(np.concatenate([[self.variance], self.weights]))

    @classmethod
    def from_log(cls, v) -> "KernelParams":
        v = np.asarray(v, dtype=float)
        return cls(float(np.exp(v[0])), tuple(np.exp(v[1:])))


def _check(x, x_prime, params: KernelParams):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != (params.dim,) or x_prime.shape != (params.dim,):
        raise ValueError(
            f"input dimension mismatch: kernel has D={params.dim}, "
            f"got shapes {x.shape} and {x_prime.shape}"
        )
    return x, x_prime


def se_eval(x, x_prime, params: KernelParams) -> float:
    """Squared-exponential covariance between two D-vectors."""
    x, x_prime = _check(x, x_prime, params)
    r = x - x_prime
    return params.variance * float(np.exp(-0.5 * np.dot(params.weights, r * r)))


def se_grad(x, x_prime, params: KernelParams) -> np.ndarray:
    """Partials of :func:`se_eval` w.r.t. ``(log variance, log w_1..log w_D)``."""
    x, x_prime = _check(x, x_prime, params)
    r = x - x_prime
    value = se_eval(x, x_prime, params)
    return np.concatenate([[value], -0.5 * params.weights * r * r * value])


def se_matrix(X, Xp, params: KernelParams) -> np.ndarray:
    """Gram matrix ``g(X[i], Xp[j])`` for row-stacked inputs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    if X.shape[1] != params.dim or Xp.shape[1] != params.dim:
        raise ValueError(
            f"input dimension mismatch: kernel has D={params.dim}, "
            f"got {X.shape[1]} and {Xp.shape[1]} columns"
        )
    r = X[:, None, :] - Xp[None, :, :]
    return params.variance * np.exp(-0.5 * np.einsum("ijd,d->ij", r * r, params.weights))
