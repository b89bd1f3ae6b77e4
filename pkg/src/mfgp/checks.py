"""Closed-form kernels against the numeric oracle, and fractional self-refinement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .kernels import KernelParams

ORACLE_TOLERANCE = 1e-4
REFINEMENT_TOLERANCE = 1e-6


def catalog() -> list[ops.LinearOperatorSpec]:
    """Every closed-form operator variant, at the dimensions the benchmarks use (10D excepted)."""
    return [
        ops.identity(1),
        ops.identity(2),
        ops.first_derivative(),
        ops.integro_differential(0.0),
        ops.integro_differential(0.2),
        ops.laplacian(1),
        ops.laplacian(3),
        ops.advection_diffusion_reaction(),
    ]


def random_params(rng, dim: int) -> KernelParams:
    """Variance in [0.5, 2], ARD weights log-uniform in [0.5, 5]."""
    return KernelParams(rng.uniform(0.5, 2.0), tuple(np.exp(rng.uniform(np.log(0.5), np.log(5.0), dim))))


@dataclass(frozen=True)
class CheckRow:
    operator: str
    dim: int
    kind: str
    index: int
    closed_form: float
    reference: float
    rel_diff: float

    def fields(self) -> list:
        return [self.operator, str(self.dim), self.kind, str(self.index), self.closed_form, self.reference,
                self.rel_diff]


CHECK_COLUMNS = ["operator", "dim", "kind", "index", "closed_form", "reference", "rel_diff"]


def relative_diff(value: float, reference: float) -> float:
    return abs(value - reference) / (abs(reference) + 1e-12)


def oracle_rows(op: ops.LinearOperatorSpec, pairs: int, rng) -> list[CheckRow]:
    """``ff`` and ``uf`` kernels at ``pairs`` random ``(x, x', theta)`` triples."""
    name = op.variant if op.variant != "integro_differential" else f"integro_differential[a={op.lower_bound:g}]"
    rows = []
    for i in range(pairs):
        params = random_params(rng, op.dim)
        x = rng.uniform(size=op.dim)
        xp = rng.uniform(size=op.dim)
        for kind, side, fn in (("ff", "both", ops.op_kernel_ff), ("uf", "right", ops.op_kernel_uf)):
            ref = ops.op_kernel_numeric_oracle(op, params, x, xp, side)
            val = fn(op, params, x, xp)
            rows.append(CheckRow(name, op.dim, kind, i, val, ref, relative_diff(val, ref)))
    return rows


def refinement_rows(alpha: float, pairs: int, rng, quad: ops.QuadratureSpec = ops.QuadratureSpec()) -> list[CheckRow]:
    """Fractional kernels at the base rule against the rule with doubled nodes and cutoff.

    ``rel_diff`` is scaled by the zero-lag value, the kernel's maximum.
    """
    rows = []
    fine = quad.refined()
    for i in range(pairs):
        params = random_params(rng, 1)
        x = rng.uniform(size=1)
        xp = rng.uniform(size=1)
        for kind in ("ff", "uf"):
            val = ops.fractional_kernel_complex(alpha, params, x, xp, quad, kind).real
            ref = ops.fractional_kernel_complex(alpha, params, x, xp, fine, kind).real
            scale = abs(ops.fractional_kernel_complex(alpha, params, x, x, fine, "ff").real)
            rows.append(CheckRow(f"fractional[alpha={alpha:g}]", 1, kind, i, val, ref, abs(val - ref) / scale))
    return rows
