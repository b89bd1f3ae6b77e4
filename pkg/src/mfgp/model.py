"""Two-level autoregressive GP with operator-induced covariance blocks.

The solution prior is ``u = rho * u1 + delta2`` with independent GPs
``u1 ~ GP(0, g1)`` and ``delta2 ~ GP(0, g2)``, so ``g = rho^2 g1 + g2``.
Observations are stacked as ``y = [y0 (u at anchors), y1 (f1), y2 (f2)]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import KernelParams
from .operators import LinearOperatorSpec, kernel_matrix_and_grads

log = logging.getLogger(__name__)

NOISE_NAMES = ("noise_u", "noise_f1", "noise_f2")


class NumericalError(RuntimeError):
    """Covariance factorization or optimization broke down."""


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperParams:
    level1: KernelParams
    level2: KernelParams
    rho: float
    noise_u: float
    noise_f1: float
    noise_f2: float

    def __post_init__(self):
        if self.level1.dim != self.level2.dim:
            raise ValueError("both levels must share the input dimension")
        for name in NOISE_NAMES:
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite non-negative variance, got {v}")
        if not math.isfinite(self.rho):
            raise ValueError("rho must be finite")

    @property
    def dim(self) -> int:
        return self.level1.dim

    @property
    def noises(self):
        return (self.noise_u, self.noise_f1, self.noise_f2)

    def to_vector(self) -> np.ndarray:
        """Unconstrained encoding: log kernel params per level, raw rho, log noise variances."""
        with np.errstate(divide="ignore"):
            return np.concatenate([self.level1.to_log(), self.level2.to_log(), [self.rho],
                                   np.log(self.noises)])

    @classmethod
    def from_vector(cls, v, dim: int) -> "HyperParams":
        v = np.asarray(v, dtype=float)
        k = dim + 1
        return cls(KernelParams.from_log(v[:k]), KernelParams.from_log(v[k:2 * k]), float(v[2 * k]),
                   *(float(np.exp(t)) for t in v[2 * k + 1:2 * k + 4]))

    @staticmethod
    def names(dim: int) -> list[str]:
        out = []
        for lvl in ("level1", "level2"):
            out.append(f"{lvl}.variance")
            out.extend(f"{lvl}.ard.{d}" for d in range(dim))
        return out + ["rho", *NOISE_NAMES]

    def to_dict(self) -> dict:
        """Natural units, JSON friendly."""
        return {
            "level1": {"variance": self.level1.variance, "ard_weights": list(self.level1.ard_weights)},
            "level2": {"variance": self.level2.variance, "ard_weights": list(self.level2.ard_weights)},
            "rho": self.rho,
            "noise_u": self.noise_u,
            "noise_f1": self.noise_f1,
            "noise_f2": self.noise_f2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        return cls(KernelParams(d["level1"]["variance"], tuple(d["level1"]["ard_weights"])),
                   KernelParams(d["level2"]["variance"], tuple(d["level2"]["ard_weights"])),
                   d["rho"], d["noise_u"], d["noise_f1"], d["noise_f2"])


def _block(a, dim):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.empty((0, dim))
    if a.ndim == 1:
        a = a.reshape(-1, 1) if dim == 1 else a.reshape(1, -1)
    return a


@dataclass(frozen=True)
class MultiFidelityDataset:
    """Anchor observations of ``u`` plus low- and high-fidelity observations of ``f``."""

    anchors_x: np.ndarray
    anchors_y: np.ndarray
    low_x: np.ndarray
    low_y: np.ndarray
    high_x: np.ndarray
    high_y: np.ndarray

    def __post_init__(self):
        xs = {}
        for name in ("anchors_x", "low_x", "high_x"):
            x = np.asarray(getattr(self, name), dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            xs[name] = x
        dims = {x.shape[1] for x in xs.values() if x.shape[0]}
        if not dims:
            raise ValueError("dataset has no observations")
        if len(dims) > 1:
            raise ValueError(f"column dimension differs across blocks: {sorted(dims)}")
        dim = dims.pop()
        for xname, yname in (("anchors_x", "anchors_y"), ("low_x", "low_y"), ("high_x", "high_y")):
            x = xs[xname]
            if x.shape[0] == 0:
                x = np.empty((0, dim))
            y = np.asarray(getattr(self, yname), dtype=float).reshape(-1)
            if x.shape[1] != dim:
                raise ValueError(f"{xname} has {x.shape[1]} columns, expected {dim}")
            if x.shape[0] != y.shape[0]:
                raise ValueError(f"{xname} has {x.shape[0]} rows but {yname} has {y.shape[0]} values")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise ValueError(f"non-finite entries in {xname}/{yname}")
            x = x.copy()
            y = y.copy()
            x.setflags(write=False)
            y.setflags(write=False)
            object.__setattr__(self, xname, x)
            object.__setattr__(self, yname, y)

    @property
    def dim(self) -> int:
        return self.anchors_x.shape[1]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.anchors_y), len(self.low_y), len(self.high_y))

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.anchors_y, self.low_y, self.high_y])

    def with_high(self, x, y) -> "MultiFidelityDataset":
        """Copy with extra high-fidelity observations appended."""
        x = _block(x, self.dim)
        return replace(self, high_x=np.vstack([self.high_x, x]),
                       high_y=np.concatenate([self.high_y, np.atleast_1d(y)]))

    def scaled(self, c: float) -> "MultiFidelityDataset":
        return replace(self, anchors_y=c * self.anchors_y, low_y=c * self.low_y, high_y=c * self.high_y)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("anchors_x", "anchors_y", "low_x", "low_y", "high_x", "high_y")} | {"dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "MultiFidelityDataset":
        dim = d["dim"]
        return cls(*(_block(d[k], dim) if k.endswith("_x") else np.asarray(d[k], dtype=float)
                     for k in ("anchors_x", "anchors_y", "low_x", "low_y", "high_x", "high_y")))


def make_dataset(anchors=None, low=None, high=None, dim: int | None = None) -> MultiFidelityDataset:
    """Build a dataset from ``(x, y)`` pairs; ``None`` blocks are empty."""
    blocks = [anchors, low, high]
    if dim is None:
        for b in blocks:
            if b is not None and np.size(b[1]):
                xb = np.asarray(b[0], dtype=float)
                dim = 1 if xb.ndim == 1 else xb.shape[1]
                break
    if dim is None:
        raise ValueError("dataset has no observations")
    args = []
    for b in blocks:
        if b is None:
            args += [np.empty((0, dim)), np.empty(0)]
        else:
            args += [_block(b[0], dim), np.asarray(b[1], dtype=float).reshape(-1)]
    return MultiFidelityDataset(*args)


# ---------------------------------------------------------------------------
# covariance assembly
# ---------------------------------------------------------------------------


def _level_blocks(op, params: KernelParams, data: MultiFidelityDataset, grads: bool):
    X0, X1, X2 = data.anchors_x, data.low_x, data.high_x
    spec = {
        "00": (X0, X0, "uu"), "01": (X0, X1, "uf"), "02": (X0, X2, "uf"),
        "11": (X1, X1, "ff"), "12": (X1, X2, "ff"), "22": (X2, X2, "ff"),
    }
    out = {}
    for key, (A, B, kind) in spec.items():
        if len(A) == 0 or len(B) == 0:
            out[key] = (np.zeros((len(A), len(B))), np.zeros((params.dim + 1, len(A), len(B))) if grads else None)
        else:
            out[key] = kernel_matrix_and_grads(op, params, A, B, kind, grads)
    return out


def _mirror_upper(A):
    """Symmetric matrix from the upper triangle of ``A`` (works on stacked matrices)."""
    upper = np.triu(A)
    return upper + np.swapaxes(np.triu(A, 1), -1, -2)


def _assemble(data, hp: HyperParams, op, grads: bool):
    n0, n1, n2 = data.sizes
    n = n0 + n1 + n2
    s0, s1, s2 = slice(0, n0), slice(n0, n0 + n1), slice(n0 + n1, n)
    B1 = _level_blocks(op, hp.level1, data, grads)
    B2 = _level_blocks(op, hp.level2, data, grads)
    rho = hp.rho
    # per block: (slice pair, coefficient on level 1, d coef / d rho, uses level 2)
    layout = {
        "00": (s0, s0, rho * rho, 2 * rho, True),
        "01": (s0, s1, rho, 1.0, False),
        "02": (s0, s2, rho * rho, 2 * rho, True),
        "11": (s1, s1, 1.0, 0.0, False),
        "12": (s1, s2, rho, 1.0, False),
        "22": (s2, s2, rho * rho, 2 * rho, True),
    }
    D = hp.dim
    K = np.zeros((n, n))
    dK = np.zeros((2 * (D + 1) + 4, n, n)) if grads else None
    for key, (ra, rb, c1, dc1, lvl2) in layout.items():
        v1, g1 = B1[key]
        v2, g2 = B2[key]
        K[ra, rb] = c1 * v1 + (v2 if lvl2 else 0.0)
        if grads:
            dK[:D + 1, ra, rb] = c1 * g1
            if lvl2:
                dK[D + 1:2 * D + 2, ra, rb] = g2
            dK[2 * D + 2, ra, rb] = dc1 * v1
    K = _mirror_upper(K)
    for noise, s in zip(hp.noises, (s0, s1, s2)):
        idx = np.arange(n)[s]
        K[idx, idx] += noise
    if grads:
        dK = _mirror_upper(dK)
        for j, (noise, s) in enumerate(zip(hp.noises, (s0, s1, s2))):
            idx = np.arange(n)[s]
            dK[2 * D + 3 + j, idx, idx] = noise
    return K, dK


def assemble_K(dataset: MultiFidelityDataset, hp: HyperParams, op: LinearOperatorSpec) -> np.ndarray:
    """Full covariance of the stacked observation vector, noise included."""
    _check_dims(dataset, hp, op)
    return _assemble(dataset, hp, op, grads=False)[0]


def _check_dims(dataset, hp, op):
    if not (dataset.dim == hp.dim == op.dim):
        raise ValueError(f"dimension mismatch: data D={dataset.dim}, hyperparameters D={hp.dim}, "
                         f"operator D={op.dim}")


def cholesky_with_jitter(K: np.ndarray, max_relative_jitter: float = 1e-4):
    """Lower Cholesky factor of ``K``, adding diagonal jitter only if needed.

    Tries jitter 0, then ``1e-10 * mean(diag)`` growing tenfold up to
    ``max_relative_jitter * mean(diag)``. Returns ``(L, jitter)``.
    """
    K = np.asarray(K, dtype=float)
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K))) if K.size else 1.0
    if not scale > 0:
        scale = 1.0
    eye = np.eye(K.shape[0])
    rel = 1e-10
    while rel <= max_relative_jitter * (1 + 1e-12):
        jitter = rel * scale
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            rel *= 10
    try:
        lam = float(np.linalg.eigvalsh(K).min())
    except np.linalg.LinAlgError:
        lam = float("nan")
    raise NumericalError(f"Cholesky failed at maximum jitter; smallest eigenvalue estimate {lam:.3e}")


_LOG2PI = math.log(2.0 * math.pi)


def _nlml_from_chol(L, y):
    alpha = cho_solve((L, True), y)
    return 0.5 * y @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * len(y) * _LOG2PI, alpha


def nlml(hp: HyperParams, dataset: MultiFidelityDataset, op: LinearOperatorSpec) -> float:
    """Negative log marginal likelihood of all observations."""
    L, _ = cholesky_with_jitter(assemble_K(dataset, hp, op))
    return float(_nlml_from_chol(L, dataset.y)[0])


def nlml_and_grad(hp: HyperParams, dataset: MultiFidelityDataset, op: LinearOperatorSpec):
    """NLML and its gradient w.r.t. :meth:`HyperParams.to_vector`."""
    _check_dims(dataset, hp, op)
    K, dK = _assemble(dataset, hp, op, grads=True)
    L, _ = cholesky_with_jitter(K)
    y = dataset.y
    value, alpha = _nlml_from_chol(L, y)
    Kinv = cho_solve((L, True), np.eye(len(y)))
    W = Kinv - np.outer(alpha, alpha)
    grad = 0.5 * np.einsum("ij,pij->p", W, dK)
    return float(value), grad


def nlml_grad(hp: HyperParams, dataset: MultiFidelityDataset, op: LinearOperatorSpec) -> np.ndarray:
    return nlml_and_grad(hp, dataset, op)[1]


# ---------------------------------------------------------------------------
# trained model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainedModel:
    hyperparams: HyperParams
    operator: LinearOperatorSpec
    dataset: MultiFidelityDataset
    chol_K: np.ndarray
    weights: np.ndarray
    nlml_value: float
    jitter: float = 0.0
    info: dict = field(default_factory=dict, compare=False)


def build_model(dataset: MultiFidelityDataset, op: LinearOperatorSpec, hp: HyperParams,
                info: dict | None = None) -> TrainedModel:
    """Condition the GP on ``dataset`` at fixed hyperparameters."""
    K = assemble_K(dataset, hp, op)
    L, jitter = cholesky_with_jitter(K)
    value, alpha = _nlml_from_chol(L, dataset.y)
    L.setflags(write=False)
    alpha.setflags(write=False)
    return TrainedModel(hp, op, dataset, L, alpha, float(value), jitter, dict(info or {}))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimizer settings.

    ``freeze`` maps parameter names to values in natural units. Names are
    ``rho``, ``noise_u``, ``noise_f1``, ``noise_f2``, ``level1``/``level2``
    (whole level), ``levelN.variance``, ``levelN.ard`` (all weights) or
    ``levelN.ard.<d>``.
    """

    restarts: int = 10
    seed: int = 0
    max_iterations: int = 1000
    tolerance: float = 1e-6
    # also stop once a step improves the NLML by less than this relative amount;
    # kept near round-off so the gradient tolerance decides convergence
    relative_reduction: float = 1e-13
    memory: int = 10
    noise_floor: float = 1e-8
    freeze: dict = field(default_factory=dict)
    warm_start: HyperParams | None = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


def _freeze_indices(name: str, dim: int) -> list[int]:
    names = HyperParams.names(dim)
    if name in names:
        return [names.index(name)]
    matches = [i for i, n in enumerate(names) if n.startswith(name + ".")]
    if not matches:
        raise ValueError(f"unknown hyperparameter name {name!r} in freeze list")
    return matches


def _frozen_vector(freeze: dict, dim: int):
    """``{index: unconstrained value}`` for frozen parameters."""
    rho_idx = 2 * (dim + 1)
    out = {}
    for name, value in freeze.items():
        value = float(value)
        for i in _freeze_indices(name, dim):
            if i == rho_idx:
                out[i] = value
            elif value > 0:
                out[i] = math.log(value)
            elif value == 0 and i > rho_idx:
                out[i] = -math.inf  # exactly noise-free
            else:
                raise ValueError(f"frozen value for {name} must be positive, got {value}")
    return out


def _median_sq_dist(X):
    if len(X) < 2:
        return 1.0
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)[np.triu_indices(len(X), 1)]
    med = float(np.median(d2))
    return med if med > 0 else 1.0


def _initial_vector(dataset, op, rng, noise_floor) -> np.ndarray:
    from .operators import kernel_matrix  # local: keeps module import order flat

    D = dataset.dim
    X_all = np.vstack([dataset.anchors_x, dataset.low_x, dataset.high_x])
    w0 = 1.0 / _median_sq_dist(X_all)
    blocks = {"anchor": dataset.anchors_y, "low": dataset.low_y, "high": dataset.high_y}

    def block_var(*order):
        for key in order:
            if len(blocks[key]) > 1 and np.var(blocks[key]) > 0:
                return key, float(np.var(blocks[key]))
        return None, 1.0

    v = []
    for order in (("low", "high", "anchor"), ("high", "low", "anchor")):
        key, var = block_var(*order)
        logw = math.log(w0) + rng.normal(size=D)
        # pick the variance so the prior variance of the block's observable matches the data
        unit = KernelParams(1.0, tuple(np.exp(logw)))
        X = X_all[:1]
        kind = "uu" if key in (None, "anchor") else "ff"
        prior = float(kernel_matrix(op, unit, X, X, kind)[0, 0])
        prior = prior if prior > 0 else 1.0
        v.append(math.log(var / prior) + rng.normal())
        v.extend(logw)
    v.append(rng.uniform(0.5, 1.5))
    for key in ("anchor", "low", "high"):
        y = blocks[key]
        var = float(np.var(y)) if len(y) > 1 and np.var(y) > 0 else 1.0
        v.append(max(math.log(1e-2 * var) + rng.normal(), math.log(noise_floor)))
    return np.asarray(v)


LOG_BOX = 25.0
ARD_BOX = 12.0
# within this distance of the upper ARD edge the length scale is under ~1% of the data span
WHITE_LIMIT_MARGIN = 3.0
_FAILED = 1e25  # objective value reported where the covariance cannot be evaluated


def train(dataset: MultiFidelityDataset, op: LinearOperatorSpec, config: TrainConfig | None = None) -> TrainedModel:
    """Fit all hyperparameters by L-BFGS on the NLML from randomized starts."""
    config = config or TrainConfig()
    D = dataset.dim
    if D != op.dim:
        raise ValueError(f"dataset dimension {D} does not match operator dimension {op.dim}")
    frozen = _frozen_vector(config.freeze, D)
    n_params = 2 * (D + 1) + 4
    free = np.array([i for i in range(n_params) if i not in frozen], dtype=int)
    rho_idx = 2 * (D + 1)
    floor = math.log(config.noise_floor)
    # log-parameters live in a wide box; beyond it the kernels under/overflow.
    # ARD weights are boxed relative to the data span: past e^+-ARD_BOX the
    # kernel is constant or white over the data and the NLML only loses precision
    X_all = np.vstack([dataset.anchors_x, dataset.low_x, dataset.high_x])
    span = np.ptp(X_all, axis=0) if len(X_all) > 1 else np.ones(D)
    centre = -2.0 * np.log(np.where(span > 0, span, 1.0))
    bounds = []
    for i in free:
        d = i % (D + 1) - 1
        if i == rho_idx:
            bounds.append((None, None))
        elif i > rho_idx:
            bounds.append((max(floor, -LOG_BOX), LOG_BOX))
        elif d >= 0:
            bounds.append((float(centre[d]) - ARD_BOX, float(centre[d]) + ARD_BOX))
        else:
            bounds.append((-LOG_BOX, LOG_BOX))

    def full(z):
        v = np.empty(n_params)
        for i, val in frozen.items():
            v[i] = val
        v[free] = z
        return v

    def objective(z):
        v = full(z)
        try:
            hp = HyperParams.from_vector(v, D)
        except ValueError:
            return _FAILED, np.zeros_like(z)
        try:
            with np.errstate(over="raise", invalid="raise"):
                value, grad = nlml_and_grad(hp, dataset, op)
        except (NumericalError, FloatingPointError, OverflowError, np.linalg.LinAlgError):
            return _FAILED, np.zeros_like(z)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return _FAILED, np.zeros_like(z)
        return value, grad[free]

    runs = []
    for k in range(config.restarts):
        rng = np.random.default_rng([config.seed, k])
        if k == 0 and config.warm_start is not None:
            v0 = config.warm_start.to_vector()
        else:
            v0 = _initial_vector(dataset, op, rng, config.noise_floor)
        z0 = np.clip(v0[free], [-np.inf if b[0] is None else b[0] for b in bounds],
                     [np.inf if b[1] is None else b[1] for b in bounds])
        f0, _ = objective(z0)
        if len(free) == 0 or config.max_iterations == 0:
            z, f, status = z0, f0, "no free parameters" if len(free) == 0 else "not optimized"
        else:
            res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxcor": config.memory, "maxiter": config.max_iterations,
                                    "gtol": config.tolerance, "ftol": config.relative_reduction})
            z, f, status = res.x, float(res.fun), str(res.message)
            if f > f0:
                z, f = z0, f0
        log.debug("restart %d: nlml %.6g -> %.6g (%s)", k, f0, f, status)
        runs.append({"restart": k, "initial_nlml": float(f0), "final_nlml": float(f), "status": status,
                     "z": z})
    ok = [r for r in runs if r["final_nlml"] < _FAILED]
    if not ok:
        raise NumericalError("every training restart failed to factorize the covariance")
    # an ARD weight near its upper box edge means a kernel that is white over the data, which can
    # win the likelihood by calling every forcing value noise; such fits are a last resort
    upper = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    is_ard = np.array([i < rho_idx and i % (D + 1) != 0 for i in free], dtype=bool)
    for r in runs:
        r["white_limit"] = bool(np.any(is_ard & (r["z"] >= upper - WHITE_LIMIT_MARGIN)))
    interior = [r for r in ok if not r["white_limit"]]
    best = min(interior or ok, key=lambda r: r["final_nlml"])
    hp = HyperParams.from_vector(full(best["z"]), D)
    info = {"restarts": [{k: v for k, v in r.items() if k != "z"} for r in runs],
            "best_restart": best["restart"]}
    return build_model(dataset, op, hp, info)
