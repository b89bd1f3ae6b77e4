"""Posterior prediction of the solution and forcing, and max-variance active learning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from .model import MultiFidelityDataset, NumericalError, TrainConfig, TrainedModel, train
from .operators import kernel_diag, kernel_matrix

log = logging.getLogger(__name__)

VARIANCE_FLOOR = -1e-10


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: np.ndarray
    variance: np.ndarray
    raw_variance: np.ndarray = field(repr=False)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self):
        return len(self.mean)


def _queries(model: TrainedModel, queries) -> np.ndarray:
    D = model.dataset.dim
    Q = np.asarray(queries, dtype=float)
    if Q.size == 0:
        return np.empty((0, D))
    if Q.ndim == 1:
        Q = Q.reshape(-1, 1) if D == 1 else Q.reshape(1, -1)
    if Q.ndim != 2 or Q.shape[1] != D:
        raise ValueError(f"query points must have {D} columns, got shape {Q.shape}")
    return Q


def _cross(model: TrainedModel, Q, target: str):
    """Covariance row-block between ``target`` ('u' or 'f') at Q and the stacked observations."""
    hp, op, data = model.hyperparams, model.operator, model.dataset
    rho = hp.rho
    if target == "u":
        kinds = ("uu", "uf", "uf")
    else:
        kinds = ("fu", "ff", "ff")
    blocks = []
    for X, kind, c1, lvl2 in ((data.anchors_x, kinds[0], rho * rho, True),
                              (data.low_x, kinds[1], rho, False),
                              (data.high_x, kinds[2], rho * rho, True)):
        if len(X) == 0:
            blocks.append(np.zeros((len(Q), 0)))
            continue
        B = c1 * kernel_matrix(op, hp.level1, Q, X, kind)
        if lvl2:
            B = B + kernel_matrix(op, hp.level2, Q, X, kind)
        blocks.append(B)
    return np.hstack(blocks)


def _prior_diag(model: TrainedModel, Q, target: str):
    hp, op = model.hyperparams, model.operator
    if target == "u":
        return np.full(len(Q), hp.rho ** 2 * hp.level1.variance + hp.level2.variance)
    return hp.rho ** 2 * kernel_diag(op, hp.level1, Q, "ff") + kernel_diag(op, hp.level2, Q, "ff")


def _predict(model: TrainedModel, queries, target: str) -> PosteriorPrediction:
    Q = _queries(model, queries)
    if len(Q) == 0:
        empty = np.empty(0)
        return PosteriorPrediction(empty, empty, empty)
    A = _cross(model, Q, target)
    mean = A @ model.weights
    V = solve_triangular(model.chol_K, A.T, lower=True)
    raw = _prior_diag(model, Q, target) - np.sum(V * V, axis=0)
    worst = float(raw.min())
    if worst < VARIANCE_FLOOR * max(1.0, float(np.max(np.abs(_prior_diag(model, Q[:1], target))))):
        log.warning("posterior %s variance %.3e below numerical floor", target, worst)
    return PosteriorPrediction(mean, np.maximum(raw, 0.0), raw)


def predict_u(model: TrainedModel, queries) -> PosteriorPrediction:
    """Posterior mean and variance of the solution at the query points."""
    return _predict(model, queries, "u")


def predict_f(model: TrainedModel, queries) -> PosteriorPrediction:
    """Posterior mean and variance of the (high-fidelity) forcing at the query points."""
    return _predict(model, queries, "f")


def select_next(model: TrainedModel, candidates):
    """Candidate with the largest forcing variance; ties go to the lowest index."""
    C = _queries(model, candidates)
    if len(C) == 0:
        raise ValueError("candidate set is empty")
    var = predict_f(model, C).variance
    i = int(np.argmax(var))
    return i, C[i].copy()


# ---------------------------------------------------------------------------
# active learning loop
# ---------------------------------------------------------------------------


@dataclass
class ActiveLearningStep:
    iteration: int
    n_high: int
    selected: np.ndarray
    max_var_f: float
    rel_err_u: float
    rel_err_f: float


@dataclass
class ActiveLearningHistory:
    steps: list = field(default_factory=list)
    model: TrainedModel | None = None

    def __len__(self):
        return len(self.steps)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])


class ActiveLearningError(NumericalError):
    """Training failed mid-loop; ``history`` holds the completed iterations."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def run_active_loop(problem, budget: int, config: TrainConfig | None = None, *,
                    seed: int = 0, candidates=None, eval_points=None,
                    dataset: MultiFidelityDataset | None = None,
                    warm_start: bool = False) -> ActiveLearningHistory:
    """Train, pick the max-variance forcing location, observe it, repeat ``budget`` times.

    ``candidates`` defaults to the problem's candidate grid and
    ``eval_points`` to its evaluation grid. New observations use the
    problem's high-fidelity forcing and noise level. With ``warm_start``
    the previous iteration's hyperparameters seed the first restart.
    """
    from .benchmarks import candidate_grid, evaluation_grid, generate_observations, rel_l2_error

    if budget < 0:
        raise ValueError("budget must be non-negative")
    config = config or TrainConfig(seed=seed)
    data = dataset if dataset is not None else generate_observations(problem, seed)
    C = candidate_grid(problem) if candidates is None else np.asarray(candidates, dtype=float)
    E = evaluation_grid(problem) if eval_points is None else np.asarray(eval_points, dtype=float)
    u_true = problem.u_exact(E) if problem.u_exact is not None else None
    f_true = problem.f_high(E)
    noise_rng = np.random.default_rng([seed, 7919])
    history = ActiveLearningHistory()
    warm = config.warm_start
    for it in range(budget + 1):
        cfg = replace(config, warm_start=warm)
        try:
            model = train(data, problem.operator, cfg)
        except NumericalError as exc:
            raise ActiveLearningError(f"training failed at iteration {it}: {exc}", history) from exc
        idx, x_star = select_next(model, C)
        max_var = float(predict_f(model, C[idx:idx + 1]).variance[0])
        err_u = rel_l2_error(predict_u(model, E).mean, u_true) if u_true is not None else float("nan")
        err_f = rel_l2_error(predict_f(model, E).mean, f_true)
        history.steps.append(ActiveLearningStep(it, data.sizes[2], x_star, max_var, err_u, err_f))
        history.model = model
        log.info("iteration %d: n2=%d max Vf=%.3e err_u=%.3e err_f=%.3e",
                 it, data.sizes[2], max_var, err_u, err_f)
        if it == budget:
            break
        y_new = problem.f_high(x_star[None, :])[0] + problem.noise_std[2] * noise_rng.standard_normal()
        data = data.with_high(x_star[None, :], [y_new])
        if warm_start:
            warm = model.hyperparams
    return history
