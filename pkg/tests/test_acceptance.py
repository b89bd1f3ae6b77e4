"""Acceptance criteria, one test each. Every test records a PASS/FAIL line (see conftest)."""

import json
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from mfgp import io as mio
from mfgp import operators as ops
from mfgp.benchmarks import (NAMES, evaluation_grid, generate_observations, make_problem, operator_identity_error,
                             rel_l2_error, top_dimensions)
from mfgp.checks import catalog, oracle_rows, random_params, refinement_rows
from mfgp.cli import benchmark_row, main
from mfgp.kernels import KernelParams
from mfgp.model import HyperParams, TrainConfig, build_model, make_dataset, nlml, nlml_grad, train
from mfgp.posterior import predict_f, predict_u, run_active_loop


def _config(problem, seed):
    return TrainConfig(restarts=problem.train_restarts, seed=seed, freeze=dict(problem.train_freeze))


def test_kernel_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = {}
    for op in catalog():
        rows = oracle_rows(op, 100, rng)
        key = f"{rows[0].operator}[{op.dim}]"
        worst[key] = max(r.rel_diff for r in rows)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-5 and elapsed < 60
    criterion(1, ok, f"kernel oracle: worst rel diff {max(worst.values()):.2e} over {len(worst)} variants, "
                     f"{elapsed:.0f} s")
    assert ok, worst


def _fd(hp, data, op, h=1e-5):
    v = hp.to_vector()
    out = np.empty_like(v)
    for i in range(len(v)):
        e = np.zeros_like(v)
        e[i] = h
        out[i] = (nlml(HyperParams.from_vector(v + e, hp.dim), data, op)
                  - nlml(HyperParams.from_vector(v - e, hp.dim), data, op)) / (2 * h)
    return out


def test_gradient_correctness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    variants = [ops.identity(1), ops.first_derivative(), ops.integro_differential(0.0), ops.laplacian(2),
                ops.advection_diffusion_reaction(), ops.fractional(0.3), ops.fractional(1.5)]
    worst = 0.0
    for op in variants:
        for _ in range(2):
            sizes = (2, 5, 3)
            blocks = [(rng.uniform(size=(n, op.dim)), rng.normal(size=n)) for n in sizes]
            data = make_dataset(*blocks, dim=op.dim)
            hp = HyperParams(random_params(rng, op.dim), random_params(rng, op.dim), rng.uniform(0.5, 1.5),
                             *rng.uniform(0.01, 0.1, size=3))
            g, fd = nlml_grad(hp, data, op), _fd(hp, data, op)
            worst = max(worst, float(np.max(np.abs(g - fd) / np.abs(fd))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 120
    criterion(2, ok, f"NLML gradient vs central differences: worst rel diff {worst:.2e}, {elapsed:.0f} s")
    assert ok


def _one_level_gp(X0, y0, X2, y2, s, w, n0, n2, Q):
    """Plain GP for u' = f with hand-written squared-exponential derivatives."""

    def k(a, b):
        return s * np.exp(-0.5 * w * (a[:, None] - b[None, :]) ** 2)

    def k_uf(a, b):  # cov(u(a), u'(b))
        d = a[:, None] - b[None, :]
        return s * w * d * np.exp(-0.5 * w * d * d)

    def k_ff(a, b):
        d = a[:, None] - b[None, :]
        return s * w * (1 - w * d * d) * np.exp(-0.5 * w * d * d)

    K = np.block([[k(X0, X0) + n0 * np.eye(len(X0)), k_uf(X0, X2)],
                  [k_uf(X0, X2).T, k_ff(X2, X2) + n2 * np.eye(len(X2))]])
    y = np.concatenate([y0, y2])
    alpha = np.linalg.solve(K, y)
    value = 0.5 * y @ alpha + 0.5 * np.linalg.slogdet(K)[1] + 0.5 * len(y) * np.log(2 * np.pi)
    a_u = np.hstack([k(Q, X0), k_uf(Q, X2)])
    a_f = np.hstack([-k_uf(Q, X0), k_ff(Q, X2)])
    Kinv = np.linalg.inv(K)
    var_u = s - np.einsum("ij,jk,ik->i", a_u, Kinv, a_u)
    var_f = s * w - np.einsum("ij,jk,ik->i", a_f, Kinv, a_f)
    return value, a_u @ alpha, var_u, a_f @ alpha, var_f


def test_single_fidelity_reduction(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(5):
        X0, X2 = rng.uniform(size=2), rng.uniform(size=8)
        y0, y2 = rng.normal(size=2), rng.normal(size=8)
        # noise levels keep cond(K) in the hundreds so two independent float evaluations can agree to 1e-12
        s, w, n0, n2 = rng.uniform(0.5, 2), rng.uniform(1, 30), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2)
        hp = HyperParams(random_params(rng, 1), KernelParams(s, (w,)), 0.0, n0, 0.3, n2)
        data = make_dataset(anchors=(X0, y0), high=(X2, y2))
        model = build_model(data, ops.first_derivative(), hp)
        Q = rng.uniform(-0.2, 1.2, size=15)
        ref = _one_level_gp(X0, y0, X2, y2, s, w, n0, n2, Q)
        pu, pf = predict_u(model, Q), predict_f(model, Q)
        got = (model.nlml_value, pu.mean, pu.variance, pf.mean, pf.variance)
        # relative error of each quantity as a vector over the queries
        for a, b in zip(got, ref):
            worst = max(worst, float(np.linalg.norm(np.atleast_1d(a) - b) / np.linalg.norm(b)))
    ok = worst < 1e-12
    criterion(3, ok, f"single-fidelity reduction vs hand-coded one-level GP: worst rel diff {worst:.2e}")
    assert ok


@pytest.mark.slow
def test_integro_differential_multi_fidelity_gain(criterion):
    t0 = time.perf_counter()
    problem = make_problem("integro1d")
    rows = [benchmark_row(problem, seed, _config(problem, seed)) for seed in range(10)]
    mf = np.array([r["rel_err_u_mf"] for r in rows])
    sf = np.array([r["rel_err_u_sf"] for r in rows])
    wins = int(np.sum(mf < sf))
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and np.median(mf) < 0.2 and elapsed < 300
    criterion(4, ok, f"integro1d: multi-fidelity wins {wins}/10, median u error {np.median(mf):.3f} "
                     f"(single {np.median(sf):.3f}), {elapsed:.0f} s")
    assert ok, list(zip(mf.round(3), sf.round(3)))


@pytest.mark.slow
def test_poisson_active_learning(criterion):
    t0 = time.perf_counter()
    problem = make_problem("poisson2d")
    history = run_active_loop(problem, 20, _config(problem, 0), seed=0)
    err_u, err_f = history.column("rel_err_u"), history.column("rel_err_f")
    elapsed = time.perf_counter() - t0
    dropped = err_u[-1] <= err_u[0] / 10
    # the plateau starts at the first iteration whose u-error is already within the 10x target
    reached = np.nonzero(err_u <= err_u[0] / 10)[0]
    plateau = int(reached[0]) if len(reached) else len(err_u)
    bounded = bool(np.all(err_u[:plateau] <= 2 * err_f[:plateau]))
    ok = dropped and bounded and elapsed < 900
    criterion(5, ok, f"poisson2d active learning: u error {err_u[0]:.3e} -> {err_u[-1]:.3e} "
                     f"({err_u[0] / err_u[-1]:.1f}x), u <= 2 f before plateau (iteration {plateau}): {bounded}, "
                     f"{elapsed:.0f} s")
    assert ok, list(zip(err_u, err_f))


@pytest.mark.slow
def test_advection_diffusion_reaction(criterion):
    problem = make_problem("adr1d")
    E = evaluation_grid(problem)
    u = problem.u_exact(E)
    errors, coverage = [], []
    for seed in range(5):
        model = train(generate_observations(problem, seed), problem.operator, _config(problem, seed))
        p = predict_u(model, E)
        errors.append(rel_l2_error(p.mean, u))
        coverage.append(float(np.mean(np.abs(p.mean - u) <= 3 * p.std)))
    ok = np.median(errors) < 0.3 and min(coverage) >= 0.9
    criterion(6, ok, f"adr1d: median u error {np.median(errors):.3f}, min 3-std coverage {min(coverage):.3f}")
    assert ok, (errors, coverage)


@pytest.mark.slow
def test_ard_discovers_active_dimensions(criterion):
    t0 = time.perf_counter()
    problem = make_problem("poisson10d")
    level2, level1 = [], []
    for seed in range(5):
        model = train(generate_observations(problem, seed), problem.operator, _config(problem, seed))
        level2.append(top_dimensions(model, "level2", 2))
        level1.append(top_dimensions(model, "level1", 2))
    hits = sum(sorted(t) == [0, 2] for t in level2)
    elapsed = time.perf_counter() - t0
    ok = hits >= 4 and elapsed < 600
    # level 1 is reported alongside: at the generating rho the level-2 discrepancy has no
    # x_1 x_3 component, so the active pair can sit in the level-1 weights instead
    criterion(7, ok, f"poisson10d: level-2 top pair is (1, 3) in {hits}/5 seeds {level2}; "
                     f"level-1 top pairs {level1}, {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_fractional_sub_diffusion(criterion):
    problem = make_problem("fractional1d")
    E = evaluation_grid(problem)
    u = problem.u_exact(E)
    errors, unconverged = [], 0
    for seed in range(5):
        data = generate_observations(problem, seed)
        model = train(data, problem.operator, _config(problem, seed))
        errors.append(rel_l2_error(predict_u(model, E).mean, u))
        X = np.vstack([data.anchors_x, data.low_x, data.high_x])
        for level in (model.hyperparams.level1, model.hyperparams.level2):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ops.QuadratureWarning)
                if ops.check_quadrature(problem.operator, level, X):
                    unconverged += 1
    refine = max(r.rel_diff for r in refinement_rows(0.3, 50, np.random.default_rng(8)))
    ok = np.median(errors) < 0.3 and refine < 1e-6 and unconverged == 0
    criterion(8, ok, f"fractional1d: median u error {np.median(errors):.3f} {np.round(errors, 3).tolist()}, "
                     f"refinement change {refine:.1e}, unconverged trained kernels {unconverged}")
    assert ok


def test_operator_identity(criterion):
    worst = {}
    for name in NAMES:
        problem = make_problem(name)
        n = 20 if problem.operator.variant == "fractional" else 50
        worst[name] = operator_identity_error(problem, n_points=n)
    ok = all(v < (1e-3 if make_problem(k).operator.variant == "fractional" else 1e-4) for k, v in worst.items())
    criterion(9, ok, "operator identity L u = f: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def _cli_configs(tmp: Path):
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(6, 1))
    mio.write_observations(tmp / "anchors.csv", [[0.0]], [0.0])
    mio.write_observations(tmp / "high.csv", x, np.cos(x[:, 0]))
    mio.write_csv(tmp / "queries.csv", ["x_1"], [[v] for v in np.linspace(0, 1, 11)])
    train = {"restarts": 2, "seed": 4}
    return {
        "train": {"command": "train", "operator": {"variant": "first_derivative"},
                  "data": {"anchors": "anchors.csv", "high": "high.csv"}, "train": train},
        "predict": {"command": "predict", "operator": {"variant": "first_derivative"},
                    "data": {"anchors": "anchors.csv", "high": "high.csv", "queries": "queries.csv"},
                    "train": train},
        "active-learn": {"command": "active-learn", "problem": "integro1d", "train": {"restarts": 1, "seed": 4},
                         "eval": {"budget": 2, "candidates": [25]}},
        "benchmark": {"command": "benchmark", "problem": "integro1d", "train": train, "eval": {"seeds": [0, 1]}},
        "kernel-check": {"command": "kernel-check", "train": {"seed": 4}, "eval": {"pairs": 3}},
    }


def test_cli_determinism(criterion, tmp_path):
    differing = []
    for command, doc in _cli_configs(tmp_path).items():
        outputs = []
        for run_id in ("first", "second"):
            out = tmp_path / command / run_id
            cfg = tmp_path / f"{command}.json"
            cfg.write_text(json.dumps({**doc, "output_dir": str(out)}))
            assert main([str(cfg)]) == 0
            files = sorted(p for p in out.iterdir() if p.suffix in (".csv", ".json") and p.name != "report.json")
            outputs.append({p.name: p.read_bytes() for p in files})
        assert outputs[0], command
        if outputs[0] != outputs[1]:
            differing.append(command)
    ok = not differing
    criterion(10, ok, f"CLI outputs byte-identical across two runs for {len(_cli_configs(tmp_path))} commands"
                      + (f"; differing: {differing}" if differing else ""))
    assert ok
