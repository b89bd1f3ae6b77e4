"""Command-line front end.

    mfgp CONFIG.json [--output-dir DIR] [--plot] [-v]

Exit status: 0 success, 1 usage error, 2 numerical failure (including a
failed kernel check). CSV outputs depend only on the config and seed;
timestamps and wall times go to ``report.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import benchmarks as bm
from . import io as mio
from .checks import (CHECK_COLUMNS, ORACLE_TOLERANCE, REFINEMENT_TOLERANCE, catalog, oracle_rows,
                     refinement_rows)
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .model import MultiFidelityDataset, NumericalError, TrainConfig, TrainedModel, make_dataset, train
from .operators import QuadratureWarning, check_quadrature
from .posterior import ActiveLearningError, predict_f, predict_u, run_active_loop

log = logging.getLogger("mfgp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

BENCHMARK_COLUMNS = ["problem", "seed", "n0", "n1", "n2", "rel_err_u_mf", "rel_err_f_mf",
                     "rel_err_u_sf", "rel_err_f_sf", "nlml_mf", "nlml_sf"]


class UsageError(Exception):
    pass


class _Run:
    """State shared by the command handlers: config, output directory, report."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.problem = bm.make_problem(cfg.problem) if cfg.problem not in (None, "all") else None
        self.report: dict = {
            "command": cfg.command,
            "version": __version__,
            "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "problem": cfg.problem,
            "seed": cfg.seed,
            "outputs": [],
            "quadrature_warnings": [],
            "notes": list(self.problem.notes) if self.problem else [],
        }

    def path(self, name: str) -> Path:
        p = self.out / name
        self.report["outputs"].append(name)
        return p

    # -- inputs ----------------------------------------------------------

    def operator(self):
        if self.cfg.operator is not None:
            return self.cfg.operator.spec()
        if self.problem is not None:
            return self.problem.operator
        raise UsageError("no operator: set 'operator' or 'problem'")

    def train_config(self, problem=None) -> TrainConfig:
        problem = problem or self.problem
        t = self.cfg.train
        freeze = dict(problem.train_freeze) if problem else {}
        freeze.update(dict(t.freeze))
        restarts = t.restarts if t.restarts is not None else (problem.train_restarts if problem else 10)
        return TrainConfig(restarts=restarts, seed=t.seed, max_iterations=t.max_iterations,
                           tolerance=t.tolerance, noise_floor=t.noise_floor, freeze=freeze)

    def dataset(self, dim: int) -> MultiFidelityDataset:
        files = {k: self.cfg.data[k] for k in ("anchors", "low", "high") if k in self.cfg.data}
        if not files:
            if self.problem is None:
                raise UsageError("no data: give data.anchors/low/high or a problem")
            return bm.generate_observations(self.problem, self.cfg.seed)
        blocks = {}
        for key, path in files.items():
            X, y = mio.read_observations(path)
            if X.shape[1] != dim:
                raise UsageError(f"data.{key}: {X.shape[1]} input columns, operator has dimension {dim}")
            blocks[key] = (X, y)
        return make_dataset(blocks.get("anchors"), blocks.get("low"), blocks.get("high"), dim=dim)

    def eval_points(self, dim: int, required: bool = True):
        e = self.cfg.eval
        if "queries" in self.cfg.data:
            Q = mio.read_points(self.cfg.data["queries"])
            if len(Q) and Q.shape[1] != dim:
                raise UsageError(f"data.queries: {Q.shape[1]} columns, model has dimension {dim}")
            return Q.reshape(-1, dim)
        if e.grid is not None:
            bounds = e.bounds or (self.problem.domain if self.problem else ((0.0, 1.0),) * dim)
            if len(bounds) != dim:
                raise UsageError(f"eval.bounds: {len(bounds)} intervals for dimension {dim}")
            counts = e.grid if len(e.grid) == dim else e.grid * dim if len(e.grid) == 1 else None
            if counts is None:
                raise UsageError(f"eval.grid: give 1 or {dim} counts")
            axes = [np.linspace(lo, hi, k) for (lo, hi), k in zip(bounds, counts)]
            return np.column_stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")])
        if self.problem is not None:
            return bm.evaluation_grid(self.problem)
        if required:
            raise UsageError("no evaluation points: give data.queries, eval.grid or a problem")
        return None

    # -- outputs ---------------------------------------------------------

    def record_model(self, model: TrainedModel):
        hp = model.hyperparams
        self.report["nlml"] = model.nlml_value
        self.report["jitter"] = model.jitter
        self.report["hyperparameters"] = hp.to_dict()
        self.report["operator"] = model.operator.to_dict()
        self.report["sizes"] = dict(zip(("n0", "n1", "n2"), model.dataset.sizes))
        if model.info:
            self.report["training"] = model.info
        if model.operator.variant == "fractional":
            X = np.vstack([model.dataset.anchors_x, model.dataset.low_x, model.dataset.high_x])
            for level in (hp.level1, hp.level2):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", QuadratureWarning)
                    msg = check_quadrature(model.operator, level, X)
                if msg:
                    self.report["quadrature_warnings"].append(msg)

    def record_errors(self, model, points):
        if self.problem is None or self.problem.operator != model.operator or points is None:
            return
        if self.problem.u_exact is not None:
            self.report["rel_err_u"] = bm.rel_l2_error(predict_u(model, points).mean, self.problem.u_exact(points))
        self.report["rel_err_f"] = bm.rel_l2_error(predict_f(model, points).mean, self.problem.f_high(points))

    def plot_posterior(self, model, points, name="posterior.png"):
        if not self.cfg.plot or points is None or len(points) == 0 or model.dataset.dim > 2:
            return
        from . import plotting

        pu = predict_u(model, points)
        known = self.problem is not None and self.problem.operator == model.operator
        u_ex = self.problem.u_exact(points) if known and self.problem.u_exact else None
        if model.dataset.dim == 1:
            f_ex = self.problem.f_high(points) if known else None
            plotting.posterior_1d(self.path(name), points, pu, predict_f(model, points), model.dataset, u_ex, f_ex)
        elif self.cfg.eval.grid is not None or self.problem is not None:
            plotting.posterior_2d(self.path(name), points, pu, u_ex)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_train(run: _Run) -> int:
    op = run.operator()
    data = run.dataset(op.dim)
    model = train(data, op, run.train_config())
    mio.save_model(run.path("model.json"), model)
    run.record_model(model)
    points = run.eval_points(op.dim, required=False)
    run.record_errors(model, points)
    run.plot_posterior(model, points)
    return EXIT_OK


def _cmd_predict(run: _Run) -> int:
    if "model" in run.cfg.data:
        model = mio.load_model(run.cfg.data["model"])
    else:
        op = run.operator()
        model = train(run.dataset(op.dim), op, run.train_config())
        mio.save_model(run.path("model.json"), model)
    run.record_model(model)
    points = run.eval_points(model.dataset.dim)
    pu, pf = predict_u(model, points), predict_f(model, points)
    mio.write_predictions(run.path("predictions.csv"), points.reshape(len(points), model.dataset.dim), pu, pf)
    if len(points):
        run.record_errors(model, points)
        run.plot_posterior(model, points)
    return EXIT_OK


def _cmd_active(run: _Run) -> int:
    problem = run.problem
    e = run.cfg.eval
    candidates = bm.candidate_grid(problem, e.candidates) if e.candidates else None
    points = run.eval_points(problem.dim)
    try:
        history = run_active_loop(problem, e.budget, run.train_config(), seed=run.cfg.seed,
                                  candidates=candidates, eval_points=points, warm_start=e.warm_start)
    except ActiveLearningError as exc:
        if exc.history.steps:
            mio.write_history(run.path("history.csv"), exc.history, problem.dim)
        raise
    mio.write_history(run.path("history.csv"), history, problem.dim)
    mio.save_model(run.path("model.json"), history.model)
    run.record_model(history.model)
    run.report["budget"] = e.budget
    if run.cfg.plot:
        from . import plotting

        plotting.active_history(run.path("history.png"), history)
        run.plot_posterior(history.model, points)
    return EXIT_OK


def single_fidelity(data: MultiFidelityDataset) -> MultiFidelityDataset:
    """The same anchors and high-fidelity data with the low-fidelity block removed."""
    return dataclasses.replace(data, low_x=np.empty((0, data.dim)), low_y=np.empty(0))


SINGLE_FIDELITY_FREEZE = {"rho": 0.0, "level1": 1.0}


def benchmark_row(problem, seed: int, config: TrainConfig) -> dict:
    """Multi- and single-fidelity errors for one problem and seed."""
    data = bm.generate_observations(problem, seed)
    E = bm.evaluation_grid(problem)
    u_true = problem.u_exact(E)
    f_true = problem.f_high(E)
    row = {"problem": problem.name, "seed": seed}
    row.update(zip(("n0", "n1", "n2"), data.sizes))
    for tag, d, freeze in (("mf", data, {}), ("sf", single_fidelity(data), SINGLE_FIDELITY_FREEZE)):
        cfg = dataclasses.replace(config, freeze={**config.freeze, **freeze})
        model = train(d, problem.operator, cfg)
        row[f"rel_err_u_{tag}"] = bm.rel_l2_error(predict_u(model, E).mean, u_true)
        row[f"rel_err_f_{tag}"] = bm.rel_l2_error(predict_f(model, E).mean, f_true)
        row[f"nlml_{tag}"] = model.nlml_value
    return row


def _cmd_benchmark(run: _Run) -> int:
    names = bm.NAMES if run.cfg.problem == "all" else (run.cfg.problem,)
    seeds = run.cfg.eval.seeds or (run.cfg.seed,)
    rows = []
    for name in names:
        problem = bm.make_problem(name)
        for seed in seeds:
            config = dataclasses.replace(run.train_config(problem), seed=seed)
            row = benchmark_row(problem, seed, config)
            log.info("%s seed %d: u error mf %.4g sf %.4g", name, seed, row["rel_err_u_mf"], row["rel_err_u_sf"])
            rows.append(row)
        for note in problem.notes:
            if note not in run.report["notes"]:
                run.report["notes"].append(note)
    text_cols = ("problem", "seed", "n0", "n1", "n2")
    mio.write_csv(run.path("benchmark.csv"), BENCHMARK_COLUMNS,
                  ([str(r[c]) if c in text_cols else r[c] for c in BENCHMARK_COLUMNS] for r in rows))
    run.report["seeds"] = list(seeds)
    if run.cfg.plot:
        from . import plotting

        plotting.benchmark_errors(run.path("benchmark.png"), rows)
    return EXIT_OK


def _cmd_kernel_check(run: _Run) -> int:
    rng = np.random.default_rng(run.cfg.seed)
    pairs = run.cfg.eval.pairs
    rows = []
    for op in catalog():
        rows += oracle_rows(op, pairs, rng)
    oracle_worst = max(r.rel_diff for r in rows)
    # a fractional operator in the config picks the order and quadrature under test
    if run.cfg.operator and run.cfg.operator.variant == "fractional":
        spec = run.cfg.operator.spec()
        frac = refinement_rows(spec.alpha, pairs, rng, spec.quadrature)
    else:
        frac = refinement_rows(0.3, pairs, rng)
    frac_worst = max(r.rel_diff for r in frac)
    mio.write_csv(run.path("kernel_check.csv"), CHECK_COLUMNS, (r.fields() for r in rows + frac))
    run.report["max_oracle_rel_diff"] = oracle_worst
    run.report["max_refinement_change"] = frac_worst
    failed = oracle_worst > ORACLE_TOLERANCE or frac_worst > REFINEMENT_TOLERANCE
    run.report["passed"] = not failed
    print(f"closed form vs oracle: worst relative difference {oracle_worst:.3e} (limit {ORACLE_TOLERANCE:g})")
    print(f"fractional refinement: worst relative change {frac_worst:.3e} (limit {REFINEMENT_TOLERANCE:g})")
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {
    "train": _cmd_train,
    "predict": _cmd_predict,
    "active-learn": _cmd_active,
    "benchmark": _cmd_benchmark,
    "kernel-check": _cmd_kernel_check,
}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg``; writes outputs and ``report.json`` into ``cfg.output_dir``."""
    try:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", cfg.output_dir, exc)
        return EXIT_USAGE
    state = _Run(cfg)
    t0 = time.perf_counter()
    try:
        status = COMMANDS[cfg.command](state)
    except (UsageError, ConfigError, mio.FormatError, FileNotFoundError) as exc:
        log.error("%s", exc)
        state.report["error"] = str(exc)
        status = EXIT_USAGE
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        state.report["error"] = str(exc)
        status = EXIT_NUMERICAL
    except ValueError as exc:
        log.error("%s", exc)
        state.report["error"] = str(exc)
        status = EXIT_USAGE
    state.report["wall_time_s"] = time.perf_counter() - t0
    state.report["exit_status"] = status
    (Path(cfg.output_dir) / "report.json").write_text(
        json.dumps(state.report, indent=2, default=_jsonable) + "\n", encoding="utf-8")
    return status


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mfgp", description="Multi-fidelity GP solver for linear integro-differential equations.")
    p.add_argument("config", help="JSON run configuration")
    p.add_argument("--output-dir", help="override the config's output_dir")
    p.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSV files")
    p.add_argument("--print-config", action="store_true", help="print the normalized config and exit")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"mfgp: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.output_dir:
        cfg = dataclasses.replace(cfg, output_dir=Path(args.output_dir))
    if args.plot:
        cfg = dataclasses.replace(cfg, plot=True)
    if args.print_config:
        sys.stdout.write(serialize_config(cfg))
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
