"""PNG figures rendered next to the CSV outputs (off-screen, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.linewidth": 0.3,
    "grid.alpha": 0.5,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.5,
    "legend.frameon": False,
    "font.size": 10,
}
# fixed metadata keeps re-rendered files identical
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def posterior_1d(path, X, pred_u, pred_f, dataset=None, u_exact=None, f_exact=None) -> Path:
    """Mean and 2-std band for ``u`` (top) and ``f`` (bottom) on a 1D grid."""
    x = np.asarray(X, dtype=float)[:, 0]
    order = np.argsort(x)
    x = x[order]
    with plt.rc_context(STYLE):
        fig, (au, af) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 6.0))
        for ax, pred, exact, label in ((au, pred_u, u_exact, "u"), (af, pred_f, f_exact, "f")):
            m, s = pred.mean[order], pred.std[order]
            ax.fill_between(x, m - 2 * s, m + 2 * s, color="C0", alpha=0.2, lw=0, label="±2 std")
            ax.plot(x, m, color="C0", label="posterior mean")
            if exact is not None:
                ax.plot(x, np.asarray(exact)[order], "k--", lw=1.0, label="exact")
            ax.set_ylabel(label)
        if dataset is not None:
            au.plot(dataset.anchors_x[:, 0], dataset.anchors_y, "ks", ms=5, label="anchors")
            af.plot(dataset.low_x[:, 0], dataset.low_y, "o", color="C1", ms=4, label="low fidelity")
            af.plot(dataset.high_x[:, 0], dataset.high_y, "x", color="C3", ms=6, mew=1.5, label="high fidelity")
        af.set_xlabel("x")
        au.legend(loc="best", fontsize=8)
        af.legend(loc="best", fontsize=8)
        return _save(fig, path)


def posterior_2d(path, X, pred_u, u_exact=None, shape=None) -> Path:
    """Posterior mean, std and (if known) absolute error of ``u`` on a tensor grid."""
    X = np.asarray(X, dtype=float)
    if shape is None:
        shape = (len(np.unique(X[:, 0])), len(np.unique(X[:, 1])))
    xs = X[:, 0].reshape(shape)
    ys = X[:, 1].reshape(shape)
    panels = [("posterior mean", pred_u.mean), ("posterior std", pred_u.std)]
    if u_exact is not None:
        panels.append(("|mean - exact|", np.abs(pred_u.mean - np.asarray(u_exact))))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(4.0 * len(panels), 3.5), squeeze=False)
        for ax, (title, v) in zip(axes[0], panels):
            im = ax.pcolormesh(xs, ys, np.asarray(v).reshape(shape), shading="auto", cmap="viridis")
            fig.colorbar(im, ax=ax)
            ax.set_title(title)
            ax.set_xlabel("x_1")
            ax.set_ylabel("x_2")
            ax.grid(False)
        return _save(fig, path)


def active_history(path, history) -> Path:
    """Relative errors and the acquisition variance against iteration (log scale)."""
    it = history.column("iteration")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(it, history.column("rel_err_u"), "o-", ms=3, label="relative error u")
        ax.semilogy(it, history.column("rel_err_f"), "s-", ms=3, label="relative error f")
        ax.semilogy(it, history.column("max_var_f"), "^-", ms=3, label="max variance f")
        ax.set_xlabel("iteration")
        ax.legend()
        return _save(fig, path)


def benchmark_errors(path, rows) -> Path:
    """Per-seed multi- vs single-fidelity u-errors; ``rows`` are dicts from the benchmark table."""
    labels = [f"{r['problem']}\nseed {r['seed']}" for r in rows]
    mf = [r["rel_err_u_mf"] for r in rows]
    sf = [r["rel_err_u_sf"] for r in rows]
    pos = np.arange(len(rows))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(rows)), 4.0))
        ax.bar(pos - 0.2, mf, 0.4, label="multi-fidelity")
        ax.bar(pos + 0.2, sf, 0.4, label="single-fidelity")
        ax.set_xticks(pos)
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_ylabel("relative L2 error in u")
        ax.legend()
        return _save(fig, path)
