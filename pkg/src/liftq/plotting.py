"""Figure rendering for experiment outputs.

Every function takes plain arrays and a destination path, draws one
figure with the Agg backend and closes it.  Nothing here feeds back into
the numeric results.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
    "savefig.dpi": 150,
}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_error_curves(path, iterations, mean, std, title="IQ iterations") -> None:
    """Across-repeat mean of E(t) with a one-standard-deviation band."""
    iterations = np.asarray(iterations)
    mean, std = np.asarray(mean), np.asarray(std)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(iterations, mean, marker="o", ms=3, color="C0", label="mean E(t)")
        ax.fill_between(iterations, mean - std, mean + std, color="C0", alpha=0.25, label="$\\pm$1 sd")
        ax.set_xlabel("outer iteration t")
        ax.set_ylabel("E(t)")
        ax.set_title(title)
        ax.legend()
        _save(fig, path)


def plot_supnorm(path, iterations, changes, title="Table change per sweep") -> None:
    iterations = np.asarray(iterations)
    changes = np.asarray(changes, dtype=float)
    keep = np.isfinite(changes) & (changes > 0)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(iterations[keep], changes[keep], color="C1")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("sup-norm change")
        ax.set_title(title)
        _save(fig, path)


def plot_policy_slices(path, values: np.ndarray, n_rows: int, mu_cells, labels) -> None:
    """Heatmaps of ``Q(mu, h)`` over a two-row policy grid, one panel per ``mu`` cell."""
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(mu_cells), figsize=(3.2 * len(mu_cells), 3.0), squeeze=False)
        ticks = np.linspace(0, 1, n_rows)
        for ax, i, label in zip(axes[0], mu_cells, labels):
            grid = values[i].reshape(n_rows, n_rows)
            # Row compositions run from stay-probability 0 upward.
            im = ax.imshow(grid.T, origin="lower", extent=(ticks[0], ticks[-1], ticks[0], ticks[-1]),
                           aspect="auto", cmap="viridis")
            ax.set_title(label)
            ax.set_xlabel("stay prob. in state 0")
            ax.set_ylabel("stay prob. in state 1")
            ax.grid(False)
            fig.colorbar(im, ax=ax, shrink=0.8)
        _save(fig, path)


def plot_mean_actions(path, tables: dict) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for k, (solver, values) in enumerate(tables.items()):
            ax.plot(np.arange(len(values)), values, marker="os"[k % 2], ms=4, label=solver.upper())
        ax.axhline(2.0, color="0.5", lw=0.8, ls="--")
        ax.set_xlabel("price s")
        ax.set_ylabel("E[a*(s)]")
        ax.legend()
        _save(fig, path)


def plot_head_to_head(path, cum_mkv, cum_mfg) -> None:
    rounds = np.arange(len(cum_mkv))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.plot(rounds, cum_mkv, label="MKV (Pareto)")
        ax.plot(rounds, cum_mfg, label="MFG (Nash)")
        ax.set_xlabel("round")
        ax.set_ylabel("cumulative reward")
        ax.legend()
        _save(fig, path)


def plot_naive_tables(path, p0_values, tables: np.ndarray) -> None:
    """Grouped bars of the four naive Q cells for each initial mass."""
    tables = np.asarray(tables)
    labels = ["Q(0,0)", "Q(0,1)", "Q(1,0)", "Q(1,1)"]
    width = 0.8 / len(p0_values)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        x = np.arange(4)
        for k, (p0, row) in enumerate(zip(p0_values, tables)):
            ax.bar(x + k * width, row, width, label=f"p0={p0:g}")
        ax.set_xticks(x + width * (len(p0_values) - 1) / 2, labels)
        ax.set_ylabel("converged value")
        ax.legend()
        _save(fig, path)
