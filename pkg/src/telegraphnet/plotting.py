"""SVG figures written next to the CSV output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "telegraphnet",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def profiles(path, trajectory, t_index=-1, reference=None):
    """Current and voltage along each edge at one stored level."""
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 4.5), sharex=True)
        for j in trajectory.edge_ids:
            x = trajectory.x[j]
            a1.plot(x, trajectory.u1[j][t_index], label=f"edge {j}")
            a2.plot(x, trajectory.u2[j][t_index])
            if reference is not None:
                r1, r2 = reference(j, x)
                a1.plot(x, r1, "k:", lw=0.8)
                a2.plot(x, r2, "k:", lw=0.8)
        a1.set_ylabel("current u1")
        a2.set_ylabel("voltage u2")
        a2.set_xlabel("x")
        a1.set_title(f"t = {trajectory.t[t_index]:.4g}")
        a1.legend(fontsize=7, ncol=3)
        return _save(fig, path)


def series(path, x, ys: dict, xlabel, ylabel, logy=False, logx=False, marker=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, y in ys.items():
            ax.plot(x, y, marker=marker, label=label)
        if logy:
            ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(ys) > 1:
            ax.legend(fontsize=7)
        return _save(fig, path)


def coefficient_bars(path, edge_ids, truth, estimate, names=("L", "C", "R", "G")):
    """Per-edge perturbation: truth against estimate for each component."""
    truth, estimate = np.asarray(truth), np.asarray(estimate)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=(9, 2.8), sharey=True)
        pos = np.arange(len(edge_ids))
        for c, ax in enumerate(axes):
            ax.bar(pos - 0.2, truth[:, c], 0.4, label="truth")
            ax.bar(pos + 0.2, estimate[:, c], 0.4, label="estimate")
            ax.set_xticks(pos, [str(j) for j in edge_ids])
            ax.set_title(f"rho {names[c]}")
            ax.set_xlabel("edge")
        axes[0].legend(fontsize=7)
        return _save(fig, path)
