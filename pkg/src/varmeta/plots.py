"""Minimal SVG renderings of the diagnostic data. Requires matplotlib."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("SVG output needs matplotlib (pip install 'varmeta[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    fig.clf()


def qq_svg(qq, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.scatter(qq.theoretical, qq.observed, s=14)
    lim = max(np.max(np.abs(qq.theoretical)), np.max(np.abs(qq.observed))) * 1.1
    ax.plot([-lim, lim], [-lim, lim], color="grey", lw=0.8)
    ax.set_xlabel("normal quantile")
    ax.set_ylabel(f"ordered {qq.transform.value} statistic")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def forest_svg(rows, path, overall=None) -> Path:
    plt = _pyplot()
    n = len(rows) + (overall is not None)
    fig, ax = plt.subplots(figsize=(5, 0.3 * n + 1))
    labels = [r.study_id for r in rows]
    for i, r in enumerate(rows):
        ax.plot([r.ci_low, r.ci_high], [i, i], color="black", lw=1)
        ax.plot(r.ratio, i, "s", color="black", ms=4)
    if overall is not None:
        i = len(rows)
        ax.plot([overall.ci_low, overall.ci_high], [i, i], color="tab:red", lw=2)
        ax.plot(overall.rho_hat, i, "D", color="tab:red", ms=5)
        labels.append(overall.model)
    ax.axvline(1.0, color="grey", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_yticks(range(n))
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_xlabel("variance ratio")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def incremental_svg(curve, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3))
    k = [p.k_star for p in curve.points]
    ax.plot(k, curve.p_values, "o-", ms=4)
    ax.axhline(0.05, color="grey", lw=0.8, ls="--")
    ax.set_xlabel("number of studies included")
    ax.set_ylabel(f"{curve.test} p-value")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def size_grid_svg(grid, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    cs = ax.contourf(grid.nu1, grid.nu2, grid.sizes.T, levels=np.linspace(0.0, 0.1, 11), extend="both")
    fig.colorbar(cs, ax=ax)
    ax.set_xlabel("nu1")
    ax.set_ylabel("nu2")
    ax.set_title(f"{grid.kind.value} size at alpha={grid.alpha}")
    _save(fig, path)
    plt.close(fig)
    return Path(path)
