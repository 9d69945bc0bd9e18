"""Figure rendering for harness results.

Each mode gets one PNG next to its CSV (same stem).  The CSV stays the
canonical output; figures are a convenience view and can be disabled with
figures=false or --no-figures.
"""

import os

import numpy as np


def _figure_path(config):
    stem, _ = os.path.splitext(config.out)
    return stem + ".png"


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_residual_history(config, result, path):
    plt = _pyplot()
    rows = result.rows
    sizes = sorted({r[0] for r in rows})
    fig, axes = plt.subplots(1, max(len(sizes), 1),
                             figsize=(4.0 * max(len(sizes), 1), 3.2),
                             squeeze=False, sharey=True)
    for ax, n in zip(axes[0], sizes):
        for q in sorted({r[1] for r in rows if r[0] == n}):
            pts = [(r[2], r[3]) for r in rows if r[0] == n and r[1] == q]
            pts.sort()
            its = [p[0] for p in pts]
            res = [max(p[1], 1e-300) for p in pts]
            ax.semilogy(its, res, marker=".", label=f"q={q:g}")
        ax.set_title(f"n = {n}")
        ax.set_xlabel("iteration")
        ax.grid(True, which="both", alpha=0.3)
    axes[0][0].set_ylabel("residual norm")
    axes[0][-1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_lyapunov_sweep(config, result, path):
    plt = _pyplot()
    rows = result.rows
    sizes = sorted({r[0] for r in rows})
    qs = sorted({r[1] for r in rows})
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    if len(sizes) >= 2 and len(qs) >= 2:
        grid = np.full((len(qs), len(sizes)), np.nan)
        lookup = {(r[0], r[1]): r[2] for r in rows}
        for i, q in enumerate(qs):
            for j, n in enumerate(sizes):
                if (n, q) in lookup:
                    grid[i, j] = lookup[(n, q)]
        pc = ax.pcolormesh(sizes, qs, grid, shading="nearest", cmap="viridis")
        fig.colorbar(pc, ax=ax, label="Lyapunov spectral radius")
        try:
            ax.contour(sizes, qs, grid, levels=[1.0], colors="red")
        except Exception:
            pass
        if config.d == 2 and min(qs) > 0:
            # guide lines of constant q * sqrt(n)
            for s in (1.0, 4.0, 16.0):
                nn = np.array(sizes, dtype=float)
                ax.plot(nn, s / np.sqrt(nn), "w--", lw=0.8, alpha=0.7)
        ax.set_xscale("log")
        ax.set_yscale("log")
    else:
        for n in sizes:
            pts = sorted((r[1], r[2]) for r in rows if r[0] == n)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"n={n}")
        ax.axhline(1.0, color="red", lw=0.8)
        ax.legend(fontsize=8)
    ax.set_xlabel("n" if len(sizes) >= 2 else "q")
    ax.set_ylabel("q" if len(sizes) >= 2 else "Lyapunov radius")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_scaling_check(config, result, path):
    plt = _pyplot()
    fit = result.verdicts.get("fit")
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for row in result.rows:
        n, q, rho, _, rho0 = row[0], row[1], row[2], row[3], row[4]
        delta = rho - rho0
        if delta > 0:
            ax.loglog([q * np.sqrt(n)], [delta], "o", color="tab:blue",
                      alpha=0.7)
    if fit is not None and np.isfinite(fit.exponent_n):
        xs = np.logspace(-1, 2.5, 50)
        ax.loglog(xs, np.exp(fit.intercept) * xs, "k--", lw=0.8,
                  label=f"n-exponent {fit.exponent_n:.2f} ({fit.verdict})")
        ax.legend(fontsize=8)
    ax.set_xlabel("q sqrt(n)")
    ax.set_ylabel("degradation rho - rho0")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_assumption_constants(config, result, path):
    plt = _pyplot()
    rows = result.rows
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for ell in sorted({r[0] for r in rows}):
        pts = [(int(r[2].split("(")[1].rstrip(")")), r[3]) for r in rows
               if r[0] == ell and r[2].startswith("eta(")]
        pts.sort()
        ax.semilogy([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"level {ell}")
    ax.set_xlabel("smoothing steps")
    ax.set_ylabel("eta")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_term_diagnostics(config, result, path):
    plt = _pyplot()
    rows = [r for r in result.rows if r[3] == "A"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    labels = [f"{r[2]} (n={r[0]}, q={r[1]:g})" for r in rows]
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [max(r[4], 1e-300) for r in rows], width=0.4,
           label="value")
    ax.bar(x + 0.2, [max(r[5], 1e-300) for r in rows], width=0.4,
           label="bound")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=75, fontsize=6)
    ax.set_ylabel("energy norm")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


_RENDERERS = {
    "residual_history": render_residual_history,
    "lyapunov_sweep": render_lyapunov_sweep,
    "scaling_check": render_scaling_check,
    "assumption_constants": render_assumption_constants,
    "term_diagnostics": render_term_diagnostics,
}


def render(config, result):
    path = _figure_path(config)
    _RENDERERS[config.mode](config, result, path)
    return path
