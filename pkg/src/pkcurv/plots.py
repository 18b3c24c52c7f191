"""Figure rendering for solve reports and diagnostics (Agg backend, PNG)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import RadialField

__all__ = [
    "render_field",
    "render_trace",
    "render_gamma",
    "render_convergence",
    "render_slack",
]

_DPI = 150


def render_field(field: RadialField, path, title="radial profile") -> None:
    """Heatmap of rho over the angular chart (equatorial slice for S^3)."""
    grid = field.grid
    rho = field.rho.reshape(grid.shape)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if grid.n == 2:
        img = rho
        ax.set_xlabel(r"$\theta_2$ (azimuth)")
        ax.set_ylabel(r"$\theta_1$ (colatitude)")
        extent = [0, 2 * np.pi, np.pi, 0]
    else:
        img = rho[:, grid.res // 2, :]
        ax.set_xlabel(r"$\theta_3$ (azimuth), slice $\theta_2 = \pi/2$")
        ax.set_ylabel(r"$\theta_1$")
        extent = [0, 2 * np.pi, np.pi, 0]
    im = ax.imshow(img, extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label=r"$\rho$")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_trace(trace, path) -> None:
    """Residuals and radial extremes along the continuation/regularization path."""
    steps = np.arange(len(trace))
    res = [max(s.res_final, 1e-300) for s in trace]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.4, 5.4), sharex=True)
    ax1.semilogy(steps, res, "o-", label="final residual")
    ax1.semilogy(steps, [max(s.res_initial, 1e-300) for s in trace], "s--",
                 alpha=0.6, label="initial residual")
    ax1.set_ylabel("sup-norm residual")
    ax1.legend(loc="best", fontsize=8)
    ax2.plot(steps, [s.min_rho for s in trace], "v-", label=r"min $\rho$")
    ax2.plot(steps, [s.max_rho for s in trace], "^-", label=r"max $\rho$")
    labels = [f"{s.kind}={s.value:.3g}" for s in trace]
    ax2.set_xticks(steps)
    ax2.set_xticklabels(labels, rotation=60, fontsize=7)
    ax2.set_yscale("log")
    ax2.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_gamma(eps_schedule, gamma_sequence, gamma, path) -> None:
    eps = np.asarray(eps_schedule, dtype=float)
    gam = np.asarray(gamma_sequence, dtype=float)
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.plot(eps, gam, "o-", label=r"$\gamma_\varepsilon$")
    ax.axhline(gamma, color="k", ls="--", lw=1, label=rf"extrapolated $\gamma$ = {gamma:.6g}")
    ax.set_xlabel(r"$\varepsilon$")
    ax.set_ylabel(r"$\gamma_\varepsilon$")
    ax.invert_xaxis()
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_convergence(resolutions, errors, path, expected_order=2.0) -> None:
    res = np.asarray(resolutions, dtype=float)
    err = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.loglog(res, err, "o-", label="max curvature error")
    ref = err[0] * (res / res[0]) ** (-expected_order)
    ax.loglog(res, ref, "k--", lw=1, label=f"order {expected_order:g} reference")
    ax.set_xlabel("resolution")
    ax.set_ylabel("error")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_slack(reports, path) -> None:
    """Worst slack per property; bars clipped at the float floor for display."""
    names = [r.name for r in reports if r.passed is not None]
    slack = np.array([r.worst_slack for r in reports if r.passed is not None])
    tol = np.array([r.tolerance for r in reports if r.passed is not None])
    disp = np.sign(slack) * np.log10(1.0 + np.abs(slack) / 1e-16)
    fig, ax = plt.subplots(figsize=(7.0, 0.45 * len(names) + 1.2))
    colors = ["tab:green" if s >= -t else "tab:red" for s, t in zip(slack, tol)]
    ax.barh(names, disp, color=colors)
    ax.axvline(0.0, color="k", lw=1)
    ax.set_xlabel("signed log-magnitude of worst slack")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
