"""Report figures rendered to files: per-component cost curves and, for
two-component trials, a predicted-probability heatmap over the dose grid with
the confidence set outlined and the optimum starred."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from .cost_model import CostModel, cost_curve
from .optimizer import OptimizationCriteria
from .outcome_model import OutcomeFit, expit
from .stage_engine import FinalReport
from .trial_model import TrialConfig

plt.rcParams.update(
    {
        "figure.dpi": 110,
        "savefig.dpi": 150,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)


def save_cost_curves(cost: CostModel, config: TrialConfig, path: str) -> str:
    """One panel per component: cost contribution across its dose grid."""
    m = len(config.components)
    fig, axes = plt.subplots(1, m, figsize=(3.6 * m, 3.0), squeeze=False)
    for ax, comp in zip(axes[0], config.components):
        points = cost_curve(cost, config, comp.name)
        doses = [d for d, _ in points]
        values = [v for _, v in points]
        ax.plot(doses, values, marker="o", markersize=2.5, linewidth=1.2)
        ax.set_xlabel(f"{comp.name} ({comp.unit})")
        ax.set_ylabel(f"cost ({config.currency_label})")
        ax.set_title(comp.name)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_probability_heatmap(
    fit: OutcomeFit,
    config: TrialConfig,
    criteria: OptimizationCriteria,
    report: FinalReport,
    path: str,
) -> str:
    """Grid heatmap of predicted probability (two components only), confidence
    set cells outlined, optimum starred."""
    if len(config.components) != 2:
        raise ValueError("heatmap needs exactly two components")
    c1, c2 = config.components
    x = np.array(c1.grid())
    y = np.array(c2.grid())
    xx, yy = np.meshgrid(x, y)
    profile = np.asarray(criteria.covariate_profile, dtype=float)
    eta = (
        fit.intercept
        + fit.component_coefs[0] * xx
        + fit.component_coefs[1] * yy
        + float(profile @ np.asarray(fit.covariate_coefs))
    )
    prob = expit(eta)

    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    mesh = ax.pcolormesh(xx, yy, prob, shading="nearest", cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(mesh, ax=ax, label="predicted probability")
    for member, _, _ in report.confidence_set.members:
        d1, d2 = member.doses
        ax.add_patch(
            Rectangle(
                (d1 - c1.step / 2, d2 - c2.step / 2),
                c1.step,
                c2.step,
                fill=False,
                edgecolor="white",
                linewidth=0.9,
            )
        )
    o1, o2 = report.optimal.package.doses
    ax.plot(o1, o2, marker="*", color="red", markersize=14, markeredgecolor="black")
    ax.set_xlabel(f"{c1.name} ({c1.unit})")
    ax.set_ylabel(f"{c2.name} ({c2.unit})")
    goal = report.confidence_set.goal
    ax.set_title(
        f"goal {goal:g}, confidence set at level {report.confidence_set.level:g} outlined"
    )
    ax.grid(False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_report_figures(
    report: FinalReport,
    fit: OutcomeFit,
    config: TrialConfig,
    cost: CostModel,
    criteria: OptimizationCriteria,
    out_dir: str,
) -> list[str]:
    """Write every figure the report supports into out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [save_cost_curves(cost, config, os.path.join(out_dir, "cost_curves.png"))]
    if len(config.components) == 2:
        paths.append(
            save_probability_heatmap(
                fit, config, criteria, report, os.path.join(out_dir, "probability_heatmap.png")
            )
        )
    return paths
