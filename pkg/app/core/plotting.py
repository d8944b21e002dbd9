"""Matplotlib rendering of campaign results. The CSV files stay the data contract."""

import base64
from functools import partial
from io import BytesIO
from pathlib import Path
from typing import Callable, List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.core.exceptions import OutputError  # noqa: E402
from app.core.harness import ecdf  # noqa: E402
from app.models.schemas import CampaignResult  # noqa: E402

AXIS_LABELS = {"power_db": "P1 = P2 = Pr (dB)", "l_sr": "source-relay distance l_sr", "none": "P (dB)"}


def _curve(result: CampaignResult, metric: str):
    fig, ax = plt.subplots(figsize=(7, 5))
    for scheme in result.schemes:
        points = [result.summary(scheme, v) for v in result.sweep_values]
        if metric == "capacity":
            y = [p.ergodic_capacity for p in points]
            err = [p.capacity_stderr for p in points]
        else:
            y = [p.sum_mse for p in points]
            err = [p.mse_stderr for p in points]
        ax.errorbar(result.sweep_values, y, yerr=err, marker="o", capsize=3, label=scheme.upper())
    ax.set_xlabel(AXIS_LABELS[result.sweep_variable])
    ax.set_ylabel("ergodic capacity (bits/channel use)" if metric == "capacity" else "sum-MSE")
    ax.grid(True, alpha=0.3)
    ax.legend()
    plt.tight_layout()
    return fig


def _cdf(result: CampaignResult, value: float):
    fig, ax = plt.subplots(figsize=(7, 5))
    for scheme in result.schemes:
        table = ecdf(result.summary(scheme, value).capacity_samples)
        ax.step(table["value"], table["cdf"], where="post", label=scheme.upper())
    ax.set_xlabel("instantaneous capacity (bits/channel use)")
    ax.set_ylabel("CDF")
    ax.set_title(f"P = {value:g} dB")
    ax.grid(True, alpha=0.3)
    ax.legend()
    plt.tight_layout()
    return fig


def _figure_plan(result: CampaignResult) -> List[Tuple[str, Callable[[], "plt.Figure"]]]:
    """(file stem, builder) pairs; nothing is drawn until a builder is called."""
    if not result.schemes or not result.summaries:
        return []
    suffix = "lsr" if result.sweep_variable == "l_sr" else "power"
    plan = [
        (f"capacity_vs_{suffix}", partial(_curve, result, "capacity")),
        (f"mse_vs_{suffix}", partial(_curve, result, "mse")),
    ]
    if result.sweep_variable != "l_sr":
        plan.extend((f"cdf_{value:g}", partial(_cdf, result, value)) for value in result.sweep_values)
    return plan


def save_figures(result: CampaignResult, out_dir) -> List[Path]:
    """Render and write one figure at a time, so at most one is open."""
    out = Path(out_dir)
    written = []
    for stem, build in _figure_plan(result):
        path = out / f"{stem}.png"
        fig = build()
        try:
            fig.savefig(path, dpi=150, bbox_inches="tight")
        except OSError as e:
            raise OutputError(path, str(e)) from e
        finally:
            plt.close(fig)
        written.append(path)
    return written


def matplotlib_to_base64(fig) -> str:
    """Convert matplotlib figure to base64 string"""
    buffer = BytesIO()
    fig.savefig(buffer, format='png', bbox_inches='tight', dpi=150)
    buffer.seek(0)
    image_base64 = base64.b64encode(buffer.getvalue()).decode('utf-8')
    plt.close(fig)  # Clean up memory
    return image_base64


def campaign_graph_base64(result: CampaignResult) -> str | None:
    """Single PNG for API responses: the CDF for one point, the capacity curve otherwise."""
    if not result.schemes or not result.summaries:
        return None
    if len(result.sweep_values) == 1 and result.sweep_variable != "l_sr":
        fig = _cdf(result, result.sweep_values[0])
    else:
        fig = _curve(result, "capacity")
    return matplotlib_to_base64(fig)
