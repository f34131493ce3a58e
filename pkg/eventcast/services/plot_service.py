import logging
from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..models.forecast import ForecastReport  # noqa: E402

logger = logging.getLogger(__name__)

# fixed salt and no date so identical inputs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "eventcast"
plt.rcParams["svg.fonttype"] = "none"

DAY_LABELS = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"]


class PlotService:
    """SVG figures for evaluation reports and partial effects."""

    def __init__(self, width: float = 9.0, height: float = 4.5):
        self.figsize = (width, height)

    def _save(self, fig, path: Union[str, Path]) -> Path:
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
        plt.close(fig)
        logger.debug("wrote %s", path)
        return path

    # === REPORTS ===

    def plot_errors(self, report: ForecastReport, path: Union[str, Path]) -> Path:
        """Daily relative errors per horizon with dotted guides at +-5%."""
        fig, ax = plt.subplots(figsize=self.figsize)
        for score in report.scores:
            errors = report.error_series(score.horizon_days)
            if len(errors) == 0:
                continue
            label = f"{score.horizon_days} d"
            if score.mae_pct is not None:
                label += f" (MAE {score.mae_pct:.2f}%)"
            ax.plot(errors.index, errors.to_numpy(), linewidth=0.8, label=label)
        for level in (-5.0, 5.0):
            ax.axhline(level, color="black", linestyle=":", linewidth=1.0)
        ax.axhline(0.0, color="grey", linewidth=0.5)
        ax.set_xlabel("target day")
        ax.set_ylabel("relative error (%)")
        ax.legend(loc="upper right", fontsize="small")
        fig.autofmt_xdate()
        return self._save(fig, path)

    def plot_forecasts(self, report: ForecastReport, path: Union[str, Path]) -> Path:
        """Predicted against observed daily totals, one panel per horizon."""
        horizons = [s.horizon_days for s in report.scores]
        fig, axes = plt.subplots(len(horizons), 1, figsize=(self.figsize[0], 2.2 * len(horizons)), sharex=True, squeeze=False)
        for ax, h in zip(axes[:, 0], horizons):
            rows = report.rows_for(h)
            if rows:
                targets = pd.DatetimeIndex([r.target for r in rows])
                ax.plot(targets, [r.observed for r in rows], color="black", linewidth=0.8, label="observed")
                ax.plot(targets, [r.predicted for r in rows], color="tab:blue", linewidth=0.8, label="predicted")
            ax.set_ylabel(f"{h} d ahead")
        axes[0, 0].legend(loc="upper right", fontsize="small")
        axes[-1, 0].set_xlabel("target day")
        fig.autofmt_xdate()
        return self._save(fig, path)

    # === EFFECTS ===

    def plot_effect(self, effect: pd.DataFrame, term: str, path: Union[str, Path]) -> Path:
        x_col = [c for c in effect.columns if c != "effect"][0]
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.plot(effect[x_col].to_numpy(), effect["effect"].to_numpy(), color="black")
        ax.axhline(0.0, color="grey", linestyle=":", linewidth=0.8)
        if x_col == "day":
            ax.set_xticks(range(1, 8), DAY_LABELS)
        ax.set_xlabel(x_col)
        ax.set_ylabel(f"s({term})")
        return self._save(fig, path)

    def plot_surface(self, effect: pd.DataFrame, term: str, covariates: List[str], path: Union[str, Path]) -> Path:
        """Heat map of a two-covariate interaction."""
        a, b = covariates
        grid = effect.pivot(index=a, columns=b, values="effect")
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        mesh = ax.pcolormesh(grid.columns.to_numpy(), grid.index.to_numpy(), grid.to_numpy(), shading="nearest", cmap="RdBu_r")
        limit = float(np.nanmax(np.abs(grid.to_numpy()))) or 1.0
        mesh.set_clim(-limit, limit)
        fig.colorbar(mesh, ax=ax, label=f"s({term})")
        if a == "day":
            ax.set_yticks(range(1, 8), DAY_LABELS)
        ax.set_xlabel(b)
        ax.set_ylabel(a)
        return self._save(fig, path)
