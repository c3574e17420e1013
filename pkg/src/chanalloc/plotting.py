"""Figures for run reports, written next to the tabular/structured output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import CHANNELS  # noqa: E402


def _apply_style(ax):
    ax.tick_params(labelsize=8)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)


def occupancy_figure(report, path: Path):
    aps = sorted({o["ap_id"] for o in report.occupancy})
    if not aps:
        return None
    fig, axes = plt.subplots(len(aps), 1, figsize=(7, 2.4 * len(aps)), squeeze=False)
    for ax, ap in zip(axes[:, 0], aps):
        rows = [o for o in report.occupancy if o["ap_id"] == ap]
        rounds = [o["round"] for o in rows]
        grid = np.full((len(rows), len(CHANNELS)), np.nan)
        for i, o in enumerate(rows):
            for ch, level in o["levels"].items():
                grid[i, ch - 1] = level
        im = ax.imshow(
            grid.T, aspect="auto", origin="lower", cmap="magma_r",
            extent=(min(rounds) - 0.5, max(rounds) + 0.5, 0.5, len(CHANNELS) + 0.5),
        )
        # channel the AP holds after each round
        held, current = [], None
        moves = {a["round"]: a["channel"] for a in report.assignments if a["ap_id"] == ap}
        first = next((a["previous"] for a in report.assignments if a["ap_id"] == ap), report.final_ap_channels.get(ap))
        current = first
        for r in rounds:
            current = moves.get(r, current)
            held.append(current)
        ax.step(rounds, held, where="mid", color="cyan", lw=1.5, label="assigned")
        ax.set_ylabel(f"{ap}\nchannel", fontsize=8)
        ax.set_yticks(list(CHANNELS))
        fig.colorbar(im, ax=ax, label="dBm").ax.tick_params(labelsize=7)
        _apply_style(ax)
    axes[-1, 0].set_xlabel("round", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def metric_figure(report, path: Path):
    values = [np.nan if m is None else m for m in report.metric_dbm]
    if not values:
        return None
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(range(len(values)), values, marker="o", ms=3, lw=1)
    for a in report.assignments:
        ax.axvline(a["round"], color="0.8", lw=0.8, zorder=0)
    ax.set_xlabel("round", fontsize=9)
    ax.set_ylabel("aggregate interference, dBm", fontsize=9)
    _apply_style(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(report, outdir: str | Path, stem: str = "run") -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        occupancy_figure(report, outdir / f"{stem}_occupancy.png"),
        metric_figure(report, outdir / f"{stem}_metric.png"),
    ]
    return [p for p in written if p is not None]
