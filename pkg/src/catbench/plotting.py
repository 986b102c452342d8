"""PNG figures for trial and transfer reports (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

from .domain import DOMAINS  # noqa: E402
from .harness import METRICS, RctReport  # noqa: E402
from .transfer import GradedOutcome, TransferResult  # noqa: E402

ARM_STYLE = {"control": dict(color="0.45", ls="--", marker="o"), "cat": dict(color="C0", ls="-", marker="s")}
SERIES_TITLES = {
    "daily_listening_min": "daily listening (min)",
    "discovery_rate": "discovery rate",
    "active_users": "active users",
    "gai": "weekly GAI",
}
# fixed metadata keeps the PNG bytes identical across runs
_META = {"Software": None}


def _save(fig: Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    return path


def rct_figures(report: RctReport, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for sc in report.scenarios:
        fig = Figure(figsize=(9, 6.5), layout="constrained")
        axes = fig.subplots(2, 2).ravel()
        for ax, (key, title) in zip(axes, SERIES_TITLES.items()):
            for arm in ("control", "cat"):
                ys = sc.arms[arm].series[key]
                pts = [(w + 1, y) for w, y in enumerate(ys) if y is not None]
                if pts:
                    ax.plot([p[0] for p in pts], [p[1] for p in pts], label=arm, ms=3, **ARM_STYLE[arm])
            ax.set_title(title, fontsize=10)
            ax.set_xlabel("week")
            ax.xaxis.set_major_locator(MaxNLocator(integer=True))
            ax.grid(alpha=0.3)
        axes[0].legend(frameon=False)
        fig.suptitle(f"scenario {sc.scenario_id}: weekly metrics by arm")
        paths.append(_save(fig, out_dir / f"weekly_{sc.scenario_id}.png"))

    fig = Figure(figsize=(7, 3.8), layout="constrained")
    ax = fig.subplots()
    effects = [report.pooled_effects[m] for m in METRICS]
    xs = range(len(METRICS))
    ax.bar(xs, [e.d for e in effects], color="C0", alpha=0.8)
    ax.errorbar(
        xs, [e.d for e in effects],
        yerr=[[e.d - e.ci_low for e in effects], [e.ci_high - e.d for e in effects]],
        fmt="none", ecolor="k", capsize=3,
    )
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(list(xs), [m.replace("_", "\n") for m in METRICS], fontsize=8)
    ax.set_ylabel("Cohen's d (optimized vs baseline)")
    paths.append(_save(fig, out_dir / "effect_sizes.png"))
    return paths


def transfer_figures(
    matrix: Sequence[TransferResult], graded: Sequence[GradedOutcome], out_dir: str | Path
) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    names = [d.value for d in DOMAINS]
    if matrix:
        by_pair = {(r.source.value, r.target.value): r.tau for r in matrix}
        grid = [[by_pair[s, t] for t in names] for s in names]
        fig = Figure(figsize=(4.6, 4), layout="constrained")
        ax = fig.subplots()
        im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis")
        for i in range(len(names)):
            for j in range(len(names)):
                ax.text(j, i, f"{grid[i][j]:.2f}", ha="center", va="center",
                        color="w" if grid[i][j] < 0.6 else "k", fontsize=9)
        ax.set_xticks(range(len(names)), names)
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("target")
        ax.set_ylabel("source")
        fig.colorbar(im, ax=ax, shrink=0.8, label="tau")
        paths.append(_save(fig, out_dir / "transfer_matrix.png"))
    if graded:
        fig = Figure(figsize=(5, 3.4), layout="constrained")
        ax = fig.subplots()
        labels = [f"{g.source.value}\n-> {g.target.value}\nsigma={g.sigma}" for g in graded]
        ax.bar(range(len(graded)), [g.success_fraction for g in graded], color="C2")
        ax.set_xticks(range(len(graded)), labels, fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("success fraction")
        paths.append(_save(fig, out_dir / "transfer_success.png"))
    return paths
