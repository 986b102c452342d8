"""Text tables, CSV series and records for trial and transfer reports."""

from __future__ import annotations

import csv
import io
from typing import Sequence

from .domain import DOMAINS
from .harness import METRICS, RctReport, effect_table, improvement
from .transfer import GradedOutcome, TransferResult

LABELS = {
    "daily_listening_min": "Daily Listening Time",
    "discovery_rate": "Content Discovery Rate",
    "retention": "Service Retention",
    "episode_completion": "Episode Completion",
    "monthly_active": "Monthly Active Users",
    "genre_exploration": "Genre Exploration",
}
DOMAIN_LABELS = {"music": "Music Streaming", "podcast": "Podcast Discovery", "audiobook": "Audiobook Services"}

# (domain cohort, metric, row label) in the order of the engagement table
ENGAGEMENT_ROWS = (
    ("music", "daily_listening_min", "Daily Listening Time"),
    ("music", "discovery_rate", "Content Discovery Rate"),
    ("music", "retention", "Service Retention"),
    ("podcast", "episode_completion", "Episode Completion"),
    ("podcast", "discovery_rate", "New Show Exploration"),
    ("podcast", "monthly_active", "Monthly Active Users"),
    ("audiobook", "episode_completion", "Completion Rate"),
    ("audiobook", "genre_exploration", "Genre Exploration"),
    ("audiobook", "retention", "User Retention"),
)


def table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Pipe-delimited table with padded columns."""
    cells = [list(header)] + [list(r) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def fmt_value(metric: str, v: float, half: float | None = None) -> str:
    if metric == "daily_listening_min":
        return f"{v:.1f}±{half:.1f} min" if half is not None else f"{v:.1f} min"
    return f"{100 * v:.1f}±{100 * half:.1f}%" if half is not None else f"{100 * v:.1f}%"


def fmt_pct(x: float | None) -> str:
    return "n/a" if x is None else f"{x:+.1f}%"


def fmt_p(p: float) -> str:
    return "< 0.001" if p < 0.001 else f"{p:.3f}"


def fmt_opt(x: float | None, digits: int = 4) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def _half(iv: dict, metric: str) -> float | None:
    if metric not in iv:
        return None
    lo, hi = iv[metric]
    return (hi - lo) / 2.0


def engagement_table(report: RctReport, with_intervals: bool = False) -> str:
    """Per-scenario engagement rows by domain cohort: baseline, optimized, improvement.

    With intervals, values carry the half-width of a per-user percentile
    bootstrap interval.
    """
    out = []
    for sc in report.scenarios:
        ctl, cat = sc.arms["control"], sc.arms["cat"]
        rows = []
        last = None
        for dom, metric, label in ENGAGEMENT_ROWS:
            if dom not in ctl.by_domain:
                continue
            b, c = ctl.by_domain[dom].value(metric), cat.by_domain[dom].value(metric)
            hb = _half(ctl.domain_intervals[dom], metric) if with_intervals else None
            hc = _half(cat.domain_intervals[dom], metric) if with_intervals else None
            rows.append([
                DOMAIN_LABELS[dom] if dom != last else "",
                label,
                fmt_value(metric, b, hb),
                fmt_value(metric, c, hc),
                fmt_pct(improvement(b, c)),
            ])
            last = dom
        head = ["Domain", "Metric", "Baseline (95% CI)" if with_intervals else "Baseline",
                "With CAT (95% CI)" if with_intervals else "With CAT", "Improvement"]
        out.append(f"scenario {sc.scenario_id}\n" + table(head, rows))
    return "\n".join(out)


def overall_table(report: RctReport) -> str:
    """All-user summaries with improvements and per-user bootstrap intervals."""
    out = []
    for sc in report.scenarios:
        ctl, cat = sc.arms["control"], sc.arms["cat"]
        rows = [
            [LABELS[m],
             fmt_value(m, ctl.summary.value(m), _half(ctl.intervals, m)),
             fmt_value(m, cat.summary.value(m), _half(cat.intervals, m)),
             fmt_pct(sc.improvements[m])]
            for m in METRICS
        ]
        out.append(f"scenario {sc.scenario_id} (all users)\n"
                   + table(["Metric", "Baseline (95% CI)", "With CAT (95% CI)", "Improvement"], rows))
    return "\n".join(out)


def alignment_table(report: RctReport) -> str:
    rows = []
    for sc in report.scenarios:
        for arm in ("control", "cat"):
            o = sc.arms[arm]
            rows.append([
                sc.scenario_id, arm, fmt_opt(o.gai), fmt_opt(sc.baseline_score), fmt_opt(o.integration),
                fmt_opt(o.prediction.get("gar")), fmt_opt(o.prediction.get("f1_star")), str(o.n_events),
            ])
    return table(["Scenario", "Arm", "GAI", "Baseline score", "Integration", "GAR", "F1*", "Events"], rows)


def effect_size_table(report: RctReport) -> str:
    rows = [
        [LABELS[r["metric"]], f"{r['d']:.2f}", fmt_p(r["p_value"]), f"{r['n']:,}",
         f"[{r['ci_low']:.2f}, {r['ci_high']:.2f}]"]
        for r in effect_table(report)
    ]
    return table(["Metric", "Effect Size (d)", "p-value", "Sample Size", "Confidence Interval"], rows)


def render_rct(report: RctReport) -> str:
    parts = [
        "Engagement by domain\n", engagement_table(report), "\n",
        "Engagement by domain with per-user bootstrap intervals\n", engagement_table(report, True), "\n",
        "All users\n", overall_table(report), "\n",
        "Alignment and prediction\n", alignment_table(report), "\n",
        "Statistical validation (all scenarios pooled)\n", effect_size_table(report),
    ]
    return "".join(parts)


def series_csv(report: RctReport) -> str:
    """Long-format plot data: one row per (scenario, arm, metric, week)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario_id", "arm", "metric", "week", "value"])
    for sc in report.scenarios:
        for arm in ("control", "cat"):
            for metric, values in sorted(sc.arms[arm].series.items()):
                for week, v in enumerate(values):
                    w.writerow([sc.scenario_id, arm, metric, week, "" if v is None else repr(v)])
    return buf.getvalue()


def effects_csv(report: RctReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "d", "p_value", "n", "ci_low", "ci_high"])
    for r in effect_table(report):
        w.writerow([r["metric"], repr(r["d"]), repr(r["p_value"]), r["n"], repr(r["ci_low"]), repr(r["ci_high"])])
    return buf.getvalue()


def transfer_text(
    matrix: Sequence[TransferResult], graded: Sequence[GradedOutcome],
    reference_tau: dict[tuple[str, str], float], intervals: Sequence[tuple[float, float]], n_users: int,
) -> str:
    names = [d.value for d in DOMAINS]
    by_pair = {(r.source.value, r.target.value): r for r in matrix}
    parts = []
    if matrix:
        tau_rows = [[s] + [f"{by_pair[s, t].tau:.3f}" for t in names] for s in names]
        gap_rows = [
            [s] + [f"{100 * by_pair[s, t].gap:.1f}% {'ok' if by_pair[s, t].success else 'fail'}" for t in names]
            for s in names
        ]
        parts += ["Transfer metric (source row, target column)\n", table(["source"] + names, tau_rows), "\n",
                  "Relative GAI gap and 15% rule\n", table(["source"] + names, gap_rows), "\n"]
    if reference_tau:
        ref_rows = [[s] + [f"{reference_tau[s, t]:.3f}" for t in names] for s in names]
        parts += ["Transfer metric on reference feature vectors\n", table(["domain"] + names, ref_rows), "\n"]
    if graded:
        rows = []
        for g, (lo, hi) in zip(graded, intervals):
            rows.append([
                f"{g.source.value} -> {g.target.value}",
                f"{100 * g.success_fraction:.0f}% [{100 * lo:.0f}, {100 * hi:.0f}]",
                f"{len(g.results)} seeds x {n_users} users",
                f"sigma={g.sigma}, alpha={g.alpha}",
                f"{sum(r.tau for r in g.results) / len(g.results):.3f}",
            ])
        parts += ["Graded transfer experiment\n",
                  table(["Transfer", "Success Rate (95% CI)", "Sample Size", "Generator", "Mean tau"], rows)]
    return "".join(parts)
