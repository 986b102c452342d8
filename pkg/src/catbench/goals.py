"""Hierarchical goal specs and their reduction to GAI inputs.

Decomposition runs three steps in order: flatten the tactical/operational
hierarchy into criteria, bind each criterion to a per-user log statistic, and
normalize the criterion weights. Scores are pass-fractions over users, so they
are unit-free and always in [0, 1].
"""

from __future__ import annotations

import json
import math
import operator
from collections import defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .domain import InteractionEvent
from .errors import CatBenchError, MetricError, ValidationError
from .metrics import AlignmentRecord

METRIC_IDS = (
    "session_length_min",
    "completion_rate",
    "weekly_active_days",
    "discovery_rate",
    "retention",
    "latency_ms",
    "recognition_rate",
)
COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    ">=": operator.ge,
    "≥": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
    "≤": operator.le,
}
KINDS = ("task", "goal")


class UnknownMetric(CatBenchError):
    code = "unknown-metric-id"


class EmptyCriteria(CatBenchError):
    code = "empty-criteria"


@dataclass(frozen=True)
class Criterion:
    metric_id: str
    comparator: str
    threshold: float
    kind: str = "goal"
    weight: float = 1.0
    name: str = ""

    def passes(self, value: float) -> bool:
        # NaN (user absent from the filtered log) never passes
        return value == value and COMPARATORS[self.comparator](value, self.threshold)

    def to_dict(self) -> dict:
        d = {
            "metric_id": self.metric_id,
            "comparator": self.comparator,
            "threshold": self.threshold,
            "kind": self.kind,
            "weight": self.weight,
        }
        if self.name:
            d["name"] = self.name
        return d


@dataclass(frozen=True)
class Constraint:
    """Contextual constraint; with ``field`` set it restricts the events scored."""

    name: str
    field: str | None = None
    values: tuple[str, ...] = ()

    def admits(self, ev: InteractionEvent) -> bool:
        if self.field is None:
            return True
        v = getattr(ev, self.field)
        return getattr(v, "value", v) in self.values or str(v) in self.values

    def to_dict(self) -> dict:
        d: dict = {"name": self.name}
        if self.field is not None:
            d["field"] = self.field
            d["values"] = list(self.values)
        return d


@dataclass(frozen=True)
class GoalSpec:
    strategic: str
    operational: tuple[Criterion, ...]
    tactical: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def to_dict(self) -> dict:
        return {
            "strategic": self.strategic,
            "tactical": list(self.tactical),
            "operational": [c.to_dict() for c in self.operational],
            "constraints": [c.to_dict() for c in self.constraints],
        }


FIELDS_CRITERION = {"metric_id", "comparator", "threshold", "kind", "weight", "name"}


def parse_goal_spec(doc: Mapping) -> GoalSpec:
    problems = []
    unknown = set(doc) - {"strategic", "tactical", "operational", "constraints"}
    if unknown:
        problems.append(("unknown-field", f"goal spec: {sorted(unknown)}"))
    criteria = []
    for i, c in enumerate(doc.get("operational", [])):
        extra = set(c) - FIELDS_CRITERION
        if extra:
            problems.append(("unknown-field", f"criterion {i}: {sorted(extra)}"))
            continue
        try:
            crit = Criterion(
                metric_id=str(c["metric_id"]),
                comparator=str(c["comparator"]),
                threshold=float(c["threshold"]),
                kind=str(c.get("kind", "goal")),
                weight=float(c.get("weight", 1.0)),
                name=str(c.get("name", "")),
            )
        except KeyError as exc:
            problems.append(("missing-field", f"criterion {i}: {exc.args[0]} is required"))
            continue
        if crit.comparator not in COMPARATORS:
            problems.append(("invalid-comparator", f"criterion {i}: {crit.comparator!r}"))
        if crit.kind not in KINDS:
            problems.append(("invalid-kind", f"criterion {i}: {crit.kind!r}"))
        if not math.isfinite(crit.threshold):
            problems.append(("invalid-threshold", f"criterion {i}: threshold must be finite"))
        if not crit.weight > 0:
            problems.append(("nonpositive-weight", f"criterion {i}: weight must be > 0"))
        criteria.append(crit)
    if problems:
        raise ValidationError(problems)
    constraints = tuple(
        Constraint(str(c["name"]), c.get("field"), tuple(str(v) for v in c.get("values", ())))
        for c in doc.get("constraints", [])
    )
    return GoalSpec(
        strategic=str(doc.get("strategic", "")),
        tactical=tuple(str(t) for t in doc.get("tactical", [])),
        operational=tuple(criteria),
        constraints=constraints,
    )


def resolve_goal_path(ref: str, base_dir: Path | None = None) -> Path:
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        return Path(str(resources.files("catbench") / "data" / f"{name}.goals.json"))
    path = Path(ref)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    return path


def load_goal_spec(ref: str | Path, base_dir: Path | None = None) -> GoalSpec:
    path = resolve_goal_path(str(ref), base_dir)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError([("missing-goal-spec", f"goal spec not found: {path}")]) from None
    except json.JSONDecodeError as exc:
        raise ValidationError([("malformed-goal-spec", f"{path}:{exc.lineno}: {exc.msg}")]) from None
    return parse_goal_spec(doc)


# ---- per-user statistics bound to metric ids -------------------------------

@dataclass
class _UserTally:
    events: int = 0
    plays: int = 0
    completed: int = 0
    novel: int = 0
    latency: int = 0
    session_s: dict = field(default_factory=lambda: defaultdict(int))
    days: set = field(default_factory=set)
    last_week: int = -1


def horizon_weeks(log: Sequence[InteractionEvent]) -> int:
    return max((ev.week for ev in log), default=0) + 1


def user_statistics(
    log: Sequence[InteractionEvent], n_weeks: int | None = None, start_week: int = 0
) -> dict[str, dict[str, float]]:
    """Every bound statistic for every user present in ``log``.

    The window spans weeks ``start_week .. start_week + n_weeks - 1``;
    retention means activity in its last week.
    """
    n_weeks = n_weeks or horizon_weeks(log) - start_week
    final_week = start_week + n_weeks - 1
    tallies: dict[str, _UserTally] = defaultdict(_UserTally)
    for ev in log:
        u = tallies[ev.user_id]
        u.events += 1
        u.latency += ev.latency_ms
        u.session_s[ev.session_id] += ev.engagement_s
        u.days.add(ev.day)
        u.last_week = max(u.last_week, ev.week)
        if ev.recognized:
            u.plays += 1
            u.completed += ev.completed
            u.novel += ev.novel_content
    out = {}
    for uid, u in tallies.items():
        sessions = list(u.session_s.values())
        out[uid] = {
            "session_length_min": math.fsum(sessions) / len(sessions) / 60.0,
            "completion_rate": u.completed / u.plays if u.plays else 0.0,
            "weekly_active_days": len(u.days) / n_weeks,
            "discovery_rate": u.novel / u.plays if u.plays else 0.0,
            "retention": 1.0 if u.last_week >= final_week else 0.0,
            "latency_ms": u.latency / u.events,
            "recognition_rate": u.plays / u.events,
        }
    return out


@dataclass(frozen=True)
class BoundCriterion:
    criterion: Criterion
    weight: float
    constraints: tuple[Constraint, ...] = ()

    def score(self, stats: Mapping[str, Mapping[str, float]], users: Sequence[str]) -> float:
        if not users:
            raise MetricError("empty-log", "no users to score")
        nan = float("nan")
        mid = self.criterion.metric_id
        passed = sum(self.criterion.passes(stats[u][mid] if u in stats else nan) for u in users)
        return passed / len(users)


@dataclass(frozen=True)
class DecomposedGoals:
    spec: GoalSpec
    bound: tuple[BoundCriterion, ...]

    @property
    def criteria(self) -> tuple[Criterion, ...]:
        return tuple(b.criterion for b in self.bound)

    @property
    def weights(self) -> tuple[float, ...]:
        return tuple(b.weight for b in self.bound)

    def to_spec(self) -> GoalSpec:
        ops = tuple(
            Criterion(c.metric_id, c.comparator, c.threshold, c.kind, w, c.name)
            for c, w in zip(self.criteria, self.weights)
        )
        return GoalSpec(self.spec.strategic, ops, self.spec.tactical, self.spec.constraints)


def decompose(spec: GoalSpec) -> DecomposedGoals:
    if not spec.operational:
        raise EmptyCriteria("goal spec has no operational criteria")
    for c in spec.operational:
        if c.metric_id not in METRIC_IDS:
            raise UnknownMetric(f"{c.metric_id!r} is not a known metric id")
    raw = [c.weight for c in spec.operational]
    total = math.fsum(raw)
    weights = raw if abs(total - 1.0) <= 1e-12 else [w / total for w in raw]
    filters = tuple(c for c in spec.constraints if c.field is not None)
    bound = tuple(BoundCriterion(c, w, filters) for c, w in zip(spec.operational, weights))
    return DecomposedGoals(spec, bound)


def criterion_scores(
    goals: DecomposedGoals, log: Sequence[InteractionEvent], *,
    n_weeks: int | None = None, population: Sequence[str] | None = None, start_week: int = 0,
) -> list[float]:
    """Pass-fraction of each bound criterion, in declaration order."""
    if not log:
        raise MetricError("empty-log")
    n_weeks = n_weeks or horizon_weeks(log) - start_week
    cache: dict[tuple, dict] = {}
    scores = []
    for b in goals.bound:
        if b.constraints not in cache:
            sub = [ev for ev in log if all(c.admits(ev) for c in b.constraints)]
            cache[b.constraints] = user_statistics(sub, n_weeks, start_week)
        stats = cache[b.constraints]
        users = list(population) if population is not None else sorted(stats)
        scores.append(b.score(stats, users))
    return scores


def alignment_record(
    goals: DecomposedGoals, scores: Sequence[float], context_tag: str | None = None
) -> AlignmentRecord:
    """Pair the i-th task criterion with the i-th goal criterion.

    A ragged tail pairs with the mean score of the other kind; when one kind is
    absent entirely its side is taken as fully met (1.0). A pair's weight is the
    mean of its members' weights, renormalized over pairs.
    """
    tasks = [(s, b.weight) for s, b in zip(scores, goals.bound) if b.criterion.kind == "task"]
    goal_side = [(s, b.weight) for s, b in zip(scores, goals.bound) if b.criterion.kind == "goal"]
    mean_t = math.fsum(s for s, _ in tasks) / len(tasks) if tasks else 1.0
    mean_g = math.fsum(s for s, _ in goal_side) / len(goal_side) if goal_side else 1.0
    triples = []
    for i in range(max(len(tasks), len(goal_side))):
        if i < len(tasks) and i < len(goal_side):
            (t, wt), (g, wg) = tasks[i], goal_side[i]
            triples.append((t, g, (wt + wg) / 2.0))
        elif i < len(tasks):
            t, wt = tasks[i]
            triples.append((t, mean_g, wt))
        else:
            g, wg = goal_side[i]
            triples.append((mean_t, g, wg))
    total = math.fsum(w for _, _, w in triples)
    return AlignmentRecord(
        task_scores=tuple(t for t, _, _ in triples),
        goal_scores=tuple(g for _, g, _ in triples),
        weights=tuple(w / total for _, _, w in triples),
        context_tag=context_tag,
    )


def evaluate_criteria(
    goals: DecomposedGoals, log: Sequence[InteractionEvent], *,
    n_weeks: int | None = None, population: Sequence[str] | None = None,
    start_week: int = 0, context_tag: str | None = None,
) -> AlignmentRecord:
    scores = criterion_scores(
        goals, log, n_weeks=n_weeks, population=population, start_week=start_week
    )
    return alignment_record(goals, scores, context_tag)

