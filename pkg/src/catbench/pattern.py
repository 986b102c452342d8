"""Tabular task -> hidden -> goal model.

Hidden states are ``K`` equal-width satisfaction buckets. The goal probability
for a task state marginalizes the hidden state out::

    P(g | t) = sum_h P(g | h, t) * P(h | t)
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import COMMAND_TYPES, InteractionEvent
from .errors import CatBenchError

ENGAGED = "engaged_session"
NOT_ENGAGED = "not_engaged"
DEFAULT_ENGAGED_THRESHOLD_S = 600


class UnknownTaskState(CatBenchError):
    code = "unknown-task-state"


def task_label(command_type, recognized: bool) -> str:
    return f"{command_type.value}:{'ok' if recognized else 'miss'}"


@dataclass(frozen=True)
class StateSpace:
    task_states: tuple[str, ...] = tuple(
        task_label(c, r) for c in COMMAND_TYPES for r in (True, False)
    )
    n_hidden: int = 4
    goal_states: tuple[str, ...] = (ENGAGED, NOT_ENGAGED)
    engaged_threshold_s: int = DEFAULT_ENGAGED_THRESHOLD_S

    def __post_init__(self):
        if self.n_hidden < 2:
            raise ValueError("need at least two hidden buckets")
        if not self.task_states or not self.goal_states:
            raise ValueError("task and goal state sets must be non-empty")
        labels = [*self.task_states, *self.hidden_states, *self.goal_states]
        if len(set(labels)) != len(labels):
            raise ValueError("state labels must be distinct across t, h and g")

    @property
    def hidden_states(self) -> tuple[str, ...]:
        return tuple(f"h{k}" for k in range(1, self.n_hidden + 1))

    def task_index(self, label: str) -> int:
        try:
            return self.task_states.index(label)
        except ValueError:
            raise UnknownTaskState(f"{label!r} is not a task state") from None


def bucket_of(x: float, k: int) -> int:
    """1-based equal-width bucket of ``x`` in [0, 1]; the top bucket is closed."""
    return min(int(x * k), k - 1) + 1


def label_hidden(
    log: Sequence[InteractionEvent],
    space: StateSpace,
    ground_truth: Sequence[float] | None = None,
) -> list[int]:
    """One 1-based hidden bucket per event.

    With ``ground_truth`` (the generator's latent satisfaction per event) the
    labels are those values bucketed. Otherwise each session's total
    engagement is ranked among all sessions and its quantile is bucketed.
    """
    k = space.n_hidden
    if ground_truth is not None:
        if len(ground_truth) != len(log):
            raise ValueError("ground_truth must align with the log")
        return [bucket_of(x, k) for x in ground_truth]
    totals: dict[str, int] = defaultdict(int)
    for ev in log:
        totals[ev.session_id] += ev.engagement_s
    order = sorted(totals, key=lambda s: (totals[s], s))
    n = len(order)
    quantile = {sid: (rank + 0.5) / n for rank, sid in enumerate(order)}
    return [bucket_of(quantile[ev.session_id], k) for ev in log]


def goal_labels(log: Sequence[InteractionEvent], space: StateSpace) -> list[int]:
    """Per-event goal index: engaged iff the event's session meets the threshold."""
    totals: dict[str, int] = defaultdict(int)
    for ev in log:
        totals[ev.session_id] += ev.engagement_s
    engaged = space.goal_states.index(ENGAGED) if ENGAGED in space.goal_states else 0
    other = 1 - engaged if len(space.goal_states) == 2 else engaged
    return [engaged if totals[ev.session_id] >= space.engaged_threshold_s else other for ev in log]


def tally(
    log: Sequence[InteractionEvent], hidden: Sequence[int], space: StateSpace,
    goals: Sequence[int] | None = None,
) -> np.ndarray:
    """Joint count table of shape ``(T, H, G)``; shards merge by addition."""
    goals = goal_labels(log, space) if goals is None else goals
    counts = np.zeros((len(space.task_states), space.n_hidden, len(space.goal_states)), dtype=np.int64)
    index = {lab: i for i, lab in enumerate(space.task_states)}
    for ev, h, g in zip(log, hidden, goals):
        label = task_label(ev.command_type, ev.recognized)
        if label not in index:
            raise UnknownTaskState(f"{label!r} is not a task state")
        counts[index[label], h - 1, g] += 1
    return counts


@dataclass
class PatternModel:
    space: StateSpace
    counts: np.ndarray
    smoothing: float
    p_h_given_t: np.ndarray = field(init=False)
    # indexed [h, t, g]
    p_g_given_ht: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = float(self.smoothing)
        c = self.counts.astype(float)
        n_t, n_h, n_g = c.shape
        c_th = c.sum(axis=2)
        self.p_h_given_t = _normalize_rows(c_th + lam, c_th.sum(axis=1, keepdims=True) + lam * n_h)
        p_g = _normalize_rows(c + lam, c_th[:, :, None] + lam * n_g)
        self.p_g_given_ht = np.transpose(p_g, (1, 0, 2)).copy()

    def goal_given_task(self, t: str) -> dict[str, float]:
        return goal_given_task(self, t)

    def to_dict(self) -> dict:
        sp = self.space
        return {
            "space": {
                "task_states": list(sp.task_states),
                "hidden_states": list(sp.hidden_states),
                "goal_states": list(sp.goal_states),
                "engaged_threshold_s": sp.engaged_threshold_s,
            },
            "smoothing": self.smoothing,
            "counts": self.counts.tolist(),
            "p_h_given_t": {
                t: dict(zip(sp.hidden_states, self.p_h_given_t[i].tolist()))
                for i, t in enumerate(sp.task_states)
            },
            "p_g_given_ht": {
                h: {
                    t: dict(zip(sp.goal_states, self.p_g_given_ht[j, i].tolist()))
                    for i, t in enumerate(sp.task_states)
                }
                for j, h in enumerate(sp.hidden_states)
            },
            "p_g_given_t": {t: goal_given_task(self, t) for t in sp.task_states},
        }

    @classmethod
    def from_dict(cls, d: dict) -> PatternModel:
        sp = d["space"]
        space = StateSpace(
            task_states=tuple(sp["task_states"]),
            n_hidden=len(sp["hidden_states"]),
            goal_states=tuple(sp["goal_states"]),
            engaged_threshold_s=int(sp["engaged_threshold_s"]),
        )
        return cls(space, np.asarray(d["counts"], dtype=np.int64), float(d["smoothing"]))


def _normalize_rows(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        p = num / den
    # lambda = 0 and no observations: no evidence, fall back to uniform
    width = num.shape[-1]
    empty = ~np.isfinite(p).all(axis=-1)
    p[empty] = 1.0 / width
    return p / p.sum(axis=-1, keepdims=True)


def fit(
    log: Sequence[InteractionEvent],
    hidden: Sequence[int],
    space: StateSpace,
    smoothing: float = 1.0,
) -> PatternModel:
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    return PatternModel(space, tally(log, hidden, space), smoothing)


def fit_counts(counts: np.ndarray, space: StateSpace, smoothing: float = 1.0) -> PatternModel:
    return PatternModel(space, np.asarray(counts, dtype=np.int64), smoothing)


def goal_given_task(model: PatternModel, t: str) -> dict[str, float]:
    i = model.space.task_index(t)
    p_h = model.p_h_given_t[i]
    dist = [math.fsum(model.p_g_given_ht[h, i, g] * p_h[h] for h in range(len(p_h)))
            for g in range(len(model.space.goal_states))]
    return dict(zip(model.space.goal_states, dist))
