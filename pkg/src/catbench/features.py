"""Per-domain feature vectors and the scalar domain summary used by transfer scoring."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

from .domain import CommandType, Domain, InteractionEvent, default_params
from .errors import MetricError
from .synth import N_GENRES

FEATURE_NAMES: dict[Domain, tuple[str, str, str, str]] = {
    Domain.MUSIC: (
        "duration_preference",
        "genre_affinity_entropy",
        "tempo_proxy",
        "artist_exploration_rate",
    ),
    Domain.PODCAST: (
        "episode_length_tolerance",
        "topic_interest_entropy",
        "host_repeat_rate",
        "update_cycle_engagement",
    ),
    Domain.AUDIOBOOK: (
        "completion_tendency",
        "genre_preference_entropy",
        "narrator_repeat_rate",
        "speed_setting_proxy",
    ),
}


@dataclass(frozen=True)
class DomainFeatureVector:
    domain: Domain
    features: tuple[float, ...]
    psi: float

    def __post_init__(self):
        if len(self.features) != len(FEATURE_NAMES[self.domain]):
            raise MetricError("feature-count", f"{self.domain.value} expects 4 features")
        if not self.psi > 0:
            raise MetricError("nonpositive-psi", f"psi must be > 0, got {self.psi}")

    def named(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES[self.domain], self.features))

    def to_dict(self) -> dict:
        return {"domain": self.domain.value, "features": self.named(), "psi": self.psi}


def content_parts(content_id: str) -> tuple[str, str]:
    """``(genre, creator)`` keys from a catalog id like ``music:g03:c17:i000042``."""
    parts = content_id.split(":")
    if len(parts) >= 3:
        return f"{parts[0]}:{parts[1]}", f"{parts[0]}:{parts[2]}"
    return content_id, content_id


def mean_session_minutes(log: Sequence[InteractionEvent]) -> float:
    per_session: dict[str, int] = defaultdict(int)
    for ev in log:
        per_session[ev.session_id] += ev.engagement_s
    if not per_session:
        raise MetricError("empty-log")
    return math.fsum(per_session.values()) / len(per_session) / 60.0


def _normalized_entropy(counts: Counter) -> float:
    n = sum(counts.values())
    if n == 0:
        return 0.0
    h = -math.fsum((c / n) * math.log(c / n) for c in counts.values() if c)
    return h / math.log(max(N_GENRES, len(counts)))


def domain_feature_vector(
    log: Sequence[InteractionEvent],
    domain: Domain | None = None,
    *,
    item_length_s: float | None = None,
) -> DomainFeatureVector:
    """Tally the four features of ``domain`` over its events of ``log``.

    ``log`` may mix domains only when ``domain`` is given; events of other
    domains are ignored. Every feature lands in [0, 1].
    """
    if domain is None:
        seen = {ev.domain for ev in log}
        if len(seen) > 1:
            raise MetricError("mixed-domains", "pass domain= for a multi-domain log")
        if not seen:
            raise MetricError("empty-log")
        domain = seen.pop()
    events = sorted((ev for ev in log if ev.domain is domain), key=lambda e: (e.user_id, e.timestamp))
    if not events:
        raise MetricError("empty-log", f"no {domain.value} events")
    item_len = item_length_s or default_params(domain).item_length_s

    plays = 0
    listened = 0.0
    completed = 0
    novel = 0
    navigate = 0
    resume = 0
    repeats = 0
    genres: Counter = Counter()
    heard: dict[str, set[str]] = defaultdict(set)
    weeks: dict[str, set[int]] = defaultdict(set)
    last_week = 0
    for ev in events:
        weeks[ev.user_id].add(ev.week)
        last_week = max(last_week, ev.week)
        if ev.command_type is CommandType.NAVIGATE:
            navigate += 1
        elif ev.command_type is CommandType.RESUME:
            resume += 1
        if not ev.recognized:
            continue
        plays += 1
        listened += min(1.0, ev.engagement_s / item_len)
        completed += ev.completed
        novel += ev.novel_content
        genre, creator = content_parts(ev.content_id)
        genres[genre] += 1
        if creator in heard[ev.user_id]:
            repeats += 1
        heard[ev.user_id].add(creator)

    n_events = len(events)
    n_weeks = last_week + 1
    listen_frac = listened / plays if plays else 0.0
    entropy = _normalized_entropy(genres)
    cadence = math.fsum(len(w) / n_weeks for w in weeks.values()) / len(weeks)
    by_domain = {
        Domain.MUSIC: (listen_frac, entropy, navigate / n_events, novel / plays if plays else 0.0),
        Domain.PODCAST: (listen_frac, entropy, repeats / plays if plays else 0.0, cadence),
        Domain.AUDIOBOOK: (completed / plays if plays else 0.0, entropy,
                           repeats / plays if plays else 0.0, resume / n_events),
    }
    return DomainFeatureVector(domain, by_domain[domain], mean_session_minutes(events))
