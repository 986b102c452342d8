"""Shared vocabulary: domains, events, users, scenario configs and their checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .errors import EventStreamError, ValidationError

SHARE_TOL = 1e-9
SECONDS_PER_DAY = 86_400
DAYS_PER_WEEK = 7


class Domain(str, Enum):
    MUSIC = "music"
    PODCAST = "podcast"
    AUDIOBOOK = "audiobook"


DOMAINS: tuple[Domain, ...] = tuple(Domain)


class CommandType(str, Enum):
    PLAY_SIMILAR = "play_similar"
    PLAY_SPECIFIC = "play_specific"
    RESUME = "resume"
    NAVIGATE = "navigate"
    EXPLORE_NEW = "explore_new"


COMMAND_TYPES: tuple[CommandType, ...] = tuple(CommandType)


class Action(str, Enum):
    """Recommendation actions available to the system each day."""

    EXPLOIT_SIMILAR = "exploit_similar"
    EXPLORE_NEW = "explore_new"
    RESUME_CONTENT = "resume_content"
    SWITCH_DOMAIN = "switch_domain"


ACTIONS: tuple[Action, ...] = tuple(Action)

AGE_GROUPS = ("18-24", "25-34", "35-54", "55+")

EVENT_FIELDS = (
    "timestamp",
    "user_id",
    "session_id",
    "domain",
    "command_type",
    "recognized",
    "latency_ms",
    "content_id",
    "novel_content",
    "engagement_s",
    "completed",
)
OPTIONAL_EVENT_FIELDS = ("action",)


class InteractionEvent(NamedTuple):
    """One simulated exchange between a user and the assistant.

    ``action`` is the recommendation action the system issued that day; the
    simulator always fills it, external logs may leave it out.
    """

    timestamp: int
    user_id: str
    session_id: str
    domain: Domain
    command_type: CommandType
    recognized: bool
    latency_ms: int
    content_id: str
    novel_content: bool
    engagement_s: int
    completed: bool
    action: Action | None = None

    def to_dict(self) -> dict:
        d = {
            "timestamp": self.timestamp,
            "user_id": self.user_id,
            "session_id": self.session_id,
            "domain": self.domain.value,
            "command_type": self.command_type.value,
            "recognized": self.recognized,
            "latency_ms": self.latency_ms,
            "content_id": self.content_id,
            "novel_content": self.novel_content,
            "engagement_s": self.engagement_s,
            "completed": self.completed,
        }
        if self.action is not None:
            d["action"] = self.action.value
        return d

    @property
    def day(self) -> int:
        return self.timestamp // SECONDS_PER_DAY

    @property
    def week(self) -> int:
        return self.timestamp // (SECONDS_PER_DAY * DAYS_PER_WEEK)


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    age_group: str
    domain_affinity: dict[Domain, float]
    base_daily_minutes: float
    exploration_propensity: float
    churn_hazard: float

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "age_group": self.age_group,
            "domain_affinity": {d.value: w for d, w in self.domain_affinity.items()},
            "base_daily_minutes": self.base_daily_minutes,
            "exploration_propensity": self.exploration_propensity,
            "churn_hazard": self.churn_hazard,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> UserProfile:
        return cls(
            user_id=d["user_id"],
            age_group=d["age_group"],
            domain_affinity={Domain(k): float(v) for k, v in d["domain_affinity"].items()},
            base_daily_minutes=float(d["base_daily_minutes"]),
            exploration_propensity=float(d["exploration_propensity"]),
            churn_hazard=float(d["churn_hazard"]),
        )

    def problems(self) -> list[tuple[str, str]]:
        out = []
        if abs(sum(self.domain_affinity.values()) - 1.0) > SHARE_TOL:
            out.append(("invalid-affinity-sum", f"{self.user_id}: affinity weights must sum to 1"))
        probs = [self.exploration_propensity, self.churn_hazard, *self.domain_affinity.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            out.append(("probability-out-of-range", f"{self.user_id}: probability outside [0, 1]"))
        if not self.base_daily_minutes > 0:
            out.append(("nonpositive-minutes", f"{self.user_id}: base_daily_minutes must be > 0"))
        return out


# drive(a): satisfaction each action pulls toward, per domain.
DEFAULT_DRIVE: dict[Domain, dict[Action, float]] = {
    Domain.MUSIC: {
        Action.EXPLOIT_SIMILAR: 0.45,
        Action.EXPLORE_NEW: 0.80,
        Action.RESUME_CONTENT: 0.50,
        Action.SWITCH_DOMAIN: 0.40,
    },
    Domain.PODCAST: {
        Action.EXPLOIT_SIMILAR: 0.45,
        Action.EXPLORE_NEW: 0.72,
        Action.RESUME_CONTENT: 0.76,
        Action.SWITCH_DOMAIN: 0.40,
    },
    Domain.AUDIOBOOK: {
        Action.EXPLOIT_SIMILAR: 0.40,
        Action.EXPLORE_NEW: 0.62,
        Action.RESUME_CONTENT: 0.84,
        Action.SWITCH_DOMAIN: 0.35,
    },
}


@dataclass(frozen=True)
class GeneratorParams:
    """Per-domain generator knobs.

    ``sigma`` is the daily satisfaction noise and ``alpha`` the day-to-day
    persistence of satisfaction; the remaining rates shape the emitted events.
    """

    sigma: float = 0.1
    alpha: float = 0.8
    base_recognition_rate: float = 0.92
    mean_session_events: float = 4.0
    novelty_base_rate: float = 0.05
    completion_base_rate: float = 0.5
    item_length_s: float = 600.0
    navigate_rate: float = 0.1
    latency_mean_ms: float = 350.0
    latency_sd_ms: float = 80.0
    drive: dict[Action, float] = field(
        default_factory=lambda: dict(DEFAULT_DRIVE[Domain.MUSIC])
    )

    def problems(self, label: str = "") -> list[tuple[str, str]]:
        out = []
        where = f"{label}: " if label else ""
        if not self.sigma >= 0:
            out.append(("invalid-generator-params", f"{where}sigma must be >= 0"))
        if not 0.0 <= self.alpha <= 1.0:
            out.append(("invalid-generator-params", f"{where}alpha must lie in [0, 1]"))
        rates = {
            "base_recognition_rate": self.base_recognition_rate,
            "novelty_base_rate": self.novelty_base_rate,
            "completion_base_rate": self.completion_base_rate,
            "navigate_rate": self.navigate_rate,
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                out.append(("invalid-generator-params", f"{where}{name} must lie in [0, 1]"))
        if not self.mean_session_events > 0:
            out.append(("invalid-generator-params", f"{where}mean_session_events must be > 0"))
        if not self.item_length_s > 0:
            out.append(("invalid-generator-params", f"{where}item_length_s must be > 0"))
        if not (self.latency_mean_ms >= 0 and self.latency_sd_ms >= 0):
            out.append(("invalid-generator-params", f"{where}latency parameters must be >= 0"))
        missing = [a.value for a in ACTIONS if a not in self.drive]
        if missing:
            out.append(("invalid-generator-params", f"{where}drive lacks {', '.join(missing)}"))
        if any(not 0.0 <= v <= 1.0 for v in self.drive.values()):
            out.append(("invalid-generator-params", f"{where}drive values must lie in [0, 1]"))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["drive"] = {a.value: v for a, v in self.drive.items()}
        return d

    @classmethod
    def from_dict(cls, d: Mapping, base: GeneratorParams | None = None) -> GeneratorParams:
        base = base or cls()
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(
                [("unknown-field", f"generator_params: {sorted(unknown)}")]
            )
        kwargs = {k: float(v) for k, v in d.items() if k != "drive"}
        if "drive" in d:
            drive = dict(base.drive)
            drive.update({Action(k): float(v) for k, v in d["drive"].items()})
            kwargs["drive"] = drive
        return replace(base, **kwargs)


def default_params(domain: Domain) -> GeneratorParams:
    shapes = {
        Domain.MUSIC: dict(
            mean_session_events=12.0,
            item_length_s=210.0,
            completion_base_rate=0.55,
            novelty_base_rate=0.05,
            navigate_rate=0.18,
        ),
        Domain.PODCAST: dict(
            mean_session_events=3.0,
            item_length_s=1800.0,
            completion_base_rate=0.45,
            novelty_base_rate=0.04,
            navigate_rate=0.08,
        ),
        Domain.AUDIOBOOK: dict(
            mean_session_events=2.5,
            item_length_s=2400.0,
            completion_base_rate=0.40,
            novelty_base_rate=0.03,
            navigate_rate=0.12,
        ),
    }
    return GeneratorParams(drive=dict(DEFAULT_DRIVE[domain]), **shapes[domain])


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    seed: int
    n_users: int
    domain_mix: dict[Domain, float]
    duration_weeks: int = 26
    generator_params: dict[Domain, GeneratorParams] = field(
        default_factory=lambda: {d: default_params(d) for d in DOMAINS}
    )
    goal_spec_path: str = "builtin:engagement"
    arm: str = "control"
    initial_satisfaction: float = 0.5

    @property
    def n_days(self) -> int:
        return self.duration_weeks * DAYS_PER_WEEK

    def params_for(self, domain: Domain) -> GeneratorParams:
        return self.generator_params.get(domain) or default_params(domain)

    def with_arm(self, arm: str) -> ScenarioConfig:
        return replace(self, arm=arm)

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "n_users": self.n_users,
            "duration_weeks": self.duration_weeks,
            "domain_mix": {d.value: w for d, w in self.domain_mix.items()},
            "generator_params": {d.value: p.to_dict() for d, p in self.generator_params.items()},
            "goal_spec_path": self.goal_spec_path,
            "arm": self.arm,
            "initial_satisfaction": self.initial_satisfaction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ScenarioConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        problems = [("unknown-field", f"scenario: {sorted(unknown)}")] if unknown else []
        for key in ("scenario_id", "seed", "n_users", "domain_mix"):
            if key not in d:
                problems.append(("missing-field", f"scenario: {key} is required"))
        if problems:
            raise ValidationError(problems)
        try:
            mix = {Domain(k): float(v) for k, v in d["domain_mix"].items()}
            params = {dom: default_params(dom) for dom in DOMAINS}
            for k, v in d.get("generator_params", {}).items():
                dom = Domain(k)
                params[dom] = GeneratorParams.from_dict(v, base=default_params(dom))
        except ValueError as exc:
            raise ValidationError([("invalid-value", str(exc))]) from exc
        return cls(
            scenario_id=str(d["scenario_id"]),
            seed=int(d["seed"]),
            n_users=int(d["n_users"]),
            duration_weeks=int(d.get("duration_weeks", 26)),
            domain_mix=mix,
            generator_params=params,
            goal_spec_path=str(d.get("goal_spec_path", "builtin:engagement")),
            arm=str(d.get("arm", "control")),
            initial_satisfaction=float(d.get("initial_satisfaction", 0.5)),
        )


def scenario_problems(config: ScenarioConfig, base_dir: Path | None = None) -> list[tuple[str, str]]:
    """Every violated invariant of ``config``, in a stable order."""
    from .goals import resolve_goal_path

    problems: list[tuple[str, str]] = []
    if abs(sum(config.domain_mix.values()) - 1.0) > SHARE_TOL:
        problems.append(
            ("invalid-share-sum", f"domain_mix sums to {sum(config.domain_mix.values())!r}, not 1")
        )
    if any(w < 0 for w in config.domain_mix.values()):
        problems.append(("invalid-share-sum", "domain_mix shares must be non-negative"))
    if config.n_users <= 0:
        problems.append(("nonpositive-population", f"n_users must be > 0, got {config.n_users}"))
    if config.duration_weeks < 1:
        problems.append(("invalid-duration", f"duration_weeks must be >= 1, got {config.duration_weeks}"))
    if not 0 <= config.seed < 2**64:
        problems.append(("invalid-seed", "seed must be a 64-bit unsigned integer"))
    if config.arm not in ("control", "cat"):
        problems.append(("invalid-arm", f"arm must be control or cat, got {config.arm!r}"))
    if not 0.0 <= config.initial_satisfaction <= 1.0:
        problems.append(("invalid-initial-satisfaction", "initial_satisfaction must lie in [0, 1]"))
    for dom, params in config.generator_params.items():
        problems.extend(params.problems(dom.value))
    path = resolve_goal_path(config.goal_spec_path, base_dir) if config.goal_spec_path else None
    if path is None or not path.is_file():
        problems.append(("missing-goal-spec", f"goal spec not found: {config.goal_spec_path!r}"))
    return problems


def validate_scenario(config: ScenarioConfig, base_dir: Path | None = None) -> ScenarioConfig:
    """Return ``config`` unchanged, or raise listing every violated invariant."""
    problems = scenario_problems(config, base_dir)
    if problems:
        raise ValidationError(problems)
    return config


def event_stream_check(log: Iterable[InteractionEvent]) -> None:
    """Raise at the first per-session ordering or engagement violation."""
    last_ts: dict[str, int] = {}
    owner: dict[str, tuple[str, Domain]] = {}
    for i, ev in enumerate(log):
        if not ev.recognized and ev.engagement_s != 0:
            raise EventStreamError(
                "engagement-without-recognition", i,
                f"unrecognized command carries {ev.engagement_s}s of engagement",
            )
        key = (ev.user_id, ev.domain)
        seen = owner.setdefault(ev.session_id, key)
        if seen != key:
            raise EventStreamError(
                "session-inconsistent", i, f"session {ev.session_id} mixes users or domains"
            )
        prev = last_ts.get(ev.session_id)
        if prev is not None and ev.timestamp < prev:
            raise EventStreamError(
                "out-of-order-timestamp", i, f"{ev.timestamp} follows {prev} in {ev.session_id}"
            )
        last_ts[ev.session_id] = ev.timestamp


def normalize_weights(weights: Sequence[float]) -> list[float]:
    total = math.fsum(weights)
    if not total > 0:
        raise ValidationError([("nonpositive-weights", "weights must have a positive sum")])
    return [w / total for w in weights]
