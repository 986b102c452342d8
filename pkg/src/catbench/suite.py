"""Reference scenario and the fifteen-configuration trial suite."""

from __future__ import annotations

from dataclasses import replace

from . import rng as rngmod
from .domain import DOMAINS, Domain, ScenarioConfig, default_params

REFERENCE_MIX = {Domain.MUSIC: 0.5, Domain.PODCAST: 0.3, Domain.AUDIOBOOK: 0.2}
FULL_WEEKS = 26

# five population mixes crossed with three generator noise regimes
SUITE_MIXES = (
    REFERENCE_MIX,
    {Domain.MUSIC: 1.0},
    {Domain.PODCAST: 1.0},
    {Domain.AUDIOBOOK: 1.0},
    {Domain.MUSIC: 0.2, Domain.PODCAST: 0.4, Domain.AUDIOBOOK: 0.4},
)
SUITE_REGIMES = ((0.1, 0.8), (0.15, 0.7), (0.2, 0.6))


def reference_scenario(n_users: int = 10_000, weeks: int = 8, seed: int = 42, arm: str = "control") -> ScenarioConfig:
    return ScenarioConfig("reference", seed, n_users, dict(REFERENCE_MIX), weeks, arm=arm)


def scenario_suite(n_users: int = 10_000, weeks: int = 8, seed: int = 42) -> list[ScenarioConfig]:
    """Fifteen paired scenarios (control and cat for each), ids ``cfg01``..``cfg15``."""
    out = []
    i = 0
    for mix in SUITE_MIXES:
        for sigma, alpha in SUITE_REGIMES:
            i += 1
            params = {d: replace(default_params(d), sigma=sigma, alpha=alpha) for d in DOMAINS}
            cfg = ScenarioConfig(
                f"cfg{i:02d}", rngmod.derive_seed(seed, "suite", i) >> 1, n_users, dict(mix), weeks, params
            )
            out += [cfg, cfg.with_arm("cat")]
    return out
