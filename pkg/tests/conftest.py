import pytest
from hypothesis import HealthCheck, settings

from catbench.domain import Domain, ScenarioConfig
from catbench.synth import simulate_with_trace

settings.register_profile("catbench", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("catbench")

MIX = {Domain.MUSIC: 0.5, Domain.PODCAST: 0.3, Domain.AUDIOBOOK: 0.2}


def make_config(**overrides) -> ScenarioConfig:
    base = dict(scenario_id="small", seed=7, n_users=60, domain_mix=MIX, duration_weeks=3)
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture(scope="session")
def small_config() -> ScenarioConfig:
    return make_config()


@pytest.fixture(scope="session")
def small_trace(small_config):
    return simulate_with_trace(small_config)


@pytest.fixture(scope="session")
def small_log(small_trace):
    return small_trace.events


# one (criterion, name, passed, detail) row per acceptance check
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n} {name}: {detail}")
