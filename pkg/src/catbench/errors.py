"""Exception hierarchy shared by every catbench module."""

from __future__ import annotations


class CatBenchError(Exception):
    """Base class; the CLI maps these to exit status 1."""

    code = "error"


class ValidationError(CatBenchError):
    """One or more invariants failed; ``problems`` lists every violation."""

    code = "invalid"

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = list(problems)
        text = "; ".join(f"{code}: {msg}" for code, msg in self.problems)
        super().__init__(text)

    @property
    def codes(self) -> list[str]:
        return [code for code, _ in self.problems]


class EventStreamError(CatBenchError):
    def __init__(self, code: str, index: int, message: str):
        self.code = code
        self.index = index
        super().__init__(f"{code} at event {index}: {message}")


class LogParseError(CatBenchError):
    def __init__(self, code: str, path: str, line: int, message: str):
        self.code = code
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {code}: {message}")


class MetricError(CatBenchError):
    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class ConvergenceError(CatBenchError):
    code = "no-convergence-within-max-iters"

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"value iteration did not converge in {iterations} sweeps (residual {residual:.3g})"
        )
