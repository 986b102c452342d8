"""Log, latent-trace, config and manifest files.

Logs are JSON lines: one event per line, keys sorted, no insignificant
whitespace, so emitting a parsed log reproduces the original bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .domain import EVENT_FIELDS, OPTIONAL_EVENT_FIELDS, Action, CommandType, Domain, InteractionEvent, ScenarioConfig
from .errors import LogParseError, ValidationError

_DOMAINS = {d.value: d for d in Domain}
_COMMANDS = {c.value: c for c in CommandType}
_ACTIONS = {a.value: a for a in Action}
_KNOWN = frozenset(EVENT_FIELDS) | frozenset(OPTIONAL_EVENT_FIELDS)
_INTS = ("timestamp", "latency_ms", "engagement_s")
_STRS = ("user_id", "session_id", "content_id")
_BOOLS = ("recognized", "novel_content", "completed")


def dumps(obj) -> str:
    """Canonical JSON text used for every structured output."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_pretty(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def event_line(ev: InteractionEvent) -> str:
    return dumps(ev.to_dict())


def _bad(path: str, line: int, message: str, code: str = "malformed-line") -> LogParseError:
    return LogParseError(code, path, line, message)


def event_from_record(rec: dict, path: str = "<log>", line: int = 0, strict: bool = True) -> InteractionEvent:
    if not isinstance(rec, dict):
        raise _bad(path, line, "record is not an object")
    if strict:
        extra = rec.keys() - _KNOWN
        if extra:
            raise _bad(path, line, f"unknown fields {sorted(extra)}", "unknown-field")
    missing = [f for f in EVENT_FIELDS if f not in rec]
    if missing:
        raise _bad(path, line, f"missing {', '.join(missing)}")
    for f in _INTS:
        v = rec[f]
        if type(v) is not int or v < 0:
            raise _bad(path, line, f"{f} must be a non-negative integer")
    for f in _STRS:
        if type(rec[f]) is not str:
            raise _bad(path, line, f"{f} must be a string")
    for f in _BOOLS:
        if type(rec[f]) is not bool:
            raise _bad(path, line, f"{f} must be a boolean")
    domain = _DOMAINS.get(rec["domain"])
    command = _COMMANDS.get(rec["command_type"])
    if domain is None:
        raise _bad(path, line, f"unknown domain {rec['domain']!r}")
    if command is None:
        raise _bad(path, line, f"unknown command_type {rec['command_type']!r}")
    action = None
    if rec.get("action") is not None:
        action = _ACTIONS.get(rec["action"])
        if action is None:
            raise _bad(path, line, f"unknown action {rec['action']!r}")
    return InteractionEvent(
        rec["timestamp"], rec["user_id"], rec["session_id"], domain, command,
        rec["recognized"], rec["latency_ms"], rec["content_id"], rec["novel_content"],
        rec["engagement_s"], rec["completed"], action,
    )


def parse_lines(
    lines: Iterable[str], path: str = "<log>", strict: bool = True,
    problems: list[LogParseError] | None = None,
) -> list[InteractionEvent]:
    """Parse JSON-lines text; blank lines are skipped.

    In strict mode the first bad line raises. In lenient mode unknown fields
    are ignored, bad lines are skipped and collected into ``problems``.
    """
    events = []
    loads = json.loads
    for n, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            try:
                rec = loads(text)
            except json.JSONDecodeError as exc:
                raise _bad(path, n, f"invalid JSON ({exc.msg})") from None
            events.append(event_from_record(rec, path, n, strict))
        except LogParseError as exc:
            if strict:
                raise
            if problems is not None:
                problems.append(exc)
    return events


def parse_log(path: str | Path, strict: bool = True, problems: list[LogParseError] | None = None) -> list[InteractionEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, str(path), strict, problems)


def emit_log(events: Iterable[InteractionEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(event_line(ev))
            fh.write("\n")


def emit_latent(values: Sequence[float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{v!r}\n" for v in values)


def parse_latent(path: str | Path) -> list[float]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                v = float(text)
            except ValueError:
                raise _bad(str(path), n, "not a number") from None
            if not 0.0 <= v <= 1.0:
                raise _bad(str(path), n, "latent value outside [0, 1]")
            out.append(v)
    return out


def read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise LogParseError("malformed-document", str(path), exc.lineno, exc.msg) from None


def write_text(path: str | Path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def scenario_files(path: str | Path) -> list[Path]:
    """A scenario file, or every ``*.json`` scenario in a directory (goal specs excluded)."""
    p = Path(path)
    if p.is_dir():
        return sorted(f for f in p.glob("*.json") if not f.name.endswith(".goals.json"))
    return [p]


def load_scenarios(path: str | Path) -> list[tuple[ScenarioConfig, Path]]:
    """Scenarios with the file each came from; a file may hold one or a ``scenarios`` list."""
    out = []
    for f in scenario_files(path):
        doc = read_json(f)
        docs = doc["scenarios"] if isinstance(doc, dict) and "scenarios" in doc else [doc]
        for d in docs:
            if not isinstance(d, dict):
                raise ValidationError([("malformed-scenario", f"{f}: scenario must be an object")])
            out.append((ScenarioConfig.from_dict(d), f))
    return out


@dataclass
class RunManifest:
    """Everything needed to regenerate a run: inputs inline, with hashes."""

    command: str
    argv: list[str]
    inputs: list[dict] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)
    outputs: list[dict] = field(default_factory=list)
    tool_version: str = __version__

    def add_input(self, role: str, path: str | Path) -> None:
        p = Path(path)
        if any(i["path"] == str(p) for i in self.inputs):
            return
        text = p.read_text(encoding="utf-8")
        self.inputs.append({
            "role": role,
            "path": str(p),
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "content": text,
        })

    def add_output(self, path: str | Path) -> None:
        self.outputs.append({"path": str(path), "sha256": sha256_file(path)})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunManifest:
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})

    def write(self, path: str | Path) -> None:
        write_text(path, dumps_pretty(self.to_dict()))
