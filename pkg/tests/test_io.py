import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from catbench import io as cio
from catbench.domain import Action, CommandType, Domain, InteractionEvent
from catbench.errors import LogParseError, ValidationError

from conftest import make_config

events = st.builds(
    InteractionEvent,
    st.integers(0, 2**40), st.text(min_size=1, max_size=6), st.text(min_size=1, max_size=6),
    st.sampled_from(list(Domain)), st.sampled_from(list(CommandType)), st.booleans(),
    st.integers(0, 5000), st.text(max_size=12), st.booleans(), st.integers(0, 10**5), st.booleans(),
    st.one_of(st.none(), st.sampled_from(list(Action))),
)


@given(st.lists(events, max_size=20))
def test_parse_emit_roundtrip(evs):
    text = "".join(cio.event_line(e) + "\n" for e in evs)
    parsed = cio.parse_lines(text.splitlines())
    assert parsed == evs
    assert "".join(cio.event_line(e) + "\n" for e in parsed) == text


def test_file_roundtrip_is_byte_identical(tmp_path, small_log):
    a, b = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    cio.emit_log(small_log, a)
    cio.emit_log(cio.parse_log(a), b)
    assert a.read_bytes() == b.read_bytes()


def _line(**changes):
    ev = InteractionEvent(0, "u", "s", Domain.MUSIC, CommandType.PLAY_SIMILAR, True, 10, "c", False, 5, False)
    d = ev.to_dict()
    d.update(changes)
    return json.dumps(d)


@pytest.mark.parametrize("text,code", [
    ("{not json", "malformed-line"),
    (_line(extra=1), "unknown-field"),
    (_line(timestamp=-1), "malformed-line"),
    (_line(timestamp=1.5), "malformed-line"),
    (_line(recognized=1), "malformed-line"),
    (_line(domain="radio"), "malformed-line"),
    (_line(command_type="sing"), "malformed-line"),
    (_line(action="dance"), "malformed-line"),
    ("[1, 2]", "malformed-line"),
])
def test_strict_errors_name_the_line(text, code):
    with pytest.raises(LogParseError) as exc:
        cio.parse_lines([_line(), "", text], "x.ndjson")
    assert exc.value.code == code
    assert exc.value.line == 3
    assert str(exc.value).startswith("x.ndjson:3:")


def test_missing_field():
    d = json.loads(_line())
    del d["latency_ms"]
    with pytest.raises(LogParseError, match="missing latency_ms"):
        cio.parse_lines([json.dumps(d)])


def test_lenient_mode_skips_and_collects():
    problems = []
    got = cio.parse_lines([_line(), "{bad", _line(extra=1), _line(timestamp=-4)], strict=False, problems=problems)
    assert len(got) == 2
    assert [p.line for p in problems] == [2, 4]


def test_latent_roundtrip_and_errors(tmp_path):
    p = tmp_path / "lat.txt"
    cio.emit_latent([0.0, 0.25, 1.0], p)
    assert cio.parse_latent(p) == [0.0, 0.25, 1.0]
    p.write_text("0.5\n1.5\n")
    with pytest.raises(LogParseError, match=":2:"):
        cio.parse_latent(p)


def test_read_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "a": 1,\n}\n')
    with pytest.raises(LogParseError) as exc:
        cio.read_json(p)
    assert exc.value.code == "malformed-document" and exc.value.line == 3


def test_load_scenarios(tmp_path):
    cfg = make_config()
    (tmp_path / "one.json").write_text(cio.dumps(cfg.to_dict()))
    (tmp_path / "many.json").write_text(cio.dumps({"scenarios": [cfg.with_arm("cat").to_dict()]}))
    (tmp_path / "x.goals.json").write_text("{}")
    loaded = cio.load_scenarios(tmp_path)
    assert [c.arm for c, _ in loaded] == ["cat", "control"]
    assert loaded[1][0] == cfg
    (tmp_path / "bad.json").write_text(cio.dumps({"scenarios": [3]}))
    with pytest.raises(ValidationError):
        cio.load_scenarios(tmp_path)


def test_manifest_roundtrip(tmp_path):
    src = tmp_path / "in.txt"
    src.write_text("hello\n")
    out = tmp_path / "out.txt"
    out.write_text("world\n")
    m = cio.RunManifest("generate", ["generate", "--out", str(out)], seeds=[1])
    m.add_input("scenario", src)
    m.add_input("scenario", src)
    m.add_output(out)
    m.write(tmp_path / "m.json")
    back = cio.RunManifest.from_dict(cio.read_json(tmp_path / "m.json"))
    assert back == m
    assert len(back.inputs) == 1 and back.inputs[0]["content"] == "hello\n"
    assert back.outputs[0]["sha256"] == cio.sha256_file(out)


def test_dumps_rejects_nan():
    with pytest.raises(ValueError):
        cio.dumps({"x": float("nan")})
