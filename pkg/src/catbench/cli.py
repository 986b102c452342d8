"""``cat-bench`` command line.

Exit status: 0 on success, 1 on a data error (bad file, failed invariant),
2 on a usage error. Outputs default to ``$CATBENCH_OUT`` (or ``./catbench-out``)
when ``--out`` is not given. Every output carries a run manifest that
``cat-bench replay`` can regenerate it from.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

from . import __version__
from . import io as cio
from .domain import Domain, ScenarioConfig, scenario_problems
from .errors import CatBenchError, ValidationError
from .goals import decompose, load_goal_spec, resolve_goal_path
from .harness import RctReport, goal_prediction_scores, integration_inputs, run_rct
from .mdp import UTILITY_GOALS, Policy, estimate_mdp, value_iteration
from .metrics import BaselineAssessment, IntegrationInputs, baseline_score, gai, integration_score
from .pattern import StateSpace, fit, label_hidden
from .goals import criterion_scores, alignment_record
from .report import effects_csv, render_rct, series_csv, transfer_text
from .stats import bootstrap_ci
from .suite import FULL_WEEKS, reference_scenario, scenario_suite
from .synth import BASELINE_POLICY, simulate_with_trace
from . import rng as rngmod

ENV_OUT = "CATBENCH_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def default_out(name: str) -> Path:
    return Path(os.environ.get(ENV_OUT) or "catbench-out") / name


def _positive(flag: str, value: int | None) -> None:
    if value is not None and value <= 0:
        raise UsageError(f"{flag} must be > 0")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cat-bench", description="Goal-task alignment testing for simulated audio assistants.")
    p.add_argument("--version", action="version", version=f"cat-bench {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a scenario and write its interaction log")
    g.add_argument("--scenario", required=True, help="scenario file")
    g.add_argument("--scenario-id", help="pick one scenario from a multi-scenario file")
    g.add_argument("--policy", help="policy document for the simulated system (default: static baseline)")
    g.add_argument("--out", help="log file (JSON lines)")
    g.add_argument("--latent-out", help="also write the per-event latent satisfaction trace")
    g.add_argument("--users", type=int, help="override n_users")
    g.add_argument("--weeks", type=int, help="override duration_weeks")
    g.add_argument("--seed", type=int, help="override seed")
    g.add_argument("--workers", type=int, default=1, help="worker processes (output is identical)")

    e = sub.add_parser("evaluate", help="alignment, baseline, integration and prediction scores of a log")
    e.add_argument("--log", required=True)
    e.add_argument("--goals", required=True, help="goal spec file or builtin:<name>")
    e.add_argument("--weeks", type=int, help="horizon in weeks (default: from the log)")
    e.add_argument("--model", help="pattern model used for GAR and F1* (default: fit on the log)")
    e.add_argument("--latent", help="latent trace for hidden labels")
    e.add_argument("--lambdas", default="0.5,0.25,0.25", help="integration weights Q,C,P")
    e.add_argument("--out", help="also write the scores as JSON")
    e.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")

    f = sub.add_parser("fit-pattern", help="fit the task/hidden/goal model to a log")
    f.add_argument("--log", required=True)
    f.add_argument("--latent", help="latent trace; without it hidden states use engagement quantiles")
    f.add_argument("--hidden", type=int, default=4, help="number of satisfaction buckets")
    f.add_argument("--smoothing", type=float, default=1.0)
    f.add_argument("--threshold", type=int, default=600, help="engaged-session threshold in seconds")
    f.add_argument("--out", help="model document")
    f.add_argument("--lenient", action="store_true")

    o = sub.add_parser("optimize", help="estimate the MDP from a log and solve it")
    o.add_argument("--log", required=True)
    o.add_argument("--latent")
    o.add_argument("--hidden", type=int, default=4)
    o.add_argument("--gamma", type=float, default=0.9)
    o.add_argument("--tol", type=float, default=1e-8)
    o.add_argument("--max-iters", type=int, default=10_000)
    o.add_argument("--goal", choices=UTILITY_GOALS, default="engagement")
    o.add_argument("--out", help="policy document")
    o.add_argument("--lenient", action="store_true")

    t = sub.add_parser("transfer", help="transfer matrix and graded transfer experiment")
    t.add_argument("--out", help="output directory")
    t.add_argument("--goals", default="builtin:engagement")
    t.add_argument("--seeds", type=int, default=20, help="populations per graded pair")
    t.add_argument("--users", type=int, default=300, help="users per transfer population")
    t.add_argument("--weeks", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--reference-users", type=int, default=10_000, help="users in the reference run for feature vectors")
    t.add_argument("--no-matrix", action="store_true", help="skip the 3x3 matrix")

    r = sub.add_parser("rct", help="run the controlled trial")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenarios", help="scenario file or directory")
    src.add_argument("--suite", action="store_true", help="the built-in fifteen configurations")
    r.add_argument("--out", help="output directory")
    r.add_argument("--users", type=int, help="override n_users")
    r.add_argument("--weeks", type=int, help="override duration_weeks")
    r.add_argument("--full", action="store_true", help=f"{FULL_WEEKS}-week horizon")
    r.add_argument("--resamples", type=int, default=1000)
    r.add_argument("--level", type=float, default=0.95)
    r.add_argument("--gamma", type=float, default=0.9)
    r.add_argument("--null", action="store_true", help="run the cat arm with the baseline policy")
    r.add_argument("--no-figures", action="store_true")

    rp = sub.add_parser("report", help="render a stored trial report")
    rp.add_argument("--report", required=True, help="report.json from rct")
    rp.add_argument("--out", help="output directory")
    rp.add_argument("--no-figures", action="store_true")

    rr = sub.add_parser("replay", help="re-run a command from its manifest and compare outputs")
    rr.add_argument("--manifest", required=True)
    rr.add_argument("--out-root", help="write regenerated outputs here instead of the recorded paths")
    return p


# ---- helpers ---------------------------------------------------------------

def _abs(path: str | Path) -> Path:
    return Path(os.path.abspath(path))


def _read_log(path: str, lenient: bool):
    problems: list = []
    events = cio.parse_log(path, strict=not lenient, problems=problems)
    for exc in problems:
        print(f"warning: skipped {exc}", file=sys.stderr)
    if not events:
        raise ValidationError([("empty-log", f"{path}: no events")])
    return events


def _hidden(events, space: StateSpace, latent_path: str | None):
    if latent_path is None:
        return label_hidden(events, space)
    latent = cio.parse_latent(latent_path)
    if len(latent) != len(events):
        raise ValidationError([("latent-mismatch", f"{latent_path}: {len(latent)} values for {len(events)} events")])
    return label_hidden(events, space, latent)


def _apply_overrides(cfg: ScenarioConfig, users, weeks, seed=None) -> ScenarioConfig:
    from dataclasses import replace

    changes = {}
    if users is not None:
        changes["n_users"] = users
    if weeks is not None:
        changes["duration_weeks"] = weeks
    if seed is not None:
        changes["seed"] = seed
    return replace(cfg, **changes) if changes else cfg


def _record_goal(manifest: cio.RunManifest, ref: str, base_dir: Path | None) -> None:
    if not ref.startswith("builtin:"):
        manifest.add_input("goals", _abs(resolve_goal_path(ref, base_dir)))


def _finish(manifest: cio.RunManifest, outputs: Sequence[Path], manifest_path: Path) -> None:
    for f in outputs:
        manifest.add_output(f)
    manifest.write(manifest_path)


# ---- commands --------------------------------------------------------------

def cmd_generate(args, argv) -> int:
    _positive("--users", args.users)
    _positive("--weeks", args.weeks)
    _positive("--workers", args.workers)
    loaded = cio.load_scenarios(args.scenario)
    if args.scenario_id is not None:
        loaded = [(c, f) for c, f in loaded if c.scenario_id == args.scenario_id]
    if len(loaded) != 1:
        raise UsageError("--scenario must name exactly one scenario (use --scenario-id)")
    cfg, src = loaded[0]
    cfg = _apply_overrides(cfg, args.users, args.weeks, args.seed)
    problems = scenario_problems(cfg, src.parent)
    if problems:
        raise ValidationError(problems)
    policy = BASELINE_POLICY
    manifest = cio.RunManifest("generate", list(argv))
    manifest.add_input("scenario", _abs(args.scenario))
    if args.policy:
        policy = Policy.from_dict(cio.read_json(args.policy))
        manifest.add_input("policy", _abs(args.policy))
    out = Path(args.out) if args.out else default_out("log.ndjson")
    out.parent.mkdir(parents=True, exist_ok=True)
    result = simulate_with_trace(cfg, policy, workers=args.workers)
    cio.emit_log(result.events, out)
    outputs = [out]
    if args.latent_out:
        cio.emit_latent(result.latent, args.latent_out)
        outputs.append(Path(args.latent_out))
    manifest.seeds = [cfg.seed]
    manifest.parameters = {"scenario": cfg.to_dict(), "policy": getattr(policy, "to_dict", lambda: {"static": "exploit_similar"})()}
    _finish(manifest, outputs, Path(f"{out}.manifest.json"))
    print(f"wrote {len(result.events)} events to {out}")
    return 0


def _parse_lambdas(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError("--lambdas must be three comma-separated numbers") from None
    if len(vals) != 3:
        raise UsageError("--lambdas must be three comma-separated numbers")
    return vals  # type: ignore[return-value]


def cmd_evaluate(args, argv) -> int:
    lambdas = _parse_lambdas(args.lambdas)
    _positive("--weeks", args.weeks)
    events = _read_log(args.log, args.lenient)
    goals = decompose(load_goal_spec(args.goals))
    scores = criterion_scores(goals, events, n_weeks=args.weeks)
    record = alignment_record(goals, scores)
    g = gai(record)
    base = baseline_score(BaselineAssessment(tuple(scores), goals.weights))
    inputs = integration_inputs(events, g)
    integ = integration_score(IntegrationInputs(inputs.quality, inputs.cost_efficiency, inputs.performance, lambdas))
    if args.model:
        from .pattern import PatternModel

        model = PatternModel.from_dict(cio.read_json(args.model))
    else:
        space = StateSpace()
        model = fit(events, _hidden(events, space, args.latent), space)
    pred = goal_prediction_scores(events, model, _hidden(events, model.space, args.latent))
    rows = [("gai", g), ("baseline_score", base), ("integration", integ),
            ("gar", pred["gar"]), ("f1_star", pred["f1_star"]),
            ("precision", pred["precision"]), ("recall", pred["recall"])]
    for k, v in rows:
        print(f"{k}\t{'n/a' if v is None else repr(v)}")
    for c, s in zip(goals.criteria, scores):
        print(f"criterion\t{c.kind}\t{c.metric_id}{c.comparator}{c.threshold!r}\t{s!r}")
    if args.out:
        doc = {k: v for k, v in rows}
        doc["criteria"] = [dict(c.to_dict(), score=s) for c, s in zip(goals.criteria, scores)]
        doc["alignment_record"] = record.to_dict()
        out = Path(args.out)
        cio.write_text(out, cio.dumps_pretty(doc))
        manifest = cio.RunManifest("evaluate", list(argv))
        manifest.add_input("log", _abs(args.log))
        _record_goal(manifest, args.goals, None)
        for opt in ("model", "latent"):
            if getattr(args, opt):
                manifest.add_input(opt, _abs(getattr(args, opt)))
        _finish(manifest, [out], Path(f"{out}.manifest.json"))
    return 0


def cmd_fit_pattern(args, argv) -> int:
    if args.hidden < 2:
        raise UsageError("--hidden must be >= 2")
    if args.smoothing < 0:
        raise UsageError("--smoothing must be >= 0")
    events = _read_log(args.log, args.lenient)
    space = StateSpace(n_hidden=args.hidden, engaged_threshold_s=args.threshold)
    model = fit(events, _hidden(events, space, args.latent), space, args.smoothing)
    out = Path(args.out) if args.out else default_out("pattern.json")
    cio.write_text(out, cio.dumps_pretty(model.to_dict()))
    manifest = cio.RunManifest("fit-pattern", list(argv))
    manifest.add_input("log", _abs(args.log))
    if args.latent:
        manifest.add_input("latent", _abs(args.latent))
    manifest.parameters = {"hidden": args.hidden, "smoothing": args.smoothing, "threshold": args.threshold}
    _finish(manifest, [out], Path(f"{out}.manifest.json"))
    print(f"wrote pattern model to {out}")
    return 0


def cmd_optimize(args, argv) -> int:
    if args.hidden < 2:
        raise UsageError("--hidden must be >= 2")
    if not 0.0 <= args.gamma < 1.0:
        raise UsageError("--gamma must lie in [0, 1)")
    if not args.tol > 0:
        raise UsageError("--tol must be > 0")
    _positive("--max-iters", args.max_iters)
    events = _read_log(args.log, args.lenient)
    space = StateSpace(n_hidden=args.hidden)
    present = {ev.domain for ev in events}
    domains = [d for d in Domain if d in present]
    mdp = estimate_mdp(events, _hidden(events, space, args.latent), space, gamma=args.gamma, goal=args.goal, domains=domains)
    policy = value_iteration(mdp, args.tol, args.max_iters)
    out = Path(args.out) if args.out else default_out("policy.json")
    cio.write_text(out, cio.dumps_pretty(policy.to_dict()))
    manifest = cio.RunManifest("optimize", list(argv))
    manifest.add_input("log", _abs(args.log))
    if args.latent:
        manifest.add_input("latent", _abs(args.latent))
    manifest.parameters = {"gamma": args.gamma, "tol": args.tol, "max_iters": args.max_iters, "goal": args.goal}
    _finish(manifest, [out], Path(f"{out}.manifest.json"))
    print(f"converged in {policy.iterations} sweeps (residual {policy.residuals[-1]:.3g}); wrote {out}")
    for s, a in policy.action_of.items():
        print(f"{s}\t{a.value}\t{policy.values[s]!r}")
    return 0


def cmd_transfer(args, argv) -> int:
    from . import transfer as tr
    from .plotting import transfer_figures

    for flag in ("seeds", "users", "weeks", "reference_users"):
        _positive(f"--{flag.replace('_', '-')}", getattr(args, flag))
    goals = decompose(load_goal_spec(args.goals))
    out = Path(args.out) if args.out else default_out("transfer")
    out.mkdir(parents=True, exist_ok=True)
    matrix = [] if args.no_matrix else tr.transfer_matrix(goals, seed=args.seed, n_users=args.users, weeks=args.weeks)
    graded = tr.graded_experiment(goals, seed=args.seed, n_seeds=args.seeds, n_users=args.users, weeks=args.weeks)
    intervals = [
        bootstrap_ci([float(r.success) for r in g.results], seed=rngmod.derive_seed(args.seed, "success", i))
        if len(g.results) >= 2 else (g.success_fraction, g.success_fraction)
        for i, g in enumerate(graded)
    ]
    ref_cfg = reference_scenario(n_users=args.reference_users, weeks=args.weeks)
    vectors = tr.reference_vectors(simulate_with_trace(ref_cfg).events)
    ref_tau = {(a.value, b.value): tr.transfer_metric(vectors[a], vectors[b]) for a in vectors for b in vectors}
    doc = {
        "matrix": [r.to_dict() for r in matrix],
        "graded": [g.to_dict() for g in graded],
        "graded_intervals": [list(iv) for iv in intervals],
        "reference_vectors": {d.value: v.to_dict() for d, v in vectors.items()},
        "reference_tau": [{"a": a, "b": b, "tau": t} for (a, b), t in sorted(ref_tau.items())],
        "parameters": {"seeds": args.seeds, "users": args.users, "weeks": args.weeks, "seed": args.seed,
                       "reference_users": args.reference_users, "goals": args.goals},
    }
    files = [out / "transfer.json", out / "transfer.txt"]
    cio.write_text(files[0], cio.dumps_pretty(doc))
    text = transfer_text(matrix, graded, ref_tau, intervals, args.users)
    cio.write_text(files[1], text)
    files += transfer_figures(matrix, graded, out / "figures")
    manifest = cio.RunManifest("transfer", list(argv))
    _record_goal(manifest, args.goals, None)
    manifest.seeds = [args.seed]
    manifest.parameters = doc["parameters"]
    _finish(manifest, files, out / "manifest.json")
    print(text, end="")
    return 0


def _rct_scenarios(args, manifest: cio.RunManifest):
    _positive("--users", args.users)
    _positive("--weeks", args.weeks)
    weeks = FULL_WEEKS if args.full else args.weeks
    goal_specs = {}
    if args.suite:
        configs = scenario_suite(n_users=args.users or 10_000, weeks=weeks or 8)
        return configs, goal_specs
    loaded = cio.load_scenarios(args.scenarios)
    if not loaded:
        raise ValidationError([("no-scenarios", f"{args.scenarios}: no scenario files")])
    configs = []
    arms: dict[str, set[str]] = {}
    for cfg, src in loaded:
        manifest.add_input("scenario", _abs(src))
        cfg = _apply_overrides(cfg, args.users, weeks)
        problems = scenario_problems(cfg, src.parent)
        if problems:
            raise ValidationError([(c, f"{src}: {m}") for c, m in problems])
        ref = cfg.goal_spec_path
        if ref not in goal_specs:
            goal_specs[ref] = load_goal_spec(ref, src.parent)
            _record_goal(manifest, ref, src.parent)
        configs.append(cfg)
        arms.setdefault(cfg.scenario_id, set()).add(cfg.arm)
    # a scenario given with one arm only gets its partner arm generated
    for cfg in list(configs):
        if arms[cfg.scenario_id] == {cfg.arm}:
            configs.append(cfg.with_arm("cat" if cfg.arm == "control" else "control"))
    return configs, goal_specs


def _write_report_outputs(report: RctReport, out: Path, figures: bool) -> list[Path]:
    files = [out / "report.json", out / "tables.txt", out / "series.csv", out / "effects.csv"]
    cio.write_text(files[0], cio.dumps_pretty(report.to_dict()))
    cio.write_text(files[1], render_rct(report))
    cio.write_text(files[2], series_csv(report))
    cio.write_text(files[3], effects_csv(report))
    if figures:
        from .plotting import rct_figures

        files += rct_figures(report, out / "figures")
    return files


def cmd_rct(args, argv) -> int:
    _positive("--resamples", args.resamples)
    if not 0.0 < args.level < 1.0:
        raise UsageError("--level must lie in (0, 1)")
    manifest = cio.RunManifest("rct", list(argv))
    configs, goal_specs = _rct_scenarios(args, manifest)
    report = run_rct(
        configs, goal_specs=goal_specs, cat_policy=BASELINE_POLICY if args.null else None,
        resamples=args.resamples, level=args.level, gamma=args.gamma,
    )
    out = Path(args.out) if args.out else default_out("rct")
    files = _write_report_outputs(report, out, not args.no_figures)
    manifest.seeds = sorted({c.seed for c in configs})
    manifest.parameters = {"resamples": args.resamples, "level": args.level, "gamma": args.gamma,
                           "null": args.null, "suite": args.suite, "users": args.users, "weeks": args.weeks,
                           "full": args.full}
    _finish(manifest, files, out / "manifest.json")
    print(render_rct(report), end="")
    return 0


def cmd_report(args, argv) -> int:
    report = RctReport.from_dict(cio.read_json(args.report))
    out = Path(args.out) if args.out else default_out("report")
    files = _write_report_outputs(report, out, not args.no_figures)[1:]
    manifest = cio.RunManifest("report", list(argv))
    manifest.add_input("report", _abs(args.report))
    _finish(manifest, files, out / "manifest.json")
    print(render_rct(report), end="")
    return 0


# ---- replay ----------------------------------------------------------------

_INPUT_FLAGS = {"--scenario", "--scenarios", "--policy", "--log", "--goals", "--model", "--latent", "--report"}
_OUTPUT_FLAGS = {"--out", "--latent-out"}


def _staged(root: Path, path: str) -> Path:
    p = _abs(path)
    return root / p.relative_to(p.anchor)


def cmd_replay(args, argv) -> int:
    manifest = cio.RunManifest.from_dict(cio.read_json(args.manifest))
    if manifest.command == "replay":
        raise ValidationError([("bad-manifest", "cannot replay a replay")])
    recorded = {}
    with tempfile.TemporaryDirectory(prefix="catbench-replay-") as tmp:
        root = Path(tmp)
        for item in manifest.inputs:
            target = _staged(root, item["path"])
            cio.write_text(target, item["content"])
        new_argv = list(manifest.argv)
        out_map: list[tuple[Path, Path]] = []
        for i, tok in enumerate(new_argv[:-1]):
            value = new_argv[i + 1]
            if tok in _INPUT_FLAGS and not value.startswith("builtin:"):
                new_argv[i + 1] = str(_staged(root, value))
            elif tok in _OUTPUT_FLAGS:
                old = _abs(value)
                new = Path(args.out_root) / old.name if args.out_root else old
                out_map.append((old, _abs(new)))
                new_argv[i + 1] = str(new)
        for item in manifest.outputs:
            recorded[item["path"]] = item["sha256"]
        status = main(new_argv)
    if status != 0:
        return status

    def remap(path: str) -> Path:
        p = _abs(path)
        for old, new in out_map:
            if p == old or old in p.parents:
                return new / p.relative_to(old)
        return p

    bad = 0
    for path, digest in sorted(recorded.items()):
        now = remap(path)
        same = now.is_file() and cio.sha256_file(now) == digest
        bad += not same
        print(f"{'match' if same else 'DIFFER'}\t{now}")
    return 0 if bad == 0 else 1


COMMANDS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "fit-pattern": cmd_fit_pattern,
    "optimize": cmd_optimize,
    "transfer": cmd_transfer,
    "rct": cmd_rct,
    "report": cmd_report,
    "replay": cmd_replay,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"cat-bench: usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except CatBenchError as exc:
        print(f"cat-bench: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"cat-bench: error: no such file: {exc.filename}", file=sys.stderr)
        return 1
    except (OSError, UnicodeDecodeError) as exc:
        print(f"cat-bench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
