"""guiplay command line: eval, test, repair, report, fixtures.

Exit codes: 0 success, 1 the harness worked and found failures in the code
under test, 2 usage, configuration or infrastructure error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import harness
from .llm import LLMError, LLMProvider
from .metrics import MetricDomainError
from .refiner import ConfigError, repair_loop
from .sandbox import LaunchError
from .tester import bundled_asset, load_profile, run_profile
from .trajectory import Trajectory, TrajectoryWriteError

EXIT_OK, EXIT_FAILURES, EXIT_INFRA = 0, 1, 2
LLM_ENV = "GUIPLAY_LLM"


class UsageError(Exception):
    pass


def resolve_llm(spec: str | None, fallback: str | None = None) -> LLMProvider:
    """``mock:<name>`` also finds bundled scripts and fixture mock directories."""
    spec = spec or fallback or os.environ.get(LLM_ENV)
    if not spec:
        raise UsageError(f"no LLM given; pass --llm or set ${LLM_ENV}")
    if spec.startswith("mock:"):
        target = spec[5:]
        if not Path(target).exists():
            for cand in (
                bundled_asset("scripts", f"{target}.jsonl"),
                bundled_asset("scripts", target),
                bundled_asset("fixtures", target),
            ):
                if cand.exists():
                    return LLMProvider("mock:" + str(cand))
            raise UsageError(f"mock script {target!r} not found")
    return LLMProvider(spec)


def _resolve_manifest(path: str, name: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_asset("fixtures", path if path.endswith(".json") else f"{path}.json")
    if bundled.exists():
        return bundled
    raise UsageError(f"{name} {path!r} not found")


def _ks(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def cmd_eval(args: argparse.Namespace) -> int:
    manifest = harness.BenchmarkManifest.load(_resolve_manifest(args.manifest, "manifest"))
    manifest = manifest.with_overrides(args.runs, args.n, args.k, args.seed_base)
    provider = resolve_llm(args.llm, manifest.llm)
    result = harness.run_benchmark(manifest, provider, args.out, jobs=args.jobs)
    sys.stdout.write((result.out_dir / harness.SUMMARY_FILE).read_text(encoding="utf-8"))
    print(f"report = {result.out_dir}")
    if result.infra_failures:
        return EXIT_INFRA
    return EXIT_OK if result.all_passed else EXIT_FAILURES


def cmd_test(args: argparse.Namespace) -> int:
    profile = load_profile(args.profile)
    provider = resolve_llm(args.llm)
    report = run_profile(profile, provider, args.seed, args.out, args.workdir)
    sys.stdout.write(report.format_text())
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK if report.passed else EXIT_FAILURES


def cmd_repair(args: argparse.Namespace) -> int:
    project_path = _resolve_manifest(args.manifest, "project manifest")
    project = harness.ProjectManifest.load(project_path)
    if project.profile is None:
        raise ConfigError("project manifest names no app profile")
    config = project.refiner_config(args.max_iter)
    provider = resolve_llm(args.llm)
    out = Path(args.out)
    with Trajectory(out) as traj:
        llm = provider.session("refiner", None, args.seed, traj)
        outcome = repair_loop(args.repo, None, llm, project.profile, provider, config, args.seed, out)
    print(f"status = {outcome.status}")
    print(f"iterations_used = {outcome.iterations_used}")
    print(f"trajectory = {outcome.trajectory}")
    return EXIT_OK if outcome.fixed else EXIT_FAILURES


def cmd_report(args: argparse.Namespace) -> int:
    stored, fresh = harness.recompute(args.in_dir)
    sys.stdout.write(harness.summary_text(fresh))
    if json.dumps(stored, sort_keys=True) != json.dumps(fresh, sort_keys=True):
        print("error: recomputed metrics differ from the stored summary", file=sys.stderr)
        return EXIT_INFRA
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace) -> int:
    from .targets.serve import main as serve_main

    argv = ["--target", args.target, "--seed", str(args.seed)]
    if args.handshake:
        argv += ["--handshake", args.handshake]
    if args.smoke:
        argv.append("--smoke")
    return serve_main(argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guiplay", description="Behavioral evaluation and repair of GUI application code.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{eval,test,repair,report,fixtures}")

    p = sub.add_parser("eval", help="run the benchmark and write a report directory")
    p.add_argument("--manifest", required=True, help="benchmark manifest (JSON) or a bundled name such as 'benchmark'")
    p.add_argument("--llm", help="OpenAI-compatible base URL or mock:<script|dir>")
    p.add_argument("--runs", type=int, default=None, help="independent runs (manifest default 5)")
    p.add_argument("--n", type=int, default=None, help="samples per task (manifest default 3)")
    p.add_argument("--k", type=_ks, default=None, help="comma-separated k values (manifest default 1,3)")
    p.add_argument("--seed-base", type=int, default=None, help="run r uses seed base+r")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--jobs", type=int, default=1, help="tasks evaluated in parallel")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("test", help="run one behavioral test session and print the report")
    p.add_argument("--profile", required=True, help="app profile (JSON) or a bundled profile name")
    p.add_argument("--llm", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="trajectory directory (default: a temporary one)")
    p.add_argument("--workdir", default=".", help="working directory for launched commands")
    p.add_argument("--json", default=None, help="also write the report as JSON here")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("repair", help="run the repair loop on a repository in place")
    p.add_argument("--repo", required=True)
    p.add_argument("--manifest", required=True, help="project manifest (JSON)")
    p.add_argument("--llm", required=True)
    p.add_argument("--max-iter", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="repair_out", help="trajectory directory")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("report", help="recompute metrics from stored sample records")
    p.add_argument("--in", dest="in_dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fixtures", help="serve a virtual target over stdin/stdout")
    p.add_argument("--target", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--handshake", default=None)
    p.add_argument("--smoke", action="store_true")
    p.set_defaults(func=cmd_fixtures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INFRA
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA
    except (
        LaunchError,
        LLMError,
        TrajectoryWriteError,
        MetricDomainError,
        OSError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
