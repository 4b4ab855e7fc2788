"""Command-line entry point.

Exit codes: 0 success, 1 unexpected failure, 2 invalid plan/store/arguments,
3 energy provider unavailable, 4 interrupted (resumable).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .errors import (
    AnalysisError,
    BgEnergyError,
    ConfigError,
    MappingError,
    PlanError,
    ProviderUnavailableError,
    StoreFormatError,
)
from .envcheck import environment_check
from .orchestrator import (
    PLAN_NAME,
    STORE_NAME,
    PlanInterrupted,
    ProviderLostError,
    failed_run_ids,
    make_clock,
    make_provider,
    matrix_counts,
    resolve_resume,
    run_plan,
)
from .plan import Plan, load_plan, loads_plan
from .report import AnalysisSettings, analyze, export_report, read_pairwise_csv, render_pairwise
from .store import load_store
from .workload import TriggerConfig, TriggerKind, required_script_duration

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_PROVIDER = 3
EXIT_INTERRUPTED = 4

OUTPUT_ROOT_ENV = "BGENERGY_OUTPUT_ROOT"


def _err(msg: str) -> None:
    print(f"bgenergy: {msg}", file=sys.stderr)


def estimated_wall_time_s(plan: Plan) -> float:
    counts = matrix_counts(plan)
    per_workload = []
    for w in plan.workloads:
        trig = TriggerConfig(TriggerKind(w.trigger), w.interval_s)
        rate = plan.session.edit_rate_hz if w.edit_rate_hz is None else w.edit_rate_hz
        bound = w.max_session_s or 10 * plan.session.save_budget * w.interval_s
        try:
            per_workload.append(required_script_duration(trig, plan.session.save_budget, rate, bound))
        except BgEnergyError:
            per_workload.append(bound)
    session = sum(per_workload) / len(per_workload)
    c = plan.cycle
    return plan.cycle.warmup_s + counts["total"] * (c.app_settle_s + session + c.cooldown_s)


def cmd_plan(args) -> int:
    plan = load_plan(args.plan)
    counts = matrix_counts(plan)
    eta = estimated_wall_time_s(plan)
    if args.json:
        print(json.dumps({**counts, "estimated_wall_time_s": eta, "name": plan.name}, indent=2))
        return EXIT_OK
    runs = "run" if counts["total"] == 1 else "runs"
    print(f"plan {plan.name}")
    print(
        f"  {counts['workloads']} workload(s) x {counts['variants']} variant(s) x "
        f"{counts['file_sizes']} size(s) x {counts['repetitions']} repetition(s)"
    )
    print(f"  {counts['control_scenarios']} control scenario(s) x {counts['repetitions']} repetition(s)")
    print(f"{counts['main']} main + {counts['control']} control = {counts['total']} {runs}")
    clock = "simulated" if plan.provider.simulated else "real"
    print(f"estimated wall time ({clock} clock): {eta / 3600:.2f} h ({eta:.0f} s)")
    return EXIT_OK


def _output_root(plan: Plan, override: str | None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ROOT_ENV) or plan.output_root)


def _progress(record, done, total):
    energy = f"{record.energy.total_joules:.3f} J" if record.energy else record.error
    c = record.coords
    print(
        f"[{done}/{total}] {record.run_id} {c.workload} {c.variant} {c.file_size_bytes}B "
        f"rep {c.repetition}: {record.status} {energy}",
        flush=True,
    )


def _execute(plan: Plan, run_dir: Path, **kwargs) -> int:
    try:
        provider = make_provider(plan, make_clock(plan))
    except ProviderUnavailableError as exc:
        _err(str(exc))
        _err("no usable RAPL counters; rerun with --provider synthetic, or check permissions on energy_uj")
        return EXIT_PROVIDER
    try:
        result = run_plan(plan, provider, run_dir, progress=_progress, **kwargs)
    except PlanInterrupted as exc:
        _err(str(exc))
        return EXIT_INTERRUPTED
    except ProviderLostError as exc:
        _err(str(exc))
        return EXIT_PROVIDER
    print(f"store: {result.store_path}")
    if result.failed:
        print(f"{len(result.failed)} run(s) failed; see `bgenergy rerun-failed {run_dir}`")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.resume:
        run_dir = resolve_resume(args.resume)
        plan = loads_plan((run_dir / PLAN_NAME).read_text(encoding="utf-8"))
        return _execute(plan, run_dir, resume=True, in_order=True if args.in_order else None)

    if not args.plan:
        raise ConfigError("a plan file is required unless --resume is given")
    plan = load_plan(args.plan)
    overrides = {}
    if args.provider:
        overrides["provider.kind"] = args.provider
        if plan.provider.clock != "auto":
            overrides["provider.clock"] = "auto"
    if args.cooldown_override is not None:
        overrides["cycle.cooldown_s"] = args.cooldown_override
    if args.in_order:
        overrides["randomize_order"] = False
    if overrides:
        plan = plan.with_overrides(**overrides)
    run_dir = Path(args.out) if args.out else _output_root(plan, None) / plan.name
    return _execute(plan, run_dir)


def cmd_rerun_failed(args) -> int:
    run_dir = resolve_resume(args.run_dir)
    plan = loads_plan((run_dir / PLAN_NAME).read_text(encoding="utf-8"))
    failed = failed_run_ids(run_dir / STORE_NAME)
    if not failed:
        print("no failed runs")
        return EXIT_OK
    print(f"re-running {len(failed)} failed run(s)")
    return _execute(plan, run_dir, only=failed)


def _store_and_plan(path: Path) -> tuple[Path, Plan | None]:
    store_path = path / STORE_NAME if path.is_dir() else path
    plan_path = store_path.parent / PLAN_NAME
    plan = loads_plan(plan_path.read_text(encoding="utf-8")) if plan_path.exists() else None
    return store_path, plan


def cmd_analyze(args) -> int:
    store_path, plan = _store_and_plan(Path(args.store))
    if args.plan:
        plan = load_plan(args.plan)
    records = load_store(store_path)
    overrides = dict(alpha=args.alpha, holm=args.holm or None, iqr_filter=args.iqr_filter or None)
    settings = AnalysisSettings.from_plan(plan, **overrides) if plan else AnalysisSettings(
        **{k: v for k, v in overrides.items() if v is not None}
    )
    analyses = analyze(records, settings)
    out = Path(args.out) if args.out else store_path.parent / "report"
    bundle = export_report(records, out, analyses)
    print(f"report: {bundle.directory}")
    for name, path in bundle.files.items():
        print(f"  {name}: {path.name}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.pairwise:
        comps = read_pairwise_csv(Path(args.pairwise), alpha=args.alpha or 0.05)
        sys.stdout.write(render_pairwise(comps, significant_only=False))
        return EXIT_OK
    if not args.bundle:
        raise ConfigError("give a report directory or --pairwise FILE")
    bundle = Path(args.bundle)
    for name in ("deltas.txt", "pairwise.txt", "hourly.txt"):
        path = bundle / name
        if not path.exists():
            raise AnalysisError(f"{path} missing; run `bgenergy analyze` first")
        print(f"== {name[:-4]} ==")
        sys.stdout.write(path.read_text(encoding="utf-8"))
        print()
    return EXIT_OK


def cmd_env(args) -> int:
    report = environment_check()
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        sys.stdout.write(report.render())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bgenergy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", help="validate a plan and print its run matrix")
    sp.add_argument("plan", help="plan file or bundled plan name (paper-canonical, desk-scale)")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("run", help="execute a plan")
    sp.add_argument("plan", nargs="?")
    sp.add_argument("--provider", choices=["rapl_sysfs", "synthetic"])
    sp.add_argument("--resume", metavar="TOKEN", help="checkpoint file, run store or run directory")
    sp.add_argument("--in-order", action="store_true", help="grouped order instead of shuffled")
    sp.add_argument("--cooldown-override", type=float, metavar="SECONDS")
    sp.add_argument("--out", help=f"run directory (default: ${OUTPUT_ROOT_ENV} or the plan output_root, plus the plan name)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("rerun-failed", help="re-execute failed runs of a run directory")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_rerun_failed)

    sp = sub.add_parser("analyze", help="build the report bundle from a run store")
    sp.add_argument("store", help="run store CSV or run directory")
    sp.add_argument("--plan", help="plan to take analysis settings from (default: the run directory's)")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--iqr-filter", action="store_true")
    sp.add_argument("--holm", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("report", help="print the tables of a report bundle")
    sp.add_argument("bundle", nargs="?")
    sp.add_argument("--pairwise", metavar="CSV", help="render precomputed pairwise comparisons")
    sp.add_argument("--alpha", type=float)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("env", help="report host readiness for measurements")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_env)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PlanError, StoreFormatError, ConfigError, AnalysisError, MappingError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    except ProviderUnavailableError as exc:
        _err(str(exc))
        return EXIT_PROVIDER
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    except BgEnergyError as exc:
        _err(str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
