"""Run-matrix expansion and the fixed measurement cycle.

Each run: arm the workload, let it settle, snapshot the counters, run the
session, snapshot again, tear down, persist, cool down. Runs are strictly
sequential.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import os
import random
import shutil
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, TextIO

from .clock import RealClock, SimulatedClock
from .energy import EnergyWindow, SyntheticProvider, open_provider, window_energy
from .envcheck import host_fingerprint, write_fingerprint
from .errors import BgEnergyError, ConfigError, PlanError, SnapshotError
from .plan import Plan, WorkloadModel, dumps_plan, loads_plan
from .store import CONTROL_VARIANT, RunCoordinates, RunStore, record_rows
from .workload import (
    AutosaveConfig,
    AutosaveSession,
    EditScript,
    LogSink,
    SessionStats,
    TriggerConfig,
    generate_edit_script,
    required_script_duration,
)

log = logging.getLogger(__name__)

STORE_NAME = "runs.csv"
PLAN_NAME = "plan.toml"
ENV_NAME = "environment.json"
CHECKPOINT_NAME = "checkpoint.json"


@dataclass(frozen=True)
class PlannedRun:
    run_id: str
    coords: RunCoordinates


@dataclass
class MeasurementRecord:
    run_id: str
    coords: RunCoordinates
    energy: EnergyWindow | None
    stats: SessionStats | None
    started_at: str
    status: str = "ok"
    error: str | None = None
    window_start_ns: int | None = None
    window_end_ns: int | None = None
    environment: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        per_domain = None
        duration = None
        if self.energy is not None:
            per_domain = {d.value: j for d, j in self.energy.per_domain_joules.items()}
            duration = self.energy.duration_s
        stats = None
        if self.stats is not None:
            stats = {
                "trigger_firings": self.stats.trigger_firings,
                "saves_performed": self.stats.saves_performed,
                "saves_skipped": self.stats.saves_skipped,
                "bytes_written": self.stats.bytes_written,
                "log_records": self.stats.log_records,
            }
        return record_rows(self.run_id, self.coords, self.status, self.started_at, per_domain, duration, stats)


class ProviderLostError(BgEnergyError):
    """The energy provider failed mid-plan; the plan can be resumed."""


class PlanInterrupted(BgEnergyError):
    def __init__(self, checkpoint: Path):
        super().__init__(f"interrupted; resume with --resume {checkpoint}")
        self.checkpoint = checkpoint


# ------------------------------------------------------------------ matrix


def control_sizes(plan: Plan) -> list[tuple[str, int]]:
    return [
        (c.workload, c.file_size_bytes if c.file_size_bytes is not None else plan.file_sizes_bytes[0])
        for c in plan.controls
    ]


def expand_matrix(plan: Plan, in_order: bool | None = None) -> list[PlannedRun]:
    """All runs of a plan: main runs first, then controls, optionally shuffled.

    Run ids number the grouped order, so they do not depend on shuffling.
    """
    variants = plan.variant_chain.names
    if not plan.workloads or not variants or not plan.file_sizes_bytes or plan.repetitions < 1:
        raise PlanError("every plan dimension needs at least one entry")
    coords = [
        RunCoordinates(w.name, v, size, rep)
        for w in plan.workloads
        for v in variants
        for size in plan.file_sizes_bytes
        for rep in range(plan.repetitions)
    ]
    coords += [
        RunCoordinates(name, CONTROL_VARIANT, size, rep, is_control=True)
        for name, size in control_sizes(plan)
        for rep in range(plan.repetitions)
    ]
    if len(set(coords)) != len(coords):
        raise PlanError("plan expands to duplicate run coordinates (repeated control?)")
    width = max(4, len(str(len(coords))))
    runs = [PlannedRun(f"{i:0{width}d}", c) for i, c in enumerate(coords)]
    shuffle = plan.randomize_order if in_order is None else not in_order
    if shuffle:
        random.Random(plan.seed).shuffle(runs)
    return runs


def matrix_counts(plan: Plan) -> dict:
    main = len(plan.workloads) * len(plan.variant_chain) * len(plan.file_sizes_bytes) * plan.repetitions
    control = len(plan.controls) * plan.repetitions
    return {
        "workloads": len(plan.workloads),
        "variants": len(plan.variant_chain),
        "file_sizes": len(plan.file_sizes_bytes),
        "repetitions": plan.repetitions,
        "control_scenarios": len(plan.controls),
        "main": main,
        "control": control,
        "total": main + control,
    }


# ------------------------------------------------------------- run building


def _script_seed(plan_seed: int, workload: str, size: int, rep: int) -> int:
    # Variants and the control of one (workload, size, repetition) share a script.
    return zlib.crc32(f"{plan_seed}|{workload}|{size}|{rep}".encode())


def session_config(plan: Plan, coords: RunCoordinates, scratch: Path) -> AutosaveConfig:
    w = plan.workload(coords.workload)
    if coords.is_control:
        change, logging_on = False, False
    else:
        variant = plan.variant_chain.get(coords.variant)
        change = variant.includes("change_detect")
        logging_on = variant.includes("logging")
    return AutosaveConfig(
        trigger=TriggerConfig(w.trigger_kind, w.interval_s),
        strategy=w.write_strategy,
        change_detection=change,
        logging=w.log_sink if logging_on else LogSink.NONE,
        target_path=scratch / "document.txt",
        save_budget=plan.session.save_budget,
        log_path=scratch / "autosave.log",
        max_session_s=w.max_session_s,
    )


def edit_rate(plan: Plan, w: WorkloadModel) -> float:
    return plan.session.edit_rate_hz if w.edit_rate_hz is None else w.edit_rate_hz


def session_script(plan: Plan, coords: RunCoordinates, config: AutosaveConfig) -> EditScript:
    w = plan.workload(coords.workload)
    rate = edit_rate(plan, w)
    duration = required_script_duration(config.trigger, config.save_budget, rate, config.session_bound_s)
    return generate_edit_script(
        seed=_script_seed(plan.seed, coords.workload, coords.file_size_bytes, coords.repetition),
        target_size_bytes=coords.file_size_bytes,
        session_duration_s=duration,
        edit_rate_hz=rate,
        replace_fraction=plan.session.replace_fraction,
    )


def charge_hook(plan: Plan, provider) -> Callable[[str, int], None] | None:
    """Map workload operations to synthetic energy costs."""
    if not isinstance(provider, SyntheticProvider):
        return None
    costs = plan.provider.costs

    def hook(op: str, nbytes: int) -> None:
        if op == "save":
            provider.charge(costs.save_j + costs.per_byte_j * nbytes)
        elif op == "check":
            provider.charge(costs.check_j)
        elif op == "log":
            provider.charge(costs.log_j)

    return hook


def make_clock(plan: Plan):
    return SimulatedClock() if plan.provider.simulated else RealClock()


def make_provider(plan: Plan, clock=None, kind: str | None = None):
    kind = kind or plan.provider.kind
    if kind == "synthetic":
        cfg = {
            "idle_rate_w": plan.provider.idle_rate_w,
            "max_range_uj": plan.provider.max_range_uj,
            "initial_uj": plan.provider.initial_uj,
        }
    else:
        cfg = {"root": plan.provider.root}
    return open_provider(kind, cfg, clock=clock)


def _log_stream(plan: Plan) -> TextIO | None:
    choice = plan.session.log_stream
    if choice == "stderr":
        return sys.stderr
    if choice == "stdout":
        return sys.stdout
    return open(os.devnull, "w")


def _now_iso() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="microseconds")


# ------------------------------------------------------------------ cycles


def execute_cycle(
    run: PlannedRun,
    plan: Plan,
    provider,
    scratch_root: Path,
    *,
    stream: TextIO | None = None,
    samples_dir: Path | None = None,
) -> MeasurementRecord:
    """One measurement cycle without the trailing cooldown.

    Workload failures produce a ``failed`` record; snapshot failures raise
    :class:`ProviderLostError`.
    """
    clock = provider.clock
    coords = run.coords
    scratch = scratch_root / run.run_id
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir(parents=True)
    started_at = _now_iso()
    session = None
    samples: list[tuple[int, str, int]] = []

    def sampler():
        for s in provider.snapshot():
            samples.append((s.timestamp_ns, s.domain.value, s.counter_uj))

    try:
        config = session_config(plan, coords, scratch)
        script = session_script(plan, coords, config)
        session = AutosaveSession(
            config,
            script,
            clock=clock,
            charge=charge_hook(plan, provider),
            enabled=not coords.is_control,
            stream=stream,
            sampler=sampler if plan.session.sample_interval_s > 0 else None,
            sample_interval_s=plan.session.sample_interval_s or None,
        )
        session.arm()
        clock.sleep(plan.cycle.app_settle_s)
        try:
            start = provider.snapshot()
            stats = session.run()
            end = provider.snapshot()
        except SnapshotError as exc:
            raise ProviderLostError(str(exc)) from exc
        energy = window_energy(start, end)
        record = MeasurementRecord(
            run_id=run.run_id,
            coords=coords,
            energy=energy,
            stats=stats,
            started_at=started_at,
            window_start_ns=min(s.timestamp_ns for s in start),
            window_end_ns=max(s.timestamp_ns for s in end),
        )
    except ProviderLostError:
        raise
    except (BgEnergyError, OSError) as exc:
        log.warning("run %s %s failed: %s", run.run_id, coords, exc)
        record = MeasurementRecord(
            run_id=run.run_id, coords=coords, energy=None, stats=None,
            started_at=started_at, status="failed", error=str(exc),
        )
    finally:
        if session is not None:
            session.close()
        if not plan.session.keep_scratch:
            shutil.rmtree(scratch, ignore_errors=True)

    if samples and samples_dir is not None:
        samples_dir.mkdir(parents=True, exist_ok=True)
        with open(samples_dir / f"{run.run_id}.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["timestamp_ns", "domain", "counter_uj"])
            writer.writerows(samples)
    return record


# -------------------------------------------------------------------- plans


@dataclass
class RunResult:
    run_dir: Path
    store_path: Path
    records: list[MeasurementRecord]
    skipped: int = 0

    @property
    def failed(self) -> list[MeasurementRecord]:
        return [r for r in self.records if r.status != "ok"]


def _prepare_run_dir(plan: Plan, run_dir: Path, resume: bool, provider_kind: str) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    plan_file = run_dir / PLAN_NAME
    text = dumps_plan(plan)
    if plan_file.exists():
        if loads_plan(plan_file.read_text(encoding="utf-8")) != plan:
            raise PlanError(f"{run_dir} holds a different plan; choose another output directory")
        if not resume and (run_dir / STORE_NAME).exists():
            raise PlanError(f"{run_dir / STORE_NAME} already exists; pass --resume to continue it")
    else:
        plan_file.write_text(text, encoding="utf-8")
    env_file = run_dir / ENV_NAME
    if not env_file.exists():
        write_fingerprint(env_file, host_fingerprint(provider_kind))


def write_checkpoint(run_dir: Path, completed: int, total: int, reason: str) -> Path:
    path = run_dir / CHECKPOINT_NAME
    payload = {
        "run_dir": str(run_dir.resolve()),
        "store": str((run_dir / STORE_NAME).resolve()),
        "completed": completed,
        "total": total,
        "reason": reason,
        "written_at": _now_iso(),
    }
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def completed_run_ids(store_path: Path) -> set[str]:
    if not store_path.exists():
        return set()
    with open(store_path, newline="", encoding="utf-8") as f:
        return {row["run_id"] for row in csv.DictReader(f)}


def run_plan(
    plan: Plan,
    provider,
    run_dir: str | Path,
    *,
    resume: bool = False,
    in_order: bool | None = None,
    only: set[str] | None = None,
    progress: Callable[[MeasurementRecord, int, int], None] | None = None,
) -> RunResult:
    """Execute a plan sequentially, appending each record as soon as it exists.

    With ``resume`` the runs already in the store are skipped. ``only``
    restricts execution to the given run ids (used to rerun failures).
    """
    run_dir = Path(run_dir)
    _prepare_run_dir(plan, run_dir, resume or only is not None, provider.kind)
    store = RunStore(run_dir / STORE_NAME)
    store.ensure_header()
    runs = expand_matrix(plan, in_order=in_order)
    if only is not None:
        todo = [r for r in runs if r.run_id in only]
    else:
        done = completed_run_ids(store.path) if resume else set()
        todo = [r for r in runs if r.run_id not in done]
    skipped = len(runs) - len(todo) if only is None else 0

    clock = provider.clock
    stream = _log_stream(plan)
    scratch_root = run_dir / "scratch"
    samples_dir = run_dir / "samples" if plan.session.sample_interval_s > 0 else None
    records: list[MeasurementRecord] = []
    try:
        if todo:
            clock.sleep(plan.cycle.warmup_s)
        for i, run in enumerate(todo):
            try:
                record = execute_cycle(run, plan, provider, scratch_root, stream=stream, samples_dir=samples_dir)
            except ProviderLostError as exc:
                ckpt = write_checkpoint(run_dir, skipped + len(records), len(runs), f"provider lost: {exc}")
                raise ProviderLostError(f"{exc}; resume with --resume {ckpt}") from exc
            store.append(record.rows())
            records.append(record)
            if progress is not None:
                progress(record, skipped + len(records), len(runs))
            if i < len(todo) - 1:
                clock.sleep(plan.cycle.cooldown_s)
    except KeyboardInterrupt:
        ckpt = write_checkpoint(run_dir, skipped + len(records), len(runs), "interrupted")
        raise PlanInterrupted(ckpt) from None
    finally:
        if stream not in (sys.stderr, sys.stdout):
            stream.close()
        shutil.rmtree(scratch_root, ignore_errors=True)

    ckpt = run_dir / CHECKPOINT_NAME
    if ckpt.exists() and only is None:
        ckpt.unlink()
    return RunResult(run_dir, store.path, records, skipped)


def failed_run_ids(store_path: Path) -> set[str]:
    from .store import load_store

    return {r.run_id for r in load_store(store_path) if not r.ok}


def rerun_failed(run_dir: str | Path, provider=None, **kwargs) -> RunResult:
    run_dir = Path(run_dir)
    plan_file = run_dir / PLAN_NAME
    if not plan_file.exists():
        raise PlanError(f"{run_dir} has no {PLAN_NAME}")
    plan = loads_plan(plan_file.read_text(encoding="utf-8"))
    failed = failed_run_ids(run_dir / STORE_NAME)
    if provider is None:
        provider = make_provider(plan, make_clock(plan))
    return run_plan(plan, provider, run_dir, only=failed, **kwargs)


def resolve_resume(token: str | Path) -> Path:
    """Run directory for a resume token (checkpoint file, store, or directory)."""
    path = Path(token)
    if path.is_dir():
        return path
    if path.name == CHECKPOINT_NAME and path.exists():
        return Path(json.loads(path.read_text())["run_dir"])
    if path.name == STORE_NAME:
        return path.parent
    raise ConfigError(f"cannot resume from {token}")
