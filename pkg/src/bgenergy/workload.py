"""Autosave skeleton workload.

A document buffer receives scripted edits while a trigger (periodic timer or
idle threshold) fires the autosave operation chain: an optional change check,
a write using one of three strategies, and optional logging. Edits and
firings share one timeline, so a session is deterministic for a given
configuration and script.
"""

from __future__ import annotations

import enum
import math
import os
import random
import secrets
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

from .clock import RealClock, SimulatedClock, seconds_to_ns
from .errors import ConfigError, SaveError, SessionError, SessionTimeoutError


class TriggerKind(str, enum.Enum):
    PERIODIC = "periodic"
    IDLE = "idle"


class WriteStrategy(str, enum.Enum):
    DIRECT_SYNC = "direct_sync"
    TEMP_RENAME = "temp_rename"
    BACKUP_OVERWRITE = "backup_overwrite"


class LogSink(str, enum.Enum):
    NONE = "none"
    STREAM = "stream"
    FILE = "file"
    BOTH = "both"


@dataclass(frozen=True)
class TriggerConfig:
    kind: TriggerKind
    interval_s: float

    def __post_init__(self):
        object.__setattr__(self, "kind", TriggerKind(self.kind))
        if not self.interval_s > 0:
            raise ConfigError(f"trigger interval must be positive, got {self.interval_s}")


@dataclass(frozen=True)
class AutosaveConfig:
    trigger: TriggerConfig
    strategy: WriteStrategy
    change_detection: bool
    logging: LogSink
    target_path: Path
    save_budget: int = 12
    log_path: Path | None = None
    # Upper bound on session length; defaults to ten times the nominal length.
    max_session_s: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", WriteStrategy(self.strategy))
        object.__setattr__(self, "logging", LogSink(self.logging))
        object.__setattr__(self, "target_path", Path(self.target_path))
        if self.log_path is not None:
            object.__setattr__(self, "log_path", Path(self.log_path))
        if self.save_budget < 1:
            raise ConfigError(f"save_budget must be >= 1, got {self.save_budget}")
        if self.max_session_s is not None and not self.max_session_s > 0:
            raise ConfigError("max_session_s must be positive")

    @property
    def nominal_duration_s(self) -> float:
        return self.save_budget * self.trigger.interval_s

    @property
    def session_bound_s(self) -> float:
        if self.max_session_s is not None:
            return self.max_session_s
        return 10 * self.nominal_duration_s

    @property
    def effective_log_path(self) -> Path:
        return self.log_path or self.target_path.with_name(self.target_path.name + ".autosave.log")


# ---------------------------------------------------------------- edit scripts


class MutationKind(str, enum.Enum):
    APPEND = "append"
    REPLACE = "replace"
    DELETE = "delete"


@dataclass(frozen=True)
class EditEvent:
    time_s: float
    kind: MutationKind
    length: int


@dataclass(frozen=True)
class EditScript:
    seed: int
    target_size_bytes: int
    duration_s: float
    events: tuple[EditEvent, ...]

    def until(self, time_s: float) -> "EditScript":
        """Same script with every edit at or after ``time_s`` dropped."""
        return EditScript(
            seed=self.seed,
            target_size_bytes=self.target_size_bytes,
            duration_s=self.duration_s,
            events=tuple(e for e in self.events if e.time_s < time_s),
        )

    @property
    def edit_times(self) -> list[float]:
        return [e.time_s for e in self.events]


def edit_times(duration_s: float, rate_hz: float) -> list[float]:
    if rate_hz <= 0:
        return []
    n = math.ceil(duration_s * rate_hz) + 1
    return [k / rate_hz for k in range(n) if k / rate_hz < duration_s]


def generate_edit_script(
    seed: int,
    target_size_bytes: int,
    session_duration_s: float,
    edit_rate_hz: float = 1.0,
    replace_fraction: float = 0.2,
) -> EditScript:
    """Seeded edits at a fixed rate, starting at t=0.

    Appends grow the document toward ``target_size_bytes`` within roughly the
    first quarter of the script; once there, appends and deletes alternate
    around the target. ``replace_fraction`` of edits rewrite the tail in place.
    """
    if target_size_bytes < 0:
        raise ConfigError(f"target size must be non-negative, got {target_size_bytes}")
    if not session_duration_s > 0:
        raise ConfigError(f"session duration must be positive, got {session_duration_s}")
    if edit_rate_hz < 0:
        raise ConfigError(f"edit rate must be non-negative, got {edit_rate_hz}")
    if not 0 <= replace_fraction <= 1:
        raise ConfigError("replace_fraction must lie in [0, 1]")

    times = edit_times(session_duration_s, edit_rate_hz)
    rng = random.Random(seed)
    growth_events = max(1, len(times) // 4)
    chunk = max(1, math.ceil(target_size_bytes / growth_events))

    events = []
    size = 0
    for t in times:
        if size > 0 and rng.random() < replace_fraction:
            kind, length = MutationKind.REPLACE, min(chunk, size)
        elif size < target_size_bytes or size == 0:
            kind, length = MutationKind.APPEND, chunk
            size += chunk
        else:
            kind, length = MutationKind.DELETE, min(chunk, size)
            size -= length
        events.append(EditEvent(t, kind, length))
    return EditScript(seed, target_size_bytes, session_duration_s, tuple(events))


# ------------------------------------------------------------------- buffer

_TEXT = b"Autosave keeps the draft safe while the writer keeps typing. "


class DocumentBuffer:
    def __init__(self, content: bytes = b"", target_size_bytes: int = 0):
        self.content = bytearray(content)
        self.modified_flag = False
        self.target_size_bytes = target_size_bytes
        self.edits_applied = 0

    def __len__(self):
        return len(self.content)

    def apply(self, event: EditEvent) -> None:
        n = self.edits_applied
        if event.kind is MutationKind.APPEND:
            start = (n * 7) % len(_TEXT)
            reps = (event.length + start) // len(_TEXT) + 1
            self.content += (_TEXT * reps)[start : start + event.length]
        elif event.kind is MutationKind.REPLACE:
            length = min(event.length, len(self.content))
            if length:
                fill = ord("a") + n % 26
                if self.content[-1] == fill:
                    fill = ord("a") + (n + 1) % 26
                self.content[-length:] = bytes([fill]) * length
        elif event.kind is MutationKind.DELETE:
            length = min(event.length, len(self.content))
            if length:
                del self.content[-length:]
        self.modified_flag = True
        self.edits_applied += 1

    def mark_saved(self) -> None:
        self.modified_flag = False


def detect_change(buffer: DocumentBuffer) -> bool:
    return buffer.modified_flag


# -------------------------------------------------------------------- saving


@dataclass(frozen=True)
class SaveReceipt:
    # Every byte put on disk, including the backup copy for backup_overwrite.
    bytes_written: int
    files_touched: tuple[Path, ...]


def backup_path(target: Path) -> Path:
    return target.with_name(target.name + ".bak")


def temp_path(target: Path) -> Path:
    return target.with_name(f"{target.name}.tmp.{secrets.token_hex(4)}")


def perform_save(
    strategy: WriteStrategy, buffer: DocumentBuffer | bytes, target_path: Path
) -> SaveReceipt:
    """Persist ``buffer`` to ``target_path`` with the given strategy.

    A ``DocumentBuffer`` has its modified flag cleared on success.
    """
    strategy = WriteStrategy(strategy)
    target = Path(target_path)
    data = bytes(buffer.content if isinstance(buffer, DocumentBuffer) else buffer)

    if strategy is WriteStrategy.DIRECT_SYNC:
        receipt = _save_direct_sync(data, target)
    elif strategy is WriteStrategy.TEMP_RENAME:
        receipt = _save_temp_rename(data, target)
    else:
        receipt = _save_backup_overwrite(data, target)

    if isinstance(buffer, DocumentBuffer):
        buffer.mark_saved()
    return receipt


def _save_direct_sync(data: bytes, target: Path) -> SaveReceipt:
    try:
        with open(target, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
    except OSError as exc:
        raise SaveError(f"direct write to {target} failed: {exc}") from exc
    return SaveReceipt(len(data), (target,))


def _save_temp_rename(data: bytes, target: Path) -> SaveReceipt:
    tmp = temp_path(target)
    try:
        with open(tmp, "wb") as f:
            f.write(data)
        os.replace(tmp, target)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise SaveError(f"temp-file save to {target} failed: {exc}") from exc
    return SaveReceipt(len(data), (tmp, target))


def _save_backup_overwrite(data: bytes, target: Path) -> SaveReceipt:
    backup = backup_path(target)
    copied = 0
    touched: tuple[Path, ...] = (target,)
    try:
        if target.exists():
            shutil.copyfile(target, backup)
            copied = backup.stat().st_size
            touched = (backup, target)
        with open(target, "wb") as f:
            f.write(data)
    except OSError as exc:
        raise SaveError(f"backup save to {target} failed: {exc}") from exc
    return SaveReceipt(len(data) + copied, touched)


# ------------------------------------------------------------------- logging


@dataclass(frozen=True)
class SaveEvent:
    offset_s: float
    firing_index: int
    action: str  # "saved" | "skipped"
    nbytes: int

    def format(self) -> str:
        return f"{self.offset_s:.6f}\t{self.firing_index}\t{self.action}\t{self.nbytes}\n"


class AutosaveLog:
    """Line-per-firing log written to a stream, a file, or both.

    File errors are counted rather than raised so the session keeps going.
    """

    def __init__(self, sink: LogSink, path: Path | None = None, stream: TextIO | None = None):
        self.sink = LogSink(sink)
        self.path = path
        self.stream = stream if stream is not None else sys.stderr
        self.records = 0
        self.errors = 0
        self._file = None
        if self.sink in (LogSink.FILE, LogSink.BOTH):
            if path is None:
                raise ConfigError("file log sink needs a path")
            try:
                self._file = open(path, "a", encoding="utf-8")
            except OSError:
                self.errors += 1

    def emit(self, event: SaveEvent) -> None:
        if self.sink is LogSink.NONE:
            return
        line = event.format()
        if self.sink in (LogSink.STREAM, LogSink.BOTH):
            self.stream.write(line)
            self.stream.flush()
        if self.sink in (LogSink.FILE, LogSink.BOTH):
            if self._file is None:
                self.errors += 1
            else:
                try:
                    self._file.write(line)
                    self._file.flush()
                except OSError:
                    self.errors += 1
        self.records += 1

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None


def emit_log(log: AutosaveLog, event: SaveEvent) -> None:
    log.emit(event)


# ------------------------------------------------------------------ sessions


@dataclass
class SessionStats:
    trigger_firings: int
    saves_performed: int
    saves_skipped: int
    bytes_written: int
    log_records: int
    wall_time_s: float
    log_errors: int = 0
    firing_offsets_s: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.trigger_firings != self.saves_performed + self.saves_skipped:
            raise ValueError("trigger_firings must equal saves_performed + saves_skipped")


def firing_schedule(
    trigger: TriggerConfig,
    edit_offsets: Sequence[float],
    save_budget: int,
    bound_s: float = math.inf,
) -> list[float]:
    """Offsets (seconds from session start) at which the trigger fires.

    Periodic triggers fire every interval. An idle trigger fires once the
    interval has passed since the later of the last edit and the last firing;
    an edit landing exactly on a pending firing postpones it.
    """
    interval = trigger.interval_s
    if trigger.kind is TriggerKind.PERIODIC:
        firings = [k * interval for k in range(1, save_budget + 1)]
    else:
        firings = []
        anchor = 0.0
        edits = sorted(edit_offsets)
        i = 0
        while len(firings) < save_budget:
            due = anchor + interval
            if due > bound_s:
                break
            if i < len(edits) and edits[i] <= due:
                anchor = max(anchor, edits[i])
                i += 1
                continue
            firings.append(due)
            anchor = due
    if len(firings) < save_budget or firings[-1] > bound_s:
        raise SessionTimeoutError(
            f"{trigger.kind.value} trigger reached {len(firings)} of {save_budget} "
            f"firings within {bound_s:g} s"
        )
    return firings


ChargeHook = Callable[[str, int], None]


class AutosaveSession:
    """One autosave skeleton run.

    ``arm()`` prepares the buffer, target and log without starting the
    timeline; ``run()`` drives edits and firings to the last firing. With
    ``enabled=False`` the same timeline runs but firings do nothing, which is
    the control scenario.
    """

    def __init__(
        self,
        config: AutosaveConfig,
        script: EditScript,
        *,
        clock: RealClock | SimulatedClock | None = None,
        charge: ChargeHook | None = None,
        enabled: bool = True,
        stream: TextIO | None = None,
        sampler: Callable[[], None] | None = None,
        sample_interval_s: float | None = None,
    ):
        self.config = config
        self.script = script
        self.clock = clock or RealClock()
        self.charge = charge
        self.enabled = enabled
        self.stream = stream
        self.sampler = sampler
        self.sample_interval_s = sample_interval_s
        self.buffer: DocumentBuffer | None = None
        self.log: AutosaveLog | None = None
        self.firings = firing_schedule(
            config.trigger, script.edit_times, config.save_budget, config.session_bound_s
        )
        if (
            config.trigger.kind is TriggerKind.PERIODIC
            and script.duration_s + 1e-9 < config.nominal_duration_s
        ):
            raise ConfigError(
                f"edit script covers {script.duration_s:g} s, "
                f"session needs {config.nominal_duration_s:g} s"
            )

    @property
    def end_offset_s(self) -> float:
        return self.firings[-1]

    def arm(self) -> None:
        target = self.config.target_path
        if not target.parent.is_dir():
            raise SessionError(f"target directory {target.parent} does not exist")
        if not os.access(target.parent, os.W_OK):
            raise SessionError(f"target directory {target.parent} is not writable")
        self.buffer = DocumentBuffer(target_size_bytes=self.script.target_size_bytes)
        sink = self.config.logging if self.enabled else LogSink.NONE
        self.log = AutosaveLog(sink, self.config.effective_log_path, self.stream)

    def _timeline(self) -> list[tuple[float, int, int]]:
        end = self.end_offset_s
        items = [(e.time_s, 0, i) for i, e in enumerate(self.script.events) if e.time_s <= end]
        items += [(t, 1, i) for i, t in enumerate(self.firings)]
        if self.sampler is not None and self.sample_interval_s:
            step = self.sample_interval_s
            k = 1
            while k * step < end:
                items.append((k * step, 2, k))
                k += 1
        items.sort()
        return items

    def _fire(self, index: int, offset_s: float, counters: dict) -> None:
        buf = self.buffer
        cfg = self.config
        if cfg.change_detection:
            self._charge("check", 0)
            if not detect_change(buf):
                counters["skipped"] += 1
                if cfg.logging is not LogSink.NONE:
                    self.log.emit(SaveEvent(offset_s, index + 1, "skipped", 0))
                    self._charge("log", 0)
                return
        try:
            receipt = perform_save(cfg.strategy, buf, cfg.target_path)
        except SaveError as exc:
            raise SessionError(str(exc)) from exc
        counters["saved"] += 1
        counters["bytes"] += receipt.bytes_written
        self._charge("save", receipt.bytes_written)
        if cfg.logging is not LogSink.NONE:
            self.log.emit(SaveEvent(offset_s, index + 1, "saved", receipt.bytes_written))
            self._charge("log", 0)

    def _charge(self, op: str, nbytes: int) -> None:
        if self.charge is not None:
            self.charge(op, nbytes)

    def run(self) -> SessionStats:
        if self.buffer is None:
            self.arm()
        counters = {"saved": 0, "skipped": 0, "bytes": 0}
        fired = 0
        start_ns = self.clock.now_ns()
        for offset, kind, index in self._timeline():
            self.clock.sleep_until_ns(start_ns + seconds_to_ns(offset))
            if kind == 0:
                self.buffer.apply(self.script.events[index])
            elif kind == 1:
                if self.enabled:
                    self._fire(index, offset, counters)
                    fired += 1
            else:
                self.sampler()
        wall = (self.clock.now_ns() - start_ns) / 1e9
        return SessionStats(
            trigger_firings=fired,
            saves_performed=counters["saved"],
            saves_skipped=counters["skipped"],
            bytes_written=counters["bytes"],
            log_records=self.log.records,
            wall_time_s=wall,
            log_errors=self.log.errors,
            firing_offsets_s=list(self.firings) if self.enabled else [],
        )

    def close(self) -> None:
        if self.log is not None:
            self.log.close()


def run_autosave_session(
    config: AutosaveConfig,
    script: EditScript,
    charge: ChargeHook | None = None,
    *,
    clock: RealClock | SimulatedClock | None = None,
    enabled: bool = True,
    stream: TextIO | None = None,
) -> SessionStats:
    session = AutosaveSession(
        config, script, clock=clock, charge=charge, enabled=enabled, stream=stream
    )
    try:
        session.arm()
        return session.run()
    finally:
        session.close()


def required_script_duration(
    trigger: TriggerConfig, save_budget: int, edit_rate_hz: float, bound_s: float
) -> float:
    """Shortest edit-script length that spans a session with this trigger.

    Edit times depend only on the rate, so the idle firing schedule can be
    found from the bound-length timeline and the script cut to its end.
    """
    if trigger.kind is TriggerKind.PERIODIC:
        return save_budget * trigger.interval_s
    firings = firing_schedule(trigger, edit_times(bound_s, edit_rate_hz), save_budget, bound_s)
    return firings[-1]
