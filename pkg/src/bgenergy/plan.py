"""Experiment plan files (TOML) and their schema."""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import DecompositionError, PlanError
from .feature_model import (
    AUTOSAVE_OPERATIONS,
    AtomicOperation,
    FeatureProfile,
    VariantChain,
    build_variant_chain,
    validate_profile,
)
from .workload import LogSink, TriggerKind, WriteStrategy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class OperationModel(_Strict):
    id: str = Field(min_length=1)
    description: str = ""


class ProfileModel(_Strict):
    trigger: Literal["schedule_time", "schedule_event", "schedule_idle", "reactive"]
    frequency: Literal["periodic", "aperiodic", "sporadic"]
    persistence: Literal["immediate", "long_running", "deferrable", "persistent"]
    resources: list[Literal["cpu", "disk_io", "network", "sensors"]] = Field(min_length=1)
    scope: Literal["local", "external"]


class FeatureModel(_Strict):
    name: str = "autosave"
    operations: list[OperationModel] = Field(
        default_factory=lambda: [OperationModel(id=o.id, description=o.description) for o in AUTOSAVE_OPERATIONS]
    )
    variant_names: Optional[list[str]] = None
    profile: Optional[ProfileModel] = None

    @model_validator(mode="after")
    def _check_chain(self):
        try:
            self.chain()
        except DecompositionError as exc:
            raise ValueError(str(exc)) from exc
        if self.profile is not None:
            problems = validate_profile(FeatureProfile.from_dict(self.profile.model_dump()))
            if problems:
                raise ValueError("; ".join(problems))
        return self

    def chain(self) -> VariantChain:
        ops = [AtomicOperation(o.id, o.description) for o in self.operations]
        return build_variant_chain(ops, names=self.variant_names)


class CycleModel(_Strict):
    warmup_s: float = Field(default=5.0, ge=0)
    app_settle_s: float = Field(default=5.0, ge=0)
    cooldown_s: float = Field(default=300.0, ge=0)


class SessionModel(_Strict):
    save_budget: int = Field(default=12, ge=1)
    edit_rate_hz: float = Field(default=1.0, ge=0)
    replace_fraction: float = Field(default=0.2, ge=0, le=1)
    log_stream: Literal["stderr", "stdout", "null"] = "null"
    sample_interval_s: float = Field(default=0.0, ge=0)
    keep_scratch: bool = False


class CostsModel(_Strict):
    save_j: float = Field(default=0.5, ge=0)
    check_j: float = Field(default=0.0, ge=0)
    log_j: float = Field(default=0.0, ge=0)
    per_byte_j: float = Field(default=0.0, ge=0)


class ProviderModel(_Strict):
    kind: Literal["synthetic", "rapl_sysfs"] = "synthetic"
    clock: Literal["auto", "real", "simulated"] = "auto"
    idle_rate_w: float = Field(default=1.0, ge=0)
    max_range_uj: int = Field(default=262_143_328_850, gt=0)
    initial_uj: int = Field(default=0, ge=0)
    root: str = "/sys/class/powercap"
    costs: CostsModel = Field(default_factory=CostsModel)

    @model_validator(mode="after")
    def _check_clock(self):
        if self.kind == "rapl_sysfs" and self.clock == "simulated":
            raise ValueError("rapl_sysfs cannot run on a simulated clock")
        return self

    @property
    def simulated(self) -> bool:
        if self.clock == "auto":
            return self.kind == "synthetic"
        return self.clock == "simulated"


class WorkloadModel(_Strict):
    name: str = Field(min_length=1)
    trigger: Literal["periodic", "idle"]
    interval_s: float = Field(gt=0)
    strategy: Literal["direct_sync", "temp_rename", "backup_overwrite"]
    logging: Literal["none", "stream", "file", "both"]
    # The interval the original feature ships with; used for hourly estimates.
    native_interval_s: Optional[float] = Field(default=None, gt=0)
    edit_rate_hz: Optional[float] = Field(default=None, ge=0)
    max_session_s: Optional[float] = Field(default=None, gt=0)

    @field_validator("name")
    @classmethod
    def _no_separators(cls, v: str) -> str:
        if "," in v or "\n" in v or "/" in v:
            raise ValueError("workload names cannot contain ',', '/' or newlines")
        return v

    @property
    def trigger_kind(self) -> TriggerKind:
        return TriggerKind(self.trigger)

    @property
    def write_strategy(self) -> WriteStrategy:
        return WriteStrategy(self.strategy)

    @property
    def log_sink(self) -> LogSink:
        return LogSink(self.logging)

    @property
    def hourly_interval_s(self) -> float:
        return self.native_interval_s or self.interval_s


class ControlModel(_Strict):
    workload: str
    file_size_bytes: Optional[int] = Field(default=None, ge=0)


class WhatIfModel(_Strict):
    workload: str
    new_interval_s: float = Field(gt=0)


class AnalysisModel(_Strict):
    alpha: float = Field(default=0.05, gt=0, lt=1)
    domain: str = "total"
    holm: bool = False
    iqr_filter: bool = False
    use_deltas: bool = True
    whatif: list[WhatIfModel] = Field(default_factory=list)


class Plan(_Strict):
    name: str = "plan"
    seed: int = 0
    randomize_order: bool = True
    repetitions: int = Field(ge=1)
    file_sizes_bytes: list[int] = Field(min_length=1)
    output_root: str = "runs"
    feature: FeatureModel = Field(default_factory=FeatureModel)
    cycle: CycleModel = Field(default_factory=CycleModel)
    session: SessionModel = Field(default_factory=SessionModel)
    provider: ProviderModel = Field(default_factory=ProviderModel)
    workloads: list[WorkloadModel] = Field(min_length=1)
    controls: list[ControlModel] = Field(default_factory=list)
    analysis: AnalysisModel = Field(default_factory=AnalysisModel)

    @field_validator("file_sizes_bytes")
    @classmethod
    def _sizes(cls, v: list[int]) -> list[int]:
        if any(s < 0 for s in v):
            raise ValueError("file sizes must be non-negative")
        if len(set(v)) != len(v):
            raise ValueError("file sizes must be unique")
        return v

    @model_validator(mode="after")
    def _cross_refs(self):
        names = [w.name for w in self.workloads]
        if len(set(names)) != len(names):
            raise ValueError(f"workload names must be unique: {names}")
        for c in self.controls:
            if c.workload not in names:
                raise ValueError(f"control refers to unknown workload {c.workload!r}")
        for w in self.analysis.whatif:
            if w.workload not in names:
                raise ValueError(f"what-if refers to unknown workload {w.workload!r}")
        known_ops = {o.id for o in AUTOSAVE_OPERATIONS}
        for op in self.feature.operations:
            if op.id not in known_ops:
                raise ValueError(
                    f"operation {op.id!r} has no autosave implementation (known: {sorted(known_ops)})"
                )
        if self.feature.operations[0].id != "file_write":
            raise ValueError("the first operation must be file_write; every variant saves")
        if "control" in self.variant_chain.names:
            raise ValueError("variant name 'control' is reserved for control runs")
        return self

    @property
    def variant_chain(self) -> VariantChain:
        return self.feature.chain()

    def workload(self, name: str) -> WorkloadModel:
        for w in self.workloads:
            if w.name == name:
                return w
        raise KeyError(name)

    def with_overrides(self, **updates) -> "Plan":
        """Copy with dotted-path overrides, revalidated (e.g. ``cycle.cooldown_s=0``)."""
        data = self.model_dump(mode="json")
        for dotted, value in updates.items():
            node = data
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node[p]
            node[leaf] = value
        return plan_from_dict(data)


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<plan>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def plan_from_dict(data: dict) -> Plan:
    try:
        return Plan.model_validate(data)
    except ValidationError as exc:
        raise PlanError(_format_validation_error(exc)) from exc


def loads_plan(text: str) -> Plan:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise PlanError(f"not valid TOML: {exc}") from exc
    return plan_from_dict(data)


def dumps_plan(plan: Plan) -> str:
    return tomli_w.dumps(plan.model_dump(mode="json", exclude_none=True))


BUNDLED_PLANS = ("paper-canonical", "desk-scale")


def resolve_plan_path(spec: str | Path) -> Path:
    """A filesystem path, or the name of a bundled plan."""
    path = Path(spec)
    if path.exists():
        return path
    name = str(spec).removesuffix(".toml")
    if name in BUNDLED_PLANS:
        return Path(str(resources.files("bgenergy") / "plans" / f"{name}.toml"))
    raise PlanError(f"plan file {spec} not found (bundled plans: {', '.join(BUNDLED_PLANS)})")


def load_plan(spec: str | Path) -> Plan:
    path = resolve_plan_path(spec)
    return loads_plan(path.read_text(encoding="utf-8"))
