"""Background features as property profiles and incremental operation chains."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DecompositionError


class Trigger(str, enum.Enum):
    SCHEDULE_TIME = "schedule_time"
    SCHEDULE_EVENT = "schedule_event"
    SCHEDULE_IDLE = "schedule_idle"
    REACTIVE = "reactive"


class Frequency(str, enum.Enum):
    PERIODIC = "periodic"
    APERIODIC = "aperiodic"
    SPORADIC = "sporadic"


class Persistence(str, enum.Enum):
    IMMEDIATE = "immediate"
    LONG_RUNNING = "long_running"
    DEFERRABLE = "deferrable"
    PERSISTENT = "persistent"


class Resource(str, enum.Enum):
    CPU = "cpu"
    DISK_IO = "disk_io"
    NETWORK = "network"
    SENSORS = "sensors"


class Scope(str, enum.Enum):
    LOCAL = "local"
    EXTERNAL = "external"


_PROFILE_ENUMS = {
    "trigger": Trigger,
    "frequency": Frequency,
    "persistence": Persistence,
    "scope": Scope,
}


@dataclass(frozen=True)
class FeatureProfile:
    trigger: Trigger
    frequency: Frequency
    persistence: Persistence
    resources: frozenset[Resource]
    scope: Scope

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureProfile":
        """Build a profile from plain strings; raises ValueError on unknown values."""
        return cls(
            trigger=Trigger(data["trigger"]),
            frequency=Frequency(data["frequency"]),
            persistence=Persistence(data["persistence"]),
            resources=frozenset(Resource(r) for r in data.get("resources", ())),
            scope=Scope(data["scope"]),
        )

    def to_dict(self) -> dict:
        return {
            "trigger": self.trigger.value,
            "frequency": self.frequency.value,
            "persistence": self.persistence.value,
            "resources": sorted(r.value for r in self.resources),
            "scope": self.scope.value,
        }


# The autosave case: timer-driven, periodic, long-lived, disk-bound, local.
AUTOSAVE_PROFILE = FeatureProfile(
    trigger=Trigger.SCHEDULE_TIME,
    frequency=Frequency.PERIODIC,
    persistence=Persistence.LONG_RUNNING,
    resources=frozenset({Resource.DISK_IO}),
    scope=Scope.LOCAL,
)


def validate_profile(profile: FeatureProfile) -> list[str]:
    """Return the list of violated profile invariants (empty when valid)."""
    problems = []
    for name, enum_type in _PROFILE_ENUMS.items():
        value = getattr(profile, name, None)
        if not isinstance(value, enum_type):
            problems.append(f"{name} must be one of {[m.value for m in enum_type]}, got {value!r}")
    resources = getattr(profile, "resources", None)
    if not resources:
        problems.append("resources empty")
    else:
        for r in resources:
            if not isinstance(r, Resource):
                problems.append(f"unknown resource {r!r}")
    return problems


@dataclass(frozen=True)
class AtomicOperation:
    id: str
    description: str = ""


@dataclass(frozen=True)
class VariantSpec:
    name: str
    operations: tuple[str, ...]

    def __post_init__(self):
        if not self.operations:
            raise DecompositionError(f"variant {self.name!r} has no operations")
        if len(set(self.operations)) != len(self.operations):
            raise DecompositionError(f"variant {self.name!r} repeats an operation")

    def includes(self, op_id: str) -> bool:
        return op_id in self.operations


@dataclass(frozen=True)
class VariantChain:
    variants: tuple[VariantSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.variants:
            raise DecompositionError("variant chain is empty")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise DecompositionError(f"variant names are not unique: {names}")
        for prev, nxt in zip(self.variants, self.variants[1:]):
            if not is_strict_prefix(prev.operations, nxt.operations):
                raise DecompositionError(
                    f"{prev.name!r} is not a strict prefix of {nxt.name!r}"
                )

    def __iter__(self):
        return iter(self.variants)

    def __len__(self):
        return len(self.variants)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variants]

    def get(self, name: str) -> VariantSpec:
        for v in self.variants:
            if v.name == name:
                return v
        raise KeyError(name)


def is_strict_prefix(a: Sequence[str], b: Sequence[str]) -> bool:
    return len(a) < len(b) and tuple(b[: len(a)]) == tuple(a)


def build_variant_chain(
    atomic_ops: Iterable[AtomicOperation | str],
    names: Sequence[str | None] | None = None,
) -> VariantChain:
    """Expand an ordered decomposition into one variant per operation.

    Variant k holds the first k operations. Unnamed variants take the id of
    their last operation.
    """
    ops = [op if isinstance(op, AtomicOperation) else AtomicOperation(op) for op in atomic_ops]
    if not ops:
        raise DecompositionError("decomposition has no operations")
    ids = [op.id for op in ops]
    seen = set()
    for op_id in ids:
        if op_id in seen:
            raise DecompositionError(f"duplicate operation id {op_id!r}")
        seen.add(op_id)
    if names is not None and len(names) != len(ids):
        raise DecompositionError(f"expected {len(ids)} variant names, got {len(names)}")

    variants = []
    for k in range(1, len(ids) + 1):
        name = names[k - 1] if names is not None and names[k - 1] else ids[k - 1]
        variants.append(VariantSpec(name=name, operations=tuple(ids[:k])))
    return VariantChain(tuple(variants))


AUTOSAVE_OPERATIONS = (
    AtomicOperation("file_write", "persist the document to disk"),
    AtomicOperation("change_detect", "skip the save when the document is unmodified"),
    AtomicOperation("logging", "record autosave activity"),
)

AUTOSAVE_CHAIN = build_variant_chain(AUTOSAVE_OPERATIONS, names=["base", "change", "logging"])
