"""Energy counters: Linux powercap (RAPL) and a deterministic synthetic model.

Both providers hand out :class:`CounterSnapshot` lists; a measurement window
is the modular difference between a start and an end pass.
"""

from __future__ import annotations

import enum
import glob
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .clock import RealClock, SimulatedClock
from .errors import (
    ConfigError,
    PairingError,
    ProviderUnavailableError,
    SnapshotError,
    TimingError,
    UnsupportedOperationError,
)

POWERCAP_ROOT = "/sys/class/powercap"

# Typical intel-rapl package range; the synthetic provider reuses it by default.
DEFAULT_MAX_RANGE_UJ = 262_143_328_850


class EnergyDomain(str, enum.Enum):
    PACKAGE = "package"
    DRAM = "dram"
    PSYS = "psys"
    CORE = "core"
    UNCORE = "uncore"


@dataclass(frozen=True)
class CounterSnapshot:
    domain: EnergyDomain
    counter_uj: int
    max_range_uj: int
    timestamp_ns: int
    zone: str = ""

    def __post_init__(self):
        if self.max_range_uj <= 0:
            raise ValueError("max_range_uj must be positive")
        if not 0 <= self.counter_uj < self.max_range_uj:
            raise ValueError(
                f"counter {self.counter_uj} outside [0, {self.max_range_uj})"
            )

    @property
    def key(self) -> tuple[str, str]:
        return (self.domain.value, self.zone)


@dataclass(frozen=True)
class EnergyWindow:
    per_domain_joules: Mapping[EnergyDomain, float]
    duration_s: float

    def __post_init__(self):
        if self.duration_s <= 0:
            raise TimingError(f"window duration must be positive, got {self.duration_s}")
        for domain, joules in self.per_domain_joules.items():
            if joules < 0:
                raise ValueError(f"negative energy for {domain}")

    @property
    def total_joules(self) -> float:
        return float(sum(self.per_domain_joules.values()))

    @property
    def domains(self) -> list[EnergyDomain]:
        return list(self.per_domain_joules)


def counter_delta_uj(start_uj: int, end_uj: int, max_range_uj: int) -> int:
    """Microjoules between two readings of a counter that wraps at ``max_range_uj``.

    At most one wrap between the readings is assumed.
    """
    return (end_uj - start_uj) % max_range_uj


def window_energy(
    start: Sequence[CounterSnapshot], end: Sequence[CounterSnapshot]
) -> EnergyWindow:
    start_by_key = {s.key: s for s in start}
    end_by_key = {s.key: s for s in end}
    if len(start_by_key) != len(start) or len(end_by_key) != len(end):
        raise PairingError("duplicate counter in a snapshot pass")
    if not start_by_key or start_by_key.keys() != end_by_key.keys():
        raise PairingError(
            f"snapshot passes cover different counters: "
            f"{sorted(start_by_key)} vs {sorted(end_by_key)}"
        )

    per_domain_uj: dict[EnergyDomain, int] = {}
    for key, s in start_by_key.items():
        e = end_by_key[key]
        if e.max_range_uj != s.max_range_uj:
            raise PairingError(f"counter range changed for {key}")
        if e.timestamp_ns <= s.timestamp_ns:
            raise TimingError(f"end snapshot not after start for {s.domain.value}")
        delta = counter_delta_uj(s.counter_uj, e.counter_uj, s.max_range_uj)
        per_domain_uj[s.domain] = per_domain_uj.get(s.domain, 0) + delta

    t0 = min(s.timestamp_ns for s in start)
    t1 = max(e.timestamp_ns for e in end)
    return EnergyWindow(
        per_domain_joules={d: uj / 1e6 for d, uj in per_domain_uj.items()},
        duration_s=(t1 - t0) / 1e9,
    )


def _read_int(path: str) -> int:
    with open(path) as f:
        return int(f.read().strip())


_ZONE_PREFIXES = {
    "package": EnergyDomain.PACKAGE,
    "dram": EnergyDomain.DRAM,
    "psys": EnergyDomain.PSYS,
    "core": EnergyDomain.CORE,
    "uncore": EnergyDomain.UNCORE,
}


def _domain_for_zone_name(name: str) -> EnergyDomain | None:
    for prefix, domain in _ZONE_PREFIXES.items():
        if name == prefix or name.startswith(prefix + "-"):
            return domain
    return None


@dataclass
class _Zone:
    zone: str
    domain: EnergyDomain
    energy_path: str
    max_range_uj: int


class RaplSysfsProvider:
    """Reads ``energy_uj`` counters from the powercap tree.

    Multi-socket hosts expose one zone per package; windows sum them per domain.
    """

    kind = "rapl_sysfs"

    def __init__(self, root: str = POWERCAP_ROOT, clock: RealClock | None = None):
        self.root = root
        self.clock = clock or RealClock()
        self._zones = self._discover()

    def _discover(self) -> list[_Zone]:
        if not os.path.isdir(self.root):
            raise ProviderUnavailableError(
                f"powercap tree not found at {self.root}", path=self.root
            )
        zones = []
        last_error: ProviderUnavailableError | None = None
        for zone_dir in sorted(glob.glob(os.path.join(self.root, "intel-rapl:*"))):
            name_path = os.path.join(zone_dir, "name")
            energy_path = os.path.join(zone_dir, "energy_uj")
            range_path = os.path.join(zone_dir, "max_energy_range_uj")
            try:
                with open(name_path) as f:
                    name = f.read().strip()
                domain = _domain_for_zone_name(name)
                if domain is None:
                    continue
                max_range = _read_int(range_path)
                _read_int(energy_path)
            except (OSError, ValueError) as exc:
                last_error = ProviderUnavailableError(
                    f"cannot read RAPL counter {energy_path}: {exc}", path=energy_path
                )
                continue
            zones.append(_Zone(os.path.basename(zone_dir), domain, energy_path, max_range))
        if not zones:
            if last_error is not None:
                raise last_error
            raise ProviderUnavailableError(
                f"no readable intel-rapl zones under {self.root}", path=self.root
            )
        return zones

    @property
    def domains(self) -> list[EnergyDomain]:
        return sorted({z.domain for z in self._zones}, key=lambda d: d.value)

    def snapshot(self) -> list[CounterSnapshot]:
        out = []
        for z in self._zones:
            try:
                value = _read_int(z.energy_path)
            except (OSError, ValueError) as exc:
                raise SnapshotError(
                    f"reading {z.energy_path} failed: {exc}", domain=z.domain.value
                ) from exc
            out.append(
                CounterSnapshot(
                    domain=z.domain,
                    counter_uj=value % z.max_range_uj,
                    max_range_uj=z.max_range_uj,
                    timestamp_ns=self.clock.now_ns(),
                    zone=z.zone,
                )
            )
        return out

    def charge(self, joules: float) -> None:
        raise UnsupportedOperationError("cannot inject energy into hardware counters")

    def close(self) -> None:
        pass


@dataclass
class ChargeEvent:
    timestamp_ns: int
    joules: float


class SyntheticProvider:
    """Package-only counter driven by an idle power plus explicit charges.

    Energy at time t is ``idle_rate_w * (t - t_open) + sum(charges)``,
    tracked exactly and floored to whole microjoules.
    """

    kind = "synthetic"

    def __init__(
        self,
        idle_rate_w: float = 1.0,
        clock: RealClock | SimulatedClock | None = None,
        max_range_uj: int = DEFAULT_MAX_RANGE_UJ,
        initial_uj: int = 0,
    ):
        if not (isinstance(idle_rate_w, (int, float)) and math.isfinite(idle_rate_w)) or idle_rate_w < 0:
            raise ConfigError(f"idle_rate_w must be a finite non-negative number, got {idle_rate_w!r}")
        if max_range_uj <= 0:
            raise ConfigError("max_range_uj must be positive")
        if initial_uj < 0:
            raise ConfigError("initial_uj must be non-negative")
        self.idle_rate_w = idle_rate_w
        self.clock = clock or SimulatedClock()
        self.max_range_uj = int(max_range_uj)
        self._rate = Fraction(str(idle_rate_w))
        self._initial_uj = int(initial_uj)
        self._t0 = self.clock.now_ns()
        self._charged = Fraction(0)
        self.events: list[ChargeEvent] = []

    @property
    def domains(self) -> list[EnergyDomain]:
        return [EnergyDomain.PACKAGE]

    def charge(self, joules: float) -> None:
        if not math.isfinite(joules) or joules < 0:
            raise ValueError(f"event cost must be a non-negative finite number, got {joules!r}")
        if joules == 0:
            return
        self._charged += Fraction(str(joules))
        self.events.append(ChargeEvent(self.clock.now_ns(), joules))

    def energy_uj_at(self, timestamp_ns: int) -> Fraction:
        """Exact model energy (before flooring and wraparound)."""
        idle = self._rate * (timestamp_ns - self._t0) / 1000
        return self._initial_uj + idle + self._charged * 1_000_000

    def snapshot(self) -> list[CounterSnapshot]:
        ts = self.clock.now_ns()
        total = math.floor(self.energy_uj_at(ts))
        snap = CounterSnapshot(
            domain=EnergyDomain.PACKAGE,
            counter_uj=total % self.max_range_uj,
            max_range_uj=self.max_range_uj,
            timestamp_ns=ts,
            zone="synthetic",
        )
        if isinstance(self.clock, SimulatedClock):
            # A read pass costs one microsecond so successive passes never share a timestamp.
            self.clock.advance_ns(1_000)
        return [snap]

    def close(self) -> None:
        pass


def open_provider(kind: str, config: Mapping | None = None, clock=None):
    """Open a provider by kind (``rapl_sysfs`` or ``synthetic``)."""
    config = dict(config or {})
    if kind == "rapl_sysfs":
        if isinstance(clock, SimulatedClock):
            raise ConfigError("rapl_sysfs requires a real clock")
        return RaplSysfsProvider(root=config.get("root", POWERCAP_ROOT), clock=clock)
    if kind == "synthetic":
        allowed = {"idle_rate_w", "max_range_uj", "initial_uj"}
        unknown = set(config) - allowed
        if unknown:
            raise ConfigError(f"unknown synthetic provider parameters: {sorted(unknown)}")
        try:
            return SyntheticProvider(clock=clock, **config)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown provider kind {kind!r}")
