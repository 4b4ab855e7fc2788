"""Host readiness checks and fingerprinting. Reports only; never blocks a run."""

from __future__ import annotations

import glob
import json
import os
import platform
import socket
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .energy import RaplSysfsProvider
from .errors import ProviderUnavailableError

OK, WARN, INFO = "ok", "warn", "info"


@dataclass
class CheckItem:
    name: str
    status: str
    detail: str


@dataclass
class ReadinessReport:
    items: list[CheckItem] = field(default_factory=list)

    @property
    def warnings(self) -> list[CheckItem]:
        return [i for i in self.items if i.status == WARN]

    @property
    def all_green(self) -> bool:
        return not self.warnings

    def get(self, name: str) -> CheckItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"all_green": self.all_green, "items": [asdict(i) for i in self.items]}

    def render(self) -> str:
        width = max(len(i.name) for i in self.items)
        lines = [f"[{i.status:>4}] {i.name:<{width}}  {i.detail}" for i in self.items]
        lines.append("ready" if self.all_green else f"{len(self.warnings)} warning(s)")
        return "\n".join(lines) + "\n"


def _read(path: str) -> str | None:
    try:
        with open(path) as f:
            return f.read().strip()
    except OSError:
        return None


def _governor(sys_root: str) -> CheckItem:
    paths = sorted(glob.glob(os.path.join(sys_root, "devices/system/cpu/cpu[0-9]*/cpufreq/scaling_governor")))
    governors = {g for g in (_read(p) for p in paths) if g}
    if not governors:
        return CheckItem("cpu_governor", WARN, "scaling governor not readable; frequency may float")
    if governors == {"performance"}:
        return CheckItem("cpu_governor", OK, "performance")
    return CheckItem(
        "cpu_governor", WARN,
        f"governor {','.join(sorted(governors))}; set 'performance' to pin frequency",
    )


def _turbo(sys_root: str) -> CheckItem:
    no_turbo = _read(os.path.join(sys_root, "devices/system/cpu/intel_pstate/no_turbo"))
    if no_turbo is not None:
        if no_turbo == "1":
            return CheckItem("turbo", OK, "turbo disabled (intel_pstate)")
        return CheckItem("turbo", WARN, "turbo enabled; write 1 to intel_pstate/no_turbo")
    boost = _read(os.path.join(sys_root, "devices/system/cpu/cpufreq/boost"))
    if boost is not None:
        if boost == "0":
            return CheckItem("turbo", OK, "boost disabled")
        return CheckItem("turbo", WARN, "boost enabled; write 0 to cpufreq/boost")
    return CheckItem("turbo", INFO, "no turbo control found")


def _power_source(sys_root: str) -> CheckItem:
    supplies = sorted(glob.glob(os.path.join(sys_root, "class/power_supply/*")))
    on_ac = None
    discharging = False
    for sup in supplies:
        kind = _read(os.path.join(sup, "type"))
        if kind == "Mains":
            online = _read(os.path.join(sup, "online"))
            on_ac = bool(on_ac) or online == "1"
        elif kind == "Battery":
            if _read(os.path.join(sup, "status")) == "Discharging":
                discharging = True
    if discharging or on_ac is False:
        return CheckItem("power_source", WARN, "running on battery; connect AC power")
    if on_ac:
        return CheckItem("power_source", OK, "AC power")
    return CheckItem("power_source", INFO, "no power supply information (assuming mains)")


def _rapl(sys_root: str) -> CheckItem:
    root = os.path.join(sys_root, "class/powercap")
    try:
        provider = RaplSysfsProvider(root=root)
    except ProviderUnavailableError as exc:
        return CheckItem("rapl", WARN, f"{exc}; use --provider synthetic")
    return CheckItem("rapl", OK, "domains " + ",".join(d.value for d in provider.domains))


def _load(max_load: float) -> CheckItem:
    try:
        load1 = os.getloadavg()[0]
    except OSError:
        return CheckItem("load_average", INFO, "load average unavailable")
    if load1 > max_load:
        return CheckItem("load_average", WARN, f"1-min load {load1:.2f} > {max_load}; stop background jobs")
    return CheckItem("load_average", OK, f"1-min load {load1:.2f}")


def environment_check(sys_root: str = "/sys", max_load: float = 1.0) -> ReadinessReport:
    return ReadinessReport(
        [
            _governor(sys_root),
            _turbo(sys_root),
            _power_source(sys_root),
            _rapl(sys_root),
            _load(max_load),
        ]
    )


def _cpu_model(proc_root: str) -> str:
    text = _read(os.path.join(proc_root, "cpuinfo")) or ""
    for line in text.splitlines():
        if line.lower().startswith("model name"):
            return line.split(":", 1)[1].strip()
    return platform.processor() or "unknown"


def host_fingerprint(provider_kind: str, sys_root: str = "/sys", proc_root: str = "/proc") -> dict:
    gov = _governor(sys_root)
    return {
        "hostname": socket.gethostname(),
        "kernel": platform.release(),
        "os": platform.platform(),
        "cpu_model": _cpu_model(proc_root),
        "cpu_count": os.cpu_count(),
        "governor": gov.detail if gov.status == OK else gov.detail.split(";")[0],
        "provider": provider_kind,
        "python": platform.python_version(),
    }


def write_fingerprint(path: Path, fingerprint: dict) -> None:
    path.write_text(json.dumps(fingerprint, indent=2, sort_keys=True) + "\n", encoding="utf-8")
