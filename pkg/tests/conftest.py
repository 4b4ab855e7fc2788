import os
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_criteria: dict[int, dict] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("BGENERGY_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="real-time cycle; set BGENERGY_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    entry = _criteria.setdefault(n, {"title": title, "ok": True, "ran": False})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["ok"] and e["ran"] else ("FAIL" if not e["ok"] else "NOT RUN")
        terminalreporter.write_line(f"criterion {n}: {status}  {e['title']}")


# ------------------------------------------------------------------ fixtures


def write_zone(root: Path, name: str, zone: str, energy: int, max_range: int = 262_143_328_850) -> Path:
    d = root / name
    d.mkdir(parents=True, exist_ok=True)
    (d / "name").write_text(zone + "\n")
    (d / "energy_uj").write_text(f"{energy}\n")
    (d / "max_energy_range_uj").write_text(f"{max_range}\n")
    return d


@pytest.fixture
def powercap(tmp_path):
    """A fake powercap tree: one package zone and its dram subzone."""
    root = tmp_path / "powercap"
    write_zone(root, "intel-rapl:0", "package-0", 1_000_000, 10_000_000)
    write_zone(root, "intel-rapl:0:0", "dram", 50_000, 10_000_000)
    return root


def small_plan_dict(**over) -> dict:
    data = {
        "name": "tiny",
        "seed": 7,
        "repetitions": 2,
        "file_sizes_bytes": [0, 2048],
        "cycle": {"warmup_s": 0.5, "app_settle_s": 0.5, "cooldown_s": 0.0},
        "session": {"save_budget": 4, "edit_rate_hz": 4.0},
        "provider": {"kind": "synthetic", "idle_rate_w": 2.0, "costs": {"save_j": 0.25}},
        "workloads": [
            {"name": "A", "trigger": "periodic", "interval_s": 0.5, "strategy": "direct_sync",
             "logging": "file", "native_interval_s": 5.0},
            {"name": "B", "trigger": "idle", "interval_s": 0.5, "strategy": "backup_overwrite",
             "logging": "stream", "edit_rate_hz": 1.0, "native_interval_s": 60.0},
        ],
        "controls": [{"workload": "A"}, {"workload": "B"}],
    }
    data.update(over)
    return data


@pytest.fixture
def tiny_plan():
    from bgenergy.plan import plan_from_dict

    return plan_from_dict(small_plan_dict())
