import json
from unittest import mock

import pytest

from bgenergy.clock import RealClock, SimulatedClock
from bgenergy.energy import SyntheticProvider
from bgenergy.errors import PlanError, SessionError, SnapshotError
from bgenergy.orchestrator import (
    CHECKPOINT_NAME,
    ENV_NAME,
    PLAN_NAME,
    PlanInterrupted,
    PlannedRun,
    ProviderLostError,
    execute_cycle,
    expand_matrix,
    failed_run_ids,
    make_clock,
    make_provider,
    matrix_counts,
    rerun_failed,
    resolve_resume,
    run_plan,
)
from bgenergy.plan import load_plan, plan_from_dict
from bgenergy.store import RunCoordinates, load_store

from conftest import small_plan_dict

READ_PASS_J = 1e-6  # one simulated microsecond at 1 W


def one_run_plan(**over):
    data = {
        "repetitions": 1,
        "file_sizes_bytes": [0],
        "feature": {"operations": [{"id": "file_write"}]},
        "cycle": {"warmup_s": 0, "app_settle_s": 0, "cooldown_s": 0},
        "workloads": [{"name": "w", "trigger": "periodic", "interval_s": 1.0,
                       "strategy": "direct_sync", "logging": "none"}],
    }
    data.update(over)
    return plan_from_dict(data)


def test_single_run_matrix():
    runs = expand_matrix(one_run_plan())
    assert len(runs) == 1 and runs[0].run_id == "0000"
    assert matrix_counts(one_run_plan())["total"] == 1


def test_seeded_shuffle_is_reproducible():
    plan = load_plan("paper-canonical")
    a, b = expand_matrix(plan), expand_matrix(plan)
    assert a == b
    grouped = expand_matrix(plan, in_order=True)
    assert [r.run_id for r in grouped] == sorted(r.run_id for r in grouped)
    assert a != grouped and sorted(a, key=lambda r: r.run_id) == grouped
    other = expand_matrix(plan.with_overrides(seed=plan.seed + 1))
    assert [r.run_id for r in other] != [r.run_id for r in a]


def test_canonical_controls_are_thirty_per_workload():
    runs = expand_matrix(load_plan("paper-canonical"))
    controls = [r.coords for r in runs if r.coords.is_control]
    assert {c.workload for c in controls} == {"Mu", "novelWriter", "Leo"}
    assert all(sum(c.workload == w for c in controls) == 30 for w in ("Mu", "novelWriter", "Leo"))


def test_repeated_control_rejected():
    plan = one_run_plan(controls=[{"workload": "w"}, {"workload": "w"}])
    with pytest.raises(PlanError, match="duplicate"):
        expand_matrix(plan)


# ------------------------------------------------------------------- cycles


def canonical_synthetic():
    return load_plan("paper-canonical").with_overrides(
        **{"provider.kind": "synthetic", "provider.clock": "auto", "cycle.cooldown_s": 0.0}
    )


@pytest.mark.parametrize(
    "coords,expected_j",
    [
        (RunCoordinates("Mu", "base", 5120, 0), 126.0),
        (RunCoordinates("Mu", "control", 0, 0, True), 120.0),
        (RunCoordinates("novelWriter", "logging", 51200, 3), 126.0),
    ],
)
def test_cycle_energy_matches_model(tmp_path, coords, expected_j):
    plan = canonical_synthetic()
    provider = make_provider(plan, make_clock(plan))
    rec = execute_cycle(PlannedRun("0001", coords), plan, provider, tmp_path)
    assert rec.status == "ok"
    assert abs(rec.energy.total_joules - (expected_j + READ_PASS_J)) <= 1e-6
    assert rec.energy.duration_s == pytest.approx(120, rel=0.02)
    assert not (tmp_path / "0001").exists()  # scratch removed


def test_cycle_failure_is_recorded(tmp_path):
    plan = canonical_synthetic()
    provider = make_provider(plan, make_clock(plan))
    with mock.patch("bgenergy.orchestrator.AutosaveSession.run", side_effect=SessionError("boom")):
        rec = execute_cycle(PlannedRun("0001", RunCoordinates("Mu", "base", 0, 0)), plan, provider, tmp_path)
    assert rec.status == "failed" and "boom" in rec.error
    assert rec.rows()[0]["joules"] == ""


class FlakyProvider(SyntheticProvider):
    def __init__(self, fail_after, **kw):
        super().__init__(**kw)
        self.calls = 0
        self.fail_after = fail_after

    def snapshot(self):
        self.calls += 1
        if self.calls > self.fail_after:
            raise SnapshotError("counter vanished", domain="package")
        return super().snapshot()


def test_provider_loss_writes_checkpoint(tmp_path):
    plan = plan_from_dict(small_plan_dict())
    provider = FlakyProvider(fail_after=3, clock=SimulatedClock())
    with pytest.raises(ProviderLostError, match="--resume"):
        run_plan(plan, provider, tmp_path / "run")
    ckpt = json.loads((tmp_path / "run" / CHECKPOINT_NAME).read_text())
    assert ckpt["completed"] == 1 and "provider lost" in ckpt["reason"]
    assert len(load_store(tmp_path / "run" / "runs.csv")) == 1


# -------------------------------------------------------------------- plans


def test_run_plan_tiny(tmp_path, tiny_plan):
    provider = make_provider(tiny_plan, make_clock(tiny_plan))
    result = run_plan(tiny_plan, provider, tmp_path / "run")
    total = matrix_counts(tiny_plan)["total"]
    recs = load_store(result.store_path)
    assert len(recs) == total == 2 * 3 * 2 * 2 + 2 * 2
    assert len({r.coords for r in recs}) == total
    assert (tmp_path / "run" / PLAN_NAME).exists() and (tmp_path / "run" / ENV_NAME).exists()
    assert not (tmp_path / "run" / "scratch").exists()
    # Strictly serial: measurement windows never overlap.
    windows = sorted((r.window_start_ns, r.window_end_ns) for r in result.records)
    assert all(a_end < b_start for (_, a_end), (b_start, _) in zip(windows, windows[1:]))
    # Every record equals its analytic model (2 W idle, 0.25 J per save).
    for r in recs:
        model = 2.0 * r.duration_s + 0.25 * r.stats["saves_performed"]
        assert abs(r.joules() - model) <= 1e-6


def test_resume_adds_only_missing_runs(tmp_path):
    plan = one_run_plan(repetitions=2)
    run_dir = tmp_path / "run"

    def stop_after_first(record, done, total):
        raise KeyboardInterrupt

    with pytest.raises(PlanInterrupted) as exc:
        run_plan(plan, make_provider(plan, make_clock(plan)), run_dir, progress=stop_after_first)
    assert len(load_store(run_dir / "runs.csv")) == 1
    assert resolve_resume(exc.value.checkpoint) == run_dir.resolve()

    result = run_plan(plan, make_provider(plan, make_clock(plan)), run_dir, resume=True)
    assert len(result.records) == 1 and result.skipped == 1
    recs = load_store(run_dir / "runs.csv")
    assert sorted(r.coords.repetition for r in recs) == [0, 1]
    assert not (run_dir / CHECKPOINT_NAME).exists()


def test_failed_runs_continue_and_can_be_rerun(tmp_path, tiny_plan):
    run_dir = tmp_path / "run"
    real_run = __import__("bgenergy.workload", fromlist=["AutosaveSession"]).AutosaveSession.run
    calls = {"n": 0}

    def sometimes(self):
        calls["n"] += 1
        if calls["n"] in (2, 5):
            raise SessionError("injected")
        return real_run(self)

    with mock.patch("bgenergy.orchestrator.AutosaveSession.run", sometimes):
        result = run_plan(tiny_plan, make_provider(tiny_plan, make_clock(tiny_plan)), run_dir)
    assert len(result.failed) == 2
    assert len(result.records) == matrix_counts(tiny_plan)["total"]
    failed = failed_run_ids(run_dir / "runs.csv")
    assert len(failed) == 2

    again = rerun_failed(run_dir)
    assert {r.run_id for r in again.records} == failed
    recs = load_store(run_dir / "runs.csv")
    assert all(r.ok for r in recs) and len(recs) == matrix_counts(tiny_plan)["total"]


def test_run_dir_guards(tmp_path, tiny_plan):
    run_dir = tmp_path / "run"
    run_plan(tiny_plan, make_provider(tiny_plan, make_clock(tiny_plan)), run_dir)
    with pytest.raises(PlanError, match="--resume"):
        run_plan(tiny_plan, make_provider(tiny_plan, make_clock(tiny_plan)), run_dir)
    other = tiny_plan.with_overrides(seed=99)
    with pytest.raises(PlanError, match="different plan"):
        run_plan(other, make_provider(other, make_clock(other)), run_dir)


def test_cooldown_between_runs_only(tmp_path):
    plan = one_run_plan(repetitions=3, cycle={"warmup_s": 2.0, "app_settle_s": 1.0, "cooldown_s": 10.0})
    clock = make_clock(plan)
    run_plan(plan, make_provider(plan, clock), tmp_path / "run")
    # warmup + 3 x (settle + 2 read passes + 12 x 1 s session) + 2 cooldowns
    assert clock.now_ns() == 2_000_000_000 + 3 * (1_000_000_000 + 2_000 + 12_000_000_000) + 2 * 10_000_000_000


def test_sampling_writes_time_series(tmp_path):
    plan = one_run_plan(session={"sample_interval_s": 0.1})
    run_plan(plan, make_provider(plan, make_clock(plan)), tmp_path / "run")
    lines = (tmp_path / "run" / "samples" / "0000.csv").read_text().splitlines()
    # 12 s session sampled every 0.1 s, strictly inside the window
    assert lines[0] == "timestamp_ns,domain,counter_uj" and len(lines) == 1 + 119


def test_canonical_plan_on_synthetic_provider(tmp_path):
    plan = canonical_synthetic()
    result = run_plan(plan, make_provider(plan, make_clock(plan)), tmp_path / "run")
    recs = load_store(result.store_path)
    assert len(recs) == 900 and all(r.ok for r in recs)
    assert len({r.coords for r in recs}) == 900


def test_resolve_resume_rejects_garbage(tmp_path):
    with pytest.raises(Exception):
        resolve_resume(tmp_path / "x.txt")


@pytest.mark.slow
def test_canonical_cycle_in_real_time(tmp_path):
    plan = canonical_synthetic().with_overrides(**{"provider.clock": "real", "cycle.app_settle_s": 0.0})
    provider = SyntheticProvider(1.0, RealClock())
    rec = execute_cycle(PlannedRun("0001", RunCoordinates("Mu", "base", 5120, 0)), plan, provider, tmp_path)
    assert rec.energy.duration_s == pytest.approx(120, rel=0.02)
    assert rec.stats.saves_performed == 12
