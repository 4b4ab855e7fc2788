"""From raw records to control deltas, pairwise tests and hourly estimates."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from . import stats
from .errors import AnalysisError, MappingError
from .store import StoredRecord


@dataclass(frozen=True, order=True)
class ScenarioKey:
    workload: str
    variant: str
    file_size_bytes: int

    @property
    def label(self) -> str:
        return f"{self.workload} {self.variant}"

    @classmethod
    def of(cls, record: StoredRecord) -> "ScenarioKey":
        c = record.coords
        return cls(c.workload, c.variant, c.file_size_bytes)


def scenario_samples(
    records: Iterable[StoredRecord],
    domain: str = "total",
    controls: bool | None = None,
) -> dict[ScenarioKey, list[float]]:
    """Energy per scenario from ok records; ``controls`` selects main/control/both."""
    out: dict[ScenarioKey, list[float]] = defaultdict(list)
    for rec in records:
        if not rec.ok:
            continue
        if controls is not None and rec.coords.is_control != controls:
            continue
        if domain not in rec.per_domain_j:
            raise AnalysisError(f"run {rec.run_id} has no {domain!r} energy")
        out[ScenarioKey.of(rec)].append(rec.per_domain_j[domain])
    return dict(out)


def default_control_mapping(records: Sequence[StoredRecord]) -> dict[ScenarioKey, ScenarioKey]:
    """Map each test scenario to its workload's control, same size when one exists."""
    controls: dict[str, list[ScenarioKey]] = defaultdict(list)
    tests: set[ScenarioKey] = set()
    for rec in records:
        key = ScenarioKey.of(rec)
        if rec.coords.is_control:
            if key not in controls[key.workload]:
                controls[key.workload].append(key)
        else:
            tests.add(key)
    mapping = {}
    for key in sorted(tests):
        candidates = controls.get(key.workload, [])
        same_size = [c for c in candidates if c.file_size_bytes == key.file_size_bytes]
        if same_size:
            mapping[key] = same_size[0]
        elif len(candidates) == 1:
            mapping[key] = candidates[0]
        elif candidates:
            mapping[key] = min(candidates, key=lambda c: abs(c.file_size_bytes - key.file_size_bytes))
    return mapping


@dataclass(frozen=True)
class DeltaResult:
    scenario: ScenarioKey
    mean_test_j: float
    mean_control_j: float
    delta_j: float
    n_test: int
    n_control: int
    control: ScenarioKey | None = None


def _mean(values: Sequence[float]) -> float:
    return float(sum(values)) / len(values)


def compute_deltas(
    records: Sequence[StoredRecord],
    control_mapping: Mapping[ScenarioKey, ScenarioKey] | None = None,
    domain: str = "total",
    iqr_filter: bool = False,
) -> list[DeltaResult]:
    tests = scenario_samples(records, domain, controls=False)
    controls = scenario_samples(records, domain, controls=True)
    if control_mapping is None:
        control_mapping = default_control_mapping(records)
    if iqr_filter:
        tests = {k: stats.iqr_filter(v) for k, v in tests.items()}
        controls = {k: stats.iqr_filter(v) for k, v in controls.items()}
    out = []
    for key in sorted(tests):
        ctrl = control_mapping.get(key)
        if ctrl is None or not controls.get(ctrl):
            raise MappingError(f"no control records for scenario {key.label} @ {key.file_size_bytes} B")
        mt = _mean(tests[key])
        mc = _mean(controls[ctrl])
        out.append(DeltaResult(key, mt, mc, mt - mc, len(tests[key]), len(controls[ctrl]), ctrl))
    return out


def delta_samples(
    records: Sequence[StoredRecord],
    deltas: Sequence[DeltaResult],
    domain: str = "total",
    iqr_filter: bool = False,
) -> dict[ScenarioKey, list[float]]:
    """Per-record energy minus the mean of the scenario's control."""
    tests = scenario_samples(records, domain, controls=False)
    if iqr_filter:
        tests = {k: stats.iqr_filter(v) for k, v in tests.items()}
    control_mean = {d.scenario: d.mean_control_j for d in deltas}
    return {k: [v - control_mean[k] for v in vals] for k, vals in tests.items() if k in control_mean}


def descriptive_stats(values: Sequence[float]) -> stats.Descriptive:
    return stats.descriptive(values)


@dataclass(frozen=True)
class PairwiseComparison:
    scenario_a: ScenarioKey
    scenario_b: ScenarioKey
    file_size_bytes: int
    p_value: float
    test_name: str
    higher_energy_user: str
    delta_j: float
    significant: bool
    mean_a: float | None = None
    mean_b: float | None = None
    raw_p_value: float | None = None
    label: str | None = None

    @property
    def comparison(self) -> str:
        return self.label or f"{self.scenario_a.label} vs {self.scenario_b.label}"


def pairwise_test(
    a: Sequence[float],
    b: Sequence[float],
    scenario_a: ScenarioKey,
    scenario_b: ScenarioKey,
    alpha: float = 0.05,
) -> PairwiseComparison:
    """Normality screen, then Welch or Mann-Whitney; two-sided."""
    if len(a) < 2 or len(b) < 2:
        raise AnalysisError(
            f"{scenario_a.label} / {scenario_b.label}: need at least two samples per group"
        )
    result = stats.compare_groups(a, b)
    mean_a, mean_b = _mean(a), _mean(b)
    higher = scenario_a if mean_a > mean_b else scenario_b
    return PairwiseComparison(
        scenario_a=scenario_a,
        scenario_b=scenario_b,
        file_size_bytes=scenario_a.file_size_bytes,
        p_value=result.p_value,
        test_name=result.method,
        higher_energy_user=higher.label,
        delta_j=abs(mean_a - mean_b),
        significant=result.p_value < alpha,
        mean_a=mean_a,
        mean_b=mean_b,
        raw_p_value=result.p_value,
    )


def all_pairwise(
    samples: Mapping[ScenarioKey, Sequence[float]],
    alpha: float = 0.05,
    holm: bool = False,
) -> list[PairwiseComparison]:
    """Every pair of scenarios sharing a file size."""
    by_size: dict[int, list[ScenarioKey]] = defaultdict(list)
    for key in sorted(samples):
        by_size[key.file_size_bytes].append(key)
    out = []
    for size in sorted(by_size):
        for ka, kb in itertools.combinations(by_size[size], 2):
            out.append(pairwise_test(samples[ka], samples[kb], ka, kb, alpha))
    if holm and out:
        adjusted = stats.holm_adjust([c.p_value for c in out])
        out = [replace(c, p_value=p, significant=p < alpha) for c, p in zip(out, adjusted)]
    return out


# ------------------------------------------------------------------ hourly


@dataclass(frozen=True)
class HourlyEstimate:
    scenario: str
    avg_j_total: float
    saves: int
    avg_j_per_save: float
    interval_s: float
    calls_per_hr: float
    joules_per_hr: float
    avg_j_per_save_unrounded: float
    joules_per_hr_unrounded: float
    clamped: bool = False


def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


def hourly_estimate(
    avg_j_total: float, saves: int, interval_s: float, scenario: str = "", rounding: bool = True
) -> HourlyEstimate:
    """Per-save energy times calls per hour.

    Per-save energy is rounded half-up to two decimals before multiplying,
    which is how the published hourly table was produced; the unrounded
    product is kept alongside.
    """
    if saves < 1:
        raise AnalysisError("saves must be >= 1")
    if not interval_s > 0:
        raise AnalysisError("interval_s must be positive")
    clamped = avg_j_total < 0
    avg = max(0.0, float(avg_j_total))
    calls = _dec(3600) / _dec(interval_s)
    per_save_exact = _dec(avg) / saves
    per_save = per_save_exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP) if rounding else per_save_exact
    unrounded_jph = avg * (3600 / (saves * interval_s))
    return HourlyEstimate(
        scenario=scenario,
        avg_j_total=avg,
        saves=saves,
        avg_j_per_save=float(per_save),
        interval_s=float(interval_s),
        calls_per_hr=float(calls),
        joules_per_hr=float(per_save * calls) if rounding else unrounded_jph,
        avg_j_per_save_unrounded=avg / saves,
        joules_per_hr_unrounded=unrounded_jph,
        clamped=clamped,
    )


def estimate_hourly(
    deltas: Sequence[DeltaResult],
    workload: str,
    variant: str,
    saves: int,
    interval_s: float,
    file_size_bytes: int | None = None,
) -> HourlyEstimate:
    """Hourly estimate from the mean delta of a workload variant (all sizes by default)."""
    matches = [
        d.delta_j
        for d in deltas
        if d.scenario.workload == workload
        and d.scenario.variant == variant
        and (file_size_bytes is None or d.scenario.file_size_bytes == file_size_bytes)
    ]
    if not matches:
        raise AnalysisError(f"no delta results for {workload} {variant}")
    return hourly_estimate(_mean(matches), saves, interval_s, scenario=workload)


@dataclass(frozen=True)
class WhatIf:
    scenario: str
    old_interval_s: float
    new_interval_s: float
    old_joules_per_hr: float
    new_joules_per_hr: float
    reduction_fraction: float


def frequency_whatif(estimate: HourlyEstimate, new_interval_s: float) -> WhatIf:
    """Re-price an estimate at another save interval, per-save cost held fixed."""
    if not new_interval_s > 0:
        raise AnalysisError("new_interval_s must be positive")
    new_jph = float(_dec(estimate.avg_j_per_save) * (_dec(3600) / _dec(new_interval_s)))
    old_jph = estimate.joules_per_hr
    reduction = 1.0 - new_jph / old_jph if old_jph > 0 else 0.0
    return WhatIf(
        scenario=estimate.scenario,
        old_interval_s=estimate.interval_s,
        new_interval_s=float(new_interval_s),
        old_joules_per_hr=old_jph,
        new_joules_per_hr=new_jph,
        reduction_fraction=reduction,
    )
