"""Report bundle: delta, pairwise and hourly tables plus box-plot data."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import stats
from .analysis import (
    DeltaResult,
    HourlyEstimate,
    PairwiseComparison,
    ScenarioKey,
    WhatIf,
    all_pairwise,
    compute_deltas,
    delta_samples,
    estimate_hourly,
    frequency_whatif,
    scenario_samples,
)
from .errors import AnalysisError
from .plan import Plan
from .store import StoredRecord

PAIRWISE_HEADERS = ["Pairwise Comparison", "File Size", "p-value", "Higher Energy User", "Δ Energy (J)"]
HOURLY_HEADERS = ["Scenario", "Avg J ({saves} saves)", "Avg J per save", "Frequency", "Calls/hr", "Joules/hr"]
DELTA_HEADERS = ["Scenario", "File Size", "Mean test (J)", "Mean control (J)", "Δ (J)", "n test", "n control"]


def fmt_size(size_bytes: int) -> str:
    if size_bytes % 1024 == 0:
        return f"{size_bytes // 1024} KB"
    return f"{size_bytes} B"


def fmt_p(p: float) -> str:
    """Three significant digits, positional, trailing zeros dropped."""
    if p == 0:
        return "0"
    return np.format_float_positional(p, precision=3, fractional=False, trim="-")


def fmt_num(x: float, places: int = 2) -> str:
    return np.format_float_positional(round(float(x), places), precision=places, trim="-")


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Left-aligned columns separated by two spaces, dashed rule under the header."""
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]

    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    out = [line(headers), "  ".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def pairwise_rows(comparisons: Sequence[PairwiseComparison]) -> list[list[str]]:
    return [
        [c.comparison, fmt_size(c.file_size_bytes), fmt_p(c.p_value), c.higher_energy_user, fmt_num(c.delta_j)]
        for c in comparisons
    ]


def render_pairwise(comparisons: Sequence[PairwiseComparison], significant_only: bool = True) -> str:
    chosen = [c for c in comparisons if c.significant] if significant_only else list(comparisons)
    return render_table(PAIRWISE_HEADERS, pairwise_rows(chosen))


def hourly_rows(estimates: Sequence[HourlyEstimate]) -> list[list[str]]:
    return [
        [
            e.scenario,
            fmt_num(e.avg_j_total),
            f"{e.avg_j_per_save:.2f}",
            f"{fmt_num(e.interval_s)} s",
            fmt_num(e.calls_per_hr),
            fmt_num(e.joules_per_hr),
        ]
        for e in estimates
    ]


def render_hourly(estimates: Sequence[HourlyEstimate]) -> str:
    saves = estimates[0].saves if estimates else 0
    headers = [h.format(saves=saves) for h in HOURLY_HEADERS]
    return render_table(headers, hourly_rows(estimates))


def render_deltas(deltas: Sequence[DeltaResult]) -> str:
    rows = [
        [
            d.scenario.label,
            fmt_size(d.scenario.file_size_bytes),
            fmt_num(d.mean_test_j, 4),
            fmt_num(d.mean_control_j, 4),
            fmt_num(d.delta_j, 4),
            str(d.n_test),
            str(d.n_control),
        ]
        for d in deltas
    ]
    return render_table(DELTA_HEADERS, rows)


# -------------------------------------------------------------- CSV writing


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def write_pairwise_csv(path: Path, comparisons: Sequence[PairwiseComparison]) -> None:
    _write_csv(
        path,
        ["comparison", "file_size_bytes", "p_value", "higher_energy_user", "delta_j",
         "test", "significant", "raw_p_value", "mean_a_j", "mean_b_j"],
        [
            [c.comparison, c.file_size_bytes, repr(c.p_value), c.higher_energy_user, repr(c.delta_j),
             c.test_name, int(c.significant),
             "" if c.raw_p_value is None else repr(c.raw_p_value),
             "" if c.mean_a is None else repr(c.mean_a),
             "" if c.mean_b is None else repr(c.mean_b)]
            for c in comparisons
        ],
    )


def read_pairwise_csv(path: Path, alpha: float = 0.05) -> list[PairwiseComparison]:
    """Load precomputed comparisons (at least the five table columns)."""
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for i, row in enumerate(csv.DictReader(f), start=2):
            try:
                size = int(row["file_size_bytes"])
                p = float(row["p_value"])
                delta = float(row["delta_j"])
                comparison = row["comparison"]
                higher = row["higher_energy_user"]
            except (KeyError, ValueError) as exc:
                raise AnalysisError(f"{path}:{i}: bad pairwise row ({exc})") from exc
            a_label, _, b_label = comparison.partition(" vs ")
            a = ScenarioKey(*_split_label(a_label), size)
            b = ScenarioKey(*_split_label(b_label), size)
            sig = row.get("significant")
            out.append(
                PairwiseComparison(
                    scenario_a=a, scenario_b=b, file_size_bytes=size, p_value=p,
                    test_name=row.get("test") or "precomputed", higher_energy_user=higher,
                    delta_j=delta, significant=(p < alpha) if not sig else sig == "1",
                    label=comparison,
                )
            )
    return out


def _split_label(label: str) -> tuple[str, str]:
    workload, _, variant = label.rpartition(" ")
    return (workload, variant) if workload else (label, "")


def write_hourly_csv(path: Path, estimates: Sequence[HourlyEstimate]) -> None:
    _write_csv(
        path,
        ["scenario", "avg_j_total", "saves", "avg_j_per_save", "interval_s", "calls_per_hr",
         "joules_per_hr", "avg_j_per_save_unrounded", "joules_per_hr_unrounded", "clamped"],
        [
            [e.scenario, repr(e.avg_j_total), e.saves, repr(e.avg_j_per_save), repr(e.interval_s),
             repr(e.calls_per_hr), repr(e.joules_per_hr), repr(e.avg_j_per_save_unrounded),
             repr(e.joules_per_hr_unrounded), int(e.clamped)]
            for e in estimates
        ],
    )


def write_deltas_csv(path: Path, deltas: Sequence[DeltaResult]) -> None:
    _write_csv(
        path,
        ["workload", "variant", "file_size_bytes", "mean_test_j", "mean_control_j", "delta_j",
         "n_test", "n_control", "control_workload", "control_file_size_bytes"],
        [
            [d.scenario.workload, d.scenario.variant, d.scenario.file_size_bytes, repr(d.mean_test_j),
             repr(d.mean_control_j), repr(d.delta_j), d.n_test, d.n_control,
             d.control.workload if d.control else "", d.control.file_size_bytes if d.control else ""]
            for d in deltas
        ],
    )


def write_boxplot_csv(path: Path, samples: dict[ScenarioKey, list[float]], kind: dict[ScenarioKey, str]) -> None:
    rows = []
    for key in sorted(samples):
        b = stats.box_summary(samples[key])
        rows.append(
            [key.workload, key.variant, key.file_size_bytes, kind[key], len(samples[key]),
             repr(b.q1), repr(b.median), repr(b.q3), repr(b.lo_whisker), repr(b.hi_whisker),
             ";".join(repr(o) for o in b.outliers)]
        )
    _write_csv(
        path,
        ["workload", "variant", "file_size_bytes", "values", "n", "q1", "median", "q3",
         "lo_whisker", "hi_whisker", "outliers"],
        rows,
    )


def write_whatif_csv(path: Path, whatifs: Sequence[WhatIf]) -> None:
    _write_csv(
        path,
        ["scenario", "old_interval_s", "new_interval_s", "old_joules_per_hr", "new_joules_per_hr",
         "reduction_fraction"],
        [[w.scenario, repr(w.old_interval_s), repr(w.new_interval_s), repr(w.old_joules_per_hr),
          repr(w.new_joules_per_hr), repr(w.reduction_fraction)] for w in whatifs],
    )


# ------------------------------------------------------------------ bundle


@dataclass
class AnalysisSettings:
    alpha: float = 0.05
    domain: str = "total"
    holm: bool = False
    iqr_filter: bool = False
    use_deltas: bool = True
    save_budget: int = 12
    # workload -> interval used for the hourly table
    hourly_intervals: dict[str, float] = field(default_factory=dict)
    # workload -> variant whose deltas feed the hourly table (default: last variant seen)
    hourly_variant: str | None = None
    whatifs: list[tuple[str, float]] = field(default_factory=list)

    @classmethod
    def from_plan(cls, plan: Plan, **overrides) -> "AnalysisSettings":
        a = plan.analysis
        settings = cls(
            alpha=a.alpha,
            domain=a.domain,
            holm=a.holm,
            iqr_filter=a.iqr_filter,
            use_deltas=a.use_deltas,
            save_budget=plan.session.save_budget,
            hourly_intervals={w.name: w.hourly_interval_s for w in plan.workloads},
            hourly_variant=plan.variant_chain.names[-1],
            whatifs=[(w.workload, w.new_interval_s) for w in a.whatif],
        )
        for k, v in overrides.items():
            if v is not None:
                setattr(settings, k, v)
        return settings


@dataclass
class Analyses:
    deltas: list[DeltaResult]
    pairwise: list[PairwiseComparison]
    hourly: list[HourlyEstimate]
    whatifs: list[WhatIf]
    box_samples: dict[ScenarioKey, list[float]]
    box_kind: dict[ScenarioKey, str]
    settings: AnalysisSettings


def analyze(records: Sequence[StoredRecord], settings: AnalysisSettings | None = None) -> Analyses:
    settings = settings or AnalysisSettings()
    ok = [r for r in records if r.ok]
    if not ok:
        raise AnalysisError("run store has no successful records")
    deltas = compute_deltas(ok, domain=settings.domain, iqr_filter=settings.iqr_filter)
    if settings.use_deltas:
        samples = delta_samples(ok, deltas, settings.domain, settings.iqr_filter)
    else:
        samples = scenario_samples(ok, settings.domain, controls=False)
    pairwise = all_pairwise(samples, settings.alpha, settings.holm)

    hourly = []
    variant = settings.hourly_variant or (deltas[-1].scenario.variant if deltas else None)
    workloads = sorted({d.scenario.workload for d in deltas}, key=[d.scenario.workload for d in deltas].index)
    for w in workloads:
        if not any(d.scenario.workload == w and d.scenario.variant == variant for d in deltas):
            continue
        interval = settings.hourly_intervals.get(w)
        if interval is None:
            continue
        hourly.append(estimate_hourly(deltas, w, variant, settings.save_budget, interval))
    by_name = {h.scenario: h for h in hourly}
    whatifs = [frequency_whatif(by_name[w], new) for w, new in settings.whatifs if w in by_name]

    box_samples = dict(samples)
    kind = {k: ("delta" if settings.use_deltas else "raw") for k in samples}
    for k, v in scenario_samples(ok, settings.domain, controls=True).items():
        box_samples[k] = v
        kind[k] = "raw"
    return Analyses(deltas, pairwise, hourly, whatifs, box_samples, kind, settings)


@dataclass
class ReportBundle:
    directory: Path
    files: dict[str, Path]


def export_report(records: Sequence[StoredRecord], out_dir: str | Path, analyses: Analyses | None = None) -> ReportBundle:
    """Write the bundle. With ``analyses`` given, ``records`` may be empty
    (precomputed comparisons and estimates are rendered as they are)."""
    if not records and analyses is None:
        raise AnalysisError("run store is empty")
    analyses = analyses or analyze(records)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise AnalysisError(f"cannot create report directory {out}: {exc}") from exc
    files = {
        "deltas": out / "deltas.csv",
        "pairwise": out / "pairwise.csv",
        "hourly": out / "hourly.csv",
        "boxplot": out / "boxplot.csv",
    }
    try:
        write_deltas_csv(files["deltas"], analyses.deltas)
        write_pairwise_csv(files["pairwise"], analyses.pairwise)
        write_hourly_csv(files["hourly"], analyses.hourly)
        write_boxplot_csv(files["boxplot"], analyses.box_samples, analyses.box_kind)
        texts = {
            "deltas_txt": ("deltas.txt", render_deltas(analyses.deltas)),
            "pairwise_txt": ("pairwise.txt", render_pairwise(analyses.pairwise)),
            "hourly_txt": ("hourly.txt", render_hourly(analyses.hourly)),
        }
        for key, (name, text) in texts.items():
            (out / name).write_text(text, encoding="utf-8")
            files[key] = out / name
        if analyses.whatifs:
            files["whatif"] = out / "whatif.csv"
            write_whatif_csv(files["whatif"], analyses.whatifs)
        s = analyses.settings
        meta = {
            "alpha": s.alpha,
            "domain": s.domain,
            "holm": s.holm,
            "iqr_filter": s.iqr_filter,
            "values": "delta" if s.use_deltas else "raw",
            "records": len(records),
            "failed_records_excluded": sum(1 for r in records if not r.ok),
            "pairwise_tests": "shapiro-wilk screen (alpha 0.05) -> welch t / mann-whitney u, two-sided",
        }
        files["metadata"] = out / "metadata.json"
        files["metadata"].write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise AnalysisError(f"cannot write report to {out}: {exc}") from exc
    return ReportBundle(out, files)
