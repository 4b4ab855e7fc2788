"""Regenerate stats_oracle.json from scipy.stats (the reference implementation).

Run once by hand; the JSON is checked in and the tests never call this.
"""

import json
from pathlib import Path

import numpy as np
from scipy import stats

rng = np.random.default_rng(20240611)

FIXTURES = {
    "normal_shifted_30x30": (rng.normal(10.3, 0.6, 30), rng.normal(9.98, 0.8, 30)),
    "small_exact_5x6": (rng.normal(5.0, 1.0, 5), rng.normal(6.2, 1.0, 6)),
    "ties_12x12": (np.round(rng.normal(11.0, 0.5, 12), 1), np.round(rng.normal(11.3, 0.5, 12), 1)),
    "unequal_8x20": (rng.normal(0.86, 0.05, 8), rng.normal(0.92, 0.15, 20)),
    "skewed_15x9": (rng.lognormal(1.5, 0.7, 15), rng.lognormal(1.9, 0.4, 9)),
}


def main():
    out = {}
    for name, (a, b) in FIXTURES.items():
        a = [float(x) for x in a]
        b = [float(x) for x in b]
        w = stats.ttest_ind(a, b, equal_var=False)
        u = stats.mannwhitneyu(a, b, alternative="two-sided", method="auto")
        out[name] = {
            "a": a,
            "b": b,
            "welch_t": float(w.statistic),
            "welch_p": float(w.pvalue),
            "welch_df": float(w.df),
            "mwu_u": float(u.statistic),
            "mwu_p": float(u.pvalue),
        }
    path = Path(__file__).with_name("stats_oracle.json")
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
