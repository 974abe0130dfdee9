"""Writes tests/fixtures/adf_reference.json: seeded series with the ADF
statistic and p-value reported by statsmodels (constant + trend, fixed lag)."""
import json
import math
import pathlib

import numpy as np
from statsmodels.tsa.stattools import adfuller


def schwert(n):
    return max(0, min(int(math.floor(12.0 * (n / 100.0) ** 0.25)), n // 2 - 3))


def series():
    rng = np.random.default_rng(20240611)
    out = []
    e = rng.standard_normal(200)
    x = np.zeros(200)
    for t in range(1, 200):
        x[t] = -0.9 * x[t - 1] + e[t]
    out.append(("mean_reverting", x))
    out.append(("random_walk", np.cumsum(rng.standard_normal(200))))
    e = rng.standard_normal(120)
    x = np.zeros(120)
    for t in range(1, 120):
        x[t] = 0.5 * x[t - 1] + e[t]
    out.append(("ar1_half", x))
    t = np.arange(300)
    out.append(("trend_noise", 0.05 * t + rng.standard_normal(300)))
    t = np.arange(150)
    out.append(("seasonal_noise", np.sin(2 * np.pi * t / 12) + 0.3 * rng.standard_normal(150)))
    return out


def main():
    fixtures = []
    for name, x in series():
        lag = schwert(len(x))
        stat, pvalue, usedlag, nobs = adfuller(x, maxlag=lag, autolag=None, regression="ct")[:4]
        fixtures.append({"name": name, "lag_order": lag, "stat": float(stat), "pvalue": float(pvalue),
                         "nobs": int(nobs), "series": [float(v) for v in x]})
    path = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "adf_reference.json"
    path.write_text(json.dumps(fixtures, indent=1) + "\n")
    for f in fixtures:
        print(f["name"], f["lag_order"], f["stat"], f["pvalue"], f["nobs"])


if __name__ == "__main__":
    main()
