"""Demo: the evaluation statistics on synthetic prediction series.

Matthews correlation coefficient and its daily grouping, the
stationarity analysis (OLS slope of daily MCC with a two-sided
t-based p-value), the paired t-test between two models, the
cross-pair universality drop, and daily market aggregates.
"""

import numpy as np

from lobflow import feed, oracle, stats

DAY_MS = 86_400_000
T0 = 1_510_000_000_000  # 2017-11-06 UTC
rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# MCC and daily grouping
# ---------------------------------------------------------------------------

n = 4000
y = rng.integers(0, 2, n)
yhat = np.where(rng.random(n) < 0.75, y, 1 - y)     # 75%-accurate predictor
ts = T0 + np.sort(rng.integers(0, 20 * DAY_MS, n))
cm = stats.confusion(y, yhat)
print(f"confusion tp={cm.tp} tn={cm.tn} fp={cm.fp} fn={cm.fn}")
print(f"overall MCC: {stats.mcc(cm):.4f} "
      f"(direct formula: {oracle.mcc_direct(cm.tp, cm.tn, cm.fp, cm.fn):.4f})")

daily = stats.daily_mcc(zip(ts.tolist(), y.tolist(), yhat.tolist()))
print(f"daily MCC over {len(daily)} days, "
      f"mean {np.mean(daily.values):.3f}, flags {daily.flags}")

# ---------------------------------------------------------------------------
# stationarity: slope of daily MCC over time
# ---------------------------------------------------------------------------

dates = [stats.utc_date(T0 + i * DAY_MS) for i in range(70)]
decaying = 0.5 - 2e-3 * np.arange(70) + rng.normal(0, 0.01, 70)
r = stats.slope_regression(stats.DailySeries(dates, list(decaying)))
print(f"\nfitted slope {r.slope:.2e} (SE {r.slope_se:.2e}), "
      f"t={r.t_stat:.2f}, p={r.p_value:.3g}  [true slope -2e-03]")

flat = stats.slope_regression(stats.DailySeries(dates[:10], [0.4] * 10))
print(f"constant series: slope {flat.slope}, p {flat.p_value}")

# ---------------------------------------------------------------------------
# paired comparison and universality drop
# ---------------------------------------------------------------------------

model_a = list(np.clip(decaying + 0.05 + rng.normal(0, 0.005, 70), 0, 1))
pt = stats.paired_t_test(stats.DailySeries(dates, model_a),
                         stats.DailySeries(dates, list(decaying)))
print(f"\npaired t-test (model A vs B): mean diff {pt.mean_diff:.4f}, "
      f"t={pt.t_stat:.2f}, p={pt.p_value:.3g}")

print("universality drop for same-pair MCC 0.33, cross-pair 0.30:",
      f"{stats.universality_drop(0.33, 0.30):.2f}%")

# ---------------------------------------------------------------------------
# daily market aggregates from a raw stream
# ---------------------------------------------------------------------------

cfg = feed.GeneratorConfig(n_events=20_000, mean_gap_ms=20_000)  # ~4.6 days
events = feed.iter_events(feed.generate_synthetic(cfg, seed=2))
volume, mid_change = stats.daily_market_aggregates(events)
print("\ndaily traded volume:", [round(v, 2) for v in volume.values])
print("1-day lagged mid change (ticks):", [round(v, 2) for v in mid_change.values])
