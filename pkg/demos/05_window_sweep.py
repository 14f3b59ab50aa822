# ## Imports

from hijacklab.experiments import SWEEP_COLUMNS, window_sweep

# ## Overhead against exposure
#
# 10,000 data segments per window value. HMAC computations fall as 1/W while
# the worst-case number of forged payloads an application sees grows as
# W - 1.

rows = window_sweep([1, 10, 100, 1000], packets=10_000, inject_at=0, trials=1)

print(",".join(SWEEP_COLUMNS))
for r in rows:
    print(r.as_csv())

# ### Random injection points
#
# Average exposure over a few trials; slower because every trial replays the
# honest prefix.

rows = window_sweep([10, 100], packets=1_000, inject_at=None, trials=5, seed=1)
[(r.window, r.mean_exposure, r.max_exposure, r.detection_rate) for r in rows]
