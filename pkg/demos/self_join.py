"""Matrix-profile style discord search with the host entry point.

Run: python3 demos/self_join.py
"""
import numpy as np

from pumsdtw.workloads import pum_sdtw

rng = np.random.default_rng(7)
t = np.arange(160)
series = np.round(40 * np.sin(t / 6) + rng.normal(0, 2, t.size)).astype(np.int16)
series[100:108] += 35  # an injected glitch

anomalies, distances = pum_sdtw(series, None, len(series), 12, 1, "self_join", "abs_diff", anomaly_thres=70,
                                columns=1024)
top = np.argsort(np.nan_to_num(distances, nan=-1))[::-1][:5]
print(f"median distance {np.nanmedian(distances):.0f}")
print("window  nearest-neighbour distance")
for w in top:
    print(f"{w:6d}  {distances[w]:.0f}{'  <- anomaly' if anomalies[w] else ''}")
