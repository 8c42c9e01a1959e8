"""Find the queries that do not occur in a reference, on the simulated crossbar.

Run: python3 demos/query_filtering.py
"""
import numpy as np

from pumsdtw.costmodel import TECH_PRESETS, energy_shares, total_energy, total_time
from pumsdtw.workloads import WorkloadSpec, generate
from pumsdtw.wavefront import run_batch

spec = WorkloadSpec(ref_size=512, query_size=24, num_queries=12)
ref, queries = generate(spec, "int16", "abs_diff", seed=4)

# plant three queries that are copies of reference windows
rng = np.random.default_rng(0)
for k in range(3):
    start = int(rng.integers(0, len(ref) - spec.query_size))
    queries[k] = type(ref)(ref.samples[start:start + spec.query_size], "int16")

run = run_batch(ref, queries, total_columns=2048, threshold=50)
print(f"plan: {run.plan.replication} replicas, {run.plan.batches} batch, {run.iterations} iterations")
for r in run.results:
    print(f"query {r.query:2d}  distance {r.distance:6d}  {'anomaly' if r.anomaly else 'match'}")

tech = TECH_PRESETS["baseline"]
rd, wr = energy_shares(run.ledger, tech)
print(f"time {total_time(run.ledger, tech) / 1e3:.1f} us, energy {total_energy(run.ledger, tech) / 1e6:.2f} uJ, "
      f"write share {wr:.2f}")
