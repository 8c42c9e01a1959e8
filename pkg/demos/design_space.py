"""How modeled time reacts to device size and cell latencies.

Run: python3 demos/design_space.py
"""
from pumsdtw.costmodel import TechParams, sensitivity_report, total_time
from pumsdtw.workloads import WorkloadSpec, evaluate

spec = WorkloadSpec(2048, 128, 2048)
tech = TechParams(5, 10, 50, 70)

print("columns    time (ms)  t(2C)/t(C)")
for start in (512, 32768):
    prev = None
    for cols in (start, 2 * start, 4 * start, 8 * start):
        t = total_time(evaluate(spec, cols).ledger, tech) / 1e6
        print(f"{cols:7d}  {t:11.3f}  {'' if prev is None else f'{t / prev:.3f}'}")
        prev = t
# the pipeline fill (query length - 1 per replica) stops halving once streams get short

print()
for line in sensitivity_report(evaluate(spec, 32768).ledger).lines():
    print(line)
