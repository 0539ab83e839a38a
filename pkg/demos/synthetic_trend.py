"""Pretrain with each objective, finetune a survival head, compare test metrics.

Takes a couple of minutes on one core. Pass a smaller cohort for a quick look:

    python demos/synthetic_trend.py 300
"""
import sys
import time

from tessl import ExperimentConfig, generate_synthetic, run_experiment

n = int(sys.argv[1]) if len(sys.argv) > 1 else 600
ds = generate_synthetic(n, 32, censor_rate=0.25, seed=0)
print(f"{len(ds)} subjects, {1 - ds.events.mean():.0%} censored")

print("mode    C-td    IBS     seconds")
for mode in ("none", "ssl", "essl", "tessl"):
    t = time.perf_counter()
    r = run_experiment(ExperimentConfig(mode=mode, n_subjects=n), ds)
    print(f"{mode:6s}  {r.c_td_mean:.4f}  {r.ibs_mean:.4f}  {time.perf_counter() - t:6.1f}")
