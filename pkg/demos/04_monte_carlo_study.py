"""Averaged sample paths on one fixed setting (desk-scale study 1).

Twenty independent paths of 4000 iterations, averaged curves for three
agents' first-period allocations and the four performance indexes.  Report
files land in demo_out/study1/.
"""

from netalloc import ExperimentConfig, experiment1

cfg = ExperimentConfig(paths=20, iterations=4000, master_seed=0, threads=2)
report = experiment1(cfg, out_dir="demo_out/study1")

mt = report.result.mean_trace
print("paths:", report.result.paths, " diverged:", len(report.result.diverged))
print("pool accepted after", report.pool_attempts, "attempt(s)")
print("\naveraged indexes (first -> last record):")
for name in ("dist", "obj", "consensus", "balance"):
    col = getattr(mt, name)
    print("  %-10s %9.4f -> %9.4f" % (name, col[0], col[-1]))

w = report.result.watched_mean
print("\naveraged first-period allocations of agents 0..2:")
print("  start: ", [round(float(v), 4) for v in w[0]])
print("  end:   ", [round(float(v), 4) for v in w[-1]])
print("  oracle:", [round(float(v), 4) for v in report.oracle.X_star[[0, 1, 2], 0]])
print("\nreport files: demo_out/study1/{config,instance,oracle,summary}.json,"
      " trace_mean.csv, agents_mean.csv")
