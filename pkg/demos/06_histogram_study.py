"""Fresh setting every round, final-index histograms (desk-scale study 2).

Each round draws a new instance and a new graph pool, runs a single path
from a random initial state, and records the final performance indexes.
Histograms land in demo_out/study2/hist_<index>.csv.
"""

from netalloc import ExperimentConfig, experiment2

cfg = ExperimentConfig(rounds=8, iterations=4000, master_seed=2)
report = experiment2(cfg, out_dir="demo_out/study2")

print("rounds:", len(report.rounds), " pools resampled:", report.resampled_pools)
print("\nround   balance ratio   consensus ratio   final dist")
for rec in report.rounds:
    print("%5d   %13.4f   %15.4f   %10.4f" % (
        rec["round"],
        rec["final"]["balance"] / rec["initial"]["balance"],
        rec["final"]["consensus"] / rec["initial"]["consensus"],
        rec["final"]["dist"],
    ))

edges, counts = report.histogram("balance")
print("\nfinal balance-residual histogram (log-spaced bins):")
for b in range(counts.size):
    if counts[b]:
        print("  [%.3e, %.3e): %s" % (edges[b], edges[b + 1], "#" * counts[b]))
print("\nCSV reports in demo_out/study2/")
