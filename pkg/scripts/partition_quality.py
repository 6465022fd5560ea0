"""
Ratio-cut quality of the Fiedler sign partition on small random graphs.

Usage: python3 scripts/partition_quality.py --count 100 --seed 0
"""

import argparse
import os
import sys

import numpy as np

# Add the project root to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.services.partition import quality_sample, within_factor

parser = argparse.ArgumentParser(description='Fiedler sign partition vs exhaustive ratio cut')
parser.add_argument('--count', type=int, default=100, help='Number of random connected graphs')
parser.add_argument('--seed', type=int, default=0, help='Sample seed')
parser.add_argument('--max-nodes', type=int, default=8, help='Largest graph size')
parser.add_argument('--verbose', action='store_true', help='One line per graph')
args = parser.parse_args()

results = quality_sample(args.count, args.seed, args.max_nodes)
factors = np.array([r.factor for r in results])

print(f"--- Partition quality: {len(results)} graphs, N <= {args.max_nodes}, seed {args.seed} ---\n")
if args.verbose:
    print(f"{'#':>4} | {'N':>3} | {'|E|':>4} | {'RCut(sign)':>12} | {'RCut(opt)':>12} | {'factor':>8} | degenerate")
    print("-" * 72)
    for i, r in enumerate(results):
        print(f"{i:>4} | {r.nodes:>3} | {r.edges:>4} | {r.spectral_rcut:>12.6f} | {r.optimal_rcut:>12.6f} | "
              f"{r.factor:>8.4f} | {'yes' if r.degenerate else ''}")
    print()

print(f"{'factor bucket':<16} | graphs")
print("-" * 26)
bounds = [0.0, 1.0 + 1e-9, 1.25, 1.5, 2.0 + 1e-12, np.inf]
names = ['optimal', '(1, 1.25]', '(1.25, 1.5]', '(1.5, 2]', '> 2']
for name, lo, hi in zip(names, bounds[:-1], bounds[1:]):
    print(f"{name:<16} | {int(np.sum((factors > lo) & (factors <= hi)))}")
print()
print(f"mean factor      : {factors.mean():.4f}")
print(f"worst factor     : {factors.max():.4f}")
print(f"within factor 2  : {100 * within_factor(results):.1f}%")
