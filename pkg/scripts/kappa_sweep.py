"""
Sensitivity of the estimator to the interaction strength.

Runs the experiment document once per (n, kappa) and prints the mean RQ and
CS at the final sample time next to lambda_2.

Usage: python3 scripts/kappa_sweep.py --config data/configs/two_communities.json --kappa 10 100 1000
"""

import argparse
import json
import os
import sys

# Add the project root to sys.path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.core.logs import configure_logging
from app.schemas.experiment import ExperimentConfig
from app.services.experiment import SWEEP_KAPPA_VALUES, run_sweep

parser = argparse.ArgumentParser(description='Estimator quality across n and kappa')
parser.add_argument('--config', type=str, required=True, help='Experiment JSON document')
parser.add_argument('--n', type=int, nargs='+', default=None, help='Walkers per group (default: the config n)')
parser.add_argument('--kappa', type=float, nargs='+', default=list(SWEEP_KAPPA_VALUES), help='Interaction strengths')
parser.add_argument('--jobs', type=int, default=None, help='Worker processes')
args = parser.parse_args()

configure_logging("WARNING")

try:
    with open(args.config, 'r', encoding='utf-8') as f:
        cfg = ExperimentConfig.model_validate(json.load(f))
except FileNotFoundError:
    print(f"Error: {args.config} not found.")
    sys.exit(2)

n_values = args.n or [cfg.n]
print(f"--- kappa sweep: runs={cfg.runs}, T={cfg.T} ---\n")
print(f"{'n':>5} | {'kappa':>10} | {'lambda2':>10} | {'RQ_mean(T)':>12} | {'CS_mean(T)':>12}")
print("-" * 62)
for series in run_sweep(cfg, n_values, args.kappa, args.jobs):
    point = series.metadata["sweep"]
    print(f"{point['n']:>5} | {point['kappa']:>10g} | {series.lambda2[-1]:>10.6f} | "
          f"{series.rq_mean[-1]:>12.6f} | {series.cs_mean[-1]:>12.6f}")
