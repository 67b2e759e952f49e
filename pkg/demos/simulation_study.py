"""Reduced-size run of the four simulation experiments.

Usage: python demos/simulation_study.py [replicates]
"""
import sys

import pandas as pd

from bayesport.market_sim import run_experiment1, run_experiment2, run_experiment3, run_experiment4

pd.set_option("display.width", 140)
reps = int(sys.argv[1]) if len(sys.argv) > 1 else 50
grid = (0.01, 0.06, 0.11, 0.31, 0.51, 0.86)

e1 = run_experiment1(p_grid=grid, n_values=(20, 50), P_values=(100,), sigma_values=(0.1,), replicates=reps)
print("Experiment 1: error rates of S and S_tilde by sparsity")
print(e1.pivot_table(index=["n", "p"], columns=["statistic", "metric"], values="value").round(3), "\n")

e2 = run_experiment2(p_grid=grid, replicates=reps)
print("Experiment 2: oracle test against the F test (P=500, n=20)")
print(e2.pivot_table(index="p", columns=["method", "metric"], values="value").round(3), "\n")

e3 = run_experiment3(replicates=reps)
print("Experiment 3: median out-of-sample return")
print(e3.round(4).to_string(index=False), "\n")

e4 = run_experiment4(configs=((100, 20, 25),), replicates=reps)
print("Experiment 4: probability that the selection contains every mispriced asset")
print(e4.pivot_table(index="sigma", columns="model", values="inclusion").round(3))
