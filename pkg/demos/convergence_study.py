"""Nonequilibrium and Poisson eps-ladders against their limit systems; writes CSV/JSON reports."""

import sys
from pathlib import Path

from radflow.harness import ExperimentPlan, InitialData, run_experiment
from radflow.params import EpsilonFamily
from radflow.spectral_solver import SolverConfig, TorusGrid

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
ladder = (0.1, 0.05, 0.025, 0.0125)
cfg = SolverConfig(dt=0.01, t_end=5.0, nonlinear_on=False)
for name, fam in [("noneq", EpsilonFamily.nonequilibrium(ladder, 2.0, 1.0)),
                  ("poisson", EpsilonFamily.poisson(ladder, 1.0))]:
    plan = ExperimentPlan(fam, data=InitialData(seed=7), grid=TorusGrid(2, 32), cfg=cfg)
    _, report = run_experiment(plan, out / name)
    print(name, plan.regime.kind.value)
    print(report.to_csv().replace("\r\n", "\n"), end="")
    for key, fit in report.slopes.items():
        print(f"  slope {key}: {fit['slope']}")
