"""Evolve the same initial data under each limit system and compare the energy of b."""

from radflow import PhysicalParams
from radflow.limit_systems import LimitKind, constraint_residual, simulate_limit
from radflow.params import CouplingFunctions
from radflow.spectral_solver import SolverConfig, TorusGrid, random_state

p = PhysicalParams(eps=0.05, ell=0.1, ell_s=100.0)
grid = TorusGrid(2, 32)
start = random_state(grid, seed=3, amplitude=0.02)
cfg = SolverConfig(dt=0.02, t_end=2.0, record_every=25)
kinds = [LimitKind.noneq(2.0, 1.0), LimitKind.degenerate(2.0), LimitKind.poisson(1.0),
         LimitKind.modified_pressure(), LimitKind.barotropic()]
for kind in kinds:
    tr = simulate_limit(start, kind, cfg, p, CouplingFunctions.linear())
    energies = " ".join(f"{grid.l2(s.b_hat):.3e}" for s in tr.snapshots)
    extra = f" constraint residual {constraint_residual(tr.snapshots[-1], p, kind):.1e}" if kind.m and not kind.evolves_j0 else ""
    print(f"{kind.label:12s} |b|(t): {energies}{extra}")
