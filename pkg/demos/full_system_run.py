"""Run the nonlinear radiative system on a 64x64 torus and print diagnostics along the way."""

from radflow import PhysicalParams
from radflow.harness import pj1_decay_error
from radflow.params import CouplingFunctions, Regime, RegimeLabel
from radflow.spectral_solver import SolverConfig, TorusGrid, diagnostics, random_state, simulate

p = PhysicalParams(eps=0.1, ell=0.3, ell_s=1.0)
grid = TorusGrid(2, 64)
traj = simulate(random_state(grid, seed=2, amplitude=0.02), SolverConfig(dt=0.01, t_end=2.0, record_every=25),
                p, CouplingFunctions.linear())
regime = RegimeLabel(Regime.NON_EQUILIBRIUM, kappa=2.0, m=1.0)
for s in traj.snapshots:
    d = diagnostics(s, p, regime)
    print(f"t={d['t']:5.2f} |b|={d['l2_b']:.3e} |u|={d['l2_u']:.3e} |j1|={d['l2_j1']:.3e} X={d['x_norm']:.3e}")
print("divergence-free flux decay error:", pj1_decay_error(traj, p))
print("predicted decay rate of P j1:", p.ell * p.em / p.eps)
