"""Check the commutator elimination and the 2x2 Lyapunov decay on a few random draws."""

import numpy as np

from radflow.linear_modes import Approach
from radflow.toy_ode import (Toy2x2, ToyCoefficients, build_class_E, det_I_plus_rhoP, tilde_nu,
                             transformed_system, max_decay_ratio_2x2)

rng = np.random.default_rng(1)
for i in range(5):
    c = ToyCoefficients.random(rng)
    first = build_class_E(c, Approach.FIRST)
    rho = 0.2
    dense = np.linalg.det(np.eye(4) + rho * first.P)
    sim = transformed_system(rho, first).similarity_error
    print(f"draw {i}: tilde_nu={tilde_nu(c):+.3f} commutator={first.commutator_residual():.1e} "
          f"det gap={abs(det_I_plus_rhoP(rho, c) - dense):.1e} similarity={sim:.1e}")

toy = Toy2x2(a=1.0, b=0.0, c=1.0, d=1.0)
print("2x2 decay ratio (<= 1 expected):", max_decay_ratio_2x2(toy, 0.5, 50.0, 2000, 1.0, 0.5))
