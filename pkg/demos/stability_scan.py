"""Scan the per-frequency spectrum of the linearized system for a stable and an unstable parameter set."""

import numpy as np

from radflow import PhysicalParams
from radflow.linear_modes import assemble_mode_matrix, band_of, decay_envelope, eigen_spectrum
from radflow.params import stability_margin


def scan(p: PhysicalParams, rhos):
    print(f"eps={p.eps} ell={p.ell} ell_s={p.ell_s}: margin {stability_margin(p):+.4f}")
    for rho in rhos:
        spec = eigen_spectrum(assemble_mode_matrix(rho, p))
        env = decay_envelope(p, rho)
        print(f"  rho={rho:9.4f} band={band_of(rho, p).band.value:4s} min Re={spec.min_real:+.3e} "
              f"fluid rate measured/predicted={env.measured_fluid_rate:.3e}/{env.predicted_fluid_rate:.3e}")


if __name__ == "__main__":
    rhos = np.geomspace(1e-3, 1e2, 8)
    scan(PhysicalParams(eps=0.1, ell=0.3, ell_s=1.0), rhos)
    scan(PhysicalParams(eps=1.0, ell=0.5, ell_s=0.0, dim=3), rhos)
