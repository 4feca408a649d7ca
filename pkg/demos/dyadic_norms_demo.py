"""Littlewood-Paley blocks and band-restricted norms of a few test fields."""

import numpy as np

from radflow.dyadic_norms import FieldSpectrum, besov_norm, full, high, low, lp_block_norms

shape = (64, 64)
two_modes = FieldSpectrum.from_modes(shape, {(1, 0): 0.5, (0, 4): 1.0})
print("blocks of a two-mode field:", {j: round(v, 6) for j, v in lp_block_norms(two_modes).items() if v})
print("full s=1:", besov_norm(two_modes, full(1.0)))
print("low band eta=1:", besov_norm(two_modes, low(1.0, 1.0)), "high band eta=1:", besov_norm(two_modes, high(1.0, 1.0)))
noise = FieldSpectrum.from_field(np.random.default_rng(0).standard_normal(shape))
print("random field blocks:", {j: f"{v:.3f}" for j, v in lp_block_norms(noise).items()})
