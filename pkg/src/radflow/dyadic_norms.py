"""Littlewood-Paley blocks and band-restricted Besov norms on the periodic torus.

Spectra use the amplitude convention ``u_hat = fftn(u) / N**n`` so that a single
complex exponential ``A exp(i xi.x)`` has amplitude ``A`` and block norm ``A``.
All L2 norms are averages over the torus (Parseval in that normalization).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownRegime
from .params import PhysicalParams, Regime, RegimeLabel


def smoothstep5(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


@dataclass(frozen=True)
class DyadicProfile:
    """Radial bump ``chi`` (1 below 1/2, 0 above 1, C2 quintic in between)."""

    inner: float = 0.5
    outer: float = 1.0

    def chi(self, r):
        r = np.asarray(r, dtype=float)
        return smoothstep5((self.outer - r) / (self.outer - self.inner))

    def phi(self, r):
        return self.chi(np.asarray(r) / 2) - self.chi(r)


DEFAULT_PROFILE = DyadicProfile()


@dataclass
class FieldSpectrum:
    """Complex amplitudes on an integer frequency lattice (fft ordering)."""

    amplitudes: np.ndarray
    _radius: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.amplitudes.shape

    @property
    def radius(self) -> np.ndarray:
        if self._radius is None:
            self._radius = lattice_radius(self.amplitudes.shape)
        return self._radius

    @classmethod
    def from_field(cls, u: np.ndarray) -> "FieldSpectrum":
        return cls(np.fft.fftn(u) / u.size)

    @classmethod
    def from_modes(cls, shape, modes: dict) -> "FieldSpectrum":
        a = np.zeros(shape, dtype=complex)
        for xi, amp in modes.items():
            a[tuple(int(k) % s for k, s in zip(xi, shape))] += amp
        return cls(a)

    def to_field(self) -> np.ndarray:
        return np.real(np.fft.ifftn(self.amplitudes * self.amplitudes.size))

    @property
    def mean(self) -> complex:
        return complex(self.amplitudes.flat[0])

    def is_real(self, tol: float = 1e-12) -> bool:
        a = self.amplitudes
        flipped = np.conj(np.flip(a))
        for axis in range(a.ndim):
            flipped = np.roll(flipped, 1, axis=axis)
        return bool(np.abs(a - flipped).max() <= tol * max(1.0, np.abs(a).max()))

    def __mul__(self, s):
        return FieldSpectrum(self.amplitudes * s, self._radius)

    __rmul__ = __mul__

    def __add__(self, other: "FieldSpectrum"):
        return FieldSpectrum(self.amplitudes + other.amplitudes, self._radius)


def lattice_radius(shape) -> np.ndarray:
    ks = np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in shape], indexing="ij")
    return np.sqrt(sum(k * k for k in ks))


def block_range(radius: np.ndarray) -> range:
    rmax = float(radius.max())
    if rmax < 1:
        return range(0)
    return range(0, int(math.ceil(math.log2(rmax))) + 2)


def lp_block_norms(u: FieldSpectrum | list, profile: DyadicProfile = DEFAULT_PROFILE) -> dict[int, float]:
    """``{j: ||Delta_j u||}``; a list of spectra is treated as a vector field."""
    comps = u if isinstance(u, (list, tuple)) else [u]
    radius = comps[0].radius
    power = sum(np.abs(c.amplitudes) ** 2 for c in comps)
    out = {}
    for j in block_range(radius):
        w = profile.phi(radius / 2.0 ** j)
        out[j] = float(math.sqrt(np.sum(w * w * power)))
    return out


class BandKind(enum.Enum):
    FULL = "Full"
    LOW = "Low"
    HIGH = "High"
    MID = "Mid"


@dataclass(frozen=True)
class BandNormSpec:
    s: float
    band: BandKind = BandKind.FULL
    eta: float | None = None
    eta2: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "band", BandKind(self.band))
        if self.band is not BandKind.FULL and not (self.eta is not None and self.eta > 0):
            raise ValueError("band thresholds must be positive")
        if self.band is BandKind.MID and not (self.eta2 is not None and self.eta < self.eta2):
            raise ValueError("mid band needs eta < eta2")

    def contains(self, j: int) -> bool:
        two_j = 2.0 ** j
        if self.band is BandKind.FULL:
            return True
        if self.band is BandKind.LOW:
            return two_j <= 2 * self.eta
        if self.band is BandKind.HIGH:
            return two_j >= self.eta / 2
        return self.eta <= two_j <= self.eta2

    @property
    def label(self) -> str:
        return f"B_{self.s:g}_{self.band.value}"


def besov_from_blocks(blocks: dict[int, float], spec: BandNormSpec, weight=None) -> float:
    total = 0.0
    for j, v in blocks.items():
        if spec.contains(j):
            w = 1.0 if weight is None else weight(j)
            total += 2.0 ** (j * spec.s) * w * v
    return total


def besov_norm(u: FieldSpectrum | list, spec: BandNormSpec, profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    return besov_from_blocks(lp_block_norms(u, profile), spec)


def low(s, eta):
    return BandNormSpec(s, BandKind.LOW, eta)


def high(s, eta):
    return BandNormSpec(s, BandKind.HIGH, eta)


def full(s):
    return BandNormSpec(s, BandKind.FULL)


@dataclass
class SpectraSnapshot:
    """Spectra of one state: scalars ``b``, ``j0`` and vector lists ``u``, ``j1``."""

    b: FieldSpectrum
    u: list
    j0: FieldSpectrum | None
    j1: list | None

    @property
    def dim(self) -> int:
        return len(self.u)


def xy_norm_snapshot(state: SpectraSnapshot, p: PhysicalParams, regime: RegimeLabel,
                     profile: DyadicProfile = DEFAULT_PROFILE) -> float:
    """Regime-dependent critical norm of a state in original variables.

    Thresholds are ``1/nu`` (fluid) and rescaled radiative cut-offs divided by
    ``nu``; each extra derivative above ``n/2 - 1`` carries a factor ``nu``.
    """
    nu, eps, n = p.nu, p.eps, state.dim
    s0 = n / 2 - 1
    th = 1.0 / nu
    bb = lp_block_norms(state.b, profile)
    uu = lp_block_norms(state.u, profile)
    has_rad = state.j0 is not None
    j0 = lp_block_norms(state.j0, profile) if has_rad else {}
    j1 = lp_block_norms(state.j1, profile) if state.j1 is not None else {}
    fluid = besov_from_blocks(bb, low(s0, th)) + nu * besov_from_blocks(bb, high(s0 + 1, th))

    def combined(*blocks):
        keys = set().union(*[b.keys() for b in blocks])
        return {j: math.sqrt(sum(b.get(j, 0.0) ** 2 for b in blocks)) for j in keys}

    kind = regime.kind
    if kind is Regime.NEGLIGIBLE_RADIATION:
        raise UnknownRegime("no critical norm is defined for the negligible-radiation regime")
    if kind in (Regime.NON_EQUILIBRIUM, Regime.EQUILIBRIUM):
        return fluid + besov_from_blocks(combined(uu, j0, j1), full(s0))
    if kind is Regime.POISSON:
        return (fluid + besov_from_blocks(combined(uu, j1), full(s0))
                + eps / (p.ell * nu) * besov_from_blocks(j0, low(s0, th))
                + nu * besov_from_blocks(j0, low(s0 + 1, th))
                + besov_from_blocks(j0, high(s0, th)))
    # degenerate nonequilibrium: extra mid-band weight on j0
    cut = eps * p.em / nu
    scale = eps * eps * p.em

    def mid_weight(j):
        r = nu * 2.0 ** j
        return max(1.0, min(r, scale / r))

    mid = 0.0
    for j, v in j0.items():
        if th <= 2.0 ** j <= cut:
            mid += 2.0 ** (j * s0) * mid_weight(j) * v
    return (fluid + besov_from_blocks(combined(uu, j1), full(s0))
            + besov_from_blocks(j0, low(s0, th)) + besov_from_blocks(j0, high(s0, max(cut, th))) + mid)
