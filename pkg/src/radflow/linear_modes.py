"""Per-frequency linear theory in rescaled variables.

After the rescaling ``(t, x) -> (nu t, nu x)`` and ``j0 -> sqrt(n) j0`` a Fourier
mode of the linearized system with frequency ``rho`` obeys
``dU/dt + M(rho) U = 0`` for ``U = (b, d, j0, j1)``, where ``d`` and ``j1`` are
the amplitudes of ``Lambda^-1 div`` applied to velocity and flux.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .errors import DissipationViolation, EigensolverFailure, OverflowAtLargeT, PreconditionViolated
from .params import PhysicalParams, RegimeLabel, stability_margin

NEUTRAL_TOL = 1e-10


@dataclass(frozen=True)
class ModeState:
    b: complex = 0.0
    d: complex = 0.0
    j0: complex = 0.0
    j1: complex = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("mode state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.b, self.d, self.j0, self.j1], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "ModeState":
        v = np.asarray(v, dtype=complex)
        return cls(*(complex(x) for x in v))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "ModeState":
        return cls.from_array(rng.standard_normal(4) + 1j * rng.standard_normal(4))


@dataclass(frozen=True)
class ModeMatrix:
    rho: float
    entries: np.ndarray
    params: PhysicalParams | None = field(default=None, compare=False)


def mode_matrices(rho, p: PhysicalParams) -> np.ndarray:
    """Stack of ``M(rho)`` for an array of frequencies, shape ``rho.shape + (4, 4)``."""
    p.require_positive_eps()
    rho = np.asarray(rho, dtype=float)
    n, eps = p.dim, p.eps
    lt, em = p.ell_tilde, p.em
    sn = math.sqrt(n)
    out = np.zeros(rho.shape + (4, 4))
    out[..., 0, 1] = rho
    out[..., 1, 0] = -rho
    out[..., 1, 1] = rho * rho
    out[..., 1, 3] = -lt * em / n
    out[..., 2, 0] = -sn * lt / eps
    out[..., 2, 2] = lt / eps
    out[..., 2, 3] = rho / (eps * sn)
    out[..., 3, 2] = -rho / (eps * sn)
    out[..., 3, 3] = lt * em / eps
    return out


def assemble_mode_matrix(rho: float, p: PhysicalParams) -> ModeMatrix:
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    return ModeMatrix(float(rho), mode_matrices(rho, p), p)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by real part plus a stability verdict."""

    eigenvalues: np.ndarray
    stable: bool
    neutral: np.ndarray

    @property
    def min_real(self) -> float:
        return float(self.eigenvalues.real.min())


def eigen_spectrum(m: ModeMatrix | np.ndarray, tol: float = NEUTRAL_TOL) -> Spectrum:
    a = m.entries if isinstance(m, ModeMatrix) else np.asarray(m)
    if not np.all(np.isfinite(a)):
        raise EigensolverFailure("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order]
    return Spectrum(lam, bool(np.all(lam.real > -tol)), np.abs(lam) <= tol)


# ---------------------------------------------------------------------------
# Routh-Hurwitz on the reduced 3x3 block


def reduced_block(rho: float, kappa: float, n: int, include_relaxation: float | None = None) -> np.ndarray:
    """The 3x3 (b, d, j0) generator of the nonequilibrium mid-band analysis.

    With ``include_relaxation = m`` the j0 diagonal gains ``rho^2 / (kappa m)``.
    """
    extra = 0.0 if include_relaxation is None else rho * rho / (kappa * include_relaxation)
    return np.array([
        [0.0, rho, 0.0],
        [-rho, rho * rho, -rho / n ** 1.5],
        [-kappa / math.sqrt(n), 0.0, kappa / n + extra],
    ])


@dataclass(frozen=True)
class HurwitzCoefficients:
    a1: float
    a2: float
    a3: float
    minor2: float

    @property
    def stable(self) -> bool:
        return self.a1 > 0 and self.minor2 > 0 and self.a3 > 0


def hurwitz_coefficients(rho: float, kappa: float, n: int,
                         include_relaxation: float | None = None) -> HurwitzCoefficients:
    """Characteristic coefficients of the reduced block and the second Hurwitz minor.

    The block's characteristic polynomial is ``X^3 - a1 X^2 + a2 X - a3``.
    Without relaxation the minor is returned in the closed form
    ``(1 + kappa/n) rho^4 + rho^2 kappa (kappa - 1) / n^2``.
    """
    r2 = rho * rho
    if include_relaxation is None:
        a1 = kappa / n + r2
        a2 = (1 + kappa / n) * r2
        a3 = (1 + 1 / n) * r2 * kappa / n
        minor = (1 + kappa / n) * r2 * r2 + r2 * kappa * (kappa - 1) / n ** 2
    else:
        delta = r2 / (kappa * include_relaxation)
        a1 = kappa / n + r2 + delta
        a2 = r2 * (1 + kappa / n + delta)
        a3 = r2 * (kappa / n + delta + kappa / n ** 2)
        minor = a1 * a2 - a3
    return HurwitzCoefficients(a1, a2, a3, minor)


def routh_hurwitz_reduced(rho: float, kappa: float, n: int,
                          include_relaxation: float | None = None) -> bool:
    if rho <= 0 or n < 2:
        raise ValueError("need rho > 0 and n >= 2")
    return hurwitz_coefficients(rho, kappa, n, include_relaxation).stable


# ---------------------------------------------------------------------------
# exact solutions


def propagators(rho, p: PhysicalParams, t: float) -> np.ndarray:
    """``exp(-t M(rho))`` for an array of frequencies (batched)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = mode_matrices(rho, p)
    with np.errstate(over="raise", invalid="raise"):
        try:
            out = scipy.linalg.expm(-t * m)
        except FloatingPointError as exc:
            raise OverflowAtLargeT(f"matrix exponential overflowed at t={t}") from exc
    if not np.all(np.isfinite(out)):
        raise OverflowAtLargeT(f"matrix exponential overflowed at t={t}")
    return out


def solve_mode(m: ModeMatrix, u0: ModeState, t: float) -> ModeState:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return u0
    with np.errstate(over="raise", invalid="raise"):
        try:
            e = scipy.linalg.expm(-t * m.entries)
            v = e @ u0.as_array()
        except FloatingPointError as exc:
            raise OverflowAtLargeT(f"overflow at t={t}") from exc
    if not np.all(np.isfinite(v)):
        raise OverflowAtLargeT(f"overflow at t={t}")
    return ModeState.from_array(v)


def solve_mode_ode(m: ModeMatrix, u0: ModeState, t: float, rtol: float = 1e-12) -> ModeState:
    """Reference solution by adaptive high-order integration."""
    a = m.entries
    sol = solve_ivp(lambda _, y: -a @ y, (0.0, t), u0.as_array(), method="DOP853",
                    rtol=rtol, atol=1e-14 * max(1.0, np.abs(u0.as_array()).max()))
    return ModeState.from_array(sol.y[:, -1])


def duhamel_factor(a, g, t):
    """``int_0^t exp(-a (t - s)) exp(-g s) ds``, stable when ``a`` is close to ``g``."""
    a = np.asarray(a, dtype=float)
    g = np.asarray(g, dtype=float)
    t = np.asarray(t, dtype=float)
    diff = g - a
    x = diff * t
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, diff)
    general = np.exp(-a * t) * (-np.expm1(-x)) / safe
    resonant = t * np.exp(-a * t) * (1.0 - 0.5 * x)
    return np.where(small, resonant, general)


def incompressible_block(p: PhysicalParams, rho, pu0, pj1_0, t):
    """Exact solution of the divergence-free block in rescaled variables.

    Returns ``(P u(t), P j1(t))``. Works elementwise on arrays.
    """
    p.require_positive_eps()
    rho = np.asarray(rho, dtype=float)
    a = (p.mu / p.nu) * rho * rho
    g = p.ell_tilde * p.em / p.eps
    pj1 = np.exp(-g * t) * pj1_0 + np.zeros_like(rho)
    pu = np.exp(-a * t) * pu0 + (p.ell_tilde * p.em / p.dim) * duhamel_factor(a, g, t) * pj1_0
    return pu, pj1


# ---------------------------------------------------------------------------
# Lyapunov functionals


class LyapunovVariant(enum.Enum):
    BAROTROPIC = "Barotropic"
    HIGH_FREQ = "HighFreq"


def barotropic_functional(rho: float, b: complex, d: complex) -> float:
    return float(2 * (abs(b) ** 2 + abs(d) ** 2) - 2 * rho * (b * np.conj(d)).real + abs(rho * b) ** 2)


def lyapunov_U(rho: float, s: ModeState, variant=LyapunovVariant.BAROTROPIC, n: int | None = None):
    """Barotropic functional, or ``(U^2, J^2)`` for the high-frequency variant.

    The high-frequency companion uses ``zeta0 = j0 - sqrt(n) b`` and needs ``n``.
    """
    variant = LyapunovVariant(variant)
    u2 = barotropic_functional(rho, s.b, s.d)
    if variant is LyapunovVariant.BAROTROPIC:
        return u2
    if n is None:
        raise ValueError("the high-frequency variant needs the dimension n")
    zeta0 = s.j0 - math.sqrt(n) * s.b
    return u2, float(abs(zeta0) ** 2 + abs(s.j1) ** 2)


def midfreq_threshold(n: int) -> float:
    """Smallest ``rho^2`` for which the mid-band dissipation estimate is claimed."""
    return 16 * n / (3 * (4 * n * n - 1))


def midfreq_subsystem(p: PhysicalParams, rho: float) -> np.ndarray:
    """3x3 generator of the (b, d, j0) subsystem with the corrector flux set to zero."""
    p.require_positive_eps()
    n, lt, eps = p.dim, p.ell_tilde, p.eps
    rate = (lt / eps) * (1 + rho * rho / (n * lt * lt * p.em))
    return np.array([
        [0.0, rho, 0.0],
        [-rho, rho * rho, -rho / n ** 1.5],
        [-math.sqrt(n) * lt / eps, 0.0, rate],
    ])


@dataclass(frozen=True)
class DissipationReport:
    applicable: bool
    max_violation: float = 0.0
    worst_time: float = 0.0
    nonincreasing: bool = True
    values: np.ndarray | None = None


def midfreq_dissipation_check(p: PhysicalParams, rho: float, u0: ModeState, t_grid,
                              tol: float = 1e-8) -> DissipationReport:
    """Check ``dW^2/dt + rho^2 |(b, d, j0)|^2 / (2 n^2) <= tol`` along the subsystem.

    ``W^2 = U^2 + eps |rho j0|^2 / (n^2 L~)``. The time derivative is a
    five-point central difference of the exact trajectory. Below the frequency
    threshold the estimate is not claimed and a non-applicable report is
    returned.
    """
    n = p.dim
    if rho * rho < midfreq_threshold(n):
        return DissipationReport(applicable=False)
    k = midfreq_subsystem(p, rho)
    v0 = u0.as_array()[:3]
    weight = p.eps / (n * n * p.ell_tilde)
    h = 1e-3 / max(1.0, np.linalg.norm(k, 2))

    def w2(v):
        return barotropic_functional(rho, v[0], v[1]) + weight * abs(rho * v[2]) ** 2

    t_grid = np.asarray(t_grid, dtype=float)
    # the exact flow is defined for negative times too, so the stencil may straddle t = 0
    times = (t_grid[:, None] + h * np.arange(-2, 3)[None, :]).ravel()
    states = scipy.linalg.expm(-times[:, None, None] * k[None]) @ v0
    vals = np.array([w2(v) for v in states]).reshape(len(t_grid), 5)
    deriv = (vals[:, 0] - 8 * vals[:, 1] + 8 * vals[:, 3] - vals[:, 4]) / (12 * h)
    sq = np.sum(np.abs(states.reshape(len(t_grid), 5, 3)[:, 2, :]) ** 2, axis=1)
    residual = deriv + rho * rho / (2 * n * n) * sq
    w = vals[:, 2]
    worst = int(np.argmax(residual))
    rises = np.diff(w) > tol
    report = DissipationReport(True, float(residual[worst]), float(t_grid[worst]), not bool(np.any(rises)), w)
    if residual[worst] > tol:
        raise DissipationViolation(float(t_grid[worst]), float(residual[worst]))
    if np.any(rises):
        i = int(np.argmax(np.diff(w)))
        raise DissipationViolation(float(t_grid[i + 1]), float(np.diff(w)[i]))
    return report


# ---------------------------------------------------------------------------
# bands and decay envelopes


class Band(enum.Enum):
    LOW = "Low"
    MID = "Mid"
    HIGH = "High"


@dataclass(frozen=True)
class BandLabel:
    band: Band
    low_cut: float
    high_cut: float

    def __post_init__(self):
        if self.low_cut > self.high_cut:
            raise ValueError("low_cut must not exceed high_cut")


def default_cuts(p: PhysicalParams) -> tuple[float, float]:
    return math.sqrt(1 + 1 / p.dim), p.ell_tilde * p.em


def band_of(rho: float, p: PhysicalParams, low_cut: float | None = None,
            high_cut: float | None = None) -> BandLabel:
    lo, hi = default_cuts(p)
    lo = lo if low_cut is None else low_cut
    hi = hi if high_cut is None else high_cut
    if hi < lo:
        # the mid band is empty; keep the ordering invariant
        hi = lo
    if rho <= lo:
        b = Band.LOW
    elif rho >= hi:
        b = Band.HIGH
    else:
        b = Band.MID
    return BandLabel(b, lo, hi)


@dataclass(frozen=True)
class DecayEnvelope:
    rho: float
    band: BandLabel
    predicted_fluid_rate: float
    predicted_rad_rate_j0: float
    predicted_rad_rate_j1: float
    measured_fluid_rate: float
    measured_rad_rate_j0: float
    measured_rad_rate_j1: float
    eigenvalues: np.ndarray
    low_freq_constraint: float


def _classify_modes(m: np.ndarray):
    """Assign eigenpairs to fluid / j0 / j1 by eigenvector weight."""
    lam, vec = np.linalg.eig(m)
    w = np.abs(vec) ** 2
    w /= w.sum(axis=0, keepdims=True)
    fluid_w = w[0] + w[1]
    fluid = np.argsort(-fluid_w)[:2]
    rest = [i for i in range(4) if i not in fluid]
    j0 = max(rest, key=lambda i: w[2, i])
    j1 = rest[0] if rest[1] == j0 else rest[1]
    return lam, fluid, j0, j1


def effective_viscosity(p: PhysicalParams) -> float:
    """Low-frequency acoustic damping factor; it has the sign of the stability margin."""
    return 1 - p.eps * (1 + 1 / p.em) / (p.dim * p.ell_tilde)


def decay_envelope(p: PhysicalParams, rho: float, regime: RegimeLabel | None = None,
                   low_cut: float | None = None, high_cut: float | None = None) -> DecayEnvelope:
    """Predicted per-band decay rates next to the measured eigen-rates.

    Predictions hold up to constants: fluid ``nu_eff rho^2 / 2`` in the low band,
    with ``nu_eff = 1 - eps (1 + 1/M) / (n L~)`` the effective low-frequency
    viscosity, and ``min(rho^2, 1)`` above it; j0 relaxes at ``L~/eps`` at low frequency,
    ``(L~/eps)(1 + rho^2/(n L~^2 M))`` in the middle and ``L~ M / eps`` at
    high frequency; j1 relaxes at ``L~ M / eps`` throughout. ``regime`` is
    accepted for reporting symmetry; the predictions only depend on ``p``.
    """
    label = band_of(rho, p, low_cut, high_cut)
    lt, em, eps, n = p.ell_tilde, p.em, p.eps, p.dim
    if label.band is Band.LOW:
        fluid = 0.5 * effective_viscosity(p) * rho * rho
        rad0 = lt / eps
    elif label.band is Band.MID:
        fluid = min(rho * rho, 1.0)
        rad0 = (lt / eps) * (1 + rho * rho / (n * lt * lt * em))
    else:
        fluid = min(rho * rho, 1.0)
        rad0 = lt * em / eps
    rad1 = lt * em / eps
    spec = eigen_spectrum(assemble_mode_matrix(rho, p))
    lam, fluid_idx, j0_idx, j1_idx = _classify_modes(mode_matrices(rho, p))
    measured_fluid = float(lam[fluid_idx].real.min())
    constraint = lt * min(1 / eps, em)
    return DecayEnvelope(rho, label, fluid, rad0, rad1, measured_fluid,
                         float(lam[j0_idx].real), float(lam[j1_idx].real), spec.eigenvalues, constraint)


# ---------------------------------------------------------------------------
# low-frequency changes of unknowns


class Approach(enum.Enum):
    FIRST = "First"
    SECOND = "Second"


def change_of_variables(rho: float, p: PhysicalParams, approach=Approach.FIRST) -> np.ndarray:
    """Matrix ``C`` such that ``C U`` gives the low-frequency eliminated unknowns."""
    approach = Approach(approach)
    p.require_positive_eps()
    n, eps, L, M, Ls = p.dim, p.eps, p.ell_tilde, p.em, p.ell_s
    sn = math.sqrt(n)
    if approach is Approach.FIRST:
        return np.array([
            [1.0, 0.0, 0.0, eps * eps * rho / (n * L * M)],
            [-eps * rho / (n * L), 1.0, eps * rho / (n * sn * L), eps / n],
            [-sn, -sn * eps * rho / L, 1.0, -eps * eps * rho / (sn * L)],
            [-rho / (L * M), 0.0, 0.0, 1.0],
        ])
    if Ls == 0:
        raise PreconditionViolated("the second elimination needs ell_s > 0")
    return np.array([
        [1.0, 0.0, 0.0, eps * eps * rho / (n * L * M)],
        [-eps * rho / (n * L), 1.0, eps * rho / (n * sn * L), eps / n],
        [-sn, -sn * eps * rho / L, 1.0, -(1 + eps * eps * M) * rho / (sn * L * Ls)],
        [rho / (L * M * Ls), 0.0, -rho / (sn * L * Ls), 1.0],
    ])


@dataclass(frozen=True)
class DiagnosticCombination:
    b: complex
    d: complex
    j0: complex
    j1: complex
    zeta0: complex
    zeta1: complex
    frak_j0: complex
    frak_j1: complex


def diagnostic_combinations(rho: float, p: PhysicalParams, s: ModeState,
                            approach=Approach.FIRST) -> DiagnosticCombination:
    """Eliminated unknowns, high-frequency combinations and corrector fluxes.

    ``frak_j1`` is ``nan`` when ``ell_s = 0`` (its last term divides by it).
    """
    v = change_of_variables(rho, p, approach) @ s.as_array()
    n, eps, L, M, Ls = p.dim, p.eps, p.ell_tilde, p.em, p.ell_s
    sn = math.sqrt(n)
    zeta0 = s.j0 - sn * s.b
    zeta1 = s.j1 - rho * s.j0 / (sn * L * M)
    frak_j0 = s.j0 - sn * s.b - sn * (eps / L) * rho * s.d
    frak_j1 = zeta1 + rho * s.b / (L * Ls * M) if Ls > 0 else complex("nan")
    return DiagnosticCombination(*(complex(x) for x in v), complex(zeta0), complex(zeta1),
                                 complex(frak_j0), complex(frak_j1))


def min_real_part_scan(p: PhysicalParams, rhos) -> float:
    """Smallest real part of the spectrum over a set of frequencies."""
    lam = np.linalg.eigvals(mode_matrices(np.asarray(rhos, dtype=float), p))
    return float(lam.real.min())


def margin_and_spectrum(p: PhysicalParams, rhos) -> tuple[float, float]:
    return stability_margin(p), min_real_part_scan(p, rhos)
