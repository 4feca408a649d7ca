"""Diffusive limit systems on the periodic torus.

Every limit keeps the compressible Navier-Stokes core for ``(b, u)`` and differs
in how the radiative energy ``j0`` enters:

* nonequilibrium: ``j0`` obeys a damped heat equation forced by ``b``;
* degenerate nonequilibrium: ``j0`` relaxes to ``b`` pointwise;
* Navier-Stokes-Poisson: ``j0`` is slaved to ``b`` by a screened Poisson equation;
* modified pressure: ``j0 = b`` is folded into a ``(1 + 1/n)`` pressure law;
* barotropic: radiation drops out altogether.

The linear part is advanced exactly per Fourier mode on ``(b, d, j0)`` with
``d = i khat . u``; the divergence-free velocity decays as ``exp(-mu |k|^2 t)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .dyadic_norms import FieldSpectrum
from .errors import ValidationError
from .params import CouplingFunctions, PhysicalParams, Regime, RegimeLabel
from .spectral_solver import (
    FieldState,
    SolverConfig,
    TorusGrid,
    Trajectory,
    _apply_mode_matrices,
    _check_step,
    _convection,
    _join_longitudinal,
    _physical,
    _preflight,
    _split_longitudinal,
    _unique_k2,
    imex_step,
    params_dict,
    run,
)


class LimitFamily(enum.Enum):
    NONEQ = "noneq"
    DEGEN = "degen"
    POISSON = "poisson"
    MODPRESSURE = "modpressure"
    BAROTROPIC = "barotropic"


@dataclass(frozen=True)
class LimitKind:
    family: LimitFamily
    kappa: float | None = None
    m: float | None = None
    ell: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", LimitFamily(self.family))
        f = self.family
        if f in (LimitFamily.NONEQ, LimitFamily.DEGEN):
            if self.kappa is None or not self.kappa > 1:
                raise ValidationError(f"{f.value} limit needs kappa > 1")
        if f in (LimitFamily.NONEQ, LimitFamily.POISSON):
            if self.m is None or not (0 < self.m < math.inf):
                raise ValidationError(f"{f.value} limit needs finite m > 0")
        if self.ell < 0:
            raise ValidationError("ell must be nonnegative")

    @classmethod
    def noneq(cls, kappa: float, m: float) -> "LimitKind":
        return cls(LimitFamily.NONEQ, kappa, m)

    @classmethod
    def degenerate(cls, kappa: float) -> "LimitKind":
        return cls(LimitFamily.DEGEN, kappa)

    @classmethod
    def poisson(cls, m: float, ell: float = 0.0) -> "LimitKind":
        return cls(LimitFamily.POISSON, None, m, ell)

    @classmethod
    def modified_pressure(cls) -> "LimitKind":
        return cls(LimitFamily.MODPRESSURE)

    @classmethod
    def barotropic(cls) -> "LimitKind":
        return cls(LimitFamily.BAROTROPIC)

    @classmethod
    def from_regime(cls, label: RegimeLabel) -> "LimitKind":
        k = label.kind
        if k is Regime.NON_EQUILIBRIUM:
            return cls.noneq(label.kappa, label.m)
        if k is Regime.DEGENERATE_NON_EQUILIBRIUM:
            return cls.degenerate(label.kappa)
        if k is Regime.POISSON:
            return cls.poisson(label.m, label.ell)
        if k is Regime.EQUILIBRIUM:
            return cls.modified_pressure()
        return cls.barotropic()

    @property
    def has_j0(self) -> bool:
        return self.family in (LimitFamily.NONEQ, LimitFamily.DEGEN, LimitFamily.POISSON)

    @property
    def evolves_j0(self) -> bool:
        return self.family in (LimitFamily.NONEQ, LimitFamily.DEGEN)

    @property
    def label(self) -> str:
        return self.family.value

    def relaxation_rate(self, p: PhysicalParams) -> float:
        return self.kappa / (p.dim * p.nu)


# ---------------------------------------------------------------------------
# elliptic constraint


def _screening(p: PhysicalParams, m: float, ell: float) -> float:
    if not m > 0 and not ell > 0:
        raise ValidationError("screening needs m > 0")
    return p.dim * (ell * ell + m)


def elliptic_factor(k2, p: PhysicalParams, m: float, ell: float = 0.0):
    """Per-mode ratio ``j0_hat / b_hat`` of the screened Poisson constraint."""
    s = _screening(p, m, ell)
    return s / (p.nu ** 2 * np.asarray(k2, dtype=float) + s)


def solve_elliptic_j0(b_hat, p: PhysicalParams, m: float, grid: TorusGrid | None = None, ell: float = 0.0):
    """Solve ``-nu^2 Lap j0 + n (ell^2 + m) (j0 - b) = 0`` spectrally.

    ``b_hat`` is either a :class:`FieldSpectrum` or rfft coefficients on ``grid``.
    """
    if isinstance(b_hat, FieldSpectrum):
        return FieldSpectrum(b_hat.amplitudes * elliptic_factor(b_hat.radius ** 2, p, m, ell))
    if grid is None:
        raise ValidationError("grid required for raw coefficient arrays")
    return b_hat * elliptic_factor(grid.k2, p, m, ell)


def compatibility_project(b0, p: PhysicalParams, m: float, grid: TorusGrid | None = None):
    """Initial ``j0`` with ``j0 - (nu^2/(n m)) Lap j0 = b0``."""
    return solve_elliptic_j0(b0, p, m, grid)


def constraint_residual(state: FieldState, p: PhysicalParams, kind: LimitKind) -> float:
    """Max spectral modulus of ``-nu^2 Lap j0 + n(ell^2+m)(j0 - b)``, per torus-normalized amplitude."""
    g = state.grid
    s = _screening(p, kind.m, kind.ell)
    res = (p.nu ** 2 * g.k2 + s) * state.j0_hat - s * state.b_hat
    return float(np.abs(res).max() / g.n_points ** g.dim)


# ---------------------------------------------------------------------------
# linear part


def limit_mode_matrix(kind: LimitKind, r, p: PhysicalParams) -> np.ndarray:
    """Generator ``K`` with ``X' = -K X`` for ``X = (b, d[, j0])`` at wavenumber ``r`` (batched)."""
    r = np.asarray(r, dtype=float)
    nu, n = p.nu, p.dim
    f = kind.family
    if kind.evolves_j0:
        out = np.zeros(r.shape + (3, 3))
        a = kind.relaxation_rate(p)
        out[..., 0, 1] = r
        out[..., 1, 0] = -r
        out[..., 1, 1] = nu * r * r
        out[..., 1, 2] = -r / n
        out[..., 2, 0] = -a
        out[..., 2, 2] = a if f is LimitFamily.DEGEN else a * (1 + nu * nu * r * r / (n * kind.m))
        return out
    if f is LimitFamily.POISSON:
        pressure = 1 + elliptic_factor(r * r, p, kind.m, kind.ell) / n
    elif f is LimitFamily.MODPRESSURE:
        pressure = np.full(r.shape, 1 + 1 / n)
    else:
        pressure = np.ones(r.shape)
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 1] = r
    out[..., 1, 0] = -r * pressure
    out[..., 1, 1] = nu * r * r
    return out


def acoustic_eigenvalues(r: float, p: PhysicalParams, pressure: float) -> np.ndarray:
    """Eigenvalues of the barotropic ``(b, d)`` block with the given pressure coefficient."""
    m = np.array([[0.0, r], [-r * pressure, p.nu * r * r]])
    return np.sort_complex(np.linalg.eigvals(m))


class LimitPropagator:
    """Exact solution operator of a linearized limit system over a fixed step."""

    def __init__(self, grid: TorusGrid, p: PhysicalParams, kind: LimitKind, dt: float):
        self.grid, self.p, self.kind, self.dt = grid, p, kind, dt
        k2u, self.inverse = _unique_k2(grid)
        self.e = expm(-dt * limit_mode_matrix(kind, np.sqrt(k2u), p))
        self.pu_decay = np.exp(-p.mu * grid.k2 * dt)

    def __call__(self, state: FieldState) -> FieldState:
        g, kind = self.grid, self.kind
        pu, d = _split_longitudinal(g, state.u_hat)
        if kind.evolves_j0:
            b, d, j0 = _apply_mode_matrices(self.e, self.inverse, state.b_hat, d, state.j0_hat)
        else:
            b, d = _apply_mode_matrices(self.e, self.inverse, state.b_hat, d)
            j0 = solve_elliptic_j0(b, self.p, kind.m, g, kind.ell) if kind.has_j0 else None
        u = _join_longitudinal(g, self.pu_decay * pu, d)
        return FieldState(g, b, u, j0, None, state.t + self.dt)


# ---------------------------------------------------------------------------
# nonlinear part


def limit_nonlinear_rhs(state: FieldState, p: PhysicalParams, fns: CouplingFunctions, kind: LimitKind):
    """Explicit tendencies ``(db, du)`` of a limit system (spectral, dealiased)."""
    g = state.grid
    ph = _physical(g, state.b_hat, state.u_hat, p)
    adv_b, adv_u = _convection(ph)
    b = ph.b
    nb = -adv_b - fns(1, b) * ph.div_u
    nu_ = -adv_u + fns(2, b) * ph.lame_u - fns(3, b) * ph.grad_b
    if kind.family is LimitFamily.MODPRESSURE:
        nu_ = nu_ - fns(4, b) / p.dim * ph.grad_b
    elif kind.has_j0:
        grad_j0 = g.ifft(1j * g.k * state.j0_hat)
        nu_ = nu_ - fns(4, b) / p.dim * grad_j0
    return g.dealias(g.fft(nb)), g.dealias(g.fft(nu_))


# ---------------------------------------------------------------------------
# stepping


def prepare_limit_state(state: FieldState, p: PhysicalParams, kind: LimitKind) -> FieldState:
    """Drop ``j1`` and shape ``j0`` to what the limit carries (constraint applied for Poisson)."""
    g = state.grid
    if kind.family is LimitFamily.POISSON:
        j0 = solve_elliptic_j0(state.b_hat, p, kind.m, g, kind.ell)
    elif kind.evolves_j0:
        if state.j0_hat is None:
            raise ValidationError(f"{kind.label} limit needs an initial j0")
        j0 = state.j0_hat.copy()
    else:
        j0 = None
    return FieldState(g, state.b_hat.copy(), state.u_hat.copy(), j0, None, state.t)


class LimitSystem:
    """Stepper for one limit system with a fixed step size."""

    def __init__(self, grid: TorusGrid, p: PhysicalParams, kind: LimitKind, fns: CouplingFunctions,
                 cfg: SolverConfig):
        self.grid, self.p, self.kind, self.fns, self.cfg = grid, p, kind, fns, cfg
        self.linear = LimitPropagator(grid, p, kind, cfg.dt)
        self.half = LimitPropagator(grid, p, kind, cfg.dt / 2)
        active = cfg.nonlinear_on and not fns.is_zero
        self.rhs = (lambda s: limit_nonlinear_rhs(s, p, fns, kind)) if active else None
        self.project = self._project if kind.family is LimitFamily.POISSON else None

    def _project(self, state: FieldState) -> FieldState:
        j0 = solve_elliptic_j0(state.b_hat, self.p, self.kind.m, self.grid, self.kind.ell)
        return state.replace_fluid(state.b_hat, state.u_hat, j0)

    def step(self, state: FieldState) -> FieldState:
        out = imex_step(state, self.cfg.dt, self.cfg.scheme, self.linear, self.half, self.rhs, self.project)
        _check_step(out)
        return out


def step_limit(state: FieldState, kind: LimitKind, cfg: SolverConfig, p: PhysicalParams,
               fns: CouplingFunctions) -> FieldState:
    """One step of a limit system (builds the propagators; use :func:`simulate_limit` for runs)."""
    return LimitSystem(state.grid, p, kind, fns, cfg).step(state)


def simulate_limit(state: FieldState, kind: LimitKind, cfg: SolverConfig, p: PhysicalParams,
                   fns: CouplingFunctions) -> Trajectory:
    """Integrate a limit system from the ``(b, u, j0)`` part of ``state``."""
    start = prepare_limit_state(state, p, kind)
    _preflight(start, p, fns, cfg)
    traj = run(LimitSystem(state.grid, p, kind, fns, cfg), start, cfg)
    traj.meta.update(system="limit", kind=kind.label, kappa=kind.kappa, m=kind.m, ell=kind.ell,
                     params=params_dict(p), slopes=fns.slopes, scheme=cfg.scheme.value, dt=cfg.dt,
                     nonlinear_on=cfg.nonlinear_on)
    return traj
