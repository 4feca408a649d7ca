"""Pseudo-spectral IMEX integration of the nonlinear radiative system on the 2 pi torus.

Fields are stored as real-to-complex FFT coefficients (``numpy.fft.rfftn``).
The linearization at rest is advanced exactly mode by mode: the compressible
part through the 4x4 mode-matrix exponential and the divergence-free part
through its closed form. Convection and every coupling-function term are
integrated explicitly with classical RK4 and dealiased by the two-thirds rule.
The nonlinear remainder never acts on ``j0`` or ``j1``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import dyadic_norms as dn
from .errors import NaNDetected, PreconditionViolated, StepRejected, ValidationError
from .linear_modes import incompressible_block, propagators
from .params import CouplingFunctions, PhysicalParams, Regime, RegimeLabel


@dataclass(frozen=True)
class TorusGrid:
    dim: int = 2
    n_points: int = 64

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValidationError("dim must be 1, 2 or 3")
        if self.n_points < 8 or self.n_points & (self.n_points - 1):
            raise ValidationError("n_points must be a power of two >= 8")
        n = self.n_points
        freqs = [np.fft.fftfreq(n, 1.0 / n)] * (self.dim - 1) + [np.fft.rfftfreq(n, 1.0 / n)]
        k = np.array(np.meshgrid(*freqs, indexing="ij"))
        k2 = np.sum(k * k, axis=0)
        kmag = np.sqrt(k2)
        khat = np.divide(k, kmag, out=np.zeros_like(k), where=kmag > 0)
        mask = np.all(np.abs(k) <= n / 3, axis=0)
        weights = np.full(k2.shape, 2.0)
        weights[..., 0] = 1.0
        if n % 2 == 0:
            weights[..., -1] = 1.0
        object.__setattr__(self, "_k", k)
        object.__setattr__(self, "_k2", k2)
        object.__setattr__(self, "_khat", khat)
        object.__setattr__(self, "_mask", mask)
        object.__setattr__(self, "_weights", weights)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_points,) * self.dim

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return self._k2.shape

    @property
    def k(self) -> np.ndarray:
        return self._k

    @property
    def k2(self) -> np.ndarray:
        return self._k2

    @property
    def khat(self) -> np.ndarray:
        return self._khat

    @property
    def dealias_mask(self) -> np.ndarray:
        return self._mask

    @property
    def kmax(self) -> float:
        return float(np.sqrt(self._k2[self._mask].max()))

    def coords(self) -> list[np.ndarray]:
        x = 2 * np.pi * np.arange(self.n_points) / self.n_points
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=tuple(range(-self.dim, 0)))

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.shape, axes=tuple(range(-self.dim, 0)))

    def dealias(self, fh: np.ndarray) -> np.ndarray:
        return fh * self._mask

    def l2(self, fh: np.ndarray) -> float:
        """Torus-averaged L2 norm of a (scalar or vector) field from its coefficients."""
        power = np.abs(fh) ** 2 * self._weights
        return float(math.sqrt(power.sum()) / self.n_points ** self.dim)

    def full_spectrum(self, fh: np.ndarray) -> dn.FieldSpectrum:
        return dn.FieldSpectrum.from_field(self.ifft(fh))


def leray_project(grid: TorusGrid, vh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a vector spectrum into divergence-free and gradient parts.

    The zero mode is assigned wholly to the divergence-free part.
    """
    kh = grid.khat
    proj = np.sum(kh * vh, axis=0)
    q = kh * proj
    return vh - q, q


class FieldState:
    """Spectral state ``(b, u, j0, j1)``; ``j0``/``j1`` may be ``None`` for limit systems.

    ``j1`` is held by its Helmholtz components: the divergence-free vector part
    ``j1_free`` and the longitudinal amplitude ``j1_long = i khat . j1``. Each
    part then keeps its own relative precision, which matters because the two
    decay at very different rates.
    """

    def __init__(self, grid: TorusGrid, b_hat, u_hat, j0_hat=None, j1_hat=None, t: float = 0.0,
                 j1_parts=None):
        self.grid = grid
        self.b_hat = b_hat
        self.u_hat = u_hat
        self.j0_hat = j0_hat
        self.t = t
        if j1_parts is None and j1_hat is not None:
            j1_parts = _split_longitudinal(grid, j1_hat)
        self.j1_parts = j1_parts

    @property
    def j1_hat(self):
        if self.j1_parts is None:
            return None
        return _join_longitudinal(self.grid, *self.j1_parts)

    @property
    def j1_free(self):
        return None if self.j1_parts is None else self.j1_parts[0]

    @classmethod
    def zeros(cls, grid: TorusGrid, with_j0=True, with_j1=True) -> "FieldState":
        z = np.zeros(grid.spectral_shape, dtype=complex)
        zv = np.zeros((grid.dim,) + grid.spectral_shape, dtype=complex)
        return cls(grid, z.copy(), zv.copy(), z.copy() if with_j0 else None, zv.copy() if with_j1 else None)

    @classmethod
    def from_physical(cls, grid: TorusGrid, b, u, j0=None, j1=None, t=0.0) -> "FieldState":
        f = grid.fft
        return cls(grid, grid.dealias(f(np.asarray(b, float))), grid.dealias(f(np.asarray(u, float))),
                   None if j0 is None else grid.dealias(f(np.asarray(j0, float))),
                   None if j1 is None else grid.dealias(f(np.asarray(j1, float))), t)

    @property
    def b(self):
        return self.grid.ifft(self.b_hat)

    @property
    def u(self):
        return self.grid.ifft(self.u_hat)

    @property
    def j0(self):
        return None if self.j0_hat is None else self.grid.ifft(self.j0_hat)

    @property
    def j1(self):
        return None if self.j1_parts is None else self.grid.ifft(self.j1_hat)

    def copy(self) -> "FieldState":
        c = lambda a: None if a is None else a.copy()
        parts = None if self.j1_parts is None else (self.j1_parts[0].copy(), self.j1_parts[1].copy())
        return FieldState(self.grid, self.b_hat.copy(), self.u_hat.copy(), c(self.j0_hat), None, self.t, parts)

    def replace_fluid(self, b_hat, u_hat, j0_hat=None) -> "FieldState":
        """Same radiative parts, new ``b`` and ``u`` (and optionally ``j0``)."""
        j0 = self.j0_hat if j0_hat is None else j0_hat
        return FieldState(self.grid, b_hat, u_hat, j0, None, self.t, self.j1_parts)

    def items(self):
        for name in ("b", "u", "j0", "j1"):
            a = getattr(self, name + "_hat")
            if a is not None:
                yield name, a

    def check_finite(self):
        for name, a in self.items():
            if not np.all(np.isfinite(a)):
                raise NaNDetected(name)

    def spectra(self) -> dn.SpectraSnapshot:
        g = self.grid
        vec = lambda a: None if a is None else [g.full_spectrum(c) for c in a]
        return dn.SpectraSnapshot(g.full_spectrum(self.b_hat), vec(self.u_hat),
                                  None if self.j0_hat is None else g.full_spectrum(self.j0_hat),
                                  vec(self.j1_hat))


class Scheme(enum.Enum):
    IMEX1 = "IMEX1"
    IMEX2 = "IMEX2"


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01
    t_end: float = 1.0
    scheme: Scheme = Scheme.IMEX2
    record_every: int = 1
    nonlinear_on: bool = True
    smallness: float | None = 0.1
    cfl: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if self.t_end < 0:
            raise ValidationError("t_end must be nonnegative")
        if self.record_every < 1:
            raise ValidationError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


# ---------------------------------------------------------------------------
# linear part


def _unique_k2(grid: TorusGrid):
    k2u, inverse = np.unique(grid.k2, return_inverse=True)
    return k2u, inverse.reshape(grid.k2.shape)


def _apply_mode_matrices(e: np.ndarray, inverse: np.ndarray, *components):
    """Apply per-|k| matrices ``e[inverse]`` to stacked scalar spectra."""
    vec = np.stack(components)
    mats = e[inverse]  # spectral_shape + (s, s)
    return np.einsum("...ij,j...->i...", mats, vec)


def _split_longitudinal(grid: TorusGrid, vh: np.ndarray):
    """``(P v, d)`` with ``d = i khat . v`` so that ``Q v = -i khat d``."""
    proj = np.sum(grid.khat * vh, axis=0)
    return vh - grid.khat * proj, 1j * proj


def _join_longitudinal(grid: TorusGrid, pv: np.ndarray, d: np.ndarray):
    return pv - 1j * grid.khat * d


class LinearPropagator:
    """Exact solution operator of the linearized full system over a fixed step."""

    def __init__(self, grid: TorusGrid, p: PhysicalParams, dt: float):
        self.grid, self.p, self.dt = grid, p, dt
        nu, n = p.nu, p.dim
        k2u, self.inverse = _unique_k2(grid)
        ku = np.sqrt(k2u)
        e = propagators(nu * ku, p, dt / nu)
        s = np.array([1.0, 1.0, math.sqrt(n), 1.0])
        # back to original variables: U = S^-1 V with V the rescaled unknowns
        self.e = e * s[None, None, :] / s[None, :, None]
        one_u, _ = incompressible_block(p, nu * ku, 1.0, 0.0, dt / nu)
        couple, decay = incompressible_block(p, nu * ku, 0.0, 1.0, dt / nu)
        self.pu_decay = one_u[self.inverse]
        self.pu_from_pj1 = couple[self.inverse]
        self.pj1_decay = decay[self.inverse]

    def __call__(self, state: FieldState) -> FieldState:
        g = self.grid
        pu, d = _split_longitudinal(g, state.u_hat)
        pj, e = state.j1_parts
        b, d, j0, e = _apply_mode_matrices(self.e, self.inverse, state.b_hat, d, state.j0_hat, e)
        pu_new = self.pu_decay * pu + self.pu_from_pj1 * pj
        pj_new = self.pj1_decay * pj
        return FieldState(g, b, _join_longitudinal(g, pu_new, d), j0, None, state.t + self.dt, (pj_new, e))


def linear_rhs(state: FieldState, p: PhysicalParams) -> FieldState:
    """Linearized tendencies written directly from the equations."""
    g = state.grid
    k = g.k
    ik = 1j * k
    u, j1 = state.u_hat, state.j1_hat
    div_u = np.sum(ik * u, axis=0)
    div_j1 = np.sum(ik * j1, axis=0)
    lm = p.ell * p.em
    db = -div_u
    du = -p.mu * g.k2 * u + (p.lam + p.mu) * ik * div_u - ik * state.b_hat + (lm / p.dim) * j1
    dj0 = (p.ell * (state.b_hat - state.j0_hat) - div_j1 / p.dim) / p.eps
    dj1 = (-ik * state.j0_hat - lm * j1) / p.eps
    return FieldState(g, db, du, dj0, dj1, state.t)


# ---------------------------------------------------------------------------
# nonlinear remainder


@dataclass
class _Physical:
    b: np.ndarray
    u: np.ndarray
    grad_b: np.ndarray
    grad_u: np.ndarray  # grad_u[i, j] = d_j u_i
    div_u: np.ndarray
    lame_u: np.ndarray  # mu Lap u + (lam + mu) grad div u


def _physical(grid: TorusGrid, b_hat, u_hat, p: PhysicalParams) -> _Physical:
    ik = 1j * grid.k
    f = grid.ifft
    div_hat = np.sum(ik * u_hat, axis=0)
    lame_hat = -p.mu * grid.k2 * u_hat + (p.lam + p.mu) * ik * div_hat
    grad_u = np.stack([f(ik[None, j] * u_hat) for j in range(grid.dim)], axis=1)
    return _Physical(f(b_hat), f(u_hat), f(ik * b_hat), grad_u, f(div_hat), f(lame_hat))


def _convection(ph: _Physical):
    adv_b = np.sum(ph.u * ph.grad_b, axis=0)
    adv_u = np.einsum("j...,ij...->i...", ph.u, ph.grad_u)
    return adv_b, adv_u


def nonlinear_rhs(state: FieldState, p: PhysicalParams, fns: CouplingFunctions):
    """Explicit tendencies ``(db, du)`` of the full system (spectral, dealiased)."""
    g = state.grid
    ph = _physical(g, state.b_hat, state.u_hat, p)
    adv_b, adv_u = _convection(ph)
    b = ph.b
    nb = -adv_b - fns(1, b) * ph.div_u
    nu_ = -adv_u + fns(2, b) * ph.lame_u - fns(3, b) * ph.grad_b
    if state.j1_hat is not None:
        nu_ = nu_ + (p.ell * p.em / p.dim) * fns(4, b) * g.ifft(state.j1_hat)
    return g.dealias(g.fft(nb)), g.dealias(g.fft(nu_))


def rhs_split(state: FieldState, p: PhysicalParams, fns: CouplingFunctions):
    """``(linear tendency, explicit remainder)`` of the full system."""
    state.check_finite()
    lin = linear_rhs(state, p)
    db, du = nonlinear_rhs(state, p, fns)
    zero = np.zeros_like(state.b_hat)
    rem = FieldState(state.grid, db, du, zero, np.zeros_like(state.u_hat), state.t)
    for name, a in rem.items():
        if not np.all(np.isfinite(a)):
            raise NaNDetected(name)
    return lin, rem


def rk4_fluid(state: FieldState, dt: float, rhs: Callable, project: Callable | None = None) -> FieldState:
    """Classical RK4 on ``(b, u)`` with the other fields frozen."""

    def shifted(s, kb, ku, h):
        out = s.replace_fluid(s.b_hat + h * kb, s.u_hat + h * ku)
        return project(out) if project is not None else out

    k1 = rhs(state)
    k2 = rhs(shifted(state, *k1, dt / 2))
    k3 = rhs(shifted(state, *k2, dt / 2))
    k4 = rhs(shifted(state, *k3, dt))
    b = state.b_hat + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    u = state.u_hat + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    out = state.replace_fluid(b, u)
    return project(out) if project is not None else out


def max_stable_dt(state: FieldState, p: PhysicalParams, fns: CouplingFunctions, cfl: float = 0.5) -> float:
    """Step bound for the explicit remainder (the linear part has none)."""
    g = state.grid
    b, u = state.b, state.u
    kmax = g.kmax
    speed = np.abs(u).max() + np.abs(fns(1, b)).max() + np.abs(fns(3, b)).max()
    diff = np.abs(fns(2, b)).max() * (p.mu + abs(p.lam + p.mu))
    bounds = [math.inf]
    if speed > 0:
        bounds.append(cfl / (kmax * speed))
    if diff > 0:
        bounds.append(2.5 * cfl / (kmax * kmax * diff))
    return min(bounds)


def imex_step(state: FieldState, dt: float, scheme: Scheme, linear: Callable, half_linear: Callable | None,
              rhs: Callable | None, project: Callable | None = None) -> FieldState:
    """Lie (IMEX1) or Strang (IMEX2) composition of exact-linear and RK4-nonlinear flows."""
    t0 = state.t
    if rhs is None:
        out = linear(state)
    elif Scheme(scheme) is Scheme.IMEX1:
        out = rk4_fluid(linear(state), dt, rhs, project)
    else:
        out = half_linear(rk4_fluid(half_linear(state), dt, rhs, project))
    out.t = t0 + dt
    return out


def _check_step(state: FieldState):
    state.check_finite()
    bmax = float(np.abs(state.b).max())
    if bmax >= 1:
        raise StepRejected(f"max|b| = {bmax:.3g} >= 1 at t={state.t:.6g}")


class FullSystem:
    """Stepper for the full radiative system with a fixed step size."""

    def __init__(self, grid: TorusGrid, p: PhysicalParams, fns: CouplingFunctions, cfg: SolverConfig):
        self.grid, self.p, self.fns, self.cfg = grid, p, fns, cfg
        self.linear = LinearPropagator(grid, p, cfg.dt)
        self.half = LinearPropagator(grid, p, cfg.dt / 2) if cfg.scheme is Scheme.IMEX2 else None
        active = cfg.nonlinear_on and not fns.is_zero
        self.rhs = (lambda s: nonlinear_rhs(s, p, fns)) if active else None

    def step(self, state: FieldState) -> FieldState:
        out = imex_step(state, self.cfg.dt, self.cfg.scheme, self.linear, self.half, self.rhs)
        _check_step(out)
        return out


def step_imex(state: FieldState, cfg: SolverConfig, p: PhysicalParams, fns: CouplingFunctions) -> FieldState:
    """One step of the full system (builds the propagators; use :func:`simulate` for runs)."""
    return FullSystem(state.grid, p, fns, cfg).step(state)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list
    meta: dict = field(default_factory=dict)

    @property
    def grid(self) -> TorusGrid:
        return self.snapshots[0].grid

    def field(self, name: str) -> np.ndarray:
        """Stacked spectral coefficients of one field, time first."""
        return np.stack([getattr(s, name + "_hat") for s in self.snapshots])

    def at(self, times, name: str) -> np.ndarray:
        """Cubic-in-time interpolation of a field's coefficients."""
        data = self.field(name)
        if len(self.times) < 4:
            idx = [int(np.argmin(np.abs(self.times - t))) for t in np.atleast_1d(times)]
            return data[idx]
        return CubicSpline(self.times, data, axis=0)(times)


def _preflight(state: FieldState, p: PhysicalParams, fns: CouplingFunctions, cfg: SolverConfig):
    if cfg.smallness is not None:
        amp = max(float(np.abs(state.b).max()), float(np.abs(state.u).max()))
        if amp > cfg.smallness * (1 + 1e-12):
            raise PreconditionViolated(f"initial amplitude {amp:.3g} exceeds smallness guard {cfg.smallness}")
    if cfg.nonlinear_on and not fns.is_zero:
        bound = max_stable_dt(state, p, fns, cfg.cfl)
        if cfg.dt > bound:
            raise StepRejected(f"dt={cfg.dt} exceeds the explicit stability bound {bound:.3g}")


def run(stepper, state: FieldState, cfg: SolverConfig) -> Trajectory:
    state = state.copy()
    times, snaps = [state.t], [state.copy()]
    for i in range(1, cfg.n_steps + 1):
        state = stepper.step(state)
        if i % cfg.record_every == 0 or i == cfg.n_steps:
            times.append(state.t)
            snaps.append(state.copy())
    return Trajectory(np.array(times), snaps)


def simulate(state: FieldState, cfg: SolverConfig, p: PhysicalParams, fns: CouplingFunctions) -> Trajectory:
    """Integrate the full system from ``state`` up to ``cfg.t_end``."""
    _preflight(state, p, fns, cfg)
    traj = run(FullSystem(state.grid, p, fns, cfg), state, cfg)
    traj.meta.update(system="full", params=params_dict(p), slopes=fns.slopes,
                     scheme=cfg.scheme.value, dt=cfg.dt, nonlinear_on=cfg.nonlinear_on)
    return traj


def params_dict(p: PhysicalParams) -> dict:
    return {"eps": p.eps, "ell": p.ell, "ell_s": p.ell_s, "mu": p.mu, "lam": p.lam, "dim": p.dim}


# ---------------------------------------------------------------------------
# initial data


def random_state(grid: TorusGrid, seed: int, amplitude: float = 0.01, k_cut: float = 4.0,
                 j0: bool = True, j1: bool = True, j1_zero: bool = False) -> FieldState:
    """Band-limited random mean-zero data with ``max |field| = amplitude`` per field."""
    rng = np.random.default_rng(seed)
    band = (grid.k2 <= k_cut * k_cut) & (grid.k2 > 0)

    def one(shape_prefix=()):
        f = rng.standard_normal(shape_prefix + grid.shape)
        fh = grid.fft(f) * band
        phys = grid.ifft(fh)
        return fh * (amplitude / np.abs(phys).max())

    b = one()
    u = one((grid.dim,))
    j0h = one() if j0 else None
    j1h = one((grid.dim,)) if j1 else None
    if j1 and j1_zero:
        j1h = np.zeros_like(j1h)
    return FieldState(grid, b, u, j0h, j1h)


# ---------------------------------------------------------------------------
# diagnostics


def diagnostics(state: FieldState, p: PhysicalParams, regime: RegimeLabel | None = None) -> dict:
    """Corrector fluxes, energies, means and the regime norm of one state."""
    g = state.grid
    ik = 1j * g.k
    out = {"t": state.t}
    corner = (Ellipsis,) + (0,) * g.dim
    for name, a in state.items():
        out[f"l2_{name}"] = g.l2(a)
        mean = a[corner].real / g.n_points ** g.dim
        out[f"mean_{name}"] = mean.tolist() if np.ndim(mean) else float(mean)
    if state.j0_hat is not None:
        div_u = np.sum(ik * state.u_hat, axis=0)
        out["l2_frak_j0"] = g.l2(state.j0_hat - state.b_hat - (p.eps / p.ell) * div_u)
    if state.j1_hat is not None and state.j0_hat is not None:
        out["l2_frak_j1"] = g.l2(frak_combinations(state, p)[1]) if p.ell_s > 0 else math.nan
        out["l2_Pj1"] = g.l2(state.j1_free)
    if regime is not None and regime.kind is not Regime.NEGLIGIBLE_RADIATION:
        out["x_norm"] = dn.xy_norm_snapshot(state.spectra(), p, regime)
    return out


def frak_combinations(state: FieldState, p: PhysicalParams):
    """Spectral coefficients of the two corrector combinations in original variables."""
    ik = 1j * state.grid.k
    div_u = np.sum(ik * state.u_hat, axis=0)
    frak0 = state.j0_hat - state.b_hat - (p.eps / p.ell) * div_u
    frak1 = state.j1_hat + ik * state.j0_hat / (p.ell * p.em) - ik * state.b_hat / (p.ell * p.ell_s * p.em)
    return frak0, frak1


# ---------------------------------------------------------------------------
# persistence


def save_trajectory(traj: Trajectory, directory) -> Path:
    """Write each field as little-endian float64 physical arrays plus ``meta.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = traj.grid
    arrays = {}
    for name in ("b", "u", "j0", "j1"):
        if getattr(traj.snapshots[0], name + "_hat") is None:
            continue
        data = np.stack([getattr(s, name) for s in traj.snapshots]).astype("<f8")
        data.tofile(d / f"{name}.bin")
        arrays[name] = list(data.shape)
    meta = dict(traj.meta)
    meta.update(grid={"dim": g.dim, "n_points": g.n_points}, times=[float(t) for t in traj.times],
                arrays=arrays, dtype="<f8", order="C")
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return d


def load_trajectory(directory) -> Trajectory:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    grid = TorusGrid(meta["grid"]["dim"], meta["grid"]["n_points"])
    fields = {name: np.fromfile(d / f"{name}.bin", dtype="<f8").reshape(shape)
              for name, shape in meta["arrays"].items()}
    snaps = []
    for i, t in enumerate(meta["times"]):
        get = lambda n: None if n not in fields else fields[n][i]
        snaps.append(FieldState.from_physical(grid, get("b"), get("u"), get("j0"), get("j1"), t))
    return Trajectory(np.array(meta["times"]), snaps, meta)
