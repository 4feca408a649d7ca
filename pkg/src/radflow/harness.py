"""Epsilon-family experiments: run members and the matching limit, measure errors, fit rates."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dyadic_norms as dn
from .errors import DegenerateFit, RadflowError, ValidationError
from .limit_systems import LimitFamily, LimitKind, compatibility_project, simulate_limit
from .params import CouplingFunctions, EpsilonFamily, PhysicalParams, Regime, RegimeLabel, classify_regime
from .spectral_solver import (
    FieldState,
    SolverConfig,
    TorusGrid,
    Trajectory,
    random_state,
    save_trajectory,
    simulate,
)

NOISE_FLOOR = 1e-15
CSV_COLUMNS = ("eps", "err_b", "err_u", "err_j0", "j1_norm", "predicted_scale")


@dataclass(frozen=True)
class InitialData:
    """Deterministic initial data shared by every family member.

    ``mode`` selects a single Fourier mode ``(k, amplitude)`` in ``b`` instead
    of band-limited random data.
    """

    seed: int = 0
    amplitude: float = 0.01
    k_cut: float = 4.0
    mode: tuple | None = None

    def build(self, grid: TorusGrid) -> FieldState:
        if self.mode is None:
            return random_state(grid, self.seed, self.amplitude, self.k_cut, j1_zero=True)
        wave, amp = self.mode
        x = grid.coords()
        phase = sum(int(w) * xi for w, xi in zip(wave, x))
        zeros = np.zeros(grid.shape)
        b = amp * np.cos(phase)
        return FieldState.from_physical(grid, b, np.stack([zeros] * grid.dim), b.copy(),
                                        np.stack([zeros] * grid.dim))


@dataclass
class ExperimentPlan:
    fam: EpsilonFamily
    regime: RegimeLabel | None = None
    data: InitialData = field(default_factory=InitialData)
    grid: TorusGrid = field(default_factory=lambda: TorusGrid(2, 32))
    cfg: SolverConfig = field(default_factory=lambda: SolverConfig(dt=0.01, t_end=2.0, nonlinear_on=False))
    fns: CouplingFunctions = field(default_factory=CouplingFunctions.zero)
    workers: int = 1

    def __post_init__(self):
        if self.regime is None:
            self.regime = classify_regime(self.fam)

    @property
    def limit_kind(self) -> LimitKind:
        return LimitKind.from_regime(self.regime)

    @property
    def limit_params(self) -> PhysicalParams:
        # the limit only reads viscosities and dimension; the last member carries them
        return self.fam[len(self.fam) - 1]

    def initial_state(self) -> FieldState:
        """Well-prepared data: ``j1 = 0`` and, for Poisson, ``j0`` on the constraint."""
        s = self.data.build(self.grid)
        kind = self.limit_kind
        if kind.family is LimitFamily.POISSON:
            j0 = compatibility_project(s.b_hat, self.limit_params, kind.m, self.grid)
            s = s.replace_fluid(s.b_hat, s.u_hat, j0)
        return s


@dataclass
class FamilyRun:
    plan: ExperimentPlan
    members: list  # Trajectory or None per member
    limit: Trajectory | None
    failures: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def run_family(plan: ExperimentPlan, out_dir=None) -> FamilyRun:
    """Run every member and the limit system; failures are recorded, not raised."""
    start = plan.initial_state()
    failures: dict = {}

    def member(i):
        try:
            return simulate(start, plan.cfg, plan.fam[i], plan.fns)
        except RadflowError as exc:
            failures[f"member_{i:02d}"] = f"{type(exc).__name__}: {exc}"
            return None

    n = len(plan.fam)
    if plan.workers > 1:
        with ThreadPoolExecutor(plan.workers) as pool:
            members = list(pool.map(member, range(n)))
    else:
        members = [member(i) for i in range(n)]
    try:
        limit = simulate_limit(start, plan.limit_kind, plan.cfg, plan.limit_params, plan.fns)
    except RadflowError as exc:
        failures["limit"] = f"{type(exc).__name__}: {exc}"
        limit = None
    result = FamilyRun(plan, members, limit, failures)
    if out_dir is not None:
        persist_family(result, out_dir)
    return result


def persist_family(result: FamilyRun, out_dir) -> Path:
    d = Path(out_dir)
    for i, tr in enumerate(result.members):
        if tr is not None:
            tr.meta["eps"] = float(result.plan.fam[i].eps)
            save_trajectory(tr, d / f"member_{i:02d}")
    if result.limit is not None:
        save_trajectory(result.limit, d / "limit")
    return d


# ---------------------------------------------------------------------------
# metrics


def split_norm_blocks(blocks: dict[int, float], dim: int) -> float:
    """Split dyadic norm in ``B^{n/2-1} + B^{n/2}``: blocks with ``2^j <= 1`` go to the first space."""
    s0 = dim / 2 - 1
    return sum((2.0 ** (j * s0) if j <= 0 else 2.0 ** (j * (s0 + 1))) * v for j, v in blocks.items())


def predicted_scale(p: PhysicalParams, regime: RegimeLabel) -> float:
    return p.ell if regime.kind is Regime.POISSON else p.eps


@dataclass(frozen=True)
class J1Smallness:
    value: float
    predicted_scale: float

    @property
    def ratio(self) -> float:
        return self.value / self.predicted_scale if self.predicted_scale > 0 else math.nan


def j1_smallness(traj: Trajectory, p: PhysicalParams, regime: RegimeLabel) -> J1Smallness:
    """Trapezoidal time integral of the split dyadic norm of ``j1``."""
    g = traj.grid
    vals = []
    for s in traj.snapshots:
        if s.j1_parts is None:
            vals.append(0.0)
            continue
        comps = [g.full_spectrum(c) for c in s.j1_hat]
        vals.append(split_norm_blocks(dn.lp_block_norms(comps), g.dim))
    value = float(np.trapezoid(vals, traj.times)) if len(vals) > 1 else 0.0
    return J1Smallness(value, predicted_scale(p, regime))


def sup_l2_errors(traj: Trajectory, limit: Trajectory, names=("b", "u", "j0")) -> dict[str, float]:
    """Sup over the shared time window of the L2 distance, with cubic time interpolation."""
    t_end = min(traj.times[-1], limit.times[-1])
    times = limit.times[limit.times <= t_end + 1e-12]
    g = traj.grid
    out = {}
    for name in names:
        if getattr(limit.snapshots[0], name + "_hat") is None or getattr(traj.snapshots[0], name + "_hat") is None:
            out[name] = math.nan
            continue
        same = len(times) == len(traj.times) and np.allclose(times, traj.times, atol=1e-12)
        a = traj.field(name) if same else traj.at(times, name)
        b = limit.field(name)[: len(times)]
        out[name] = max(g.l2(x - y) for x, y in zip(a, b))
    return out


def pj1_decay_error(traj: Trajectory, p: PhysicalParams) -> float:
    """Max relative deviation of ``|P j1(t)| / |P j1(0)|`` from its exact exponential."""
    g = traj.grid
    base = g.l2(traj.snapshots[0].j1_free)
    rate = p.ell * p.em / p.eps
    t0 = traj.times[0]
    worst = 0.0
    for t, s in zip(traj.times, traj.snapshots):
        ratio = g.l2(s.j1_free) / base
        worst = max(worst, abs(ratio / math.exp(-rate * (t - t0)) - 1))
    return worst


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float


def fit_rate(points) -> RateFit:
    """Least-squares slope of ``log err`` against ``log eps``; residual is the RMS misfit."""
    pts = [(float(e), float(r)) for e, r in points]
    if len(pts) < 3:
        raise DegenerateFit(f"need at least 3 points, got {len(pts)}")
    eps, err = np.array(pts).T
    if np.any(~np.isfinite(err)) or np.any(err <= NOISE_FLOOR):
        raise DegenerateFit(f"errors at or below the noise floor {NOISE_FLOOR:g}: {err.tolist()}")
    if np.any(eps <= 0):
        raise ValidationError("eps values must be positive")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return RateFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))))


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


# ---------------------------------------------------------------------------
# report


@dataclass
class ConvergenceReport:
    regime: RegimeLabel
    rows: list  # dicts keyed by CSV_COLUMNS
    slopes: dict
    failures: dict = field(default_factory=dict)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        ratio = self.column("j1_norm") / self.column("predicted_scale") if self.rows else np.array([])
        return {
            "regime": self.regime.kind.value,
            "kappa": self.regime.kappa,
            "m": None if self.regime.m is None or math.isinf(self.regime.m) else self.regime.m,
            "slopes": self.slopes,
            "j1_scale_ratio": [_fmt_json(x) for x in ratio],
            "partial": self.partial,
            "failures": self.failures,
            "members": len(self.rows),
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        c, j = d / "convergence.csv", d / "convergence.json"
        c.write_text(self.to_csv(), newline="")
        j.write_text(json.dumps(self.summary(), indent=2, sort_keys=True))
        return c, j


def _fmt(x) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _fmt_json(x):
    return None if not math.isfinite(x) else float(x)


def convergence_report(run: FamilyRun) -> ConvergenceReport:
    plan = run.plan
    rows = []
    for i, tr in enumerate(run.members):
        p = plan.fam[i]
        if tr is None:
            continue
        errs = sup_l2_errors(tr, run.limit) if run.limit is not None else {}
        sm = j1_smallness(tr, p, plan.regime)
        rows.append({"eps": p.eps, "err_b": errs.get("b", math.nan), "err_u": errs.get("u", math.nan),
                     "err_j0": errs.get("j0", math.nan), "j1_norm": sm.value,
                     "predicted_scale": sm.predicted_scale})
    slopes = {}
    for col in ("err_b", "err_u", "err_j0", "j1_norm"):
        pts = [(r["eps"], r[col]) for r in rows if math.isfinite(r[col])]
        try:
            fit = fit_rate(pts)
            slopes[col] = {"slope": fit.slope, "residual": fit.residual}
        except DegenerateFit as exc:
            slopes[col] = {"slope": None, "residual": None, "note": str(exc)}
    if rows:
        pts = [(r["predicted_scale"], r["j1_norm"]) for r in rows]
        try:
            fit = fit_rate(pts)
            slopes["j1_norm_vs_scale"] = {"slope": fit.slope, "residual": fit.residual}
        except DegenerateFit as exc:
            slopes["j1_norm_vs_scale"] = {"slope": None, "residual": None, "note": str(exc)}
    return ConvergenceReport(plan.regime, rows, slopes, dict(run.failures))


def run_experiment(plan: ExperimentPlan, out_dir=None) -> tuple[FamilyRun, ConvergenceReport]:
    run = run_family(plan, out_dir)
    report = convergence_report(run)
    if out_dir is not None:
        report.write(out_dir)
    return run, report
