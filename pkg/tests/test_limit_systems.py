import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from radflow import PhysicalParams
from radflow.dyadic_norms import FieldSpectrum
from radflow.errors import ValidationError
from radflow.limit_systems import (LimitFamily, LimitKind, acoustic_eigenvalues, compatibility_project,
                                   constraint_residual, limit_mode_matrix, simulate_limit, solve_elliptic_j0,
                                   step_limit)
from radflow.params import CouplingFunctions, Regime, RegimeLabel
from radflow.spectral_solver import FieldState, SolverConfig, TorusGrid, random_state

P = PhysicalParams(eps=0.1, ell=0.3, ell_s=1.0, mu=0.5, lam=0.0)  # nu = 1, n = 2
ZERO = CouplingFunctions.zero()
LINEAR = CouplingFunctions.linear()


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(2, 32)


def test_kind_validation():
    with pytest.raises(ValidationError):
        LimitKind.noneq(1.0, 1.0)
    with pytest.raises(ValidationError):
        LimitKind.noneq(2.0, math.inf)
    with pytest.raises(ValidationError):
        LimitKind.poisson(0.0)
    assert LimitKind.degenerate(3.0).relaxation_rate(P) == pytest.approx(1.5)


def test_from_regime_mapping():
    assert LimitKind.from_regime(RegimeLabel(Regime.EQUILIBRIUM)).family is LimitFamily.MODPRESSURE
    assert LimitKind.from_regime(RegimeLabel(Regime.NEGLIGIBLE_RADIATION)).family is LimitFamily.BAROTROPIC
    k = LimitKind.from_regime(RegimeLabel(Regime.POISSON, m=2.0, ell=0.5))
    assert (k.family, k.m, k.ell) == (LimitFamily.POISSON, 2.0, 0.5)


def test_elliptic_examples():
    shape = (16, 16)
    b = FieldSpectrum.from_modes(shape, {(1, 0): 1.0, (0, 0): 0.7})
    j0 = solve_elliptic_j0(b, P, 2.0)
    assert j0.amplitudes[1, 0] == pytest.approx(0.8, rel=1e-15)
    assert j0.mean == b.mean
    res = -P.nu ** 2 * (-b.radius ** 2) * j0.amplitudes + 2.0 * P.dim * (j0.amplitudes - b.amplitudes)
    assert np.abs(res).max() < 1e-12
    wider = solve_elliptic_j0(b, P, 2.0, ell=1.0)
    assert wider.amplitudes[1, 0] == pytest.approx(6 / 7, rel=1e-15)


def test_elliptic_requires_grid_for_raw_arrays():
    with pytest.raises(ValidationError):
        solve_elliptic_j0(np.zeros((4, 3)), P, 1.0)


def test_compatibility_examples(grid, rng):
    z = np.zeros(grid.spectral_shape, dtype=complex)
    assert not np.any(compatibility_project(z, P, 1.5, grid))
    const = FieldState.from_physical(grid, np.full(grid.shape, 0.25), np.zeros((2,) + grid.shape)).b_hat
    assert np.allclose(compatibility_project(const, P, 1.5, grid), const)
    b = random_state(grid, 3).b_hat
    assert np.array_equal(compatibility_project(b, P, 1.5, grid), solve_elliptic_j0(b, P, 1.5, grid))


def test_zero_state_stays_zero(grid):
    cfg = SolverConfig(dt=0.05, t_end=0.5)
    for kind in (LimitKind.noneq(2.0, 1.0), LimitKind.degenerate(2.0), LimitKind.poisson(1.0),
                 LimitKind.modified_pressure(), LimitKind.barotropic()):
        tr = simulate_limit(FieldState.zeros(grid), kind, cfg, P, LINEAR)
        assert all(not np.any(a) for s in tr.snapshots for _, a in s.items())


def test_degenerate_relaxation_rate(grid):
    kind = LimitKind.degenerate(3.0)
    zero = np.zeros(grid.shape)
    s = FieldState.from_physical(grid, np.full(grid.shape, 0.05), np.stack([zero, zero]), zero)
    tr = simulate_limit(s, kind, SolverConfig(dt=0.1, t_end=3.0, nonlinear_on=False), P, ZERO)
    a = kind.relaxation_rate(P)
    for t, snap in zip(tr.times, tr.snapshots):
        gap = snap.b.mean() - snap.j0.mean()
        assert gap == pytest.approx(0.05 * math.exp(-a * t), rel=1e-12)


def test_degenerate_gap_decays_monotonically(grid):
    # spatially uniform data keeps u = 0, so the gap obeys the scalar relaxation law
    zero = np.zeros(grid.shape)
    s = FieldState.from_physical(grid, np.full(grid.shape, 0.02), np.stack([zero, zero]), np.full(grid.shape, -0.03))
    tr = simulate_limit(s, LimitKind.degenerate(2.5), SolverConfig(dt=0.05, t_end=2.0, nonlinear_on=False), P, ZERO)
    gaps = [np.abs(snap.j0 - snap.b).max() for snap in tr.snapshots]
    assert np.all(np.diff(gaps) < 0)
    assert all(np.abs(snap.u).max() == 0 for snap in tr.snapshots)


def _single_mode(grid, wave, amp):
    x, y = grid.coords()
    zero = np.zeros_like(x)
    b = amp * np.cos(wave[0] * x + wave[1] * y)
    return FieldState.from_physical(grid, b, np.stack([zero, zero]), b.copy())


@pytest.mark.parametrize("kind", [LimitKind.modified_pressure(), LimitKind.barotropic(), LimitKind.poisson(1.5),
                                  LimitKind.noneq(2.0, 1.0), LimitKind.degenerate(2.0)])
def test_single_mode_matches_eigen_solution(grid, kind):
    wave, amp = (2, 1), 0.01
    r = math.hypot(*wave)
    s0 = _single_mode(grid, wave, amp)
    tr = simulate_limit(s0, kind, SolverConfig(dt=0.05, t_end=4.0, record_every=10, nonlinear_on=False), P, ZERO)
    k = limit_mode_matrix(kind, r, P)
    lam, vec = np.linalg.eig(-k)
    x0 = np.array([amp, 0.0] + ([amp] if kind.evolves_j0 else []))
    coef = np.linalg.solve(vec, x0)
    x, y = grid.coords()
    phase = wave[0] * x + wave[1] * y
    for t, snap in zip(tr.times, tr.snapshots):
        bt = (vec @ (coef * np.exp(lam * t)))[0].real
        assert np.abs(snap.b - bt * np.cos(phase)).max() < 1e-12


def test_modified_pressure_acoustics():
    kind = LimitKind.modified_pressure()
    for r in (0.5, 1.0, 3.0):
        ev = np.sort_complex(np.linalg.eigvals(limit_mode_matrix(kind, r, P)))
        assert np.allclose(ev, acoustic_eigenvalues(r, P, 1 + 1 / P.dim))
    # underdamped at r = 1: frequency sqrt(r^2 (1 + 1/n) - (nu r^2 / 2)^2)
    ev = acoustic_eigenvalues(1.0, P, 1.5)
    assert abs(ev.imag).max() == pytest.approx(math.sqrt(1.5 - 0.25))


def test_noneq_mode_matrix_against_direct_ode():
    kind = LimitKind.noneq(2.0, 0.7)
    r, n, nu = 1.7, P.dim, P.nu
    a = kind.kappa / (n * nu)

    def rhs(_, x):
        b, d, j0 = x
        return [-r * d, r * b - nu * r * r * d + r * j0 / n,
                -a * (j0 - b + nu * nu * r * r / (n * kind.m) * j0)]

    x0 = np.array([0.3, -0.1, 0.5])
    sol = solve_ivp(rhs, (0, 2), x0, method="DOP853", rtol=1e-12, atol=1e-14)
    from scipy.linalg import expm
    assert np.allclose(expm(-2 * limit_mode_matrix(kind, r, P)) @ x0, sol.y[:, -1], atol=1e-10)


def test_poisson_constraint_along_nonlinear_run(grid):
    kind = LimitKind.poisson(1.5)
    s = random_state(grid, 8, amplitude=0.02)
    tr = simulate_limit(s, kind, SolverConfig(dt=0.02, t_end=1.0, record_every=10), P, LINEAR)
    assert max(constraint_residual(snap, P, kind) for snap in tr.snapshots) < 1e-10
    assert tr.meta["kind"] == "poisson" and tr.meta["m"] == 1.5


def test_step_limit_drops_j1(grid):
    s = random_state(grid, 2)
    out = step_limit(s.replace_fluid(s.b_hat, s.u_hat), LimitKind.noneq(2.0, 1.0),
                     SolverConfig(dt=0.01), P, LINEAR)
    assert out.j1_hat is None and out.j0_hat is not None
    out = step_limit(s, LimitKind.modified_pressure(), SolverConfig(dt=0.01), P, LINEAR)
    assert out.j0_hat is None
