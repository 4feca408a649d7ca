"""Acceptance suite: one PASS/FAIL line per criterion, repeated in the pytest terminal summary."""

import math
import time

import numpy as np
import pytest
import scipy.linalg

from conftest import record_acceptance
from radflow import PhysicalParams
from radflow.errors import DissipationViolation
from radflow.harness import ExperimentPlan, InitialData, pj1_decay_error, run_experiment, strictly_decreasing
from radflow.limit_systems import LimitKind, constraint_residual, simulate_limit
from radflow.linear_modes import (Approach, ModeState, eigen_spectrum, hurwitz_coefficients,
                                  midfreq_dissipation_check, midfreq_threshold, mode_matrices, reduced_block,
                                  routh_hurwitz_reduced)
from radflow.params import CouplingFunctions, EpsilonFamily, stability_margin
from radflow.spectral_solver import SolverConfig, TorusGrid, random_state, simulate
from radflow.toy_ode import (Toy2x2, ToyCoefficients, build_class_E, det_I_plus_rhoP, transformed_system,
                             max_decay_ratio_2x2)

LADDER = (0.1, 0.05, 0.025, 0.0125)
SWEEP_CFG = SolverConfig(dt=0.01, t_end=5.0, nonlinear_on=False, record_every=1)


def check(number, ok, detail):
    record_acceptance(number, ok, detail)
    assert ok, detail


def test_criterion_01_stability_margin_predicts_spectrum():
    start = time.perf_counter()
    eps = np.logspace(-3, 0, 20)
    ell = np.logspace(-3, 1, 20)
    ell_s = np.concatenate([[0.0], np.logspace(-2, 3, 19)])
    agree = disagree = banded = 0
    for e in eps:
        for l in ell:
            for s in ell_s:
                p = PhysicalParams(float(e), float(l), float(s))
                margin = stability_margin(p)
                if abs(margin) <= 1e-8:
                    banded += 1
                    continue
                # "small rho" is measured against the first cut-off of the spectrum
                cutoff = p.ell_tilde * min(1 / p.eps, p.em)
                m = mode_matrices(cutoff * np.logspace(-5, 0, 50), p)
                lam = np.linalg.eigvals(m)
                scaled = (lam.real / np.linalg.norm(m, axis=(1, 2))[:, None]).min()
                if (margin > 0) == (scaled > -1e-13):
                    agree += 1
                else:
                    disagree += 1
    elapsed = time.perf_counter() - start
    ok = disagree == 0 and elapsed < 10
    check(1, ok, f"agreement {agree}/{agree + disagree} ({banded} points inside the margin band), {elapsed:.1f}s")


def test_criterion_02_routh_hurwitz_matches_eigensolver():
    start = time.perf_counter()
    mismatches = total = 0
    for n in (2, 3):
        for kappa in (1.1, 2.0, 5.0):
            for rho in np.linspace(0.1, 10, 20):
                stable = eigen_spectrum(reduced_block(rho, kappa, n)).eigenvalues.real.min() > 0
                mismatches += routh_hurwitz_reduced(rho, kappa, n) != stable
                total += 1
    closed = all(hurwitz_coefficients(r, 1.0, n).minor2 == (1 + 1.0 / n) * (r * r) * (r * r)
                 for n in (2, 3) for r in np.linspace(0.1, 10, 20))
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and closed and elapsed < 1
    check(2, ok, f"{total - mismatches}/{total} agree, kappa=1 closed form exact: {closed}, {elapsed:.2f}s")


def test_criterion_03_exact_radiative_decay():
    start = time.perf_counter()
    g = TorusGrid(2, 64)
    p = PhysicalParams(eps=0.1, ell=0.3, ell_s=1.0)
    tr = simulate(random_state(g, 2, amplitude=0.02), SolverConfig(dt=0.01, t_end=5.0, record_every=10),
                  p, CouplingFunctions.linear())
    err = pj1_decay_error(tr, p)
    elapsed = time.perf_counter() - start
    check(3, err < 1e-8 and elapsed < 60, f"max relative error {err:.2e} over t in [0, 5], {elapsed:.1f}s")


def test_criterion_04_two_by_two_decay():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        a, c = np.exp(rng.uniform(math.log(0.2), math.log(5), 2))
        b = rng.uniform(-2, 2)
        d = b + math.exp(rng.uniform(math.log(0.2), math.log(5)))
        sys2 = Toy2x2(a, b, c, d)
        rho = 0.9 * sys2.rho_bound()
        x0, y0 = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        worst = max(worst, max_decay_ratio_2x2(sys2, rho, 100 / ((d - b) * rho * rho), 2000, x0, y0))
    elapsed = time.perf_counter() - start
    check(4, worst <= 1 + 1e-6 and elapsed < 10, f"max ratio {worst:.9f} over 100 draws, {elapsed:.2f}s")


def test_criterion_05_commutator_elimination():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    comm = det = sim = 0.0
    for approach in Approach:
        for _ in range(100):
            c = ToyCoefficients.random(rng)
            if approach is Approach.SECOND and abs(c.beta - c.gamma) < 1e-2:
                continue
            s = build_class_E(c, approach)
            comm = max(comm, s.commutator_residual() / max(1.0, np.abs(s.B1).max()))
            rho = rng.uniform(0, 2)
            dense = np.linalg.det(np.eye(4) + rho * s.P)
            det = max(det, abs(det_I_plus_rhoP(rho, c, approach) - dense) / max(1.0, abs(dense)))
            small = 0.5 / max(1.0, np.abs(s.P).sum(axis=1).max())
            sim = max(sim, transformed_system(small, s).similarity_error)
    elapsed = time.perf_counter() - start
    ok = comm < 1e-12 and det < 1e-12 and sim < 1e-9 and elapsed < 5
    check(5, ok, f"commutator {comm:.1e}, determinant {det:.1e}, similarity {sim:.1e}, both approaches, "
                 f"{elapsed:.2f}s")


def test_criterion_06_midfrequency_dissipation():
    start = time.perf_counter()
    p = PhysicalParams(eps=0.1, ell=0.3, ell_s=1.0)
    rng = np.random.default_rng(6)
    assert 4.0 > midfreq_threshold(2)
    worst = -math.inf
    failures = 0
    t = np.linspace(0, 5, 80)
    for _ in range(50):
        try:
            worst = max(worst, midfreq_dissipation_check(p, 2.0, ModeState.random(rng), t).max_violation)
        except DissipationViolation:
            failures += 1
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worst < 1e-8 and elapsed < 5
    check(6, ok, f"{50 - failures}/50 states nonincreasing, worst residual {worst:.1e}, {elapsed:.2f}s")


def _full_mode_generator(k, p):
    """6x6 linear generator of (b, u, j0, j1) at one wave vector of the 2-D system, from the equations."""
    a = np.zeros((6, 6), dtype=complex)
    ik = 1j * k
    lm = p.ell * p.em
    n = p.dim
    a[0, 1:3] = -ik
    a[1:3, 0] = -ik
    a[1:3, 1:3] = -p.mu * (k @ k) * np.eye(2) - (p.lam + p.mu) * np.outer(k, k)
    a[1:3, 4:6] = lm / n * np.eye(2)
    a[3, 0] = p.ell / p.eps
    a[3, 3] = -p.ell / p.eps
    a[3, 4:6] = -ik / (n * p.eps)
    a[4:6, 3] = -ik / p.eps
    a[4:6, 4:6] = -lm / p.eps * np.eye(2)
    return a


def test_criterion_07_linear_consistency():
    start = time.perf_counter()
    g = TorusGrid(2, 32)
    p = PhysicalParams(eps=0.1, ell=0.2, ell_s=2.0, mu=0.5, lam=0.1)
    s0 = random_state(g, 1, amplitude=0.01, k_cut=16)
    s1 = simulate(s0, SolverConfig(dt=0.25, t_end=1.0, nonlinear_on=False), p, CouplingFunctions.zero()).snapshots[-1]

    def vec(s, idx):
        sl = (slice(None),) + idx
        return np.concatenate([[s.b_hat[idx]], s.u_hat[sl], [s.j0_hat[idx]], s.j1_hat[sl]])

    worst = 0.0
    modes = 0
    for idx in np.ndindex(*g.spectral_shape):
        v0 = vec(s0, idx)
        ref = scipy.linalg.expm(_full_mode_generator(g.k[(slice(None),) + idx], p)) @ v0
        scale = np.abs(v0).max()
        if scale > 0:
            worst = max(worst, np.abs(vec(s1, idx) - ref).max() / scale)
        else:
            worst = max(worst, np.abs(vec(s1, idx)).max())
        modes += 1
    elapsed = time.perf_counter() - start
    check(7, worst < 1e-9 and elapsed < 30, f"max relative per-mode error {worst:.1e} on {modes} modes over unit "
                                            f"time, {elapsed:.1f}s")


@pytest.fixture(scope="module")
def noneq_sweep():
    fam = EpsilonFamily.nonequilibrium(LADDER, 2.0, 1.0)
    plan = ExperimentPlan(fam, data=InitialData(seed=7), grid=TorusGrid(2, 32), cfg=SWEEP_CFG)
    start = time.perf_counter()
    _, report = run_experiment(plan)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def poisson_sweep():
    fam = EpsilonFamily.poisson(LADDER, 1.0, power=0.5)
    plan = ExperimentPlan(fam, data=InitialData(seed=7), grid=TorusGrid(2, 32), cfg=SWEEP_CFG)
    start = time.perf_counter()
    _, report = run_experiment(plan)
    return report, time.perf_counter() - start


def test_criterion_08_j1_smallness(noneq_sweep, poisson_sweep):
    noneq, t1 = noneq_sweep
    poisson, t2 = poisson_sweep
    s_noneq = noneq.slopes["j1_norm"]["slope"]
    s_poisson = poisson.slopes["j1_norm_vs_scale"]["slope"]
    ok = abs(s_noneq - 1) <= 0.2 and abs(s_poisson - 1) <= 0.3 and t1 + t2 < 600
    check(8, ok, f"nonequilibrium slope vs eps {s_noneq:.3f}, Poisson slope vs L {s_poisson:.3f}, "
                 f"{t1 + t2:.1f}s")


def test_criterion_09_limit_errors_decrease(noneq_sweep):
    report, _ = noneq_sweep
    cols = {c: report.column(c) for c in ("err_b", "err_u", "err_j0")}
    ok = all(strictly_decreasing(v) for v in cols.values())
    detail = "; ".join(f"{c} " + ", ".join(f"{x:.2e}" for x in v) for c, v in cols.items())
    check(9, ok, detail)


def test_criterion_10_poisson_constraint():
    start = time.perf_counter()
    g = TorusGrid(2, 32)
    p = PhysicalParams(eps=0.01, ell=0.1, ell_s=100.0)
    kind = LimitKind.poisson(1.0)
    tr = simulate_limit(random_state(g, 10, amplitude=0.02), kind,
                        SolverConfig(dt=0.01, t_end=5.0, record_every=10), p, CouplingFunctions.linear())
    worst = max(constraint_residual(s, p, kind) for s in tr.snapshots)
    elapsed = time.perf_counter() - start
    check(10, worst < 1e-10 and elapsed < 60, f"max constraint residual {worst:.1e} over {len(tr.snapshots)} "
                                              f"snapshots, {elapsed:.1f}s")
