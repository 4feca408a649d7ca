"""Model ODE systems: the four-component class with commutator elimination,
and a damped 2x2 system with an explicit Lyapunov functional."""

from __future__ import annotations

import math
from itertools import permutations
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, solve_ivp
from scipy.linalg import expm

from .errors import DegenerateSplit, PreconditionViolated, SingularTransform, ValidationError
from .linear_modes import Approach


@dataclass(frozen=True)
class ToyCoefficients:
    """Positive coefficients of the model generator

        [[0,  rho, 0,     0    ],
         [-rho, rho^2, 0, -sigma],
         [-eta, 0,  beta,  alpha rho],
         [0,  0, -alpha rho, gamma]]
    """

    alpha: float
    beta: float
    gamma: float
    sigma: float
    eta: float

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "sigma", "eta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")

    @property
    def alpha_tilde(self) -> float:
        return self.alpha + self.sigma * self.eta / (self.beta * self.gamma)

    @property
    def coupling(self) -> float:
        """``alpha sigma eta / (beta gamma)``, the strength of the fluid-radiation loop."""
        return self.alpha * self.sigma * self.eta / (self.beta * self.gamma)

    @classmethod
    def from_params(cls, p) -> "ToyCoefficients":
        """Coefficients reproducing the radiative mode matrix for ``p``."""
        n, lt, em, eps = p.dim, p.ell_tilde, p.em, p.eps
        return cls(alpha=1 / (eps * math.sqrt(n)), beta=lt / eps, gamma=lt * em / eps,
                   sigma=lt * em / n, eta=math.sqrt(n) * lt / eps)

    @classmethod
    def random(cls, rng: np.random.Generator, low=0.2, high=5.0) -> "ToyCoefficients":
        return cls(*np.exp(rng.uniform(math.log(low), math.log(high), 5)))


def class_matrix(rho: float, c: ToyCoefficients) -> np.ndarray:
    return np.array([
        [0.0, rho, 0.0, 0.0],
        [-rho, rho * rho, 0.0, -c.sigma],
        [-c.eta, 0.0, c.beta, c.alpha * rho],
        [0.0, 0.0, -c.alpha * rho, c.gamma],
    ])


def u_transform(c: ToyCoefficients) -> np.ndarray:
    """Change of unknowns removing the order-one off-diagonal couplings."""
    t = np.eye(4)
    t[1, 3] = c.sigma / c.gamma
    t[2, 0] = -c.eta / c.beta
    return t


@dataclass(frozen=True)
class ToySystem:
    A0: np.ndarray
    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    P: np.ndarray
    approach: Approach
    coeffs: ToyCoefficients

    def generator(self, rho: float) -> np.ndarray:
        """``A0 + rho (A1 + B1) + rho^2 A2``, the transformed-unknown generator."""
        return self.A0 + rho * (self.A1 + self.B1) + rho * rho * self.A2

    def commutator_residual(self) -> float:
        return float(np.abs(self.A0 @ self.P - self.P @ self.A0 - self.B1).max())


def build_class_E(c: ToyCoefficients, approach=Approach.FIRST) -> ToySystem:
    approach = Approach(approach)
    a, be, ga, s, et = c.alpha, c.beta, c.gamma, c.sigma, c.eta
    at = c.alpha_tilde
    k = c.coupling
    a0 = np.diag([0.0, 0.0, be, ga])
    a2 = np.zeros((4, 4))
    a2[1, 1] = 1.0
    a2[1, 3] = -s / ga
    if approach is Approach.FIRST:
        a1 = np.array([[0, 1, 0, 0], [-1 - k, 0, 0, 0], [0, 0, 0, at], [0, 0, -a, 0]], dtype=float)
        b1 = -np.array([[0, 0, 0, s / ga], [0, 0, a * s / ga, 0],
                        [0, et / be, 0, 0], [a * et / be, 0, 0, 0]], dtype=float)
        p = np.array([[0, 0, 0, s / ga ** 2], [0, 0, a * s / (be * ga), 0],
                      [0, -et / be ** 2, 0, 0], [-a * et / (be * ga), 0, 0, 0]], dtype=float)
    else:
        if abs(be - ga) < 1e-12:
            raise DegenerateSplit("the second approach needs beta != gamma")
        a1 = np.zeros((4, 4))
        a1[0, 1] = 1.0
        a1[1, 0] = -1 - k
        b1 = np.array([[0, 0, 0, -s / ga], [0, 0, -a * s / ga, 0],
                       [0, -et / be, 0, at], [-a * et / be, 0, -a, 0]], dtype=float)
        # P = [[0, -B1^12 D^-1], [D^-1 B1^21, P22]] with D = diag(beta, gamma)
        dinv = np.diag([1 / be, 1 / ga])
        p = np.zeros((4, 4))
        p[:2, 2:] = -b1[:2, 2:] @ dinv
        p[2:, :2] = dinv @ b1[2:, :2]
        p[2:, 2:] = np.array([[0, at], [a, 0]]) / (be - ga)
    return ToySystem(a0, a1, b1, a2, p, approach, c)


def det_I_plus_rhoP(rho: float, c: ToyCoefficients, approach=Approach.FIRST) -> float:
    """Closed-form ``det(I + rho P)``."""
    approach = Approach(approach)
    k = c.coupling
    r2 = rho * rho
    first = (1 + k * r2 / c.beta ** 2) * (1 + k * r2 / c.gamma ** 2)
    if approach is Approach.FIRST:
        return first
    if abs(c.beta - c.gamma) < 1e-12:
        raise DegenerateSplit("the second approach needs beta != gamma")
    return first - r2 * c.alpha * c.alpha_tilde / (c.beta - c.gamma) ** 2


def a3_closed_form(c: ToyCoefficients) -> np.ndarray:
    """Cubic remainder matrix of the first approach in closed form."""
    a, be, ga, s, et = c.alpha, c.beta, c.gamma, c.sigma, c.eta
    k = c.coupling
    return k * np.array([
        [0, 1 / be ** 2, 0, -s / ga ** 3],
        [1 / ga - (1 + k) / ga ** 2, 0, 1 / et - a * s / (be ** 2 * ga), 0],
        [0, 0, 0, c.alpha_tilde / ga ** 2],
        [0, 0, -a / be ** 2, 0],
    ])


@dataclass(frozen=True)
class TransformedSystem:
    """V-equation generator and its pieces.

    ``generator = A0 + rho A1 + rho^2 X + rho^3 R (I + rho P)^-1`` with
    ``X = A2 + P B1 + [P, A1]`` and the exact cubic remainder ``R = P A2 - X P``.
    ``A3 = (P A0 - A1) P^2 + A2 P`` is reported as well; ``a3_form_gap`` is
    the distance between the generator and the variant whose cubic term is
    ``-rho^3 (I + rho P) A3 (I + rho P)^-1``, which is not a similarity.
    """

    generator: np.ndarray
    A3: np.ndarray
    remainder: np.ndarray
    similarity_error: float
    a3_form_gap: float


def transformed_system(rho: float, sys: ToySystem) -> TransformedSystem:
    """Generator of the eliminated unknowns ``V = (I + rho P) U``."""
    eye = np.eye(4)
    t = eye + rho * sys.P
    if abs(np.linalg.det(t)) < 1e-12:
        raise SingularTransform(f"I + rho P is singular at rho={rho}")
    a0, a1, b1, a2, p = sys.A0, sys.A1, sys.B1, sys.A2, sys.P
    tinv = np.linalg.inv(t)
    x = a2 + p @ b1 + (p @ a1 - a1 @ p)
    remainder = p @ a2 - x @ p
    a3 = (p @ a0 - a1) @ p @ p + a2 @ p
    quadratic = a0 + rho * a1 + rho ** 2 * x
    gen = quadratic + rho ** 3 * remainder @ tinv
    alt = quadratic - rho ** 3 * t @ a3 @ tinv
    ev_new = np.linalg.eigvals(gen)
    ev_old = np.linalg.eigvals(sys.generator(rho))
    err = _spectral_distance(ev_new, ev_old)
    return TransformedSystem(gen, a3, remainder, err, float(np.abs(gen - alt).max()))


def _spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max distance under the best matching of two small spectra."""
    scale = max(1.0, np.abs(b).max())
    best = min(max(abs(a[i] - b[j]) for i, j in enumerate(perm)) for perm in permutations(range(len(b))))
    return float(best / scale)


def tilde_nu(c: ToyCoefficients) -> float:
    """Effective low-frequency viscosity; positive iff the fluid block is stable."""
    return 1 - c.coupling * (1 / c.beta + 1 / c.gamma)


def small_rho_growth(c: ToyCoefficients, rhos) -> float:
    """Most negative real eigenvalue part of the class generator over ``rhos``."""
    return float(min(np.linalg.eigvals(class_matrix(r, c)).real.min() for r in rhos))


# ---------------------------------------------------------------------------
# 2x2 toy system


Forcing = Callable[[float], complex]


@dataclass(frozen=True)
class Toy2x2:
    """``X' + a rho Y - b rho^2 X = A``, ``Y' - c rho X + d rho^2 Y = B``."""

    a: float
    b: float
    c: float
    d: float
    forcing_A: Forcing | None = None
    forcing_B: Forcing | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0 and self.d - self.b > 0):
            raise ValidationError("need a > 0, c > 0 and d - b > 0")

    def rho_bound(self) -> float:
        s = abs(self.b + self.d)
        return math.inf if s == 0 else math.sqrt(self.a * self.c) / s

    def energy(self, x, y):
        return self.c * np.abs(x) ** 2 + self.a * np.abs(y) ** 2

    def matrix(self, rho: float) -> np.ndarray:
        """``G`` with ``(X, Y)' = G (X, Y) + (A, B)``."""
        return np.array([[self.b * rho * rho, -self.a * rho], [self.c * rho, -self.d * rho * rho]])

    def forced(self) -> bool:
        return self.forcing_A is not None or self.forcing_B is not None

    def forcing(self, t: float) -> np.ndarray:
        fa = 0.0 if self.forcing_A is None else self.forcing_A(t)
        fb = 0.0 if self.forcing_B is None else self.forcing_B(t)
        return np.array([fa, fb], dtype=complex)

    def integrate(self, rho: float, x0: complex, y0: complex, times, rtol: float = 1e-10,
                  method: str = "auto"):
        """Trajectory sampled at ``times``.

        ``method="exact"`` uses the matrix exponential (unforced only),
        ``"dop853"`` an adaptive Runge-Kutta run at ``rtol``; ``"auto"`` picks
        the exponential whenever there is no forcing.
        """
        g = self.matrix(rho)
        times = np.asarray(times, dtype=float)
        if method == "auto":
            method = "dop853" if self.forced() else "exact"
        if method == "exact":
            if self.forced():
                raise PreconditionViolated("the exponential propagator is for the unforced system")
            z0 = np.array([x0, y0], dtype=complex)
            steps = np.diff(times)
            if len(steps) and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
                # uniform grid: repeated application of one step propagator
                step = expm(steps[0] * g)
                z = np.empty((len(times), 2), dtype=complex)
                z[0] = z0
                for i in range(1, len(times)):
                    z[i] = step @ z[i - 1]
            else:
                z = expm((times - times[0])[:, None, None] * g[None]) @ z0
            return z[:, 0], z[:, 1]

        def rhs(t, z):
            w = z[:2] + 1j * z[2:]
            dw = g @ w + self.forcing(t)
            return np.concatenate([dw.real, dw.imag])

        z0 = np.array([complex(x0).real, complex(y0).real, complex(x0).imag, complex(y0).imag])
        sol = solve_ivp(rhs, (times[0], times[-1]), z0, method="DOP853", t_eval=times,
                        rtol=rtol, atol=1e-13 * max(1.0, np.abs(z0).max()))
        return sol.y[0] + 1j * sol.y[2], sol.y[1] + 1j * sol.y[3]


def lyapunov_2x2(rho: float, sys: Toy2x2, x, y):
    """``c|X|^2 + a|Y|^2 - rho (d + b) Re(X conj(Y))``."""
    return sys.c * np.abs(x) ** 2 + sys.a * np.abs(y) ** 2 - rho * (sys.d + sys.b) * np.real(x * np.conj(y))


def decay_rate_2x2(sys: Toy2x2, rho: float) -> float:
    """Exponential rate ``(d - b) rho^2 / 6`` of the functional's square root."""
    return (sys.d - sys.b) * rho * rho / 6


def max_decay_ratio_2x2(sys: Toy2x2, rho: float, T: float, steps: int,
                      x0: complex = 1.0, y0: complex = 0.0) -> float:
    """Max over the grid of ``L(t) / (exp(-(d-b) rho^2 t / 6) L(0))``; 1 for zero data."""
    if rho > sys.rho_bound():
        raise PreconditionViolated(f"rho={rho} exceeds sqrt(ac)/|b+d|={sys.rho_bound()}")
    if sys.forced():
        raise PreconditionViolated("the decay estimate is for the unforced system")
    if x0 == 0 and y0 == 0:
        return 1.0
    times = np.linspace(0.0, T, steps + 1)
    x, y = sys.integrate(rho, x0, y0, times)
    ell = np.sqrt(lyapunov_2x2(rho, sys, x, y))
    envelope = np.exp(-decay_rate_2x2(sys, rho) * times) * ell[0]
    return float(np.max(ell / envelope))


verify_decay_ODE5 = max_decay_ratio_2x2  # name required by the public interface


def lyapunov_derivative_excess(sys: Toy2x2, rho: float, T: float, steps: int,
                               x0: complex, y0: complex) -> float:
    """Max of ``d(L^2)/dt + (d - b) rho^2 L^2 / 3`` along an unforced trajectory.

    The derivative is taken analytically from the ODE, so the check isolates
    the inequality from time-discretization noise.
    """
    times = np.linspace(0.0, T, steps + 1)
    x, y = sys.integrate(rho, x0, y0, times)
    g = sys.matrix(rho)
    dx = g[0, 0] * x + g[0, 1] * y
    dy = g[1, 0] * x + g[1, 1] * y
    s = sys.d + sys.b
    dl2 = (2 * sys.c * np.real(dx * np.conj(x)) + 2 * sys.a * np.real(dy * np.conj(y))
           - rho * s * np.real(dx * np.conj(y) + x * np.conj(dy)))
    l2 = lyapunov_2x2(rho, sys, x, y)
    return float(np.max(dl2 + (sys.d - sys.b) * rho * rho * l2 / 3))


def duhamel_bound_check(sys: Toy2x2, rho: float, T: float, steps: int,
                        x0: complex = 0.0, y0: complex = 0.0) -> float:
    """Max of ``sqrt(E(t))`` over its Duhamel bound for a forced trajectory.

    ``E = c|X|^2 + a|Y|^2`` and the bound is
    ``sqrt(3) exp(-k t) (sqrt(E(0)) + int_0^t exp(k s) sqrt(c|A|^2 + a|B|^2) ds)``
    with ``k = (d - b) rho^2 / 6``. Values at most 1 mean the bound holds.
    """
    if rho > sys.rho_bound():
        raise PreconditionViolated(f"rho={rho} exceeds sqrt(ac)/|b+d|={sys.rho_bound()}")
    times = np.linspace(0.0, T, steps + 1)
    x, y = sys.integrate(rho, x0, y0, times)
    k = decay_rate_2x2(sys, rho)
    f = np.array([sys.forcing(t) for t in times])
    fnorm = np.sqrt(sys.c * np.abs(f[:, 0]) ** 2 + sys.a * np.abs(f[:, 1]) ** 2)
    integrand = np.exp(k * times) * fnorm
    integral = cumulative_trapezoid(integrand, times, initial=0.0)
    e = np.sqrt(sys.energy(x, y))
    bound = math.sqrt(3) * np.exp(-k * times) * (e[0] + integral)
    mask = bound > 0
    return float(np.max(e[mask] / bound[mask])) if np.any(mask) else 0.0


def largest_valid_rho(check: Callable[[float], bool], rho_start: float, factor: float = 0.8,
                      min_rho: float = 1e-4) -> float:
    """Walk down a geometric ladder of rho and return the first value where ``check`` holds."""
    rho = rho_start
    while rho >= min_rho:
        if check(rho):
            return rho
        rho *= factor
    return 0.0
