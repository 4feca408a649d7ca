"""Dimensionless coefficients, coupling functions and regime classification.

All quantities refer to the dimensionless barotropic radiative system

    b_t + u.grad b + (1 + k1(b)) div u = 0
    u_t + u.grad u - (1 + k2(b)) A u + (1 + k3(b)) grad b = (L M / n) (1 + k4(b)) j1
    eps j0_t + div(j1) / n = L (b - j0)
    eps j1_t + grad j0 = -L M j1

with A = mu Lap + (lam + mu) grad div, M = 1 + Ls and n the space dimension.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import AmbiguousRegime, ValidationError

Scalar = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of the dimensionless system.

    ``eps = 0`` is accepted as the formal limit; operations that divide by
    ``eps`` reject it.
    """

    eps: float
    ell: float
    ell_s: float = 0.0
    mu: float = 0.5
    lam: float = 0.0
    dim: int = 2

    def __post_init__(self):
        for name in ("eps", "ell", "ell_s", "mu", "lam"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite, got {value}")
        if self.eps < 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if self.ell <= 0:
            raise ValidationError(f"ell must be positive, got {self.ell}")
        if self.ell_s < 0:
            raise ValidationError(f"ell_s must be nonnegative, got {self.ell_s}")
        if self.mu <= 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")
        if self.nu <= 0:
            raise ValidationError(f"lam + 2 mu must be positive, got {self.nu}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"dim must be a positive integer, got {self.dim}")

    @property
    def nu(self) -> float:
        return self.lam + 2.0 * self.mu

    @property
    def em(self) -> float:
        return 1.0 + self.ell_s

    @property
    def ell_tilde(self) -> float:
        return self.nu * self.ell

    def with_(self, **changes) -> "PhysicalParams":
        return replace(self, **changes)

    def require_positive_eps(self):
        if self.eps <= 0:
            raise ValidationError("this operation needs eps > 0")


def stability_margin(p: PhysicalParams) -> float:
    """Linear stability margin ``n nu L - eps (2 + Ls) / (1 + Ls)``.

    Positive means every Fourier mode of the linearized system decays.
    """
    n = p.dim
    margin = n * p.nu * p.ell - p.eps * (2.0 + p.ell_s) / (1.0 + p.ell_s)
    # same quantity written with the rescaled coefficients
    other = n * (p.ell_tilde - (p.eps / n) * (1.0 + 1.0 / p.em))
    scale = max(abs(margin), abs(other), n * p.nu * p.ell, 1e-300)
    assert abs(margin - other) <= 1e-12 * scale, (margin, other)
    return margin


def is_stable(p: PhysicalParams) -> bool:
    return stability_margin(p) > 0


# ---------------------------------------------------------------------------
# coupling functions


def _zero(b):
    return np.zeros_like(np.asarray(b, dtype=float))


@dataclass(frozen=True)
class CouplingFunctions:
    """The four nonlinear coefficient functions and their derivatives.

    ``k[i]`` and ``dk[i]`` are vectorized callables; each ``k[i](0)`` must be 0.
    """

    k: tuple[Scalar, Scalar, Scalar, Scalar]
    dk: tuple[Scalar, Scalar, Scalar, Scalar]
    slopes: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if len(self.k) != 4 or len(self.dk) != 4:
            raise ValidationError("need exactly four coupling functions and derivatives")
        for i, fn in enumerate(self.k, start=1):
            v = float(np.asarray(fn(np.zeros(1)))[0])
            if v != 0.0:
                raise ValidationError(f"k{i}(0) = {v}, must vanish")

    @classmethod
    def linear(cls, c1=1.0, c2=1.0, c3=1.0, c4=1.0) -> "CouplingFunctions":
        slopes = (float(c1), float(c2), float(c3), float(c4))
        k = tuple((lambda b, c=c: c * np.asarray(b, dtype=float)) for c in slopes)
        dk = tuple((lambda b, c=c: np.full_like(np.asarray(b, dtype=float), c)) for c in slopes)
        return cls(k=k, dk=dk, slopes=slopes)

    @classmethod
    def zero(cls) -> "CouplingFunctions":
        return cls.linear(0.0, 0.0, 0.0, 0.0)

    @property
    def is_zero(self) -> bool:
        return self.slopes is not None and all(c == 0.0 for c in self.slopes)

    def __call__(self, i: int, b):
        return self.k[i - 1](b)


# ---------------------------------------------------------------------------
# regimes


class Regime(enum.Enum):
    NEGLIGIBLE_RADIATION = "NegligibleRadiation"
    EQUILIBRIUM = "Equilibrium"
    POISSON = "Poisson"
    NON_EQUILIBRIUM = "NonEquilibrium"
    DEGENERATE_NON_EQUILIBRIUM = "DegenerateNonEquilibrium"


@dataclass(frozen=True)
class RegimeLabel:
    """A regime together with its limit constants.

    ``kappa`` is the limit of ``n nu L / eps``; ``m`` the limit of
    ``nu^2 L^2 Ls`` (``inf`` for the degenerate case). ``ell`` is the limit of
    ``nu L`` when it is finite and nonzero (Poisson variant).
    """

    kind: Regime
    kappa: float | None = None
    m: float | None = None
    ell: float = 0.0

    def __post_init__(self):
        if self.kind in (Regime.NON_EQUILIBRIUM, Regime.DEGENERATE_NON_EQUILIBRIUM):
            if self.kappa is None or not self.kappa > 1:
                raise ValidationError(f"{self.kind.value} needs kappa > 1, got {self.kappa}")
        if self.kind is Regime.NON_EQUILIBRIUM and (self.m is None or not 0 < self.m < math.inf):
            raise ValidationError(f"NonEquilibrium needs finite m > 0, got {self.m}")
        if self.kind is Regime.POISSON and (self.m is None or self.m < 0 or self.m == math.inf):
            raise ValidationError(f"Poisson needs finite m >= 0, got {self.m}")

    @classmethod
    def noneq(cls, kappa: float, m: float) -> "RegimeLabel":
        return cls(Regime.NON_EQUILIBRIUM, kappa=kappa, m=m)

    @classmethod
    def degenerate(cls, kappa: float) -> "RegimeLabel":
        return cls(Regime.DEGENERATE_NON_EQUILIBRIUM, kappa=kappa, m=math.inf)

    @classmethod
    def poisson(cls, m: float, ell: float = 0.0) -> "RegimeLabel":
        return cls(Regime.POISSON, m=m, ell=ell)

    @classmethod
    def equilibrium(cls) -> "RegimeLabel":
        return cls(Regime.EQUILIBRIUM)

    @classmethod
    def negligible(cls) -> "RegimeLabel":
        return cls(Regime.NEGLIGIBLE_RADIATION)


@dataclass(frozen=True)
class EpsilonFamily:
    """Ordered members ``(eps, ell, ell_s)`` sharing viscosities and dimension."""

    members: tuple[tuple[float, float, float], ...]
    mu: float = 0.5
    lam: float = 0.0
    dim: int = 2
    _params: tuple[PhysicalParams, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        members = tuple(tuple(float(x) for x in m) for m in self.members)
        if not members:
            raise ValidationError("empty family")
        object.__setattr__(self, "members", members)
        eps = [m[0] for m in members]
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValidationError("eps must be strictly decreasing along the family")
        ps = []
        for e, l, ls in members:
            p = PhysicalParams(e, l, ls, self.mu, self.lam, self.dim)
            if stability_margin(p) <= 0:
                raise ValidationError(f"family member eps={e} is linearly unstable")
            ps.append(p)
        object.__setattr__(self, "_params", tuple(ps))

    def __len__(self):
        return len(self.members)

    def __getitem__(self, i) -> PhysicalParams:
        return self._params[i]

    def __iter__(self):
        return iter(self._params)

    @property
    def nu(self) -> float:
        return self.lam + 2.0 * self.mu

    @property
    def eps(self) -> np.ndarray:
        return np.array([m[0] for m in self.members])

    def subsample(self, step: int = 2, start: int = 0) -> "EpsilonFamily":
        return EpsilonFamily(self.members[start::step], self.mu, self.lam, self.dim)

    @classmethod
    def from_laws(cls, eps: Sequence[float], ell: Callable[[float], float],
                  ell_s: Callable[[float, float], float], mu=0.5, lam=0.0, dim=2):
        """Build a family from ``ell(eps)`` and ``ell_s(eps, ell)``."""
        members = []
        for e in eps:
            l = ell(e)
            members.append((e, l, ell_s(e, l)))
        return cls(tuple(members), mu, lam, dim)

    @classmethod
    def nonequilibrium(cls, eps: Sequence[float], kappa: float, m: float, mu=0.5, lam=0.0, dim=2):
        """``L = kappa eps / (n nu)`` and ``nu^2 L^2 Ls = m`` exactly."""
        nu = lam + 2 * mu
        return cls.from_laws(eps, lambda e: kappa * e / (dim * nu),
                             lambda e, l: m / (nu * nu * l * l), mu, lam, dim)

    @classmethod
    def degenerate(cls, eps: Sequence[float], kappa: float, mu=0.5, lam=0.0, dim=2, power=1.0):
        """``L = kappa eps / (n nu)`` with ``nu^2 L^2 Ls = eps^-power``."""
        nu = lam + 2 * mu
        return cls.from_laws(eps, lambda e: kappa * e / (dim * nu),
                             lambda e, l: e ** (-power) / (nu * nu * l * l), mu, lam, dim)

    @classmethod
    def poisson(cls, eps: Sequence[float], m: float, mu=0.5, lam=0.0, dim=2, power=0.5):
        """``L = eps**power`` (0 < power < 1) and ``nu^2 L^2 Ls = m``."""
        nu = lam + 2 * mu
        return cls.from_laws(eps, lambda e: e ** power,
                             lambda e, l: m / (nu * nu * l * l), mu, lam, dim)


def _log_slope(eps: np.ndarray, values: np.ndarray) -> float:
    """Least-squares exponent s in ``values ~ eps**s``."""
    values = np.asarray(values, dtype=float)
    if np.all(values == 0):
        return math.inf
    if np.any(values <= 0):
        raise AmbiguousRegime("mixed zero / nonzero values along the family")
    return float(np.polyfit(np.log(eps), np.log(values), 1)[0])


def _trend(slope: float, tol: float, what: str) -> str:
    """'finite', 'zero' (quantity -> 0) or 'infinite' as eps -> 0."""
    if abs(slope) <= tol:
        return "finite"
    if abs(slope) < 2 * tol:
        raise AmbiguousRegime(f"log-log slope {slope:.3f} of {what} is within tol of the finite/limit boundary")
    return "zero" if slope > 0 else "infinite"


def classify_regime(fam: EpsilonFamily, tol: float = 0.1) -> RegimeLabel:
    """Classify a family by the trends of ``L/eps``, ``nu^2 L^2 Ls`` and ``L``.

    Trends come from log-log slopes over the last three members. A slope with
    ``|s| <= tol`` means a finite limit, ``|s| >= 2 tol`` means 0 or infinity;
    anything in between raises :class:`AmbiguousRegime`.
    """
    if len(fam) < 3:
        raise ValidationError("classification needs at least 3 family members")
    eps = fam.eps[-3:]
    last = list(fam)[-3:]
    nu, n = fam.nu, fam.dim
    ell = np.array([p.ell for p in last])
    ratio = ell / eps
    coupling = np.array([nu * nu * p.ell ** 2 * p.ell_s for p in last])

    t_ell = _trend(_log_slope(eps, ell), tol, "L")
    t_ratio = _trend(_log_slope(eps, ratio), tol, "L/eps")
    t_coupling = _trend(_log_slope(eps, coupling), tol, "nu^2 L^2 Ls")

    if t_ell == "infinite":
        return RegimeLabel.equilibrium()
    if t_ratio == "finite":
        kappa = float(n * nu * ratio[-1])
        if kappa <= 1 + tol:
            raise AmbiguousRegime(f"kappa = {kappa:.4g} is within tol of the stability boundary 1")
        if t_coupling == "finite":
            return RegimeLabel.noneq(kappa, float(coupling[-1]))
        if t_coupling == "infinite":
            return RegimeLabel.degenerate(kappa)
        return RegimeLabel.negligible()
    if t_ratio == "zero":
        raise AmbiguousRegime("L/eps -> 0 along the family, which no stable regime allows")
    # eps << L
    if t_coupling == "infinite":
        return RegimeLabel.equilibrium()
    if t_ell == "finite":
        return RegimeLabel.poisson(float(coupling[-1]), ell=float(nu * ell[-1]))
    if t_coupling == "finite":
        return RegimeLabel.poisson(float(coupling[-1]))
    return RegimeLabel.negligible()
