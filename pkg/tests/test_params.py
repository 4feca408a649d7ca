import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radflow import (AmbiguousRegime, CouplingFunctions, EpsilonFamily, PhysicalParams, Regime, RegimeLabel,
                     ValidationError, classify_regime, stability_margin)
from radflow.params import is_stable


def test_margin_stable_example():
    p = PhysicalParams(eps=0.1, ell=0.1, ell_s=1.0, mu=0.5, lam=0.0, dim=2)
    assert stability_margin(p) == pytest.approx(0.05, abs=1e-15)
    assert is_stable(p)


def test_margin_zero_eps():
    p = PhysicalParams(eps=0.0, ell=0.7, dim=2)
    assert stability_margin(p) == pytest.approx(2 * 1.0 * 0.7)


def test_margin_unstable_example():
    p = PhysicalParams(eps=1.0, ell=0.5, ell_s=0.0, mu=0.5, lam=0.0, dim=3)
    assert stability_margin(p) == pytest.approx(-0.5)
    assert not is_stable(p)


def test_derived_quantities():
    p = PhysicalParams(eps=0.1, ell=0.2, ell_s=3.0, mu=0.7, lam=0.1, dim=2)
    assert p.nu == pytest.approx(1.5)
    assert p.em == pytest.approx(4.0)
    assert p.ell_tilde == pytest.approx(0.3)
    assert PhysicalParams(0.1, 0.2, 0.0).em == 1.0


@pytest.mark.parametrize("kwargs", [dict(eps=-1, ell=1), dict(eps=0.1, ell=0), dict(eps=0.1, ell=1, ell_s=-1),
                                    dict(eps=0.1, ell=1, mu=0), dict(eps=0.1, ell=1, mu=0.5, lam=-1.5)])
def test_invalid_params(kwargs):
    with pytest.raises(ValidationError):
        PhysicalParams(**kwargs)


@settings(max_examples=200, deadline=None)
@given(eps=st.floats(1e-3, 1.0), ell=st.floats(1e-3, 10.0), ell_s=st.floats(0.0, 100.0),
       factor=st.floats(1.01, 3.0))
def test_margin_monotone(eps, ell, ell_s, factor):
    base = stability_margin(PhysicalParams(eps, ell, ell_s))
    assert stability_margin(PhysicalParams(eps, ell * factor, ell_s)) > base
    assert stability_margin(PhysicalParams(eps * factor, ell, ell_s)) < base


def test_coupling_functions_vanish_at_zero():
    fns = CouplingFunctions.linear(0.3, -1.0, 2.0, 0.5)
    for i in range(1, 5):
        assert fns(i, 0.0) == 0.0
    b = np.linspace(-0.1, 0.1, 5)
    assert np.allclose(fns(3, b), 2.0 * b)
    assert CouplingFunctions.zero().is_zero
    with pytest.raises(ValidationError):
        CouplingFunctions((lambda b: b + 1,) * 4, (lambda b: 1,) * 4)


def test_regime_label_invariants():
    with pytest.raises(ValidationError):
        RegimeLabel.noneq(1.0, 1.0)
    with pytest.raises(ValidationError):
        RegimeLabel.degenerate(0.5)
    assert RegimeLabel.degenerate(2).m == math.inf


def test_family_validation():
    with pytest.raises(ValidationError):
        EpsilonFamily(((0.1, 1, 1), (0.2, 1, 1), (0.05, 1, 1)))
    with pytest.raises(ValidationError):
        EpsilonFamily(((1.0, 0.1, 0.0), (0.5, 1, 1), (0.1, 1, 1)))  # first member unstable


EPS = [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125]


def test_classify_nonequilibrium():
    lab = classify_regime(EpsilonFamily.nonequilibrium(EPS, kappa=2.0, m=1.0))
    assert lab.kind is Regime.NON_EQUILIBRIUM
    assert lab.kappa == pytest.approx(2.0) and lab.m == pytest.approx(1.0)


def test_classify_equilibrium():
    fam = EpsilonFamily.from_laws(EPS, lambda e: 1 / e, lambda e, l: 1.0)
    assert classify_regime(fam).kind is Regime.EQUILIBRIUM


def test_classify_poisson():
    lab = classify_regime(EpsilonFamily.from_laws(EPS, lambda e: e ** 0.5, lambda e, l: 1 / l ** 2))
    assert lab.kind is Regime.POISSON
    assert lab.m == pytest.approx(1.0)


def test_classify_degenerate_and_negligible():
    assert classify_regime(EpsilonFamily.degenerate(EPS, kappa=3.0)).kind is Regime.DEGENERATE_NON_EQUILIBRIUM
    fam = EpsilonFamily.from_laws(EPS, lambda e: 2 * e, lambda e, l: 1.0)
    assert classify_regime(fam).kind is Regime.NEGLIGIBLE_RADIATION


def test_classify_subsampling_invariance():
    fam = EpsilonFamily.nonequilibrium(EPS, kappa=2.0, m=1.0)
    assert classify_regime(fam.subsample(2)).kind is classify_regime(fam).kind


def test_classify_ambiguous():
    # L^2 Ls ~ eps^0.15 sits between "finite" and "vanishing"
    fam = EpsilonFamily.from_laws(EPS, lambda e: 2 * e, lambda e, l: e ** 0.15 / l ** 2)
    with pytest.raises(AmbiguousRegime):
        classify_regime(fam)
    near_boundary = EpsilonFamily.nonequilibrium(EPS, kappa=1.05, m=1.0)
    with pytest.raises(AmbiguousRegime):
        classify_regime(near_boundary)


def test_classify_needs_three_members():
    with pytest.raises(ValidationError):
        classify_regime(EpsilonFamily.nonequilibrium(EPS[:2], 2.0, 1.0))
