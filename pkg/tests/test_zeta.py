import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_torsion.algebra_core import GramMetric
from morse_torsion.errors import HypothesisError, IllConditionedError
from morse_torsion.flow_model import ClosedOrbitDatum, FixedPointDatum, MorseSmaleSystem
from morse_torsion.sampling import random_invertible, random_system
from morse_torsion.zeta import (
    Pole,
    ZetaOrbit,
    ZetaSpec,
    check_prop,
    log_abs_ruelle,
    order_at,
    ruelle_eval,
    zeros_poles_in_rect,
)


def spec(*orbits, rank=1):
    return ZetaSpec(tuple(orbits), rank)


def zo(rho, index=0, twist=1, period=1.0):
    return ZetaOrbit(period, index, twist, np.atleast_2d(np.asarray(rho, dtype=complex)))


def orbit(rho, index=0, twist=1, ident="g"):
    return ClosedOrbitDatum(ident, index, 1.0, twist, np.atleast_2d(np.asarray(rho, dtype=complex)), 1)


def test_empty_product():
    for s in (0, 1 + 2j, -3.5):
        assert ruelle_eval(spec(), s) == 1


def test_one_orbit_values():
    z = spec(zo(2.0))
    assert ruelle_eval(z, 0) == pytest.approx(0.5)
    s = 0.3 - 0.7j
    assert ruelle_eval(z, s) == pytest.approx(1 - cmath.exp(-s) / 2)
    assert ruelle_eval(spec(zo(2.0, index=1)), 0) == pytest.approx(2)


def test_order_examples():
    assert order_at(spec(zo(1.0)), 0) == 1
    assert ruelle_eval(spec(zo(1.0)), 0) == 0
    assert order_at(spec(zo(2.0)), 0) == 0
    assert order_at(spec(zo(1.0, index=1)), 0) == -1
    assert ruelle_eval(spec(zo(1.0, index=1)), 0) == Pole(-1)


def test_order_ill_conditioned():
    # |1 - 1/mu| = 5e-8 sits inside [tol, 10 tol]
    with pytest.raises(IllConditionedError, match="ill-conditioned order"):
        order_at(spec(zo(1 / (1 - 5e-8))), 0)


def test_removable_singularity_returns_limit():
    # (1 - e^{-s}) / (1 - e^{-2s}) -> 1/2 at s = 0; periods 1 and 2
    z = spec(zo(1.0, period=1.0), zo(1.0, index=1, period=2.0))
    assert order_at(z, 0) == 0
    assert ruelle_eval(z, 0) == pytest.approx(0.5)
    assert ruelle_eval(z, 1e-6) == pytest.approx(0.5, rel=1e-5)


def test_zeros_in_rect():
    found = zeros_poles_in_rect(spec(zo(1.0)), (-1, 1, -7, 7))
    assert [o for _, o in found] == [1, 1, 1]
    for (s, _), k in zip(found, (-1, 0, 1)):
        assert abs(s - 2j * math.pi * k) < 1e-12
    found = zeros_poles_in_rect(spec(zo(2.0)), (-1, 1, -7, 7))
    for s, o in found:
        assert o == 1
        assert abs(s.real + math.log(2)) < 1e-12
        assert cmath.exp(-s) == pytest.approx(2)
    assert zeros_poles_in_rect(spec(zo(2.0), zo(2.0, index=1)), (-3, 3, -20, 20)) == []


def test_zeros_are_zeros(rng):
    for _ in range(5):
        z = spec(zo(random_invertible(rng, 3), period=float(rng.uniform(0.5, 2))), rank=3)
        for s, o in zeros_poles_in_rect(z, (-2, 2, -10, 10)):
            assert o == 1
            assert order_at(z, s) == 1


def winding_order(z, s0, radius=1e-3, n=256):
    vals = [ruelle_eval(z, s0 + radius * cmath.exp(2j * math.pi * t / n)) for t in range(n + 1)]
    phase = np.unwrap(np.angle(vals))
    return (phase[-1] - phase[0]) / (2 * math.pi)


def test_order_matches_winding_number(rng):
    for _ in range(3):
        z = spec(
            zo(random_invertible(rng, 2), period=1.3),
            zo(random_invertible(rng, 2), index=1, twist=-1, period=0.7),
            rank=2,
        )
        for s0, _ in zeros_poles_in_rect(z, (-2, 2, -5, 5)):
            w = winding_order(z, s0)
            assert abs(w - order_at(z, s0)) < 1e-6


@given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(-5, 5))
@settings(max_examples=30, deadline=None)
def test_log_abs_consistent(seed, re, im):
    rng = np.random.default_rng(seed)
    z = spec(zo(random_invertible(rng, 2), index=1), zo(random_invertible(rng, 2), twist=-1), rank=2)
    s = complex(re, im)
    v = ruelle_eval(z, s)
    if isinstance(v, Pole) or v == 0:
        return
    assert log_abs_ruelle(z, s) == pytest.approx(math.log(abs(v)), abs=1e-12)


def test_conjugation_invariance(rng):
    a = random_invertible(rng, 3)
    p = random_invertible(rng, 3)
    s = 0.2 + 1.1j
    assert ruelle_eval(spec(zo(a), rank=3), s) == pytest.approx(ruelle_eval(spec(zo(p @ a @ np.linalg.inv(p)), rank=3), s))


def test_check_prop_examples():
    res = check_prop(MorseSmaleSystem(1, (orbit(2.0, index=1),), split=True))
    # R(0) = 2 here, so both sides equal 1/2
    assert res.milnor == pytest.approx(0.5)
    assert res.zeta_inverse == pytest.approx(0.5)
    assert res.residual < 1e-15
    res = check_prop(MorseSmaleSystem(2, (orbit(np.diag([2.0, 3.0])),), split=True))
    assert res.milnor == pytest.approx(3)
    assert res.zeta_inverse == pytest.approx(3)


def test_check_prop_hypotheses():
    with pytest.raises(HypothesisError, match="fixed points"):
        check_prop(MorseSmaleSystem(1, (FixedPointDatum("x", 0, GramMetric.identity(1)),), split=True))
    with pytest.raises(HypothesisError, match="orbit g") as info:
        check_prop(MorseSmaleSystem(1, (orbit(-1.0, twist=-1),), split=True))
    assert info.value.element.id == "g"


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_check_prop_random(seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, int(rng.integers(1, 6)), 0, 4, chain_model=bool(rng.integers(2)))
    assert check_prop(s).residual < 1e-10
