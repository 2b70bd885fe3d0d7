import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_torsion.algebra_core import GramMetric
from morse_torsion.complex_engine import (
    CochainComplex,
    FilteredComplex,
    betti_numbers,
    canonical_element_norm,
)
from morse_torsion.errors import ModelMismatchError, TorsionError
from morse_torsion.flow_model import (
    ClosedOrbitDatum,
    FixedPointDatum,
    MorseSmaleSystem,
    SurgeryDatum,
    compare_milnor,
    fixed_point_line,
    franks_comparison_rhs,
    franks_surgery,
    milnor_metric,
    orbit_line_metric,
    orbit_piece,
    split_model,
    surgered_block,
)
from morse_torsion.sampling import random_invertible, random_surgery, random_system


def orbit(rho, index=0, twist=1, orientation=1, ident="g", period=1.0):
    return ClosedOrbitDatum(ident, index, period, twist, np.atleast_2d(np.asarray(rho, dtype=complex)), orientation)


def one(r=1):
    return GramMetric.identity(r)


def surgery(tau, n_a, n_ap, r=1, gx=None, gxp=None):
    return SurgeryDatum(np.atleast_2d(tau), n_a, n_ap, gx or one(r), gxp or one(r))


# --- data validation --------------------------------------------------------


def test_orbit_validation():
    with pytest.raises(TorsionError):
        orbit([[0.0]])
    with pytest.raises(TorsionError):
        orbit(2.0, twist=2)
    with pytest.raises(TorsionError):
        ClosedOrbitDatum("g", 0, -1.0, 1, np.eye(1), 1)
    with pytest.raises(TorsionError):
        ClosedOrbitDatum("g", 0, 1.0, 1, np.eye(1), 0)


def test_system_validation():
    with pytest.raises(TorsionError, match="unique"):
        MorseSmaleSystem(1, (orbit(2.0), orbit(3.0)), split=True)
    with pytest.raises(TorsionError, match="rank"):
        MorseSmaleSystem(2, (orbit(2.0),), split=True)
    with pytest.raises(TorsionError, match="dimension"):
        MorseSmaleSystem(1, (orbit(2.0, index=1),), split=True, dimension=1)


def test_chain_model_mismatch_named():
    # level 0 should realize an acyclic orbit, but its block is zero
    elements = (orbit(2.0),)
    c = CochainComplex.from_differentials([np.zeros((1, 1))])
    model = FilteredComplex(c, (np.array([0]), np.array([0])), 1)
    with pytest.raises(ModelMismatchError, match="does not realize the orbit g at level 0"):
        MorseSmaleSystem(1, elements, model)


def test_chain_model_level_count():
    model = split_model((orbit(2.0),))
    with pytest.raises(ModelMismatchError):
        MorseSmaleSystem(1, (orbit(2.0), FixedPointDatum("x", 0, one())), model)


# --- graded pieces ----------------------------------------------------------


def test_orbit_piece_examples():
    c = orbit_piece(orbit(1.0, index=2))
    assert c.dims == (0, 0, 1, 1)
    assert betti_numbers(c) == (0, 0, 1, 1)
    c = orbit_piece(orbit(2.0))
    assert c.differentials[0][0, 0] == pytest.approx(-0.5)
    assert betti_numbers(c) == (0, 0)
    c = orbit_piece(orbit(-1.0, twist=-1))
    assert c.differentials[0][0, 0] == pytest.approx(0)


def test_orbit_line_examples():
    assert orbit_line_metric(orbit(2.0)).norm == pytest.approx(2)
    assert orbit_line_metric(orbit(-1.0)).norm == pytest.approx(0.5)
    line = orbit_line_metric(orbit(np.eye(2)))
    assert line.betti == (2, 2)
    assert line.log_norm == pytest.approx(0)


def test_orbit_line_matches_wedge_oracle(rng):
    for _ in range(10):
        r = int(rng.integers(1, 4))
        o = orbit(random_invertible(rng, r) + 2.5 * np.eye(r))
        assert orbit_line_metric(o).norm == pytest.approx(
            canonical_element_norm(orbit_piece(o), method="wedge"), rel=1e-10
        )


def test_orientation_reversal(rng):
    a = random_invertible(rng, 3) + 2.5 * np.eye(3)
    forward = orbit(a)
    backward = forward.reversed()
    assert np.allclose(backward.twisted_holonomy, np.linalg.inv(a))
    assert forward.flow_holonomy is forward.holonomy
    assert orbit_line_metric(forward).norm == pytest.approx(1 / abs(np.linalg.det(np.eye(3) - np.linalg.inv(a))))
    assert orbit_line_metric(backward).norm == pytest.approx(1 / abs(np.linalg.det(np.eye(3) - a)))


def test_fixed_point_line_examples():
    assert fixed_point_line(FixedPointDatum("x", 0, one())).log_norm == 0
    g = GramMetric(np.diag([4.0, 9.0]))
    assert fixed_point_line(FixedPointDatum("x", 2, g)).log_norm == pytest.approx(0.5 * math.log(36))
    assert fixed_point_line(FixedPointDatum("x", 1, g)).log_norm == pytest.approx(-0.5 * math.log(36))


# --- Milnor metric ------------------------------------------------------------


def test_milnor_examples():
    res = milnor_metric(MorseSmaleSystem(1, (FixedPointDatum("x", 0, one()),), split=True))
    assert res.betti == (1,)
    assert res.line.log_norm == pytest.approx(0)
    res = milnor_metric(MorseSmaleSystem(1, (orbit(2.0, index=1),), split=True))
    assert res.betti == (0, 0, 0)
    assert res.line.norm == pytest.approx(0.5)


def test_milnor_needs_model_or_split():
    with pytest.raises(TorsionError):
        milnor_metric(MorseSmaleSystem(1, (orbit(2.0),)))


def test_split_flag_agrees_with_block_diagonal_model(rng):
    for _ in range(10):
        s = random_system(rng, 2, 2, 3, chain_model=False, degenerate_prob=0.3)
        with_model = MorseSmaleSystem(s.rank, s.elements, split_model(s.elements))
        assert milnor_metric(with_model).line.log_norm == pytest.approx(milnor_metric(s).line.log_norm, abs=1e-9)


def test_gram_scaling_shift(rng):
    for _ in range(10):
        s = random_system(rng, 1, 2, 3, chain_model=bool(rng.integers(2)))
        x = s.fixed_points[0]
        c = float(rng.uniform(0.2, 5))
        scaled = tuple(
            FixedPointDatum(e.id, e.index, e.gram.scaled(c)) if e is x else e for e in s.elements
        )
        t = MorseSmaleSystem(s.rank, scaled, s.chain_model, s.split)
        shift = (-1) ** x.index * s.rank / 2 * math.log(c)
        assert milnor_metric(t).line.log_norm - milnor_metric(s).line.log_norm == pytest.approx(shift, abs=1e-9)


def test_holonomy_conjugation_invariance(rng):
    for _ in range(10):
        s = random_system(rng, 3, 0, 3, chain_model=False)
        p = random_invertible(rng, s.rank)
        conj = tuple(
            ClosedOrbitDatum(o.id, o.index, o.period, o.twist, p @ o.holonomy @ np.linalg.inv(p), o.orientation)
            for o in s.elements
        )
        t = MorseSmaleSystem(s.rank, conj, split=True)
        assert milnor_metric(t).line.log_norm == pytest.approx(milnor_metric(s).line.log_norm, abs=1e-9)


def test_chain_model_conjugation_invariance(rng):
    # conjugating a whole chain model by a level-preserving block change of basis
    for _ in range(5):
        s = random_system(rng, 2, 0, 2)
        model = s.chain_model
        p = random_invertible(rng, s.rank)
        conj = tuple(
            ClosedOrbitDatum(o.id, o.index, o.period, o.twist, p @ o.holonomy @ np.linalg.inv(p), o.orientation)
            for o in s.elements
        )
        # A^{-1} - 1 becomes P (A^{-1} - 1) P^{-1}: change basis by P on every level block
        q = [np.zeros((n, n), dtype=complex) for n in model.complex.dims]
        for k in range(len(q)):
            for lev in range(model.n_levels):
                idx = np.flatnonzero(model.levels[k] == lev)
                if idx.size:
                    q[k][np.ix_(idx, idx)] = p
        ds = [q[k + 1] @ d @ np.linalg.inv(q[k]) for k, d in enumerate(model.complex.differentials)]
        new_model = FilteredComplex(CochainComplex(model.complex.dims, tuple(ds), d2_tol=1e-9), model.levels, model.n_levels, tol=1e-9)
        t = MorseSmaleSystem(s.rank, conj, new_model)
        assert milnor_metric(t).line.log_norm == pytest.approx(milnor_metric(s).line.log_norm, abs=1e-9)


# --- Franks surgery -----------------------------------------------------------


def test_surgered_block_examples():
    assert surgered_block(orbit(2.0), surgery(1.0, 1, -1))[0, 0] == pytest.approx(-0.5)
    assert surgered_block(orbit(1.0), surgery(1.0, 1, -1))[0, 0] == pytest.approx(0)
    assert abs(surgered_block(orbit(1.0, twist=-1), surgery(1.0, 1, 1))[0, 0]) == pytest.approx(2)


def test_surgery_sign_constraint():
    s = MorseSmaleSystem(1, (orbit(2.0),), split=True)
    with pytest.raises(TorsionError, match="n\\(a\\) \\* n\\(a'\\) = -twist"):
        franks_surgery(s, {"g": surgery(1.0, 1, 1)})


def test_surgery_replaces_orbits_by_fixed_points():
    s = MorseSmaleSystem(1, (FixedPointDatum("x", 0, one()), orbit(2.0, index=1)), split=True)
    t = franks_surgery(s, {"g": surgery(3.0, 1, -1)})
    assert [(e.id, e.index) for e in t.elements] == [("x", 0), ("g:x'", 1), ("g:x", 2)]
    assert not t.orbits
    assert betti_numbers(t.chain_model.complex) == betti_numbers(s.model().complex)


def test_comparison_rhs_examples():
    s0 = MorseSmaleSystem(1, (orbit(2.0),), split=True)
    s1 = MorseSmaleSystem(1, (orbit(2.0, index=1),), split=True)
    assert franks_comparison_rhs(s0, {"g": surgery(1.0, 1, -1)}) == pytest.approx(0)
    assert franks_comparison_rhs(s0, {"g": surgery(1.7, 1, -1)}) == pytest.approx(math.log(1.7**2))
    assert franks_comparison_rhs(s1, {"g": surgery(1.7, 1, -1)}) == pytest.approx(-math.log(1.7**2))


@pytest.mark.parametrize("index", [0, 1])
def test_compare_milnor_examples(index):
    s = MorseSmaleSystem(1, (orbit(2.0, index=index),), split=True)
    cmp = compare_milnor(s, {"g": surgery(1.0, 1, -1)})
    assert cmp.lhs == pytest.approx(0, abs=1e-12) and cmp.passed
    cmp = compare_milnor(s, {"g": surgery(3.0, 1, -1)})
    assert cmp.lhs == pytest.approx((-1) ** index * math.log(9))
    assert cmp.rhs == pytest.approx((-1) ** index * math.log(9))
    assert cmp.passed


def test_compare_milnor_degenerate_orbit():
    s = MorseSmaleSystem(1, (orbit(1.0),), split=True)
    cmp = compare_milnor(s, {"g": surgery(2.0, 1, -1, gx=GramMetric([[3.0]]))})
    assert cmp.residual < 1e-12


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_compare_milnor_random(seed):
    rng = np.random.default_rng(seed)
    s = random_system(rng, int(rng.integers(1, 4)), int(rng.integers(0, 3)), 3,
                      chain_model=bool(rng.integers(2)), degenerate_prob=0.2)
    assert compare_milnor(s, random_surgery(rng, s)).residual < 1e-9
