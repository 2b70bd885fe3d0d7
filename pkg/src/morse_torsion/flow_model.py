"""Morse-Smale flow data, Milnor metrics and Franks surgery.

A system lists its critical elements in Smale-filtration order, one element
per level.  Its chain model, when given, is a :class:`FilteredComplex` whose
level-``p`` piece is the graded cohomology model of element ``p``:

* fixed point ``x`` of index ``q``: ``F_x = C^r`` in degree ``q``;
* closed orbit of index ``q``: ``C^r --(A~^{-1} - 1)--> C^r`` in degrees
  ``q, q+1``, where ``A~ = twist * holonomy`` along the flow.

Holonomies are stored as given together with an orientation flag; ``+1``
means the matrix is the transport along the flow direction, ``-1`` that it
is the transport against it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np

from .algebra_core import DEFAULT_TOL, GramMetric, as_matrix, det, kernel_basis, log_abs_det
from .complex_engine import (
    CochainComplex,
    FilteredComplex,
    MetricedDetLine,
    betti_numbers,
    cohomology,
    det_metric,
    fold_lines,
    rebase,
)
from .errors import ModelMismatchError, TorsionError


@dataclass(frozen=True)
class FixedPointDatum:
    id: str
    index: int
    gram: GramMetric

    def __post_init__(self):
        if self.index < 0:
            raise TorsionError(f"fixed point {self.id}: negative index")
        if not isinstance(self.gram, GramMetric):
            object.__setattr__(self, "gram", GramMetric(self.gram))

    @property
    def rank(self) -> int:
        return self.gram.dim


@dataclass(frozen=True)
class ClosedOrbitDatum:
    id: str
    index: int
    period: float
    twist: int
    holonomy: np.ndarray = field(repr=False)
    orientation: int

    def __post_init__(self):
        if self.index < 0:
            raise TorsionError(f"orbit {self.id}: negative index")
        if not self.period > 0 or not math.isfinite(self.period):
            raise TorsionError(f"orbit {self.id}: period must be positive")
        if self.twist not in (1, -1):
            raise TorsionError(f"orbit {self.id}: twist must be +1 or -1")
        if self.orientation not in (1, -1):
            raise TorsionError(f"orbit {self.id}: orientation must be +1 or -1")
        h = as_matrix(self.holonomy)
        if h.shape[0] != h.shape[1]:
            raise TorsionError(f"orbit {self.id}: holonomy must be square")
        if h.size == 0 or abs(det(h)) <= DEFAULT_TOL * max(1.0, np.linalg.norm(h, 2)) ** h.shape[0]:
            raise TorsionError(f"orbit {self.id}: holonomy is singular")
        h.setflags(write=False)
        object.__setattr__(self, "holonomy", h)

    @property
    def rank(self) -> int:
        return self.holonomy.shape[0]

    @property
    def flow_holonomy(self) -> np.ndarray:
        """Transport once around the orbit in the flow direction."""
        return self.holonomy if self.orientation == 1 else np.linalg.inv(self.holonomy)

    @property
    def twisted_holonomy(self) -> np.ndarray:
        """Holonomy of ``o(E^u) (x) F`` along the flow."""
        return self.twist * self.flow_holonomy

    def reversed(self) -> "ClosedOrbitDatum":
        """The same orbit datum with the opposite orientation flag."""
        return replace(self, orientation=-self.orientation)


CriticalElement = Union[FixedPointDatum, ClosedOrbitDatum]


@dataclass(frozen=True)
class SurgeryDatum:
    """Replacement data of one orbit: transport along ``a'``, signs, and the
    metrics at the new fixed points ``x`` (index + 1) and ``x'`` (index)."""

    tau: np.ndarray = field(repr=False)
    n_a: int
    n_a_prime: int
    gram_x: GramMetric
    gram_x_prime: GramMetric

    def __post_init__(self):
        t = as_matrix(self.tau)
        if t.shape[0] != t.shape[1] or t.size == 0:
            raise TorsionError("surgery transport must be a non-empty square matrix")
        if abs(det(t)) <= DEFAULT_TOL * max(1.0, np.linalg.norm(t, 2)) ** t.shape[0]:
            raise TorsionError("surgery transport is singular")
        t.setflags(write=False)
        object.__setattr__(self, "tau", t)
        if self.n_a not in (1, -1) or self.n_a_prime not in (1, -1):
            raise TorsionError("surgery signs must be +1 or -1")
        for name in ("gram_x", "gram_x_prime"):
            g = getattr(self, name)
            if not isinstance(g, GramMetric):
                object.__setattr__(self, name, GramMetric(g))

    def check_signs(self, orbit: ClosedOrbitDatum):
        if self.n_a * self.n_a_prime != -orbit.twist:
            raise TorsionError(
                f"orbit {orbit.id}: surgery signs violate n(a) * n(a') = -twist "
                f"({self.n_a} * {self.n_a_prime} != {-orbit.twist})"
            )


@dataclass(frozen=True)
class MorseSmaleSystem:
    rank: int
    elements: tuple
    chain_model: FilteredComplex | None = None
    split: bool = False
    dimension: int | None = None
    tol: float = field(default=DEFAULT_TOL, repr=False, compare=False)

    def __post_init__(self):
        elements = tuple(self.elements)
        object.__setattr__(self, "elements", elements)
        ids = [e.id for e in elements]
        if len(set(ids)) != len(ids):
            raise TorsionError("critical element ids must be unique")
        for e in elements:
            if e.rank != self.rank:
                raise TorsionError(f"element {e.id} has rank {e.rank}, system rank is {self.rank}")
            top = e.index + (1 if isinstance(e, ClosedOrbitDatum) else 0)
            if self.dimension is not None and top > self.dimension:
                raise TorsionError(f"element {e.id}: index {e.index} exceeds the manifold dimension")
        if self.chain_model is not None:
            if self.chain_model.n_levels != len(elements):
                raise ModelMismatchError(
                    f"chain model has {self.chain_model.n_levels} levels for {len(elements)} critical elements"
                )
            for p, e in enumerate(elements):
                check_level(self.chain_model, p, e, self.tol)

    @property
    def fixed_points(self) -> list[FixedPointDatum]:
        return [e for e in self.elements if isinstance(e, FixedPointDatum)]

    @property
    def orbits(self) -> list[ClosedOrbitDatum]:
        return [e for e in self.elements if isinstance(e, ClosedOrbitDatum)]

    def element(self, ident: str) -> CriticalElement:
        for e in self.elements:
            if e.id == ident:
                return e
        raise KeyError(ident)

    def model(self) -> FilteredComplex:
        """The chain model, or the split (block diagonal) model."""
        if self.chain_model is not None:
            return self.chain_model
        return split_model(self.elements)


def element_piece(e: CriticalElement) -> CochainComplex:
    if isinstance(e, ClosedOrbitDatum):
        return orbit_piece(e)
    return CochainComplex.zero((0,) * e.index + (e.rank,))


def split_model(elements: Sequence[CriticalElement]) -> FilteredComplex:
    pieces = [element_piece(e) for e in elements]
    m = max(p.top_degree for p in pieces)
    total = None
    levels: list[list[int]] = [[] for _ in range(m + 1)]
    for lev, piece in enumerate(pieces):
        piece = piece.padded(m)
        total = piece if total is None else total.direct_sum(piece)
        for k, n in enumerate(piece.dims):
            levels[k] += [lev] * n
    return FilteredComplex(total, tuple(np.asarray(l, dtype=int) for l in levels), len(pieces))


def check_level(model: FilteredComplex, p: int, e: CriticalElement, tol: float = DEFAULT_TOL):
    """Raise :class:`ModelMismatchError` unless level ``p`` realizes ``e``."""
    piece = model.piece(p)
    expected = element_piece(e).padded(piece.top_degree)
    kind = "orbit" if isinstance(e, ClosedOrbitDatum) else "fixed point"
    if expected.top_degree > piece.top_degree or piece.dims != expected.dims:
        raise ModelMismatchError(
            f"chain model does not realize the {kind} {e.id} at level {p}: "
            f"graded piece has dimensions {piece.dims}, expected {expected.dims}"
        )
    got, want = betti_numbers(piece, tol), betti_numbers(expected, tol)
    if got != want:
        raise ModelMismatchError(
            f"chain model does not realize the {kind} {e.id} at level {p}: "
            f"graded cohomology {got}, expected {want}"
        )
    if isinstance(e, ClosedOrbitDatum):
        k = e.index
        block, ref = piece.d(k), expected.d(k)
        if np.linalg.norm(block - ref) > 1e3 * tol * max(1.0, np.linalg.norm(ref)):
            raise ModelMismatchError(
                f"chain model block at level {p} differs from the orbit differential of {e.id}"
            )


def orbit_piece(o: ClosedOrbitDatum) -> CochainComplex:
    """``0 -> C^r --(A~^{-1} - 1)--> C^r -> 0`` in degrees ``ind, ind+1``."""
    r = o.rank
    b = np.linalg.inv(o.twisted_holonomy) - np.eye(r)
    return CochainComplex.from_differentials([b]).shifted(o.index)


def circle_complex(a: np.ndarray) -> CochainComplex:
    a = as_matrix(a)
    return CochainComplex.from_differentials([np.linalg.inv(a) - np.eye(a.shape[0])])


def orbit_line_metric(o: ClosedOrbitDatum, tol: float = DEFAULT_TOL) -> MetricedDetLine:
    """Metric on ``det H(orbit, o(E^u) (x) F)`` in degrees 0 and 1.

    Normalized so that the image of the canonical element of ``det C`` has
    norm 1.  That is the metric transported from equal Gram matrices on the
    two terms, and when the piece is acyclic ``||1|| = |det(1 - A~^{-1})|^{-1}``.
    """
    a = o.twisted_holonomy
    r = o.rank
    if not kernel_basis(np.linalg.inv(a) - np.eye(r), tol):
        return MetricedDetLine((np.zeros((r, 0)), np.zeros((r, 0))), -log_abs_det(np.eye(r) - np.linalg.inv(a)))
    c = circle_complex(a)
    return det_metric(c, None, cohomology(c, tol=tol), tol)


def fixed_point_line(x: FixedPointDatum) -> MetricedDetLine:
    """``(det F_x)^{(-1)^ind}`` with the standard basis as generator."""
    r = x.rank
    reps = tuple(np.zeros((0, 0)) for _ in range(x.index)) + (np.eye(r, dtype=complex),)
    half = 0.5 * x.gram.log_det()
    return MetricedDetLine(reps, half if x.index % 2 == 0 else -half)


def level_line(e: CriticalElement, tol: float = DEFAULT_TOL) -> MetricedDetLine:
    if isinstance(e, ClosedOrbitDatum):
        return orbit_line_metric(e, tol).shifted(e.index)
    return fixed_point_line(e)


class MilnorResult(NamedTuple):
    line: MetricedDetLine
    betti: tuple


def milnor_metric(sys: MorseSmaleSystem, tol: float = DEFAULT_TOL, order: Sequence[int] | None = None) -> MilnorResult:
    """Milnor metric on ``det H(X, F)``.

    With a chain model the per-level lines are fused along the filtration;
    with the split flag the tensor product of the per-level lines is taken
    directly.  Either way the generator is the harmonic (identity metric)
    basis of the model's cohomology.
    """
    lines = [level_line(e, tol) for e in sys.elements]
    if sys.chain_model is not None:
        model = sys.chain_model
        line = fold_lines(model, lines, order, tol)
        return MilnorResult(line, betti_numbers(model.complex, tol))
    if not sys.split:
        raise TorsionError("milnor metric needs a chain model or the split flag")
    model = split_model(sys.elements)
    reps = []
    for k, n in enumerate(model.complex.dims):
        cols = []
        for p, line in enumerate(lines):
            if k >= len(line.representatives) or line.representatives[k].shape[1] == 0:
                continue
            block = np.zeros((n, line.representatives[k].shape[1]), dtype=complex)
            block[model.levels[k] == p] = line.representatives[k]
            cols.append(block)
        reps.append(np.hstack(cols) if cols else np.zeros((n, 0), dtype=complex))
    product = MetricedDetLine(tuple(reps), sum(line.log_norm for line in lines))
    reference = cohomology(model.complex, tol=tol).representatives
    return MilnorResult(rebase(product, model.complex, reference, tol), betti_numbers(model.complex, tol))


# --------------------------------------------------------------------------
# Franks surgery


def surgered_block(o: ClosedOrbitDatum, s: SurgeryDatum) -> np.ndarray:
    """``n(a) tau(a)^{-1} + n(a') tau(a')^{-1}`` with ``tau(a) = rho tau(a')``."""
    tau_a = o.flow_holonomy @ s.tau
    return s.n_a * np.linalg.inv(tau_a) + s.n_a_prime * np.linalg.inv(s.tau)


def _check_surgery(sys: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum]):
    for o in sys.orbits:
        if o.id not in surgery:
            raise TorsionError(f"no surgery data for orbit {o.id}")
        s = surgery[o.id]
        s.check_signs(o)
        if s.tau.shape[0] != sys.rank or s.gram_x.dim != sys.rank or s.gram_x_prime.dim != sys.rank:
            raise TorsionError(f"orbit {o.id}: surgery data has the wrong rank")
    extra = set(surgery) - {o.id for o in sys.orbits}
    if extra:
        raise TorsionError(f"surgery data for unknown orbits {sorted(extra)}")


def _surgery(sys: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum], tol: float):
    """Surgered system plus the chain isomorphism from the old model (per degree)."""
    _check_surgery(sys, surgery)
    model = sys.model()
    c = model.complex
    phi = [np.eye(n, dtype=complex) for n in c.dims]
    new_levels = [np.zeros(n, dtype=int) for n in c.dims]
    elements: list[CriticalElement] = []
    blocks = {}
    for p, e in enumerate(sys.elements):
        if isinstance(e, FixedPointDatum):
            for k in range(len(c.dims)):
                new_levels[k][model.levels[k] == p] = len(elements)
            elements.append(e)
            continue
        s = surgery[e.id]
        q = e.index
        lo = len(elements)
        elements.append(FixedPointDatum(f"{e.id}:x'", q, s.gram_x_prime))
        elements.append(FixedPointDatum(f"{e.id}:x", q + 1, s.gram_x))
        new_levels[q][model.levels[q] == p] = lo
        new_levels[q + 1][model.levels[q + 1] == p] = lo + 1
        # the surgered block is S (A~^{-1} - 1) with S = -n(a') tau(a')^{-1}
        rows = np.flatnonzero(model.levels[q + 1] == p)
        scale = -s.n_a_prime * np.linalg.inv(s.tau)
        phi[q + 1][np.ix_(rows, rows)] = scale
        blocks[e.id] = (q, rows, np.flatnonzero(model.levels[q] == p), surgered_block(e, s))
    phi_inv = [np.linalg.inv(m) if m.size else m for m in phi]
    ds = [phi[k + 1] @ d @ phi_inv[k] for k, d in enumerate(c.differentials)]
    for q, rows, cols, blk in blocks.values():
        current = ds[q][np.ix_(rows, cols)]
        if np.linalg.norm(current - blk) > 1e3 * tol * max(1.0, np.linalg.norm(blk)):
            raise TorsionError("surgered block does not match the transported orbit differential")
        ds[q][np.ix_(rows, cols)] = blk
    new_complex = CochainComplex(c.dims, tuple(ds), d2_tol=1e-9)
    new_model = FilteredComplex(new_complex, tuple(new_levels), len(elements), tol=1e-9)
    new_sys = MorseSmaleSystem(sys.rank, tuple(elements), new_model, False, sys.dimension, sys.tol)
    return new_sys, phi


def franks_surgery(sys: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum], tol: float = DEFAULT_TOL) -> MorseSmaleSystem:
    """Replace every closed orbit by a pair of fixed points ``x'`` (index ``ind``)
    and ``x`` (index ``ind + 1``) on consecutive levels."""
    return _surgery(sys, surgery, tol)[0]


def franks_comparison_rhs(sys: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum]) -> float:
    """``sum_orbits (-1)^ind log ||det tau(a')||^2``."""
    _check_surgery(sys, surgery)
    total = 0.0
    for o in sys.orbits:
        s = surgery[o.id]
        term = 2 * log_abs_det(s.tau) + s.gram_x_prime.log_det() - s.gram_x.log_det()
        total += term if o.index % 2 == 0 else -term
    return total


class Comparison(NamedTuple):
    lhs: float
    rhs: float
    residual: float
    passed: bool


def compare_milnor(
    sys: MorseSmaleSystem, surgery: Mapping[str, SurgeryDatum], tol: float = DEFAULT_TOL
) -> Comparison:
    """Both sides of the Milnor metric comparison under Franks surgery.

    ``lhs`` is the log-ratio of squared Milnor norms of one generator of
    ``det H``, carried from the flow model to the gradient model by the chain
    isomorphism; ``rhs`` is :func:`franks_comparison_rhs`.
    """
    new_sys, phi = _surgery(sys, surgery, tol)
    before = milnor_metric(sys, tol)
    after = milnor_metric(new_sys, tol)
    if before.betti != after.betti:
        raise ModelMismatchError(f"surgery changed cohomology: {before.betti} -> {after.betti}")
    carried = [phi[k] @ r for k, r in enumerate(before.line.representatives)]
    after_line = rebase(after.line, new_sys.chain_model.complex, carried, tol)
    lhs = 2 * (after_line.log_norm - before.line.log_norm)
    rhs = franks_comparison_rhs(sys, surgery)
    residual = abs(lhs - rhs)
    return Comparison(lhs, rhs, residual, residual < tol)
