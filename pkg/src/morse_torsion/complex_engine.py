"""Cochain complexes, determinant lines and their metrics.

A metric on a determinant line is carried as the log-norm of one explicit
generator: the alternating wedge of cocycle representatives, one matrix of
column vectors per degree (:class:`MetricedDetLine`).  Phases are never
tracked.

Conventions
-----------
* ``d_k`` maps ``C^k -> C^{k+1}`` and has shape ``(dims[k+1], dims[k])``.
* The metric on ``det H`` is the one transported from ``det C`` through the
  Knudsen-Mumford isomorphism: for cocycles ``h^k`` and lifts ``s^k`` whose
  images span ``im d_k``, the generator ``(x)_k (^h^k)^{(-1)^k}`` has norm
  ``prod_k ||d s^{k-1} ^ h^k ^ s^k||^{(-1)^k}``.
* In a :class:`FilteredComplex` the differential never lowers the level, so
  the cochains at levels ``>= p`` form a subcomplex for each ``p``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .algebra_core import (
    DEFAULT_TOL,
    GramMetric,
    Multivector,
    as_matrix,
    det,
    log_wedge_gram_norm,
    numerical_rank,
)
from .errors import FiltrationError, NotAcyclicError, StaleReportError, TorsionError

D2_TOL = 1e-12
ORACLE_MAX_DIM = 24


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CochainComplex:
    """``0 -> C^0 -> C^1 -> ... -> C^m -> 0`` with ``C^k = C^{dims[k]}``."""

    dims: tuple
    differentials: tuple = field(repr=False)
    d2_tol: float = field(default=D2_TOL, repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 0 for n in dims):
            raise TorsionError(f"invalid dimensions {dims}")
        if len(self.differentials) != len(dims) - 1:
            raise TorsionError(
                f"{len(dims)} degrees need {len(dims) - 1} differentials, got {len(self.differentials)}"
            )
        ds = tuple(
            _frozen(as_matrix(d, dims[k + 1], dims[k])) for k, d in enumerate(self.differentials)
        )
        for k in range(len(ds) - 1):
            if ds[k + 1].size == 0 or ds[k].size == 0:
                continue
            prod = ds[k + 1] @ ds[k]
            bound = self.d2_tol * max(np.linalg.norm(ds[k + 1], 2) * np.linalg.norm(ds[k], 2), 1.0)
            if np.linalg.norm(prod, 2) > bound:
                raise TorsionError(f"d_{k + 1} d_{k} != 0 (norm {np.linalg.norm(prod, 2):.3e})")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "differentials", ds)

    @classmethod
    def from_differentials(cls, differentials: Sequence, **kw) -> "CochainComplex":
        mats = [as_matrix(d) for d in differentials]
        if not mats:
            raise TorsionError("need at least one differential to infer the dimensions")
        dims = [mats[0].shape[1]] + [m.shape[0] for m in mats]
        return cls(tuple(dims), tuple(mats), **kw)

    @classmethod
    def zero(cls, dims: Sequence[int]) -> "CochainComplex":
        dims = tuple(dims)
        return cls(dims, tuple(np.zeros((dims[k + 1], dims[k])) for k in range(len(dims) - 1)))

    @property
    def top_degree(self) -> int:
        return len(self.dims) - 1

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def d(self, k: int) -> np.ndarray:
        """``d_k``, with zero maps outside the stored range."""
        if 0 <= k < len(self.differentials):
            return self.differentials[k]
        rows = self.dims[k + 1] if 0 <= k + 1 <= self.top_degree else 0
        cols = self.dims[k] if 0 <= k <= self.top_degree else 0
        return np.zeros((rows, cols), dtype=complex)

    def restrict(self, indices: Sequence[Sequence[int]]) -> "CochainComplex":
        """Sub- or quotient complex on the given basis vectors of each degree."""
        idx = [np.asarray(i, dtype=int) for i in indices]
        dims = tuple(len(i) for i in idx)
        ds = tuple(d[np.ix_(idx[k + 1], idx[k])] for k, d in enumerate(self.differentials))
        return CochainComplex(dims, ds, d2_tol=max(self.d2_tol, 1e-9))

    def shifted(self, n: int) -> "CochainComplex":
        """The same complex with degree ``k`` moved to ``k + n`` (``n >= 0``)."""
        if n < 0:
            raise TorsionError("only non-negative shifts are supported")
        dims = (0,) * n + self.dims
        ds = tuple(np.zeros((0, 0)) for _ in range(max(n - 1, 0)))
        if n:
            ds += (np.zeros((self.dims[0], 0)),)
        return CochainComplex(dims, ds + self.differentials)

    def direct_sum(self, other: "CochainComplex") -> "CochainComplex":
        m = max(self.top_degree, other.top_degree)
        a, b = self.padded(m), other.padded(m)
        dims = tuple(x + y for x, y in zip(a.dims, b.dims))
        ds = []
        for k in range(m):
            blk = np.zeros((dims[k + 1], dims[k]), dtype=complex)
            blk[: a.dims[k + 1], : a.dims[k]] = a.differentials[k]
            blk[a.dims[k + 1]:, a.dims[k]:] = b.differentials[k]
            ds.append(blk)
        return CochainComplex(dims, tuple(ds))

    def padded(self, m: int) -> "CochainComplex":
        """Extend with zero spaces up to degree ``m``."""
        if m <= self.top_degree:
            return self
        extra = m - self.top_degree
        dims = self.dims + (0,) * extra
        ds = self.differentials + (np.zeros((0, self.dims[-1])),)
        ds += tuple(np.zeros((0, 0)) for _ in range(extra - 1))
        return CochainComplex(dims, ds)

    def fingerprint(self) -> str:
        h = hashlib.sha256(repr(self.dims).encode())
        for d in self.differentials:
            h.update(np.ascontiguousarray(d).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class GradedMetric:
    """One :class:`GramMetric` per degree."""

    grams: tuple

    def __post_init__(self):
        object.__setattr__(self, "grams", tuple(g if isinstance(g, GramMetric) else GramMetric(g) for g in self.grams))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "GradedMetric":
        return cls(tuple(GramMetric.identity(n) for n in dims))

    @property
    def dims(self) -> tuple:
        return tuple(g.dim for g in self.grams)

    def direct_sum(self, other: "GradedMetric") -> "GradedMetric":
        """Orthogonal sum, degree by degree, padding with zero spaces."""
        m = max(len(self.grams), len(other.grams))
        empty = GramMetric(np.zeros((0, 0)))
        a = self.grams + (empty,) * (m - len(self.grams))
        b = other.grams + (empty,) * (m - len(other.grams))
        return GradedMetric(tuple(GramMetric(block_diag(x.entries, y.entries)) for x, y in zip(a, b)))

    def check(self, c: CochainComplex):
        if self.dims != c.dims:
            raise TorsionError(f"metric dimensions {self.dims} do not match complex {c.dims}")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for g in self.grams:
            h.update(np.ascontiguousarray(g.entries).tobytes())
        return h.hexdigest()


def _metric(c: CochainComplex, g: GradedMetric | None) -> GradedMetric:
    if g is None:
        return GradedMetric.identity(c.dims)
    g.check(c)
    return g


@dataclass(frozen=True)
class CohomologyReport:
    betti: tuple
    representatives: tuple = field(repr=False)
    source: str = field(repr=False, default="")

    @property
    def is_acyclic(self) -> bool:
        return not any(self.betti)


def _cholesky_factors(g: GradedMetric):
    # G = L L^*, orthonormal coordinates u' = L^* u
    out = []
    for gram in g.grams:
        if gram.dim == 0:
            out.append(np.zeros((0, 0), dtype=complex))
        else:
            out.append(np.linalg.cholesky(gram.entries))
    return out


def _orthonormal_differentials(c: CochainComplex, chol) -> list[np.ndarray]:
    ds = []
    for k, d in enumerate(c.differentials):
        lk, lk1 = chol[k], chol[k + 1]
        if d.size == 0:
            ds.append(d.copy())
            continue
        # L_{k+1}^* d L_k^{-*}
        right = np.linalg.solve(lk.conj(), d.T).T if lk.size else d
        ds.append(lk1.conj().T @ right)
    return ds


def ranks(c: CochainComplex, tol: float = DEFAULT_TOL) -> list[int]:
    return [numerical_rank(d, tol) for d in c.differentials]


def betti_numbers(c: CochainComplex, tol: float = DEFAULT_TOL) -> tuple:
    r = ranks(c, tol)
    out = []
    for k, n in enumerate(c.dims):
        rk = r[k] if k < len(r) else 0
        rk1 = r[k - 1] if k >= 1 else 0
        out.append(n - rk - rk1)
    return tuple(out)


def cohomology(c: CochainComplex, g: GradedMetric | None = None, tol: float = DEFAULT_TOL) -> CohomologyReport:
    """Betti numbers and ``g``-harmonic, ``g``-orthonormal cocycle representatives."""
    g = _metric(c, g)
    chol = _cholesky_factors(g)
    dps = _orthonormal_differentials(c, chol)
    rk = [numerical_rank(d, tol) for d in dps]
    betti, reps = [], []
    for k, n in enumerate(c.dims):
        r_out = rk[k] if k < len(rk) else 0
        r_in = rk[k - 1] if k >= 1 else 0
        b = n - r_out - r_in
        if b < 0:
            raise TorsionError(f"inconsistent ranks in degree {k}")
        betti.append(b)
        if b == 0:
            reps.append(np.zeros((n, 0), dtype=complex))
            continue
        blocks = []
        if k < len(dps):
            blocks.append(dps[k])
        if k >= 1:
            blocks.append(dps[k - 1].conj().T)
        stacked = np.vstack(blocks) if blocks else np.zeros((0, n), dtype=complex)
        if stacked.shape[0] == 0:
            harm = np.eye(n, dtype=complex)
        else:
            _, _, vh = np.linalg.svd(stacked)
            harm = vh[n - b:].conj().T
        # back to the original coordinates: u = L^{-*} u'
        reps.append(np.linalg.solve(chol[k].conj().T, harm))
    return CohomologyReport(tuple(betti), tuple(_frozen(r) for r in reps), _source_tag(c, g))


def _source_tag(c: CochainComplex, g: GradedMetric) -> str:
    return c.fingerprint() + ":" + g.fingerprint()


@dataclass(frozen=True)
class MetricedDetLine:
    """A metric on ``det H`` given by the log-norm of one generator.

    The generator is ``(x)_k (^ representatives[k])^{(-1)^k}`` where
    ``representatives[k]`` holds cocycles of degree ``k`` as columns.  An
    acyclic complex has the canonical generator ``1``.
    """

    representatives: tuple = field(repr=False)
    log_norm: float

    def __post_init__(self):
        if not math.isfinite(self.log_norm):
            raise TorsionError("log-norm must be finite")
        object.__setattr__(
            self, "representatives", tuple(_frozen(np.array(r, dtype=complex)) for r in self.representatives)
        )

    @property
    def betti(self) -> tuple:
        return tuple(r.shape[1] for r in self.representatives)

    @property
    def norm(self) -> float:
        return math.exp(self.log_norm)

    @property
    def descriptor(self) -> str:
        parts = []
        for k, r in enumerate(self.representatives):
            if r.shape[1] == 0:
                continue
            wedge = "^".join(f"h{k}_{j + 1}" for j in range(r.shape[1]))
            parts.append(f"({wedge})" if k % 2 == 0 else f"({wedge})^-1")
        return " (x) ".join(parts) if parts else "1"

    def shifted(self, n: int) -> "MetricedDetLine":
        """The line of the complex shifted up by ``n`` degrees."""
        reps = tuple(np.zeros((0, 0)) for _ in range(n)) + self.representatives
        return MetricedDetLine(reps, self.log_norm if n % 2 == 0 else -self.log_norm)


def _lifts(c: CochainComplex, k: int, tol: float) -> np.ndarray:
    """Vectors of ``C^k`` orthogonal to ``ker d_k`` whose images span ``im d_k``."""
    d = c.d(k)
    n = c.dims[k] if 0 <= k <= c.top_degree else 0
    if d.size == 0:
        return np.zeros((n, 0), dtype=complex)
    r = numerical_rank(d, tol)
    _, _, vh = np.linalg.svd(d)
    return vh[:r].conj().T


def transported_log_norm(
    c: CochainComplex,
    g: GradedMetric | None,
    representatives: Sequence[np.ndarray],
    lifts: Sequence[np.ndarray] | None = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """Log-norm of the generator built from ``representatives`` under the
    metric transported from ``det C`` (``g``) through ``det C = det H``."""
    g = _metric(c, g)
    if lifts is None:
        lifts = [_lifts(c, k, tol) for k in range(len(c.dims))]
    total = 0.0
    for k, n in enumerate(c.dims):
        prev = c.d(k - 1) @ lifts[k - 1] if k >= 1 else np.zeros((n, 0), dtype=complex)
        block = np.hstack([prev, np.asarray(representatives[k]), lifts[k]]) if n else np.zeros((0, 0))
        if block.shape[1] != n:
            raise TorsionError(
                f"degree {k}: images, representatives and lifts give {block.shape[1]} vectors in C^{n}"
            )
        lw = log_wedge_gram_norm(block, g.grams[k]) if n else 0.0
        if not math.isfinite(lw):
            raise TorsionError(f"degree {k}: lifts, images and representatives are dependent")
        total += lw if k % 2 == 0 else -lw
    return total


def _require_acyclic(c: CochainComplex, tol: float):
    b = betti_numbers(c, tol)
    if any(b):
        raise NotAcyclicError(f"complex is not acyclic, Betti numbers {b}")


def _as_columns(vectors, n: int) -> np.ndarray:
    a = np.asarray(vectors, dtype=complex)
    if a.size == 0:
        return np.zeros((n, 0), dtype=complex)
    return a.reshape(n, -1)


def log_torsion(
    c: CochainComplex,
    g: GradedMetric | None = None,
    lifts: Sequence[np.ndarray] | None = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """``log`` of :func:`canonical_element_norm` (production path)."""
    _require_acyclic(c, tol)
    empty = [np.zeros((n, 0), dtype=complex) for n in c.dims]
    if lifts is not None:
        lifts = [_as_columns(s, c.dims[k]) for k, s in enumerate(lifts)]
    return transported_log_norm(c, g, empty, lifts, tol)


def _greedy_lifts(c: CochainComplex, k: int, tol: float) -> np.ndarray:
    """Standard basis vectors whose images form a basis of ``im d_k``."""
    d = c.d(k)
    n = c.dims[k] if 0 <= k <= c.top_degree else 0
    chosen: list[int] = []
    target = numerical_rank(d, tol) if d.size else 0
    for j in range(n):
        if len(chosen) == target:
            break
        trial = chosen + [j]
        if numerical_rank(d[:, trial], tol) == len(trial):
            chosen = trial
    out = np.zeros((n, len(chosen)), dtype=complex)
    for col, j in enumerate(chosen):
        out[j, col] = 1.0
    return out


def _wedge_top_coefficient(vectors: np.ndarray) -> complex:
    n = vectors.shape[0]
    acc = Multivector.scalar(n)
    for j in range(vectors.shape[1]):
        acc = acc.wedge(Multivector.from_vector(vectors[:, j]))
    return acc.top()


def canonical_element_norm(
    c: CochainComplex,
    g: GradedMetric | None = None,
    lifts: Sequence[np.ndarray] | None = None,
    method: str = "gram",
    tol: float = DEFAULT_TOL,
) -> float:
    """Norm of the canonical element of ``det C`` of an acyclic complex.

    ``method="gram"`` multiplies Gram-determinant norms of ``d s^{k-1} ^ s^k``;
    ``method="wedge"`` builds each top exterior power explicitly from standard
    basis lifts and is limited to total dimension 24.
    """
    if method == "gram":
        return math.exp(log_torsion(c, g, lifts, tol))
    if method != "wedge":
        raise TorsionError(f"unknown method {method!r}")
    if c.total_dim > ORACLE_MAX_DIM:
        raise TorsionError(f"wedge oracle limited to total dimension {ORACLE_MAX_DIM}")
    g = _metric(c, g)
    _require_acyclic(c, tol)
    lifts = [_greedy_lifts(c, k, tol) for k in range(len(c.dims))]
    log_norm = 0.0
    for k, n in enumerate(c.dims):
        if n == 0:
            continue
        prev = c.d(k - 1) @ lifts[k - 1] if k >= 1 else np.zeros((n, 0), dtype=complex)
        block = np.hstack([prev, lifts[k]])
        coeff = _wedge_top_coefficient(block)
        # ||e_1 ^ ... ^ e_n||^2 = det G
        lw = math.log(abs(coeff)) + 0.5 * math.log(abs(det(g.grams[k].entries)))
        log_norm += lw if k % 2 == 0 else -lw
    return math.exp(log_norm)


def det_metric(c: CochainComplex, g: GradedMetric | None, report: CohomologyReport, tol: float = DEFAULT_TOL) -> MetricedDetLine:
    """Transported metric on ``det H`` with the harmonic representatives of
    ``report`` as generator.  Their own Gram norms are 1, so the log-norm is
    the torsion of the orthogonal acyclic part."""
    g = _metric(c, g)
    if report.source != _source_tag(c, g):
        raise StaleReportError("cohomology report was computed from a different complex or metric")
    return MetricedDetLine(report.representatives, transported_log_norm(c, g, report.representatives, tol=tol))


def coordinates_mod_coboundaries(
    c: CochainComplex, k: int, basis: np.ndarray, vectors: np.ndarray, tol: float = DEFAULT_TOL
) -> np.ndarray:
    """Solve ``vectors = basis @ X + d_{k-1} @ Y`` and return ``X``."""
    basis = np.asarray(basis, dtype=complex)
    vectors = np.asarray(vectors, dtype=complex)
    if vectors.shape[1] == 0 or basis.shape[1] == 0:
        if vectors.shape[1] and basis.shape[1] == 0:
            _check_in_span(c.d(k - 1), vectors, tol, k)
        return np.zeros((basis.shape[1], vectors.shape[1]), dtype=complex)
    system = np.hstack([basis, c.d(k - 1)])
    sol, *_ = np.linalg.lstsq(system, vectors, rcond=None)
    resid = np.linalg.norm(system @ sol - vectors)
    scale = max(np.linalg.norm(vectors), 1.0)
    if resid > 1e3 * tol * scale:
        raise FiltrationError(f"degree {k}: vectors are not cocycles spanned by the basis (residual {resid:.2e})")
    return sol[: basis.shape[1]]


def _check_in_span(d: np.ndarray, vectors: np.ndarray, tol: float, k: int):
    if d.size == 0:
        if np.linalg.norm(vectors) > tol:
            raise FiltrationError(f"degree {k}: nonzero class in zero cohomology")
        return
    sol, *_ = np.linalg.lstsq(d, vectors, rcond=None)
    resid = np.linalg.norm(d @ sol - vectors)
    if resid > 1e3 * tol * max(np.linalg.norm(vectors), 1.0):
        raise FiltrationError(f"degree {k}: nonzero class in zero cohomology")


def rebase(line: MetricedDetLine, c: CochainComplex, representatives: Sequence[np.ndarray], tol: float = DEFAULT_TOL) -> MetricedDetLine:
    """Express the same metric through a different generator."""
    log_norm = line.log_norm
    for k in range(len(c.dims)):
        old = line.representatives[k] if k < len(line.representatives) else np.zeros((c.dims[k], 0))
        new = np.asarray(representatives[k], dtype=complex)
        if old.shape[1] != new.shape[1]:
            raise TorsionError(f"degree {k}: {old.shape[1]} vs {new.shape[1]} representatives")
        if new.shape[1] == 0:
            continue
        x = coordinates_mod_coboundaries(c, k, new, old, tol)
        # old generator = prod det(X_k)^{(-1)^k} * new generator
        ld = math.log(abs(det(x)))
        log_norm -= ld if k % 2 == 0 else -ld
    return MetricedDetLine(tuple(representatives), log_norm)


# --------------------------------------------------------------------------
# filtrations and fusion


@dataclass(frozen=True)
class FilteredComplex:
    """A complex whose basis vectors carry levels ``0..n_levels-1``.

    The differential sends a basis vector of level ``p`` into the span of
    basis vectors of level ``>= p``.
    """

    complex: CochainComplex
    levels: tuple = field(repr=False)
    n_levels: int = 0
    tol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self):
        c = self.complex
        if len(self.levels) != len(c.dims):
            raise TorsionError("one level list per degree is required")
        lv = tuple(_frozen(np.asarray(l, dtype=int).reshape(-1)) for l in self.levels)
        for k, l in enumerate(lv):
            if len(l) != c.dims[k]:
                raise TorsionError(f"degree {k}: {len(l)} levels for {c.dims[k]} basis vectors")
        n = self.n_levels or (1 + max((int(l.max()) for l in lv if l.size), default=0))
        if any(l.size and (l.min() < 0 or l.max() >= n) for l in lv):
            raise TorsionError(f"levels must lie in 0..{n - 1}")
        for k, d in enumerate(c.differentials):
            if d.size == 0:
                continue
            lowering = lv[k + 1][:, None] < lv[k][None, :]
            scale = max(np.max(np.abs(d)), 1.0)
            if np.any(np.abs(d[lowering]) > self.tol * scale):
                raise FiltrationError(f"d_{k} maps a basis vector to a lower level")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "n_levels", n)

    def indices(self, lo: int, hi: int) -> list[np.ndarray]:
        """Per-degree basis indices with level in ``[lo, hi)``."""
        return [np.flatnonzero((l >= lo) & (l < hi)) for l in self.levels]

    def interval(self, lo: int, hi: int) -> CochainComplex:
        """Subquotient complex on the levels ``[lo, hi)``."""
        return self.complex.restrict(self.indices(lo, hi))

    def piece(self, p: int) -> CochainComplex:
        return self.interval(p, p + 1)


@dataclass(frozen=True, eq=False)
class ExactSequence(CochainComplex):
    """Long exact sequence of ``0 -> sub -> total -> quotient -> 0``.

    Degree ``3i`` holds ``H^i(sub)``, ``3i+1`` holds ``H^i(total)`` and ``3i+2``
    holds ``H^i(quotient)``, each in the coordinates of the stored bases.
    """

    sub: CochainComplex = None
    total: CochainComplex = None
    quotient: CochainComplex = None
    sub_basis: tuple = ()
    total_basis: tuple = ()
    quotient_basis: tuple = ()


def _embed(n: int, idx: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    out = np.zeros((n, vectors.shape[1]), dtype=complex)
    out[idx] = vectors
    return out


def exact_sequence(
    total: CochainComplex, sub_indices: Sequence[np.ndarray], tol: float = DEFAULT_TOL
) -> ExactSequence:
    """Build the long exact sequence for the subcomplex on ``sub_indices``."""
    m = total.top_degree
    sub_idx = [np.asarray(i, dtype=int) for i in sub_indices]
    quot_idx = [np.setdiff1d(np.arange(n), sub_idx[k]) for k, n in enumerate(total.dims)]
    for k, d in enumerate(total.differentials):
        leak = d[np.ix_(quot_idx[k + 1], sub_idx[k])]
        if leak.size and np.max(np.abs(leak)) > 1e3 * tol * max(np.max(np.abs(d)), 1.0):
            raise FiltrationError("filtration not respected: the subcomplex is not closed under d")
    sub = total.restrict(sub_idx)
    quot = total.restrict(quot_idx)
    bs = cohomology(sub, tol=tol).representatives
    bt = cohomology(total, tol=tol).representatives
    bq = cohomology(quot, tol=tol).representatives

    dims, maps = [], []
    for k in range(m + 1):
        dims += [bs[k].shape[1], bt[k].shape[1], bq[k].shape[1]]
        inc = coordinates_mod_coboundaries(total, k, bt[k], _embed(total.dims[k], sub_idx[k], bs[k]), tol)
        proj = coordinates_mod_coboundaries(quot, k, bq[k], bt[k][quot_idx[k]], tol)
        maps += [inc, proj]
        if k < m:
            # zig-zag: lift to the total complex, apply d, land in the subcomplex
            image = total.d(k) @ _embed(total.dims[k], quot_idx[k], bq[k])
            stray = image[quot_idx[k + 1]]
            if stray.size and np.linalg.norm(stray) > 1e3 * tol * max(np.linalg.norm(image), 1.0):
                raise FiltrationError("filtration not respected: quotient representative is not a cocycle")
            maps.append(coordinates_mod_coboundaries(sub, k + 1, bs[k + 1], image[sub_idx[k + 1]], tol))
    # entries at rounding level are zeros of the exact maps
    scale = max([1.0] + [float(np.max(np.abs(d))) for d in total.differentials if d.size])
    maps = [np.where(np.abs(x) < 10 * tol * scale, 0, x) for x in maps]
    les = ExactSequence(
        tuple(dims), tuple(maps), 1e-8,
        sub=sub, total=total, quotient=quot, sub_basis=bs, total_basis=bt, quotient_basis=bq,
    )
    try:
        _require_acyclic(les, tol)
    except NotAcyclicError as exc:
        raise FiltrationError(f"filtration not respected: long sequence is not exact ({exc})") from None
    return les


def les_of_pair(f: FilteredComplex, p: int, tol: float = DEFAULT_TOL) -> ExactSequence:
    """Long exact sequence of (levels > p, everything, levels <= p)."""
    if not 0 <= p < f.n_levels:
        raise TorsionError(f"level {p} outside 0..{f.n_levels - 1}")
    return exact_sequence(f.complex, f.indices(p + 1, f.n_levels), tol)


def fuse(sub_line: MetricedDetLine, quot_line: MetricedDetLine, les: ExactSequence, tol: float = DEFAULT_TOL) -> MetricedDetLine:
    """Metric on ``det H(total)`` making the fusion isomorphism an isometry.

    With every term of the exact sequence written in the stored bases, the
    fused log-norm is the sum of the input log-norms plus the log-torsion of
    the sequence (identity Gram matrices in those bases).
    """
    s = rebase(sub_line, les.sub, les.sub_basis, tol)
    q = rebase(quot_line, les.quotient, les.quotient_basis, tol)
    return MetricedDetLine(les.total_basis, s.log_norm + q.log_norm + log_torsion(les, tol=tol))


def fold_lines(
    f: FilteredComplex,
    lines: Sequence[MetricedDetLine],
    order: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
) -> MetricedDetLine:
    """Fuse per-level lines into a line on ``det H`` of the whole complex.

    ``order`` lists merge positions: step ``j`` fuses the current intervals
    ``order[j]`` and ``order[j] + 1``.  The default merges left to right.
    The result is expressed on the harmonic (identity metric) generator of
    the whole complex.
    """
    n = f.n_levels
    if len(lines) != n:
        raise TorsionError(f"{len(lines)} lines for {n} levels")
    if order is None:
        order = [0] * (n - 1)
    if len(order) != n - 1:
        raise TorsionError(f"an association order for {n} levels has {n - 1} steps")
    bounds = list(range(n + 1))
    current = list(lines)
    for pos in order:
        if not 0 <= pos < len(current) - 1:
            raise TorsionError(f"invalid merge position {pos}")
        a, b, c = bounds[pos], bounds[pos + 1], bounds[pos + 2]
        outer = f.indices(a, c)
        total = f.complex.restrict(outer)
        sub_local = [np.flatnonzero(f.levels[k][outer[k]] >= b) for k in range(len(outer))]
        les = exact_sequence(total, sub_local, tol)
        merged = fuse(current[pos + 1], current[pos], les, tol)
        current[pos: pos + 2] = [merged]
        del bounds[pos + 1]
    (line,) = current
    reference = cohomology(f.complex, tol=tol).representatives
    return rebase(line, f.complex, reference, tol)


def fold_filtration(
    f: FilteredComplex,
    graded_metrics: Sequence[GradedMetric],
    order: Sequence[int] | None = None,
    tol: float = DEFAULT_TOL,
) -> MetricedDetLine:
    """Fuse the transported metrics of the graded pieces."""
    if len(graded_metrics) != f.n_levels:
        raise TorsionError(f"{len(graded_metrics)} metrics for {f.n_levels} levels")
    lines = []
    for p, g in enumerate(graded_metrics):
        piece = f.piece(p)
        lines.append(det_metric(piece, g, cohomology(piece, g, tol), tol))
    return fold_lines(f, lines, order, tol)


def random_order(n_levels: int, rng: np.random.Generator) -> list[int]:
    return [int(rng.integers(0, n_levels - 1 - j)) for j in range(n_levels - 1)]


def fusion_order_invariance_check(
    f: FilteredComplex,
    metrics: Sequence[GradedMetric],
    trials: int = 10,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> float:
    """Max deviation of the folded log-norm over random association orders."""
    if f.n_levels < 3:
        return 0.0
    rng = np.random.default_rng(seed)
    base = fold_filtration(f, metrics, tol=tol).log_norm
    worst = 0.0
    for _ in range(trials):
        other = fold_filtration(f, metrics, random_order(f.n_levels, rng), tol).log_norm
        worst = max(worst, abs(other - base))
    return worst
