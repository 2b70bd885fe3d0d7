"""Linear and exterior algebra over the complex numbers.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  Exterior algebra
elements (:class:`Multivector`) are stored sparsely, keyed by strictly
increasing index tuples, which keeps ``exp`` of a 2-form cheap: only the even
degrees are ever populated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate

from .errors import IllConditionedError, TorsionError

DEFAULT_TOL = 1e-9
MAX_GENERATORS = 16


def as_matrix(m, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``m`` into a 2-d complex array, optionally checking its shape."""
    a = np.array(m, dtype=complex)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    if a.ndim != 2:
        raise TorsionError(f"expected a matrix, got an array of shape {a.shape}")
    if rows is not None and a.shape[0] != rows or cols is not None and a.shape[1] != cols:
        raise TorsionError(f"expected shape ({rows}, {cols}), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise TorsionError("matrix has non-finite entries")
    return a


def det(m) -> complex:
    """Determinant of a square matrix (LU with partial pivoting)."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise TorsionError(f"determinant of a non-square {a.shape} matrix")
    if a.shape[0] == 0:
        return 1.0 + 0j
    return complex(np.linalg.det(a))


def log_abs_det(m) -> float:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise TorsionError(f"determinant of a non-square {a.shape} matrix")
    if a.shape[0] == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0:
        return -math.inf
    return float(logdet)


def numerical_rank(m, tol: float = DEFAULT_TOL) -> int:
    """Rank with a relative singular-value cutoff.

    The cutoff is ``tol * max(s_max, 1)``: relative for matrices of norm above
    one, and absolute below that, so a matrix made of rounding noise has rank
    0 rather than full rank.  A singular value within a factor 10 of ``tol * s_max`` makes the decision
    ambiguous and raises :class:`IllConditionedError`.
    """
    a = as_matrix(m)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    smax = s[0]
    if smax == 0.0:
        return 0
    cutoff = tol * max(smax, 1.0)
    ambiguous = (s > cutoff / 10) & (s < cutoff * 10)
    if np.any(ambiguous):
        raise IllConditionedError(
            f"ill-conditioned rank: singular value {s[ambiguous][0]:.3e} is within 10x "
            f"of the cutoff {cutoff:.3e}"
        )
    return int(np.sum(s > cutoff))


def kernel_basis(m, tol: float = DEFAULT_TOL) -> list[np.ndarray]:
    """Orthonormal basis of the numerical kernel of ``m``.

    Singular values below ``tol * max(s_max, 1)`` count as zero, the same
    rule as :func:`numerical_rank`.
    """
    if tol <= 0:
        raise TorsionError("tol must be positive")
    a = as_matrix(m)
    n = a.shape[1]
    if n == 0:
        return []
    if a.shape[0] == 0:
        return [v for v in np.eye(n, dtype=complex)]
    _, s, vh = np.linalg.svd(a)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * max(smax, 1.0)))
    return [vh[j].conj() for j in range(rank, n)]


@dataclass(frozen=True)
class GramMetric:
    """A Hermitian positive definite inner product on C^r, ``<u, v> = u^* G v``."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = as_matrix(self.entries)
        if g.shape[0] != g.shape[1]:
            raise TorsionError(f"Gram matrix must be square, got {g.shape}")
        scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
        if np.max(np.abs(g - g.conj().T), initial=0.0) > 1e-12 * scale:
            raise TorsionError("Gram matrix is not Hermitian")
        g = (g + g.conj().T) / 2
        if g.size and np.min(np.linalg.eigvalsh(g)) <= 0:
            raise TorsionError("Gram matrix is not positive definite")
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @classmethod
    def identity(cls, r: int) -> "GramMetric":
        return cls(np.eye(r, dtype=complex))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def inner(self, u, v) -> complex:
        return complex(np.vdot(u, self.entries @ v))

    def log_det(self) -> float:
        return log_abs_det(self.entries)

    def scaled(self, c: float) -> "GramMetric":
        return GramMetric(c * self.entries)


def wedge_gram_norm(vectors: Sequence, g: GramMetric) -> float:
    """Norm of ``v_1 ^ ... ^ v_k`` in the exterior power metric induced by ``g``.

    Equals ``sqrt(det <v_i, v_j>_g)``; zero exactly when the vectors are dependent.
    """
    vs = [np.asarray(v, dtype=complex) for v in vectors]
    if not vs:
        return 1.0
    for v in vs:
        if v.shape != (g.dim,):
            raise TorsionError(f"vector of shape {v.shape} does not live in C^{g.dim}")
    if len(vs) > g.dim:
        return 0.0
    v = np.column_stack(vs)
    gram = v.conj().T @ g.entries @ v
    d = det(gram).real
    return math.sqrt(max(d, 0.0))


def log_wedge_gram_norm(vectors: np.ndarray, g: GramMetric) -> float:
    """``log`` of :func:`wedge_gram_norm` for the columns of ``vectors``."""
    v = as_matrix(vectors)
    if v.shape[1] == 0:
        return 0.0
    if v.shape[0] != g.dim:
        raise TorsionError(f"vectors of length {v.shape[0]} do not live in C^{g.dim}")
    gram = v.conj().T @ g.entries @ v
    return 0.5 * log_abs_det((gram + gram.conj().T) / 2)


# --------------------------------------------------------------------------
# exterior algebra


def _merge_sign(left: tuple, right: tuple) -> int:
    inversions = 0
    for i in left:
        for j in right:
            if i > j:
                inversions += 1
    return -1 if inversions % 2 else 1


@dataclass(frozen=True)
class Multivector:
    """An element of the exterior algebra on ``n`` generators ``e^1..e^n``.

    ``coeffs`` maps strictly increasing tuples of 1-based indices to complex
    coefficients.  Missing keys are zero.
    """

    n: int
    coeffs: Mapping[tuple, complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0:
            raise TorsionError("generator count must be non-negative")
        if self.n > MAX_GENERATORS:
            raise TorsionError(f"at most {MAX_GENERATORS} generators are supported")
        clean = {}
        for key, c in self.coeffs.items():
            key = tuple(key)
            if any(b <= a for a, b in zip(key, key[1:])):
                raise TorsionError(f"index tuple {key} is not strictly increasing")
            if key and (key[0] < 1 or key[-1] > self.n):
                raise TorsionError(f"index tuple {key} out of range 1..{self.n}")
            if c != 0:
                clean[key] = complex(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def scalar(cls, n: int, c: complex = 1.0) -> "Multivector":
        return cls(n, {(): c})

    @classmethod
    def generator(cls, n: int, i: int, c: complex = 1.0) -> "Multivector":
        return cls(n, {(i,): c})

    @classmethod
    def from_vector(cls, v: Sequence[complex]) -> "Multivector":
        """The 1-form ``sum_i v_i e^i``."""
        return cls(len(v), {(i + 1,): c for i, c in enumerate(v)})

    def coefficient(self, key: tuple) -> complex:
        return self.coeffs.get(tuple(key), 0j)

    def top(self) -> complex:
        return self.coefficient(tuple(range(1, self.n + 1)))

    def _check(self, other: "Multivector"):
        if other.n != self.n:
            raise TorsionError("multivectors over different generator counts")

    def __add__(self, other: "Multivector") -> "Multivector":
        self._check(other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0j) + c
        return Multivector(self.n, out)

    def __neg__(self) -> "Multivector":
        return Multivector(self.n, {k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other: "Multivector") -> "Multivector":
        return self + (-other)

    def scale(self, c: complex) -> "Multivector":
        return Multivector(self.n, {k: c * v for k, v in self.coeffs.items()})

    def wedge(self, other: "Multivector", max_degree: int | None = None) -> "Multivector":
        self._check(other)
        out: dict[tuple, complex] = {}
        for a, ca in self.coeffs.items():
            sa = set(a)
            for b, cb in other.coeffs.items():
                if max_degree is not None and len(a) + len(b) > max_degree:
                    continue
                if sa.intersection(b):
                    continue
                key = tuple(sorted(a + b))
                out[key] = out.get(key, 0j) + _merge_sign(a, b) * ca * cb
        return Multivector(self.n, out)

    __xor__ = wedge

    def exp(self) -> "Multivector":
        """``exp`` of an even element without constant term (nilpotent series)."""
        if () in self.coeffs:
            raise TorsionError("exp is only implemented for elements with zero scalar part")
        if any(len(k) % 2 for k in self.coeffs):
            raise TorsionError("exp is only implemented for even elements")
        result = Multivector.scalar(self.n)
        term = Multivector.scalar(self.n)
        for m in range(1, self.n // 2 + 1):
            term = term.wedge(self, max_degree=self.n).scale(1.0 / m)
            if not term.coeffs:
                break
            result = result + term
        return result


def berezin_integral(w: Multivector, n: int | None = None) -> complex:
    """Berezin integral: ``(-1)^{n(n+1)/2} pi^{-n/2}`` times the top coefficient.

    Reported against the positive orientation of ``e_1, ..., e_n``.
    """
    n = w.n if n is None else n
    if n != w.n:
        raise TorsionError(f"multivector has {w.n} generators, expected {n}")
    sign = -1 if (n * (n + 1) // 2) % 2 else 1
    return sign * math.pi ** (-n / 2) * w.top()


@dataclass(frozen=True)
class AntisymMatrix:
    """A real antisymmetric matrix; ``A + A^T`` must vanish exactly."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 1 and a.size == 0:
            a = a.reshape(0, 0)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise TorsionError(f"antisymmetric matrix must be square, got {a.shape}")
        if np.any(a + a.T != 0):
            raise TorsionError("matrix is not antisymmetric")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def from_matrix(cls, m, tol: float = 1e-12) -> "AntisymMatrix":
        """Project ``m`` onto its antisymmetric part after checking it is close."""
        a = np.array(m, dtype=float)
        scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
        if a.size and np.max(np.abs(a + a.T)) > tol * scale:
            raise TorsionError("matrix is not antisymmetric within tolerance")
        return cls((a - a.T) / 2)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def as_two_form(self) -> Multivector:
        """``(1/2) sum_{i,j} <e_i, A e_j> e^i ^ e^j``."""
        a = self.entries
        n = self.dim
        return Multivector(n, {(i + 1, j + 1): a[i, j] for i in range(n) for j in range(i + 1, n)})


def pfaffian(a: AntisymMatrix) -> float:
    """Pfaffian by expansion along the first row, memoized over index subsets."""
    m = a.entries
    n = a.dim
    if n % 2:
        return 0.0

    @lru_cache(maxsize=None)
    def pf(mask: int) -> float:
        if mask == 0:
            return 1.0
        idx = [i for i in range(n) if mask >> i & 1]
        i0 = idx[0]
        total = 0.0
        for pos, j in enumerate(idx[1:]):
            if m[i0, j] == 0.0:
                continue
            sign = -1.0 if pos % 2 else 1.0
            total += sign * m[i0, j] * pf(mask & ~(1 << i0) & ~(1 << j))
        return total

    return pf((1 << n) - 1)


def pfaffian_berezin(a: AntisymMatrix) -> float:
    """Pfaffian straight from its definition ``Pf[A/2pi] = int^B exp(-A'/2)``.

    Applied to ``2 pi A`` this reads ``Pf[A] = int^B exp(-pi A')``.
    """
    if a.dim % 2:
        return 0.0
    form = a.as_two_form().scale(-math.pi)
    return berezin_integral(form.exp()).real


def beta_dim_one(y: float, t: float) -> float:
    """The transgression form ``beta_T`` for a trivial real line bundle.

    Evaluated in the exterior algebra on ``(dy, e^1)``: with vanishing
    curvature ``A_T = sqrt(T) dy e^1 + T y^2``, and ``beta_T`` is the Berezin
    integral over ``e^1`` of ``(y e^1 / 2 sqrt(T)) exp(-A_T)``.  The result is a
    0-form.
    """
    dy, e1 = 1, 2
    nilpotent = Multivector(2, {(dy, e1): math.sqrt(t)})
    exp_minus = (Multivector.scalar(2) - nilpotent).scale(math.exp(-t * y * y))
    integrand = Multivector.generator(2, e1, y / (2 * math.sqrt(t))).wedge(exp_minus)
    # int^B alpha e^1 = -pi^{-1/2} alpha; keep the degree-0 part of alpha
    return float((-1) / math.sqrt(math.pi) * integrand.coefficient((e1,)).real)


def psi_dim_one_quadrature(y: float) -> float:
    """``int_0^inf beta_T dT`` by adaptive quadrature (substitution ``T = u^2``)."""
    if y == 0:
        raise TorsionError("the current is singular on the zero section")

    def f(u):
        return 2 * u * beta_dim_one(y, u * u) if u > 0 else 0.0

    # the integrand in u is -y exp(-u^2 y^2)/sqrt(pi); its scale is 1/|y|
    scale = 1 / abs(y)
    head, _ = integrate.quad(f, 0, 10 * scale, epsabs=1e-13, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(f, 10 * scale, np.inf, epsabs=1e-13, limit=200)
    return head + tail


def psi_dim_one(y: float) -> float:
    """Rank-one Mathai-Quillen current, ``-sgn(y)/2`` against the positive orientation."""
    if y == 0:
        raise TorsionError("the current is singular on the zero section")
    if not math.isfinite(y):
        raise TorsionError("y must be finite")
    return -0.5 if y > 0 else 0.5
