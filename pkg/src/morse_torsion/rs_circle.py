"""Ray-Singer metric on the circle with unitary holonomy.

The twisted Laplacian on functions (and on 1-forms) of ``S^1 = R/Z`` with
holonomy eigenvalue ``exp(2 pi i alpha)`` has spectrum ``4 pi^2 (k + alpha)^2``
for ``k`` in ``Z``.  Its spectral zeta function is a sum of two Hurwitz zeta
functions, which are continued to ``s = 0`` through the Euler-Maclaurin
formula and differentiated term by term.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import bernoulli, factorial

from .algebra_core import as_matrix
from .errors import NotAcyclicError, TorsionError
from .flow_model import ClosedOrbitDatum, MorseSmaleSystem, milnor_metric

UNITARY_TOL = 1e-10
# phases closer than this to an integer are treated as a zero mode
PHASE_TOL = 1e-12


@dataclass(frozen=True)
class HurwitzParams:
    """Euler-Maclaurin truncation point ``M`` and Bernoulli depth ``K``."""

    M: int = 50
    K: int = 6

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 10:
            raise TorsionError(f"Hurwitz truncation M must be an integer >= 10, got {self.M}")
        if int(self.K) != self.K or not 2 <= self.K <= 8:
            raise TorsionError(f"Hurwitz depth K must be an integer in [2, 8], got {self.K}")


@lru_cache(maxsize=None)
def _bernoulli_coefficients(k: int) -> tuple[float, ...]:
    """``B_{2j} / (2j)!`` for ``j = 1..k``."""
    b = bernoulli(2 * k)
    return tuple(float(b[2 * j] / factorial(2 * j, exact=True)) for j in range(1, k + 1))


def _rising(s: complex, n: int) -> tuple[complex, complex]:
    """``s (s+1) ... (s+n-1)`` and its derivative in ``s``."""
    value = 1.0 + 0j
    deriv = 0.0 + 0j
    for i in range(n):
        deriv = deriv * (s + i) + value
        value = value * (s + i)
    return value, deriv


def hurwitz_zeta(s: complex, a: float, p: HurwitzParams = HurwitzParams()) -> tuple[complex, complex]:
    """``zeta(s, a) = sum_{k >= 0} (k + a)^{-s}`` and ``d/ds zeta(s, a)``.

    Valid on the whole plane except the pole ``s = 1``; accurate to about
    ``1e-10`` for ``|s| <= 4`` with the default parameters.
    """
    s = complex(s)
    if not 0 < a <= 1:
        raise TorsionError(f"Hurwitz parameter a must lie in (0, 1], got {a}")
    if s == 1:
        raise TorsionError("the Hurwitz zeta function has a pole at s = 1")
    k = np.arange(p.M) + a
    log_k = np.log(k)
    powers = np.exp(-s * log_k)
    value = complex(powers.sum())
    deriv = complex(-(log_k * powers).sum())

    n = p.M + a
    log_n = math.log(n)
    n_1ms = cmath.exp((1 - s) * log_n)
    n_ms = cmath.exp(-s * log_n)
    value += n_1ms / (s - 1) + n_ms / 2
    deriv += -log_n * n_1ms / (s - 1) - n_1ms / (s - 1) ** 2 - log_n * n_ms / 2
    for j, c in enumerate(_bernoulli_coefficients(p.K), start=1):
        poch, dpoch = _rising(s, 2 * j - 1)
        t = cmath.exp((-s - 2 * j + 1) * log_n)
        value += c * poch * t
        deriv += c * (dpoch - poch * log_n) * t
    return value, deriv


def _check_phase(alpha: float):
    if not 0 < alpha < 1:
        raise TorsionError(f"phase {alpha} has a zero mode; the determinant needs alpha in (0, 1)")


def log_spectral_zeta_derivative(alpha: float, p: HurwitzParams = HurwitzParams()) -> float:
    """``zeta_Delta'(0)`` for the spectrum ``4 pi^2 (k + alpha)^2``."""
    _check_phase(alpha)
    z1, d1 = hurwitz_zeta(0.0, alpha, p)
    z2, d2 = hurwitz_zeta(0.0, 1 - alpha, p)
    # zeta_Delta(s) = (4 pi^2)^{-s} [zeta_H(2s, alpha) + zeta_H(2s, 1 - alpha)]
    return float((-math.log(4 * math.pi**2) * (z1 + z2) + 2 * (d1 + d2)).real)


def zeta_reg_det(alpha: float, p: HurwitzParams = HurwitzParams()) -> float:
    """Zeta-regularized determinant of the twisted circle Laplacian."""
    return math.exp(-log_spectral_zeta_derivative(alpha, p))


@dataclass(frozen=True)
class CircleRSSpec:
    """Unitary holonomy around ``S^1``, stored through its phases.

    ``phases[j]`` lies in ``[0, 1)`` and ``exp(2 pi i phases[j])`` runs over
    the eigenvalues of the holonomy.  A zero phase is a harmonic sector.
    """

    phases: tuple
    holonomy: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        ph = tuple(sorted(float(a) for a in self.phases))
        if not ph:
            raise TorsionError("circle spec needs at least one phase")
        for a in ph:
            if not 0 <= a < 1:
                raise TorsionError(f"phase {a} outside [0, 1)")
        object.__setattr__(self, "phases", ph)
        if self.holonomy is None:
            object.__setattr__(self, "holonomy", np.diag(np.exp(2j * np.pi * np.asarray(ph))))

    @classmethod
    def from_matrix(cls, a) -> "CircleRSSpec":
        a = as_matrix(a)
        if a.shape[0] != a.shape[1] or a.size == 0:
            raise TorsionError("holonomy must be a non-empty square matrix")
        defect = np.linalg.norm(a.conj().T @ a - np.eye(a.shape[0]), 2)
        if defect >= UNITARY_TOL:
            raise TorsionError(f"holonomy is not unitary: ||A*A - I|| = {defect:.3e}")
        phases = []
        for lam in np.linalg.eigvals(a):
            t = (cmath.phase(lam) / (2 * math.pi)) % 1.0
            if min(t, 1 - t) < PHASE_TOL:
                t = 0.0
            phases.append(t)
        a = a.copy()
        a.setflags(write=False)
        return cls(tuple(phases), a)

    @classmethod
    def from_phases(cls, phases: Sequence[float]) -> "CircleRSSpec":
        return cls(tuple(float(a) % 1.0 for a in phases))

    @property
    def rank(self) -> int:
        return len(self.phases)

    @property
    def harmonic_dim(self) -> int:
        return sum(1 for a in self.phases if a == 0)


def rs_norm_circle(spec: CircleRSSpec, p: HurwitzParams = HurwitzParams()) -> float:
    """Squared Ray-Singer norm of the canonical element ``1`` of ``det H = C``.

    On the circle the weighted torsion collects one copy of the zeta
    function of the 1-form Laplacian, whose spectrum equals the one on
    functions, so ``||1||^2 = prod_j det_zeta(alpha_j)^{-1}``.
    """
    if spec.harmonic_dim:
        raise NotAcyclicError(
            f"holonomy has eigenvalue 1: harmonic sector of dimension {spec.harmonic_dim} in degrees 0 and 1"
        )
    return math.exp(sum(log_spectral_zeta_derivative(a, p) for a in spec.phases))


class BZCheck(NamedTuple):
    rs: float
    milnor: float
    residual: float
    passed: bool


def circle_system(spec: CircleRSSpec) -> MorseSmaleSystem:
    """The rotation flow on ``S^1``: one closed orbit of index 0, untwisted."""
    orbit = ClosedOrbitDatum("circle", 0, 1.0, 1, spec.holonomy, 1)
    return MorseSmaleSystem(spec.rank, (orbit,), split=True, dimension=1)


def bz_check_circle(spec: CircleRSSpec, p: HurwitzParams = HurwitzParams(), tol: float = 1e-8) -> BZCheck:
    """Ray-Singer against Milnor for the squared norm of ``1``."""
    rs = rs_norm_circle(spec, p)
    line, _ = milnor_metric(circle_system(spec))
    log_milnor = 2 * line.log_norm
    residual = abs(math.log(rs) - log_milnor)
    return BZCheck(rs, math.exp(log_milnor), residual, residual < tol)
