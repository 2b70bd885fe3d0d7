"""Twisted Ruelle dynamical zeta function of a Morse-Smale flow.

    R(s) = prod_orbits det(1 - twist * rho^{-1} * exp(-s * period)) ** ((-1) ** index)

``rho`` is the transport along the flow direction and enters through its
inverse, matching the orbit cochain model ``A~^{-1} - 1`` of the flow module.  The
product is finite, so ``R`` is meromorphic on the whole plane and every zero
and pole is explicit: the factor of an orbit vanishes exactly when
``exp(-s * period)`` equals an eigenvalue of ``twist * rho``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .algebra_core import DEFAULT_TOL, as_matrix, det
from .errors import HypothesisError, IllConditionedError, TorsionError
from .flow_model import MorseSmaleSystem, milnor_metric

ORDER_TOL = 1e-8


@dataclass(frozen=True)
class ZetaOrbit:
    period: float
    index: int
    twist: int
    holonomy: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.period > 0:
            raise TorsionError("period must be positive")
        if self.twist not in (1, -1):
            raise TorsionError("twist must be +1 or -1")
        h = as_matrix(self.holonomy)
        if h.shape[0] != h.shape[1] or abs(det(h)) == 0:
            raise TorsionError("holonomy must be square and invertible")
        h.setflags(write=False)
        object.__setattr__(self, "holonomy", h)

    @property
    def sign(self) -> int:
        return 1 if self.index % 2 == 0 else -1

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``mu`` of ``twist * rho``; the factor is ``prod (1 - z / mu)``."""
        return np.linalg.eigvals(self.twist * self.holonomy)

    def factor(self, s: complex) -> complex:
        r = self.holonomy.shape[0]
        z = cmath.exp(-s * self.period)
        return det(np.eye(r) - self.twist * np.linalg.inv(self.holonomy) * z)


@dataclass(frozen=True)
class ZetaSpec:
    orbits: tuple
    rank: int

    @classmethod
    def from_system(cls, sys: MorseSmaleSystem) -> "ZetaSpec":
        return cls(
            tuple(ZetaOrbit(o.period, o.index, o.twist, o.flow_holonomy) for o in sys.orbits), sys.rank
        )


@dataclass(frozen=True)
class Pole:
    """Value of ``R`` at a pole; ``order`` is negative."""

    order: int


def _match(mu: complex, s0: complex, period: float) -> float:
    return abs(1 - cmath.exp(-s0 * period) / mu)


def order_at(spec: ZetaSpec, s0: complex, tol: float = ORDER_TOL) -> int:
    """Order of ``R`` at ``s0``: positive for zeros, negative for poles."""
    order = 0
    for orb in spec.orbits:
        for mu in orb.eigenvalues():
            m = _match(mu, s0, orb.period)
            if tol <= m <= 10 * tol:
                raise IllConditionedError(
                    f"ill-conditioned order: eigenvalue {mu:.6g} is {m:.2e} from the matching threshold"
                )
            if m < tol:
                order += orb.sign
    return order


def ruelle_eval(spec: ZetaSpec, s: complex, tol: float = ORDER_TOL):
    """``R(s)`` as a complex number, or a :class:`Pole` carrying the order.

    Near a vanishing factor the matched eigen-factors ``1 - exp(-s l)/mu``
    are replaced by their linearization ``l (s - s0)``, so a removable
    singularity returns its limit.
    """
    s = complex(s)
    singular = any(_match(mu, s, orb.period) < tol for orb in spec.orbits for mu in orb.eigenvalues())
    if not singular:
        value = 1.0 + 0j
        for orb in spec.orbits:
            f = orb.factor(s)
            value *= f if orb.sign > 0 else 1 / f
        return value
    order = order_at(spec, s, tol)
    if order < 0:
        return Pole(order)
    if order > 0:
        return 0j
    value = 1.0 + 0j
    for orb in spec.orbits:
        z = cmath.exp(-s * orb.period)
        for mu in orb.eigenvalues():
            f = orb.period if _match(mu, s, orb.period) < tol else 1 - z / mu
            value *= f if orb.sign > 0 else 1 / f
    return value


def log_abs_ruelle(spec: ZetaSpec, s: complex) -> float:
    """``log |R(s)|`` as a sum of ``log |det|`` terms."""
    total = 0.0
    for orb in spec.orbits:
        total += orb.sign * math.log(abs(orb.factor(s)))
    return total


def zeros_poles_in_rect(spec: ZetaSpec, rect: Sequence[float], merge_tol: float = 1e-9) -> list[tuple[complex, int]]:
    """Zeros (positive order) and poles (negative order) in
    ``re_min <= Re s <= re_max``, ``im_min <= Im s <= im_max``."""
    re_min, re_max, im_min, im_max = rect
    if not (re_min <= re_max and im_min <= im_max):
        raise TorsionError("empty rectangle")
    found: list[list] = []
    for orb in spec.orbits:
        l = orb.period
        for mu in orb.eigenvalues():
            # exp(-s l) = mu  <=>  s = -(Log mu + 2 pi i k) / l
            log_mu = cmath.log(mu)
            re = -log_mu.real / l + 0.0
            if not re_min - 1e-12 <= re <= re_max + 1e-12:
                continue
            # Im s = -(arg mu + 2 pi k) / l
            k_lo = math.ceil((-im_max * l - log_mu.imag) / (2 * math.pi) - 1e-12)
            k_hi = math.floor((-im_min * l - log_mu.imag) / (2 * math.pi) + 1e-12)
            for k in range(k_lo, k_hi + 1):
                s = complex(re, -(log_mu.imag + 2 * math.pi * k) / l + 0.0)
                for entry in found:
                    if abs(entry[0] - s) < merge_tol:
                        entry[1] += orb.sign
                        break
                else:
                    found.append([s, orb.sign])
    out = [(s, o) for s, o in found if o != 0]
    out.sort(key=lambda t: (round(t[0].real, 9), round(t[0].imag, 9)))
    return out


class PropCheck(NamedTuple):
    milnor: float
    zeta_inverse: float
    residual: float
    passed: bool


def check_prop(sys: MorseSmaleSystem, tol: float = 1e-10) -> PropCheck:
    """Milnor norm of ``1`` against ``|R(0)|^{-1}`` for a flow without fixed points."""
    if sys.fixed_points:
        raise HypothesisError(f"system has fixed points ({sys.fixed_points[0].id})", sys.fixed_points[0])
    for o in sys.orbits:
        if np.any(np.abs(np.linalg.eigvals(o.flow_holonomy) - o.twist) < DEFAULT_TOL):
            raise HypothesisError(f"orbit {o.id}: twist {o.twist:+d} is an eigenvalue of its holonomy", o)
    line, _ = milnor_metric(sys)
    spec = ZetaSpec.from_system(sys)
    log_zeta = log_abs_ruelle(spec, 0.0)
    residual = abs(line.log_norm + log_zeta)
    return PropCheck(line.norm, math.exp(-log_zeta), residual, residual < tol)
