"""Random instances for property checks.

Every generator takes an explicit ``numpy.random.Generator`` so runs are
reproducible from a seed.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .algebra_core import GramMetric
from .complex_engine import CochainComplex, FilteredComplex, GradedMetric


def complex_normal(rng, shape, scale=1.0):
    return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))


def random_gram(rng, r: int) -> GramMetric:
    b = complex_normal(rng, (r, r))
    return GramMetric(b @ b.conj().T + r * np.eye(r))


def random_graded_metric(rng, dims) -> GradedMetric:
    return GradedMetric(tuple(random_gram(rng, n) for n in dims))


def random_invertible(rng, r: int, cond_floor: float = 0.2) -> np.ndarray:
    """A complex r x r matrix with singular values in ``[cond_floor, ~2]``."""
    q1, _ = np.linalg.qr(complex_normal(rng, (r, r)))
    q2, _ = np.linalg.qr(complex_normal(rng, (r, r)))
    s = rng.uniform(cond_floor, 2.0, size=r)
    return q1 @ np.diag(s) @ q2


def random_unitary(rng, r: int) -> np.ndarray:
    q, rr = np.linalg.qr(complex_normal(rng, (r, r)))
    return q * (np.diag(rr) / np.abs(np.diag(rr)))


def _level_triangular(rng, levels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """An invertible matrix that never lowers levels, and its inverse."""
    n = len(levels)
    perm = np.argsort(levels, kind="stable")
    lo = np.tril(complex_normal(rng, (n, n), 0.5), -1)
    lo[levels[perm][:, None] == levels[perm][None, :]] = 0
    block = np.zeros((n, n), dtype=complex)
    for lev in np.unique(levels):
        idx = np.flatnonzero(levels[perm] == lev)
        block[np.ix_(idx, idx)] = random_invertible(rng, len(idx), 0.5)
    # sorted order: block diagonal per level times unit lower triangular
    u_sorted = block @ (np.eye(n) + lo)
    unit_inv = solve_triangular(np.eye(n) + lo, np.eye(n), lower=True, unit_diagonal=True)
    block_inv = np.zeros_like(block)
    for lev in np.unique(levels):
        idx = np.flatnonzero(levels[perm] == lev)
        block_inv[np.ix_(idx, idx)] = np.linalg.inv(block[np.ix_(idx, idx)])
    inv_sorted = unit_inv @ block_inv
    u = np.zeros_like(u_sorted)
    inv = np.zeros_like(inv_sorted)
    u[np.ix_(perm, perm)] = u_sorted
    inv[np.ix_(perm, perm)] = inv_sorted
    return u, inv


def random_filtered_complex(
    rng,
    n_levels: int,
    max_dim: int = 4,
    n_degrees: int = 3,
    acyclic: bool = False,
    split: bool = False,
) -> FilteredComplex:
    """A random filtered complex with ``d^2 = 0`` and level-respecting ``d``.

    Basis vectors are paired ``C^k -> C^{k+1}`` (target level >= source level)
    into a partial-identity differential, which is then conjugated by random
    level-triangular changes of basis.  Unpaired vectors carry cohomology.
    """
    for _ in range(10_000):
        f = _attempt(rng, n_levels, max_dim, n_degrees, acyclic, split)
        if f is not None:
            return f
    raise RuntimeError("could not sample a filtered complex")


def _attempt(rng, n_levels, max_dim, n_degrees, acyclic, split):
    dims = _acyclic_dims(rng, n_degrees, max_dim) if acyclic else [
        int(rng.integers(0, max_dim + 1)) for _ in range(n_degrees)
    ]
    if not sum(dims):
        return None
    levels = [rng.integers(0, n_levels, size=n) for n in dims]
    pairs = [[] for _ in range(n_degrees - 1)]
    used_src = [set() for _ in dims]
    used_tgt = [set() for _ in dims]
    for k in range(n_degrees - 1):
        order = rng.permutation(dims[k])
        for j in order:
            if j in used_tgt[k]:
                continue
            options = [
                i for i in range(dims[k + 1])
                if i not in used_tgt[k + 1] and levels[k + 1][i] >= levels[k][j]
                and (not split or levels[k + 1][i] == levels[k][j])
            ]
            if not options:
                continue
            if not acyclic and rng.random() < 0.25:
                continue
            i = int(rng.choice(options))
            pairs[k].append((i, j))
            used_src[k].add(j)
            used_tgt[k + 1].add(i)
    if acyclic and not _all_paired(dims, used_src, used_tgt):
        return None
    normal = []
    for k in range(n_degrees - 1):
        d = np.zeros((dims[k + 1], dims[k]), dtype=complex)
        for i, j in pairs[k]:
            d[i, j] = 1.0
        normal.append(d)
    if split:
        bases = [_level_block_diagonal(rng, np.asarray(l)) for l in levels]
    else:
        bases = [_level_triangular(rng, np.asarray(l)) for l in levels]
    ds = [bases[k + 1][0] @ normal[k] @ bases[k][1] for k in range(n_degrees - 1)]
    c = CochainComplex(tuple(dims), tuple(ds))
    return FilteredComplex(c, tuple(np.asarray(l) for l in levels), n_levels)


def _level_block_diagonal(rng, levels):
    n = len(levels)
    u = np.zeros((n, n), dtype=complex)
    inv = np.zeros((n, n), dtype=complex)
    for lev in np.unique(levels):
        idx = np.flatnonzero(levels == lev)
        blk = random_invertible(rng, len(idx), 0.5)
        u[np.ix_(idx, idx)] = blk
        inv[np.ix_(idx, idx)] = np.linalg.inv(blk)
    return u, inv


def _acyclic_dims(rng, n_degrees, max_dim):
    # an exact sequence 0 -> C^0 -> ... needs alternating rank splits
    ranks = [0]
    dims = []
    for k in range(n_degrees):
        lo = ranks[-1]
        if k == n_degrees - 1:
            dims.append(lo)
            break
        out = int(rng.integers(0, max(max_dim - lo, 0) + 1))
        dims.append(lo + out)
        ranks.append(out)
    return dims


def _all_paired(dims, used_src, used_tgt):
    return all(len(used_src[k]) + len(used_tgt[k]) == n for k, n in enumerate(dims))


def random_acyclic_complex(rng, max_dim: int = 4, n_degrees: int = 3) -> CochainComplex:
    """A random acyclic complex (no filtration constraint)."""
    return random_filtered_complex(rng, 1, max_dim, n_degrees, acyclic=True).complex


def random_holonomy(rng, r: int, twist: int = 1, gap: float = 0.1, degenerate: bool = False) -> np.ndarray:
    """An invertible holonomy whose twisted eigenvalues stay ``gap`` away from 1.

    With ``degenerate`` one twisted eigenvalue equals 1 exactly.
    """
    for _ in range(1000):
        mags = rng.uniform(0.5, 2.0, size=r)
        angles = rng.uniform(0, 2 * np.pi, size=r)
        eig = mags * np.exp(1j * angles)
        if degenerate:
            eig[0] = 1.0
        if np.all(np.abs(eig[int(degenerate):] - 1) >= gap):
            break
    p = random_invertible(rng, r, 0.5)
    return twist * (p @ np.diag(eig) @ np.linalg.inv(p))


def _unit_level_triangular(rng, levels: np.ndarray, scale: float = 0.5) -> np.ndarray:
    """``I`` plus random entries mapping lower levels to strictly higher ones."""
    n = len(levels)
    u = np.eye(n, dtype=complex)
    mask = levels[:, None] > levels[None, :]
    u[mask] = complex_normal(rng, int(mask.sum()), scale)
    return u


def random_system(
    rng,
    n_orbits: int,
    n_fixed: int = 0,
    max_rank: int = 3,
    max_index: int = 2,
    chain_model: bool = True,
    degenerate_prob: float = 0.0,
    rank: int | None = None,
):
    """A random Morse-Smale system with mixed twists, indices and orientations.

    The chain model starts from the split model, pairs some fixed points of
    adjacent index across levels, and is conjugated by a unit
    level-triangular change of basis, so each graded piece is exactly the
    model of its critical element.  Without ``chain_model`` the system is
    flagged split.
    """
    from .flow_model import ClosedOrbitDatum, FixedPointDatum, MorseSmaleSystem, split_model

    r = rank if rank is not None else int(rng.integers(1, max_rank + 1))
    elements = []
    for i in range(n_orbits):
        twist = int(rng.choice([1, -1]))
        orientation = int(rng.choice([1, -1]))
        h = random_holonomy(rng, r, twist, degenerate=rng.random() < degenerate_prob)
        if orientation == -1:
            h = np.linalg.inv(h)
        period = float(rng.uniform(0.5, 3.0))
        elements.append(ClosedOrbitDatum(f"o{i}", int(rng.integers(0, max_index + 1)), period, twist, h, orientation))
    for i in range(n_fixed):
        elements.append(FixedPointDatum(f"x{i}", int(rng.integers(0, max_index + 2)), random_gram(rng, r)))
    order = rng.permutation(len(elements))
    elements = [elements[i] for i in order]
    if not chain_model:
        return MorseSmaleSystem(r, tuple(elements), split=True, dimension=max_index + 1)

    model = split_model(elements)
    c = model.complex
    ds = [d.copy() for d in c.differentials]
    used = set()
    fixed = [(p, e) for p, e in enumerate(elements) if isinstance(e, FixedPointDatum)]
    for p, x in fixed:
        for q, y in fixed:
            if q > p and y.index == x.index + 1 and p not in used and q not in used and rng.random() < 0.5:
                used |= {p, q}
                k = x.index
                rows = np.flatnonzero(model.levels[k + 1] == q)
                cols = np.flatnonzero(model.levels[k] == p)
                ds[k][np.ix_(rows, cols)] = random_invertible(rng, r, 0.5)
    us = [_unit_level_triangular(rng, lev) for lev in model.levels]
    ds = [us[k + 1] @ d @ np.linalg.inv(us[k]) for k, d in enumerate(ds)]
    new = FilteredComplex(CochainComplex(c.dims, tuple(ds), d2_tol=1e-9), model.levels, model.n_levels, tol=1e-9)
    return MorseSmaleSystem(r, tuple(elements), new, dimension=max_index + 1)


def random_surgery(rng, sys) -> dict:
    """Surgery data for every orbit of ``sys`` with admissible signs."""
    from .flow_model import SurgeryDatum

    out = {}
    for o in sys.orbits:
        n_a = int(rng.choice([1, -1]))
        out[o.id] = SurgeryDatum(
            random_invertible(rng, sys.rank, 0.3), n_a, -o.twist * n_a, random_gram(rng, sys.rank), random_gram(rng, sys.rank)
        )
    return out
