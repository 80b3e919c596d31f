"""Nested dyadic interpolation levels and the Smolyak sparse interpolation
operator, realized through the combination technique.

Level l carries equispaced nodes of spacing h0 * 2^-l on [0,1] (endpoints
included) with a piecewise-linear hat basis; levels are nested. The sparse
operator of level L is the signed sum of full tensor interpolants over
multi-indices L-k+1 <= |l| <= L with coefficients
(-1)^(L-|l|) * binom(k-1, L-|l|); its node set is the sparse grid H_{L,k}.

Payloads are generic: scalars or coefficient vectors (one FE function per
node), so the same engine serves analytic targets and FE-valued
correlations. The target is evaluated exactly once per distinct grid point.
"""
from __future__ import annotations

from itertools import product
from math import comb
from typing import Callable, Sequence

import numpy as np


class LevelFamily:
    """Uniform dyadic piecewise-linear interpolation levels on [0,1]."""

    def __init__(self, h0: float = 0.5):
        base = round(1.0 / h0)
        if base < 1 or abs(1.0 / h0 - base) > 1e-12:
            raise ValueError("base resolution h0 must be 1/m for integer m")
        self.h0 = 1.0 / base
        self.base = base

    def n_intervals(self, level: int) -> int:
        return self.base * (1 << level)

    def n_nodes(self, level: int) -> int:
        return self.n_intervals(level) + 1

    def spacing(self, level: int) -> float:
        return 1.0 / self.n_intervals(level)

    def nodes(self, level: int) -> np.ndarray:
        n = self.n_intervals(level)
        return np.arange(n + 1) / n

    def hat_weights(self, level: int, y):
        """Active node indices and hat weights at y: (i0, w0, i1, w1)."""
        y = np.asarray(y, dtype=float)
        n = self.n_intervals(level)
        t = y * n
        i0 = np.clip(np.floor(t).astype(int), 0, n - 1)
        frac = t - i0
        return i0, 1.0 - frac, i0 + 1, frac


def level_nodes(family: LevelFamily, level: int) -> np.ndarray:
    """Node set X_level: 1/h0 * 2^level + 1 equispaced points on [0,1]."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return family.nodes(level)


def interp_1d(family: LevelFamily, level: int, values) -> Callable:
    """Piecewise-linear Lagrangian interpolant through values at X_level."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != family.n_nodes(level):
        raise ValueError(
            f"expected {family.n_nodes(level)} values at level {level}, "
            f"got {values.shape[0]}")

    def interpolant(y):
        i0, w0, i1, w1 = family.hat_weights(level, y)
        return w0 * values[i0] + w1 * values[i1]

    return interpolant


def multi_indices(k: int, total_min: int, total_max: int) -> list[tuple[int, ...]]:
    """All k-tuples of nonnegative integers with total_min <= |l| <= total_max,
    in lexicographic order."""
    out: list[tuple[int, ...]] = []

    def rec(prefix, remaining_dims, total):
        if remaining_dims == 1:
            lo = max(0, total_min - total)
            for last in range(lo, total_max - total + 1):
                out.append(prefix + (last,))
            return
        for head in range(0, total_max - total + 1):
            rec(prefix + (head,), remaining_dims - 1, total + head)

    rec((), k, 0)
    return out


def combination_terms(L: int, k: int) -> list[tuple[tuple[int, ...], int]]:
    """Combination-technique terms of S_{L,k}: multi-indices with
    L-k+1 <= |l| <= L and integer coefficients (-1)^(L-|l|) binom(k-1, L-|l|)."""
    terms = []
    for levels in multi_indices(k, max(0, L - k + 1), L):
        q = L - sum(levels)
        coeff = (-1) ** q * comb(k - 1, q)
        terms.append((levels, coeff))
    return terms


class _Term:
    """One anisotropic tensor grid of the combination: levels, signed
    coefficient, and the map from its lattice to the global node table."""

    __slots__ = ("levels", "coeff", "node_idx")

    def __init__(self, levels, coeff, node_idx):
        self.levels = levels
        self.coeff = coeff
        self.node_idx = node_idx


class SparseInterpolant:
    """Smolyak interpolant S_{L,k} of a payload-valued target.

    Nodal values live in one deduplicated table shared by all combination
    terms. Immutable after build; evaluation is reentrant.
    """

    def __init__(self, family: LevelFamily, k: int, L: int,
                 terms: list[_Term], node_keys: np.ndarray,
                 values: np.ndarray, scalar_payload: bool):
        self.family = family
        self.k = k
        self.L = L
        self.terms = terms
        self.node_keys = node_keys      # (N, k) integer positions at level L
        self.values = values            # (N,) scalar or (N, payload) array
        self.scalar_payload = scalar_payload

    @property
    def n_nodes(self) -> int:
        return self.node_keys.shape[0]

    @property
    def node_points(self) -> np.ndarray:
        """Coordinates of the distinct grid points, shape (N, k)."""
        denom = self.family.n_intervals(self.L)
        return self.node_keys / denom

    def __call__(self, y):
        return smolyak_eval(self, y)


def _build_from_terms(family: LevelFamily, k: int, L: int,
                      term_list: list[tuple[tuple[int, ...], int]],
                      target: Callable) -> SparseInterpolant:
    key_to_id: dict[tuple[int, ...], int] = {}
    keys: list[tuple[int, ...]] = []
    terms: list[_Term] = []
    for levels, coeff in term_list:
        shape = tuple(family.n_nodes(l) for l in levels)
        # integer node positions normalized to level L
        axis_keys = [np.arange(family.n_nodes(l)) * (1 << (L - l))
                     for l in levels]
        grids = np.meshgrid(*axis_keys, indexing="ij") if k > 1 else [axis_keys[0]]
        flat = np.stack([g.ravel() for g in grids], axis=1)
        idx = np.empty(flat.shape[0], dtype=int)
        for row, key in enumerate(map(tuple, flat)):
            nid = key_to_id.get(key)
            if nid is None:
                nid = len(keys)
                key_to_id[key] = nid
                keys.append(key)
            idx[row] = nid
        terms.append(_Term(levels, coeff, idx.reshape(shape)))

    node_keys = np.array(keys, dtype=int).reshape(len(keys), k)
    denom = family.n_intervals(L)
    first = target(tuple(node_keys[0] / denom))
    first_arr = np.asarray(first, dtype=float)
    scalar_payload = first_arr.ndim == 0
    if scalar_payload:
        values = np.empty(len(keys))
    else:
        values = np.empty((len(keys),) + first_arr.shape)
    values[0] = first_arr
    for nid in range(1, len(keys)):
        val = np.asarray(target(tuple(node_keys[nid] / denom)), dtype=float)
        if val.shape != first_arr.shape:
            raise ValueError(
                f"inconsistent payload shape {val.shape} at node {nid}, "
                f"expected {first_arr.shape}")
        values[nid] = val
    return SparseInterpolant(family, k, L, terms, node_keys, values,
                             scalar_payload)


def smolyak_build(family: LevelFamily, L: int, k: int,
                  target: Callable) -> SparseInterpolant:
    """Build S_{L,k}[target] via the combination technique, evaluating the
    target once per distinct point of the sparse grid H_{L,k}."""
    if L < 0 or k < 1:
        raise ValueError("need L >= 0 and k >= 1")
    return _build_from_terms(family, k, L, combination_terms(L, k), target)


def tensor_build(family: LevelFamily, levels: Sequence[int],
                 target: Callable) -> SparseInterpolant:
    """Full tensor-product interpolant on X_{l1} x ... x X_{lk}: a single
    combination term with coefficient one (used by full-tensor references)."""
    levels = tuple(int(l) for l in levels)
    L = max(levels) if levels else 0
    return _build_from_terms(family, len(levels), L, [(levels, 1)], target)


def smolyak_eval(s: SparseInterpolant, y) -> float | np.ndarray:
    """Evaluate the interpolant at a point of [0,1]^k.

    Per term only the 2^k active hat corners contribute; cost is
    O(#terms * 2^k) payload gathers.
    """
    y = tuple(np.atleast_1d(np.asarray(y, dtype=float)))
    if len(y) != s.k:
        raise ValueError(f"expected a point with {s.k} coordinates")
    out = 0.0 if s.scalar_payload else np.zeros(s.values.shape[1:])
    for term in s.terms:
        iw = [s.family.hat_weights(l, yj) for l, yj in zip(term.levels, y)]
        for bits in product((0, 1), repeat=s.k):
            w = term.coeff
            pos = []
            for j, b in enumerate(bits):
                i0, w0, i1, w1 = iw[j]
                w = w * (w1 if b else w0)
                pos.append(i1 if b else i0)
            if w == 0.0:
                continue
            out = out + w * s.values[term.node_idx[tuple(pos)]]
    return float(out) if s.scalar_payload else out


def smolyak_eval_many(s: SparseInterpolant, points: np.ndarray) -> np.ndarray:
    """Vectorized evaluation at an (npts, k) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    npts = pts.shape[0]
    if s.scalar_payload:
        out = np.zeros(npts)
    else:
        out = np.zeros((npts,) + s.values.shape[1:])
    for term in s.terms:
        iw = [s.family.hat_weights(l, pts[:, j])
              for j, l in enumerate(term.levels)]
        for bits in product((0, 1), repeat=s.k):
            w = np.full(npts, float(term.coeff))
            pos = []
            for j, b in enumerate(bits):
                i0, w0, i1, w1 = iw[j]
                w = w * (w1 if b else w0)
                pos.append(i1 if b else i0)
            gidx = term.node_idx[tuple(pos)]
            if s.scalar_payload:
                out += w * s.values[gidx]
            else:
                out += w[:, None] * s.values[gidx]
    return out


def grid_points(family: LevelFamily, L: int, k: int) -> tuple[np.ndarray, list]:
    """The sparse grid H_{L,k} (deduplicated, lexicographically sorted) and
    the admissible multi-index set {|l| <= L}."""
    if L < 0 or k < 1:
        raise ValueError("need L >= 0 and k >= 1")
    keys = set()
    for levels in multi_indices(k, L, L):
        axis_keys = [np.arange(family.n_nodes(l)) * (1 << (L - l))
                     for l in levels]
        grids = np.meshgrid(*axis_keys, indexing="ij") if k > 1 else [axis_keys[0]]
        flat = np.stack([g.ravel() for g in grids], axis=1)
        keys.update(map(tuple, flat))
    ordered = np.array(sorted(keys), dtype=int)
    denom = family.n_intervals(L)
    return ordered / denom, multi_indices(k, 0, L)
