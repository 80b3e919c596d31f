"""Recursive first-moment equations for the lognormal Darcy problem.

The chain per even order k runs over arities i = k-1, ..., 0: given the
lower correlations E[u^{k-i-j} (x) Y^{(x)(i+j)}] for j = 1..k-i, the next
one solves, at every sparse-grid node y in H_{L,i},

    integral( grad_x C^{k-i,i}(x, y) . grad v(x) dx )
      = - sum_j binom(k-i, j) * integral( Tr grad_x C^{k-i-j,i+j}(x, y) . grad v dx ),

where the diagonal trace sets the first j auxiliary arguments equal to x.
The i=0 entry is the k-th order correction E[u^k]; the Taylor mean is
sum over even k <= K of E[u^k]/k!. Odd orders vanish (centered field) and
are carried as zero flags.

Every solve reuses one factorized Laplacian, and the fully discrete
correlation is exactly the sparse interpolant of its nodal solves, so no
extra interpolation error enters between chain steps.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb, factorial

import numpy as np

from .config import StudyConfig
from .errors import CapacityError
from .fem import (FactorizedLaplacian, FeFunction, FeSpace,
                  gradient_load_vector, fe_norm, solve_dirichlet)
from .problem import setup_problem
from .random_field import MomentEvaluator, moment_eval
from .sparse_grid import (LevelFamily, SparseInterpolant, grid_points,
                          smolyak_build, smolyak_eval)


class Correlation:
    """Discrete (i+1)-point correlation E[u^{deriv_order} (x) Y^{(x)arity}].

    For arity >= 1: a SparseInterpolant whose payload at each node of
    H_{L,arity} is an FE coefficient vector. For arity 0: a single
    FeFunction (the correction E[u^k]). Zero correlations (odd total order)
    carry only a flag.
    """

    def __init__(self, deriv_order: int, arity: int, space: FeSpace,
                 family: LevelFamily, L: int,
                 interp: SparseInterpolant | None = None,
                 fe_function: FeFunction | None = None,
                 is_zero: bool = False):
        self.deriv_order = deriv_order
        self.arity = arity
        self.space = space
        self.family = family
        self.L = L
        self.interp = interp
        self.fe_function = fe_function
        self.is_zero = is_zero
        self._grad_cache: list[tuple[FeSpace, np.ndarray]] = []
        if not is_zero:
            if arity == 0 and fe_function is None:
                raise ValueError("arity-0 correlation needs an FeFunction")
            if arity >= 1 and interp is None:
                raise ValueError("positive-arity correlation needs an interpolant")

    @property
    def total_order(self) -> int:
        return self.deriv_order + self.arity

    @property
    def n_nodes(self) -> int:
        if self.is_zero:
            return 0
        return 1 if self.arity == 0 else self.interp.n_nodes

    def at(self, y=()) -> FeFunction:
        """FE slice at the auxiliary point tuple y."""
        if self.is_zero:
            return FeFunction(self.space, np.zeros(self.space.n_dofs))
        if self.arity == 0:
            return self.fe_function.copy()
        return FeFunction(self.space, smolyak_eval(self.interp, y))

    def node_gradients(self, space: FeSpace) -> np.ndarray:
        """x-gradients of every nodal payload at the quadrature points of
        `space`, cached per space: shape (n_nodes, n_quad_total)."""
        for cached_space, arr in self._grad_cache:
            if cached_space is space:
                return arr
        local = self.interp.values[:, space.elem_dofs]      # (N, n_el, n_loc)
        if space.mesh.d != 1:
            raise ValueError("the correlation recursion runs on d=1 meshes")
        grads = np.einsum("qa,nea->neq", space._dphi_q, local)
        flat = grads.reshape(grads.shape[0], -1)
        self._grad_cache.append((space, flat))
        return flat


def seed_correlation(u0: FeFunction, ev: MomentEvaluator, k: int,
                     family: LevelFamily, L: int) -> Correlation:
    """Input of the chain: E[u^0 (x) Y^{(x)k}], i.e. u0 scaled by the order-k
    Gaussian moment at each node of H_{L,k}. Identically zero for odd k."""
    if k < 1:
        raise ValueError("seed order must be >= 1")
    if k % 2 == 1:
        return Correlation(0, k, u0.space, family, L, is_zero=True)
    coeffs = u0.coeffs

    def target(y):
        return moment_eval(ev, y) * coeffs

    interp = smolyak_build(family, L, k, target)
    return Correlation(0, k, u0.space, family, L, interp=interp)


def trace_rhs(corr: Correlation, j: int, y_fixed, space: FeSpace) -> np.ndarray:
    """Dual vector of v -> integral( Tr grad_x corr (x; y_fixed) . grad v dx ).

    At each quadrature point x_q the interpolant is evaluated with its first
    j auxiliary arguments equal to x_q and the rest pinned at y_fixed; the
    hat-basis combination weights hit the precomputed payload gradients."""
    y_fixed = tuple(np.atleast_1d(np.asarray(y_fixed, dtype=float))) \
        if not isinstance(y_fixed, tuple) else y_fixed
    if j < 1 or len(y_fixed) + j != corr.arity:
        raise ValueError(
            f"trace arity mismatch: correlation has {corr.arity} auxiliary "
            f"arguments, got j={j} with {len(y_fixed)} fixed")
    if corr.is_zero:
        return np.zeros(space.n_dofs)

    ngrad = corr.node_gradients(space)          # (N, Nq)
    xq = space.quad_x.ravel()
    nq = xq.size
    qidx = np.arange(nq)
    grad_val = np.zeros(nq)
    family = corr.family
    arity = corr.arity
    for term in corr.interp.terms:
        iw = []
        for t, lv in enumerate(term.levels):
            if t < j:
                iw.append(family.hat_weights(lv, xq))
            else:
                iw.append(family.hat_weights(lv, float(y_fixed[t - j])))
        for bits in product((0, 1), repeat=arity):
            scalar_w = float(term.coeff)
            pos = []
            vec_w = None
            for t, b in enumerate(bits):
                i0, w0, i1, w1 = iw[t]
                wsel = w1 if b else w0
                isel = i1 if b else i0
                if t < j:
                    vec_w = wsel if vec_w is None else vec_w * wsel
                else:
                    scalar_w *= float(wsel)
                pos.append(isel)
            if scalar_w == 0.0:
                continue
            weights = scalar_w * vec_w
            gidx = term.node_idx[tuple(pos)]
            grad_val += weights * ngrad[gidx, qidx]
    return gradient_load_vector(space, grad_val.reshape(space.quad_x.shape))


def solve_correlation(k: int, i: int, lower: dict, op: FactorizedLaplacian,
                      family: LevelFamily, L: int) -> Correlation:
    """One chain step: solve at every node of H_{L,i} with the combined trace
    right-hand side of the lower correlations (lower[j] has arity i+j)."""
    space = op.space
    for j in range(1, k - i + 1):
        if j not in lower:
            raise ValueError(f"missing lower correlation for contraction j={j}")
        if not lower[j].is_zero and lower[j].arity != i + j:
            raise ValueError(
                f"lower correlation for j={j} has arity {lower[j].arity}, "
                f"expected {i + j}")
    if all(lower[j].is_zero for j in range(1, k - i + 1)):
        return Correlation(k - i, i, space, family, L, is_zero=True)

    def solve_at(y) -> np.ndarray:
        rhs = np.zeros(space.n_dofs)
        for j in range(1, k - i + 1):
            low = lower[j]
            if low.is_zero:
                continue
            rhs -= comb(k - i, j) * trace_rhs(low, j, y, space)
        return solve_dirichlet(op, rhs).coeffs

    if i == 0:
        return Correlation(k, 0, space, family, L,
                           fe_function=FeFunction(space, solve_at(())))
    interp = smolyak_build(family, L, i, solve_at)
    return Correlation(k - i, i, space, family, L, interp=interp)


class CorrectionTable:
    """Triangular store of the chain: (k, i) -> correlation, plus metadata.

    Entry (k, 0) is the correction E[u^k]; odd-k diagonals are recorded as
    skipped and treated as zero."""

    def __init__(self, config: StudyConfig, space: FeSpace,
                 family: LevelFamily, kernel):
        self.config = config
        self.space = space
        self.family = family
        self.kernel = kernel
        self.K = config.recursion.K
        self.L = config.sparse.L
        self.entries: dict[tuple[int, int], Correlation] = {}
        self.skipped_odd: list[int] = []
        self.solve_count = 0

    def __setitem__(self, key, corr: Correlation):
        self.entries[key] = corr

    def __getitem__(self, key) -> Correlation:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    def correction(self, k: int) -> FeFunction:
        """E[u^k] as an FE function (zero for skipped odd orders)."""
        if k % 2 == 1:
            return FeFunction(self.space, np.zeros(self.space.n_dofs))
        return self.entries[(k, 0)].at()


def projected_solve_count(family: LevelFamily, L: int, K: int) -> int:
    """Solves run_recursion will perform: the nominal solve plus one solve
    per sparse node along every even chain."""
    total = 1
    sizes = {}
    for k in range(2, K + 1, 2):
        for i in range(k - 1, 0, -1):
            if i not in sizes:
                sizes[i] = grid_points(family, L, i)[0].shape[0]
            total += sizes[i]
        total += 1
    return total


def run_recursion(config: StudyConfig) -> CorrectionTable:
    """Algorithm: solve u0 once, then for each even k <= K walk the diagonal
    i = k-1, ..., 0 of the correction table, reusing one factorization."""
    K = config.recursion.K
    if K < 0:
        raise ValueError("K must be nonnegative")
    problem = setup_problem(config)
    family, L = problem.family, config.sparse.L
    projected = projected_solve_count(family, L, K)
    if projected > config.caps.max_solves:
        raise CapacityError(
            f"projected solve count {projected} exceeds cap "
            f"{config.caps.max_solves}")

    table = CorrectionTable(config, problem.space, family, problem.kernel)
    table[(0, 0)] = Correlation(0, 0, problem.space, family, L,
                                fe_function=problem.u0)
    table.solve_count = 1
    table.skipped_odd = [k for k in range(1, K + 1, 2)]

    for k in range(2, K + 1, 2):
        table[(k, k)] = seed_correlation(problem.u0, problem.moments, k,
                                         family, L)
        for i in range(k - 1, -1, -1):
            lower = {j: table[(k, i + j)] for j in range(1, k - i + 1)}
            corr = solve_correlation(k, i, lower, problem.operator, family, L)
            table[(k, i)] = corr
            table.solve_count += corr.n_nodes
    return table


@dataclass
class TaylorMean:
    """Sum over even k <= K of E[u^k]/k!, with per-order diagnostic norms."""
    mean: FeFunction
    K: int
    order_norms: dict

    @property
    def coeffs(self) -> np.ndarray:
        return self.mean.coeffs


def taylor_mean(table: CorrectionTable, K: int | None = None) -> TaylorMean:
    """Assemble the degree-K approximation of E[u] from the table."""
    if K is None:
        K = table.K
    acc = None
    norms = {}
    for k in range(0, K + 1):
        if k % 2 == 1:
            continue
        if (k, 0) not in table:
            raise ValueError(f"table is missing the order-{k} correction")
        term = table.correction(k) * (1.0 / factorial(k))
        acc = term if acc is None else acc + term
        norms[k] = {
            "l2": fe_norm(table.correction(k), "lp", 2.0),
            "h1": fe_norm(table.correction(k), "w1p", 2.0),
        }
    return TaylorMean(acc, K, norms)
