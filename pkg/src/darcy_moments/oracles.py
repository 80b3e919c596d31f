"""Independent brute-force oracles and analytic utilities used by tests and
acceptance runs: Monte Carlo for E[u], per-sample Taylor corrections, the
explicit difference-tensor form of the sparse operator, a full-tensor
recursion reference, discrete mixed-Holder estimators, and the theta/lambda
coefficient recursions.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations, product
from math import comb

import numpy as np
from scipy.linalg import solveh_banded
from scipy.sparse.linalg import spsolve

from .config import StudyConfig
from .errors import CapacityError
from .fem import (FactorizedLaplacian, FeFunction, FeSpace,
                  gradient_load_vector, load_vector, solve_dirichlet,
                  stiffness_matrix)
from .moment_recursion import Correlation, CorrectionTable, trace_rhs
from .problem import setup_problem
from .random_field import build_sampler, moment_eval, stream_for
from .sparse_grid import LevelFamily, multi_indices, tensor_build


@dataclass
class McEstimate:
    """Monte Carlo mean with per-dof standard errors of the mean."""
    mean: FeFunction
    stderr: np.ndarray
    samples: int
    seed: int
    skipped: int = 0


@dataclass(frozen=True)
class CoefficientInputs:
    """User-supplied stability/trace/regularity constants for the error
    coefficient recursions (the analysis never fixes them numerically)."""
    C_S: float = 1
    C_tr: float = 1
    C_reg: float = 1

    def __post_init__(self):
        if self.C_S <= 0 or self.C_tr <= 0 or self.C_reg <= 0:
            raise ValueError("coefficient constants must be positive")


def lognormal_solve(space: FeSpace, y_nodal: np.ndarray, rhs) -> FeFunction:
    """Solve integral( e^{Y_h} grad u . grad v ) = rhs(v) with Y_h the FE
    interpolant of the nodal field values."""
    a_q = np.exp(space.values_at_quad(np.asarray(y_nodal, dtype=float)))
    mat = stiffness_matrix(space, a_q)
    idx = space.interior
    mat_int = mat[idx][:, idx]
    if callable(rhs):
        rhs = load_vector(space, rhs)
    b = rhs[idx]
    if space.mesh.d == 1:
        bw = space.degree
        ab = np.zeros((bw + 1, len(idx)))
        for k in range(bw + 1):
            ab[bw - k, k:] = mat_int.diagonal(k)
        x = solveh_banded(ab, b, lower=False)
    else:
        x = spsolve(mat_int.tocsc(), b)
    coeffs = np.zeros(space.n_dofs)
    coeffs[idx] = x
    return FeFunction(space, coeffs)


def per_sample_corrections(y_nodal: np.ndarray, K: int,
                           op: FactorizedLaplacian, f) -> list[FeFunction]:
    """Deterministic Taylor terms u^k(Y) for one field realization:
    integral( grad u^k . grad v ) = - sum_j binom(k,j) integral( Y^j grad u^{k-j} . grad v ).

    `f` may be a forcing callable or a preassembled dual vector for u^0.
    """
    space = op.space
    u0 = solve_dirichlet(op, f)
    terms = [u0]
    y_q = space.values_at_quad(np.asarray(y_nodal, dtype=float))
    y_pow = {1: y_q}
    grads = [space.gradients_at_quad(u0.coeffs)]
    for k in range(1, K + 1):
        g = np.zeros_like(y_q)
        for j in range(1, k + 1):
            if j not in y_pow:
                y_pow[j] = y_pow[j - 1] * y_q
            g += comb(k, j) * y_pow[j] * grads[k - j]
        rhs = -gradient_load_vector(space, g)
        uk = solve_dirichlet(op, rhs)
        terms.append(uk)
        grads.append(space.gradients_at_quad(uk.coeffs))
    return terms


def _mc_run(config: StudyConfig, samples: int, seed: int, make_value,
            threads: int = 1, antithetic: bool | None = None):
    """Streamed Monte Carlo over correlated field draws.

    `make_value(Y_nodal) -> (n_dofs,)`. Draws are keyed by index so results
    are identical no matter how many workers process them; the Welford
    reduction runs in strict sample order. Antithetic mode turns each draw
    into the pair (Y, -Y)."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    problem = setup_problem(config)
    space = problem.space
    if antithetic is None:
        antithetic = config.mc.antithetic
    per_draw = 2 if antithetic else 1
    n_draws = samples // per_draw
    sampler = build_sampler(problem.kernel, space.dof_coords, seed=seed)
    factor = sampler.factor
    n = space.n_dofs

    def draw_values(d: int):
        z = stream_for(seed, d).standard_normal(n)
        y = factor @ z
        fields = (y, -y) if antithetic else (y,)
        out = []
        for fld in fields:
            try:
                out.append(make_value(fld))
            except (np.linalg.LinAlgError, RuntimeError):
                out.append(None)
        return out

    mean = np.zeros(n)
    m2 = np.zeros(n)
    count = 0
    skipped = 0

    def consume(vals):
        nonlocal count, skipped, mean, m2
        for v in vals:
            if v is None:
                skipped += 1
                continue
            count += 1
            delta = v - mean
            mean += delta / count
            m2 += delta * (v - mean)

    if threads <= 1:
        for d in range(n_draws):
            consume(draw_values(d))
    else:
        chunk = 64
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for start in range(0, n_draws, chunk):
                block = range(start, min(start + chunk, n_draws))
                for vals in pool.map(draw_values, block):
                    consume(vals)

    total = n_draws * per_draw
    if skipped > 0.01 * total:
        raise RuntimeError(
            f"{skipped} of {total} Monte Carlo samples failed to solve")
    stderr = np.sqrt(m2 / (count * (count - 1))) if count > 1 else np.zeros(n)
    return McEstimate(FeFunction(space, mean), stderr, count, seed, skipped)


def mc_mean(config: StudyConfig, samples: int | None = None,
            seed: int | None = None, threads: int = 1,
            antithetic: bool | None = None) -> McEstimate:
    """Monte Carlo estimate of E[u] for the lognormal problem."""
    samples = config.mc.samples if samples is None else samples
    seed = config.mc.seed if seed is None else seed
    problem = setup_problem(config)
    space = problem.space
    rhs = load_vector(space, problem.forcing)
    if problem.kernel.sigma == 0.0:
        u0 = solve_dirichlet(problem.operator, rhs)
        return McEstimate(u0, np.zeros(space.n_dofs), samples, seed)

    def value(y_nodal):
        return lognormal_solve(space, y_nodal, rhs).coeffs

    return _mc_run(config, samples, seed, value, threads, antithetic)


def mc_corrections_mean(config: StudyConfig, k: int,
                        samples: int | None = None, seed: int | None = None,
                        threads: int = 1,
                        antithetic: bool | None = None) -> McEstimate:
    """Monte Carlo estimate of E[u^k] via per-sample Taylor corrections."""
    samples = config.mc.samples if samples is None else samples
    seed = config.mc.seed if seed is None else seed
    problem = setup_problem(config)
    space = problem.space
    rhs = load_vector(space, problem.forcing)
    if k == 0:
        u0 = solve_dirichlet(problem.operator, rhs)
        return McEstimate(u0, np.zeros(space.n_dofs), samples, seed)

    def value(y_nodal):
        return per_sample_corrections(y_nodal, k, problem.operator, rhs)[k].coeffs

    return _mc_run(config, samples, seed, value, threads, antithetic)


# -- explicit difference-tensor oracle ---------------------------------------

def _interp_leading_axis(vals: np.ndarray, nodes: np.ndarray, y: float) -> np.ndarray:
    """Plain piecewise-linear interpolation along the leading axis."""
    hi = int(np.searchsorted(nodes, y))
    hi = min(max(hi, 1), len(nodes) - 1)
    lo = hi - 1
    t = (y - nodes[lo]) / (nodes[hi] - nodes[lo])
    return (1.0 - t) * vals[lo] + t * vals[hi]


def full_tensor_oracle(family: LevelFamily, L: int, k: int, target):
    """Callable evaluating sum over |l| <= L of the difference tensors
    (x)_j (P_{l_j} - P_{l_j - 1}) applied to the target, built from plain
    1D interpolants on anisotropic subgrids of X_L^k.

    This is the oracle side of the combination-technique identity; it never
    touches the combination evaluation path.
    """
    if k > 3 or L > 4:
        raise CapacityError("full tensor oracle is guarded to k <= 3, L <= 4")
    fine_nodes = family.nodes(L)
    n_fine = len(fine_nodes)
    lattice = np.meshgrid(*([fine_nodes] * k), indexing="ij")
    flat = np.stack([g.ravel() for g in lattice], axis=1)
    base = np.array([float(target(tuple(pt))) for pt in flat])
    base = base.reshape((n_fine,) * k)

    def tensor_interp(levels, y):
        strides = tuple(1 << (L - l) for l in levels)
        sub = base[np.ix_(*[np.arange(0, n_fine, s) for s in strides])]
        out = sub
        for j, l in enumerate(levels):
            out = _interp_leading_axis(out, family.nodes(l), float(y[j]))
        return float(out)

    index_set = multi_indices(k, 0, L)

    def oracle(y):
        y = tuple(np.atleast_1d(np.asarray(y, dtype=float)))
        total = 0.0
        for levels in index_set:
            # expand the product of (P_l - P_{l-1}): subsets of directions
            # with l >= 1 may step down one level, with alternating sign
            movable = [j for j, l in enumerate(levels) if l >= 1]
            for r in range(len(movable) + 1):
                for subset in combinations(movable, r):
                    shifted = tuple(l - 1 if j in subset else l
                                    for j, l in enumerate(levels))
                    total += (-1.0) ** r * tensor_interp(shifted, y)
        return total

    return oracle


def full_tensor_interpolant(family: LevelFamily, L: int, k: int, target):
    """Plain full tensor interpolation on X_L^k (payload-generic)."""
    return tensor_build(family, (L,) * k, target)


def full_tensor_recursion(config: StudyConfig) -> CorrectionTable:
    """The recursion run on full tensor grids X_L^i instead of sparse grids:
    the reference side of the sparse-vs-full cross check. Solve counts grow
    like (2^L)^i, so the solve cap applies."""
    K, L = config.recursion.K, config.sparse.L
    problem = setup_problem(config)
    family, space = problem.family, problem.space
    n_L = family.n_nodes(L)
    projected = 1 + sum(sum(n_L ** i for i in range(0, k)) for k in range(2, K + 1, 2))
    if projected > config.caps.max_solves:
        raise CapacityError(
            f"projected full-tensor solve count {projected} exceeds cap "
            f"{config.caps.max_solves}")

    table = CorrectionTable(config, space, family, problem.kernel)
    table[(0, 0)] = Correlation(0, 0, space, family, L,
                                fe_function=problem.u0)
    table.solve_count = 1
    table.skipped_odd = [k for k in range(1, K + 1, 2)]
    u0c = problem.u0.coeffs
    for k in range(2, K + 1, 2):
        seed_interp = tensor_build(
            family, (L,) * k,
            lambda y: moment_eval(problem.moments, y) * u0c)
        table[(k, k)] = Correlation(0, k, space, family, L, interp=seed_interp)
        for i in range(k - 1, -1, -1):
            lower = {j: table[(k, i + j)] for j in range(1, k - i + 1)}

            def solve_at(y, _i=i, _k=k, _lower=lower):
                rhs = np.zeros(space.n_dofs)
                for j in range(1, _k - _i + 1):
                    low = _lower[j]
                    if low.is_zero:
                        continue
                    rhs -= comb(_k - _i, j) * trace_rhs(low, j, y, space)
                return solve_dirichlet(problem.operator, rhs).coeffs

            if i == 0:
                corr = Correlation(k, 0, space, family, L,
                                   fe_function=FeFunction(space, solve_at(())))
                table.solve_count += 1
            else:
                interp = tensor_build(family, (L,) * i, solve_at)
                corr = Correlation(k - i, i, space, family, L, interp=interp)
                table.solve_count += interp.n_nodes
            table[(k, i)] = corr
    return table


# -- discrete mixed-Holder estimator ------------------------------------------

_CHUNK_LIMIT = 40_000_000


def _pair_diff(arr: np.ndarray, axis: int, grid: np.ndarray, gamma: float):
    n = arr.shape[axis]
    ia, ib = np.triu_indices(n, 1)
    num = np.take(arr, ib, axis=axis) - np.take(arr, ia, axis=axis)
    den = np.abs(grid[ib] - grid[ia]) ** gamma
    shape = [1] * arr.ndim
    shape[axis] = len(ia)
    return num / den.reshape(shape)


def _max_abs_mixed(arr: np.ndarray, grids, gamma: float, axes) -> float:
    if not axes:
        return float(np.max(np.abs(arr)))
    axis = axes[0]
    n = arr.shape[axis]
    n_pairs = n * (n - 1) // 2
    if arr.size // n * n_pairs > _CHUNK_LIMIT:
        best = 0.0
        grid = grids[axis]
        for a in range(n - 1):
            va = np.take(arr, a, axis=axis)
            for b in range(a + 1, n):
                sub = (np.take(arr, b, axis=axis) - va) \
                    / np.abs(grid[b] - grid[a]) ** gamma
                sub = np.expand_dims(sub, axis)
                best = max(best, _max_abs_mixed(sub, grids, gamma, axes[1:]))
        return best
    return _max_abs_mixed(_pair_diff(arr, axis, grids[axis], gamma),
                          grids, gamma, axes[1:])


def mixed_holder_seminorm(values: np.ndarray, grids, gamma: float) -> float:
    """Discrete mixed difference-quotient seminorm: the maximum over the
    number of active directions and over all grid increment combinations of
    the absolute mixed quotient with exponent gamma per direction."""
    values = np.asarray(values, dtype=float)
    k = values.ndim
    grids = [np.asarray(g, dtype=float) for g in grids]
    if len(grids) != k:
        raise ValueError("need one grid per tensor axis")
    if any(len(g) != s for g, s in zip(grids, values.shape)):
        raise ValueError("grid lengths must match the value tensor shape")
    if any(len(g) < 2 for g in grids):
        raise ValueError("need at least 2 points per direction")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    if k > 3 or any(len(g) > 33 for g in grids):
        raise CapacityError(
            "mixed seminorm estimator is guarded to k <= 3 and <= 33 "
            "points per direction")
    best = 0.0
    for size in range(1, k + 1):
        for axes in combinations(range(k), size):
            best = max(best, _max_abs_mixed(values, grids, gamma, axes))
    return best


def mixed_holder_norm(values: np.ndarray, grids, gamma: float) -> float:
    """Discrete full norm: max of the sup-norm and the mixed seminorm."""
    values = np.asarray(values, dtype=float)
    return max(float(np.max(np.abs(values))),
               mixed_holder_seminorm(values, grids, gamma))


def holder_norm_1d(values: np.ndarray, grid: np.ndarray, gamma: float) -> float:
    """1D full Holder norm on a grid (used by the product-identity check)."""
    return mixed_holder_norm(np.asarray(values, dtype=float),
                             [np.asarray(grid, dtype=float)], gamma)


# -- coefficient recursions ---------------------------------------------------

def theta_coeffs(n: int, m: int, c: CoefficientInputs):
    """theta_{n,m}: 1 on the diagonal, 0 above it, else the Strang-style
    recursion C_S * sum_j binom(n,j) C_tr^j theta_{n-j,m}. Integer-exact for
    integer constants."""
    if n < 0 or m < 0:
        raise ValueError("indices must be nonnegative")
    if n == m:
        return 1 if isinstance(c.C_S, int) and isinstance(c.C_tr, int) else 1.0
    if n < m:
        return 0 if isinstance(c.C_S, int) and isinstance(c.C_tr, int) else 0.0
    integer = isinstance(c.C_S, int) and isinstance(c.C_tr, int)
    one = 1 if integer else 1.0
    table = {m: one}
    for t in range(m + 1, n + 1):
        acc = 0 if integer else 0.0
        for j in range(1, t - m + 1):
            acc += comb(t, j) * c.C_tr ** j * table[t - j]
        table[t] = c.C_S * acc
    return table[n]


def lambda_coeffs(kmax: int, c: CoefficientInputs) -> list:
    """lambda_0..lambda_kmax of the a-priori chain bound: lambda_0 = 1,
    lambda_n = C_reg * sum_j binom(n,j) C_tr^j lambda_{n-j}."""
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    integer = isinstance(c.C_reg, int) and isinstance(c.C_tr, int)
    lam = [1 if integer else 1.0]
    for n in range(1, kmax + 1):
        acc = 0 if integer else 0.0
        for j in range(1, n + 1):
            acc += comb(n, j) * c.C_tr ** j * lam[n - j]
        lam.append(c.C_reg * acc)
    return lam
