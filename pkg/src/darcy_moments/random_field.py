"""Covariance kernels, Isserlis evaluation of Gaussian moment functions,
and correlated field sampling for the Monte Carlo oracle.

The moment function E[Y(y1) ... Y(ym)] of the centered field is evaluated
exactly: 1 for m=0, 0 for odd m, and the sum over all (m-1)!! perfect
pairings of covariance products for even m.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import CapacityError, FactorizationError

_KINDS = ("exponential", "squared-exponential")


@dataclass(frozen=True)
class CovarianceKernel:
    """Stationary covariance of the Gaussian field Y.

    `gamma` is metadata: the Holder exponent of the field paths (about 1/2
    for the exponential kernel, 1 for the squared-exponential one).
    """

    kind: str = "exponential"
    sigma: float = 1.0
    corr_length: float = 0.5
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kernel kind must be one of {_KINDS}")
        if self.sigma < 0:
            raise ValueError("standard deviation must be nonnegative")
        if self.corr_length <= 0:
            raise ValueError("correlation length must be positive")
        if self.gamma is None:
            default = 0.5 if self.kind == "exponential" else 1.0
            object.__setattr__(self, "gamma", default)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("Holder exponent must lie in (0, 1]")

    def with_sigma(self, sigma: float) -> "CovarianceKernel":
        return CovarianceKernel(self.kind, sigma, self.corr_length, self.gamma)


def cov_eval(kernel: CovarianceKernel, a, b):
    """Covariance between field values at 1-D coordinates a and b (scalars or
    elementwise arrays). Point sets in d=2 go through `covariance_matrix`."""
    dist = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    s2 = kernel.sigma ** 2
    if kernel.kind == "exponential":
        return s2 * np.exp(-dist / kernel.corr_length)
    return s2 * np.exp(-((dist / kernel.corr_length) ** 2))


def _pairwise_distance(points: np.ndarray) -> np.ndarray:
    if points.ndim == 1:
        return np.abs(points[:, None] - points[None, :])
    diff = points[:, None, :] - points[None, :, :]
    return np.linalg.norm(diff, axis=-1)


def covariance_matrix(kernel: CovarianceKernel, points) -> np.ndarray:
    """Dense covariance matrix of the field at the given locations."""
    pts = np.asarray(points, dtype=float)
    dist = _pairwise_distance(pts)
    s2 = kernel.sigma ** 2
    if kernel.kind == "exponential":
        return s2 * np.exp(-dist / kernel.corr_length)
    return s2 * np.exp(-((dist / kernel.corr_length) ** 2))


@lru_cache(maxsize=None)
def _pairings(m: int) -> tuple:
    """All perfect pairings of {0,...,m-1} as tuples of index pairs."""
    if m == 0:
        return ((),)
    items = list(range(m))
    out = []

    def rec(rest, acc):
        if not rest:
            out.append(tuple(acc))
            return
        first = rest[0]
        for i in range(1, len(rest)):
            rec(rest[1:i] + rest[i + 1:], acc + [(first, rest[i])])

    rec(items, [])
    return tuple(out)


class MomentEvaluator:
    """Exact Gaussian moment function E[Y^{(x)k}] via pairing enumeration.

    Permutation-symmetric in its arguments; every odd-order query is zero.
    Covariance values are memoized per distinct point pair. `max_order`
    guards the factorial growth of the pairing count (105 pairings at m=8).
    """

    def __init__(self, kernel: CovarianceKernel, max_order: int = 8):
        self.kernel = kernel
        self.max_order = max_order
        self._cov_cache: dict = {}

    def _cov(self, a, b) -> float:
        key = (a, b) if a <= b else (b, a)
        val = self._cov_cache.get(key)
        if val is None:
            val = float(cov_eval(self.kernel, np.asarray(a), np.asarray(b)))
            self._cov_cache[key] = val
        return val

    def __call__(self, points) -> float:
        return moment_eval(self, points)


def moment_eval(ev: MomentEvaluator, points) -> float:
    """E[Y(y1)...Y(ym)] for the tuple of points; 1 for m=0, 0 for odd m."""
    pts = [p if np.isscalar(p) else tuple(np.atleast_1d(p)) for p in points]
    pts = [float(p) if np.isscalar(p) else p for p in pts]
    m = len(pts)
    if m == 0:
        return 1.0
    if m % 2 == 1:
        return 0.0
    if m > ev.max_order:
        raise CapacityError(
            f"moment order {m} exceeds the configured cap {ev.max_order}")
    total = 0.0
    for pairing in _pairings(m):
        prod = 1.0
        for i, j in pairing:
            prod *= ev._cov(pts[i], pts[j])
        total += prod
    return total


class GaussianSampler:
    """Correlated Gaussian draws at fixed locations via dense factorization.

    The lower-triangular factor reproduces the location covariance within
    the jitter tolerance; identical seeds reproduce identical samples
    bit-exactly. Streams are not shareable across workers: spawn one
    sampler per worker via `child_seed`.
    """

    def __init__(self, kernel: CovarianceKernel, locations, factor: np.ndarray,
                 jitter: float, seed):
        self.kernel = kernel
        self.locations = np.asarray(locations, dtype=float)
        self.factor = factor
        self.jitter = jitter
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    @property
    def n_locations(self) -> int:
        return len(self.locations)


def build_sampler(kernel: CovarianceKernel, locations, jitter: float = 1e-10,
                  seed=0) -> GaussianSampler:
    """Factorize the location covariance (with relative diagonal jitter,
    escalated x10 up to 1e-6 * sigma^2 on failure) and wrap a seeded stream."""
    pts = np.asarray(locations, dtype=float)
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    n = len(pts)
    dist = _pairwise_distance(pts)
    off_diag = dist + np.eye(n)
    if np.any(off_diag == 0.0):
        raise ValueError("sample locations must be distinct")

    s2 = kernel.sigma ** 2
    if s2 == 0.0:
        return GaussianSampler(kernel, pts, np.zeros((n, n)), jitter, seed)

    cov = covariance_matrix(kernel, pts)
    jit = jitter
    while True:
        try:
            factor = np.linalg.cholesky(cov + jit * s2 * np.eye(n))
        except np.linalg.LinAlgError:
            factor = None
        if factor is not None:
            resid = np.max(np.abs(factor @ factor.T - cov))
            if resid <= max(10.0 * jit * s2, 1e-14 * s2):
                return GaussianSampler(kernel, pts, factor, jit, seed)
        if jit == 0.0:
            jit = 1e-12
        else:
            jit *= 10.0
        if jit > 1e-6:
            raise FactorizationError(
                f"covariance factorization failed at {n} locations "
                f"(last jitter {jit / 10.0:.1e} relative, kernel {kernel.kind}, "
                f"corr_length {kernel.corr_length})")


def sample_field(sampler: GaussianSampler) -> np.ndarray:
    """One correlated draw per location, advancing the sampler's stream."""
    z = sampler._rng.standard_normal(sampler.n_locations)
    return sampler.factor @ z


def stream_for(seed: int, index: int) -> np.random.Generator:
    """Independent deterministic stream for a (seed, index) pair.

    Used for worker-sharded Monte Carlo: sample `index` draws the same
    numbers no matter which worker processes it.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


class SyntheticKlSampler:
    """Finite-rank field Y = sum_n xi_n phi_n with user-supplied smooth modes.

    Gives an exactly finite-dimensional Y, convenient for per-sample
    correction studies without truncation-error confounds.
    """

    def __init__(self, modes, locations, seed=0):
        self.locations = np.asarray(locations, dtype=float)
        self._mode_values = np.column_stack(
            [np.asarray(phi(self.locations), dtype=float) for phi in modes])
        self._rng = np.random.default_rng(seed)

    def sample(self) -> np.ndarray:
        xi = self._rng.standard_normal(self._mode_values.shape[1])
        return self._mode_values @ xi
