"""Meshes, conforming finite element spaces, and Laplace-Dirichlet solves.

The physical domain is D = (0,1)^d. d=1 is the primary configuration
(uniform partitions, Lagrange degree 1 or 2); a simplicial d=2 extension
(unit square, degree 1) sits behind the same interfaces. All solves share
one homogeneous-Dirichlet Laplacian, factorized once and reused.
"""
from __future__ import annotations

from typing import Callable, Union

import numpy as np
from scipy import sparse
from scipy.linalg import cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import splu

_COORD_TOL = 1e-12


class Mesh:
    """Uniform mesh of (0,1) (sorted partition) or of the unit square
    (criss-cross split into 2*n^2 triangles)."""

    def __init__(self, d: int, n: int, vertices: np.ndarray,
                 elements: np.ndarray, boundary: np.ndarray):
        self.d = d
        self.n = n                  # elements per direction
        self.vertices = vertices    # (n_v,) for d=1, (n_v, 2) for d=2
        self.elements = elements    # (n_el, d+1) vertex index tuples
        self.boundary = boundary    # (n_v,) bool, True on marked vertices
        self.h = 1.0 / n

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]


def build_mesh(d: int, n: int) -> Mesh:
    """Uniform mesh of D = (0,1)^d with n elements per direction."""
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if n < 2:
        raise ValueError(f"need at least 2 elements per direction, got {n}")
    if d == 1:
        vertices = np.linspace(0.0, 1.0, n + 1)
        elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, n]] = True
        return Mesh(1, n, vertices, elements, boundary)

    # d=2: split every grid cell along its lower-left/upper-right diagonal
    axis = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    tris = []
    for iy in range(n):
        for ix in range(n):
            a, b = vid(ix, iy), vid(ix + 1, iy)
            c, dd = vid(ix + 1, iy + 1), vid(ix, iy + 1)
            tris.append((a, b, c))
            tris.append((a, c, dd))
    elements = np.array(tris, dtype=int)
    onb = (np.isclose(vertices[:, 0], 0.0) | np.isclose(vertices[:, 0], 1.0)
           | np.isclose(vertices[:, 1], 0.0) | np.isclose(vertices[:, 1], 1.0))
    return Mesh(2, n, vertices, elements, onb)


def _ref_basis_1d(degree: int, xhat: np.ndarray) -> np.ndarray:
    """Lagrange basis values on the reference interval, shape (..., degree+1)."""
    xhat = np.asarray(xhat, dtype=float)
    if degree == 1:
        return np.stack([1.0 - xhat, xhat], axis=-1)
    return np.stack([
        2.0 * (xhat - 0.5) * (xhat - 1.0),
        4.0 * xhat * (1.0 - xhat),
        2.0 * xhat * (xhat - 0.5),
    ], axis=-1)


def _ref_dbasis_1d(degree: int, xhat: np.ndarray) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=float)
    if degree == 1:
        return np.stack([-np.ones_like(xhat), np.ones_like(xhat)], axis=-1)
    return np.stack([4.0 * xhat - 3.0, 4.0 - 8.0 * xhat, 4.0 * xhat - 1.0],
                    axis=-1)


class FeSpace:
    """Conforming Lagrange space on a Mesh, with its quadrature rule.

    Quadrature uses ceil((2*degree+2)/2) = degree+1 Gauss points per interval
    (exact for polynomials of degree >= 2*degree); `quad_refine` multiplies
    the point count for insensitivity checks on non-polynomial integrands.
    """

    def __init__(self, mesh: Mesh, degree: int = 1, quad_refine: int = 1):
        if mesh.d == 1 and degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2 for d=1, got {degree}")
        if mesh.d == 2 and degree != 1:
            raise ValueError("the d=2 extension supports degree 1 only")
        if quad_refine < 1:
            raise ValueError("quad_refine must be >= 1")
        self.mesh = mesh
        self.degree = degree
        if mesh.d == 1:
            self._setup_1d(quad_refine)
        else:
            self._setup_2d(quad_refine)
        self.interior = np.nonzero(~self.dirichlet_mask)[0]
        self.n_dofs = len(self.dof_coords)
        # COO index pattern reused by every stiffness assembly on this space
        n_loc = self.elem_dofs.shape[1]
        self._rows = np.repeat(self.elem_dofs, n_loc, axis=1).ravel()
        self._cols = np.tile(self.elem_dofs, (1, n_loc)).ravel()

    def _setup_1d(self, quad_refine: int) -> None:
        mesh, mu = self.mesh, self.degree
        n = mesh.n
        self.dof_coords = np.linspace(0.0, 1.0, mu * n + 1)
        self.elem_dofs = mu * np.arange(n)[:, None] + np.arange(mu + 1)[None, :]
        mask = np.zeros(mu * n + 1, dtype=bool)
        mask[[0, mu * n]] = True
        self.dirichlet_mask = mask

        npts = (mu + 1) * quad_refine
        pts, wts = np.polynomial.legendre.leggauss(npts)
        ref_x = 0.5 * (pts + 1.0)
        ref_w = 0.5 * wts
        left = mesh.vertices[mesh.elements[:, 0]]
        self.quad_x = left[:, None] + mesh.h * ref_x[None, :]      # (n_el, n_q)
        self.quad_w = np.broadcast_to(mesh.h * ref_w, self.quad_x.shape).copy()
        self._phi_q = _ref_basis_1d(mu, ref_x)                     # (n_q, n_loc)
        self._dphi_q = _ref_dbasis_1d(mu, ref_x) / mesh.h          # physical

    def _setup_2d(self, quad_refine: int) -> None:
        mesh = self.mesh
        self.dof_coords = mesh.vertices
        self.elem_dofs = mesh.elements
        self.dirichlet_mask = mesh.boundary.copy()

        verts = mesh.vertices[mesh.elements]                       # (n_el, 3, 2)
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        # constant P1 gradients per triangle from the inverse Jacobian
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
        g0 = -(g1 + g2)
        self._grads = np.stack([g0, g1, g2], axis=1)               # (n_el, 3, 2)
        self._area = area

        # edge-midpoint rule, exact for quadratics; quad_refine keeps the
        # rule (already exact at the required degree) but is accepted for
        # interface parity with d=1
        mids = 0.5 * (verts + np.roll(verts, -1, axis=1))          # (n_el, 3, 2)
        self.quad_x = mids
        self.quad_w = np.repeat(area[:, None] / 3.0, 3, axis=1)
        phi = np.zeros((3, 3))
        for q in range(3):
            phi[q, q] = 0.5
            phi[q, (q + 1) % 3] = 0.5
        self._phi_q = phi

    # -- pointwise element location ------------------------------------
    def _locate_1d(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        v = self.mesh.vertices
        e = np.clip(np.searchsorted(v, x, side="left") - 1, 0, self.mesh.n - 1)
        xhat = (x - v[e]) / self.mesh.h
        return e, np.clip(xhat, 0.0, 1.0)

    def eval_coeffs(self, coeffs: np.ndarray, x) -> np.ndarray:
        """Evaluate the FE function with the given coefficients at x."""
        if self.mesh.d == 1:
            x = np.asarray(x, dtype=float)
            _check_in_domain(x)
            e, xhat = self._locate_1d(np.clip(x, 0.0, 1.0))
            phi = _ref_basis_1d(self.degree, xhat)
            return np.einsum("...a,...a->...", phi, coeffs[self.elem_dofs[e]])
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        _check_in_domain(x)
        e, lam = self._locate_2d(np.clip(x, 0.0, 1.0))
        vals = np.einsum("...a,...a->...", lam, coeffs[self.elem_dofs[e]])
        return vals[0] if single else vals

    def eval_coeffs_gradient(self, coeffs: np.ndarray, x) -> np.ndarray:
        if self.mesh.d == 1:
            x = np.asarray(x, dtype=float)
            _check_in_domain(x)
            e, xhat = self._locate_1d(np.clip(x, 0.0, 1.0))
            dphi = _ref_dbasis_1d(self.degree, xhat) / self.mesh.h
            return np.einsum("...a,...a->...", dphi, coeffs[self.elem_dofs[e]])
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        _check_in_domain(x)
        e, _ = self._locate_2d(np.clip(x, 0.0, 1.0))
        grads = np.einsum("qad,qa->qd", self._grads[e], coeffs[self.elem_dofs[e]])
        return grads[0] if single else grads

    def _locate_2d(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.mesh.n
        axis = np.linspace(0.0, 1.0, n + 1)
        ix = np.clip(np.searchsorted(axis, x[:, 0], side="left") - 1, 0, n - 1)
        iy = np.clip(np.searchsorted(axis, x[:, 1], side="left") - 1, 0, n - 1)
        xi = x[:, 0] * n - ix
        eta = x[:, 1] * n - iy
        lower = eta <= xi          # lower triangle has the lower element index
        e = 2 * (iy * n + ix) + np.where(lower, 0, 1)
        lam = np.empty((len(e), 3))
        # barycentric coordinates on (a,b,c) resp. (a,c,d)
        lam[lower, 0] = 1.0 - xi[lower]
        lam[lower, 1] = xi[lower] - eta[lower]
        lam[lower, 2] = eta[lower]
        up = ~lower
        lam[up, 0] = 1.0 - eta[up]
        lam[up, 1] = xi[up]
        lam[up, 2] = eta[up] - xi[up]
        return e, lam

    # -- quadrature-point views ------------------------------------------
    def values_at_quad(self, coeffs: np.ndarray) -> np.ndarray:
        """Values at all quadrature points, shape (n_el, n_q)."""
        local = coeffs[self.elem_dofs]
        return np.einsum("qa,ea->eq", self._phi_q, local)

    def gradients_at_quad(self, coeffs: np.ndarray) -> np.ndarray:
        """Gradients at quadrature points: (n_el, n_q) for d=1, (n_el, n_q, 2) for d=2."""
        local = coeffs[self.elem_dofs]
        if self.mesh.d == 1:
            return np.einsum("qa,ea->eq", self._dphi_q, local)
        g = np.einsum("ead,ea->ed", self._grads, local)
        return np.repeat(g[:, None, :], self.quad_w.shape[1], axis=1)


def _check_in_domain(x: np.ndarray) -> None:
    if np.any(x < -_COORD_TOL) or np.any(x > 1.0 + _COORD_TOL):
        raise ValueError("evaluation point outside the closed domain")


class FeFunction:
    """A function in an FeSpace, stored as one coefficient per dof."""

    def __init__(self, space: FeSpace, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.n_dofs,):
            raise ValueError(
                f"coefficient vector has length {coeffs.shape}, "
                f"space has {space.n_dofs} dofs")
        self.space = space
        self.coeffs = coeffs

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coeffs.copy())

    def __add__(self, other: "FeFunction") -> "FeFunction":
        return FeFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        return FeFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "FeFunction":
        return FeFunction(self.space, self.coeffs * scalar)

    __rmul__ = __mul__


def evaluate(fn: FeFunction, x) -> Union[float, np.ndarray]:
    """Exact piecewise-polynomial evaluation at x (scalar or array)."""
    out = fn.space.eval_coeffs(fn.coeffs, x)
    return float(out) if np.ndim(out) == 0 else out


def evaluate_gradient(fn: FeFunction, x) -> Union[float, np.ndarray]:
    """Elementwise derivative; at element interfaces the element with the
    lowest index whose closed hull contains x is used."""
    out = fn.space.eval_coeffs_gradient(fn.coeffs, x)
    return float(out) if np.ndim(out) == 0 else out


def fe_project(f: Callable, space: FeSpace) -> FeFunction:
    """Nodal interpolant of a callable; exact on polynomials of degree <= mu."""
    coords = space.dof_coords
    try:
        vals = np.asarray(f(coords), dtype=float)
        if vals.shape != (space.n_dofs,):
            raise TypeError
    except TypeError:
        if space.mesh.d == 1:
            vals = np.array([f(c) for c in coords], dtype=float)
        else:
            vals = np.array([f(c) for c in coords], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("projection target is non-finite at a dof coordinate")
    return FeFunction(space, vals)


def stiffness_matrix(space: FeSpace, coeff_quad: np.ndarray | None = None) -> sparse.csr_matrix:
    """Full-dof stiffness matrix of integral(a * grad u . grad v); a given by
    values at quadrature points (default a = 1)."""
    w = space.quad_w if coeff_quad is None else space.quad_w * coeff_quad
    if space.mesh.d == 1:
        local = np.einsum("eq,qa,qb->eab", w, space._dphi_q, space._dphi_q)
    else:
        dots = np.einsum("ead,ebd->eab", space._grads, space._grads)
        local = w.sum(axis=1)[:, None, None] * dots
    n = space.n_dofs
    return sparse.coo_matrix(
        (local.ravel(), (space._rows, space._cols)), shape=(n, n)).tocsr()


class FactorizedLaplacian:
    """Dirichlet Laplacian restricted to interior dofs, factorized once.

    Immutable after construction. `solve` is reentrant (banded Cholesky via
    LAPACK for d=1, SuperLU for d=2) and the object may be shared across
    concurrent solves.
    """

    def __init__(self, space: FeSpace):
        self.space = space
        full = stiffness_matrix(space)
        idx = space.interior
        self.matrix = full[idx][:, idx].tocsr()
        n = len(idx)
        if space.mesh.d == 1:
            bw = space.degree
            ab = np.zeros((bw + 1, n))
            for k in range(bw + 1):
                ab[bw - k, k:] = self.matrix.diagonal(k)
            try:
                self._cho = cholesky_banded(ab, lower=False)
            except np.linalg.LinAlgError as exc:   # pragma: no cover
                raise RuntimeError("stiffness factorization failed") from exc
            self._splu = None
        else:
            try:
                self._splu = splu(self.matrix.tocsc())
            except RuntimeError as exc:             # pragma: no cover
                raise RuntimeError("stiffness factorization failed") from exc
            self._cho = None

    def solve(self, rhs_interior: np.ndarray) -> np.ndarray:
        """Solve for interior coefficients; rhs may be (n,) or (n, m)."""
        if self._cho is not None:
            return cho_solve_banded((self._cho, False), rhs_interior)
        if rhs_interior.ndim == 1:
            return self._splu.solve(rhs_interior)
        return np.column_stack([self._splu.solve(rhs_interior[:, j])
                                for j in range(rhs_interior.shape[1])])


def assemble_laplacian(space: FeSpace) -> FactorizedLaplacian:
    """Interior-dof stiffness of integral(grad u . grad v), factorized."""
    return FactorizedLaplacian(space)


def load_vector(space: FeSpace, f: Callable) -> np.ndarray:
    """Dual vector F[a] = integral(f * phi_a) over all dofs, by quadrature."""
    if space.mesh.d == 1:
        fx = np.asarray(f(space.quad_x), dtype=float)
        if fx.shape != space.quad_x.shape:
            fx = np.vectorize(f)(space.quad_x)
    else:
        pts = space.quad_x.reshape(-1, 2)
        fx = np.asarray(f(pts), dtype=float).reshape(space.quad_w.shape)
    out = np.zeros(space.n_dofs)
    contrib = np.einsum("eq,qa->ea", space.quad_w * fx, space._phi_q)
    np.add.at(out, space.elem_dofs, contrib)
    return out


def gradient_load_vector(space: FeSpace, g_quad: np.ndarray) -> np.ndarray:
    """Dual vector F[a] = integral(g . grad phi_a) with g given at quadrature
    points: shape (n_el, n_q) for d=1, (n_el, n_q, 2) for d=2."""
    out = np.zeros(space.n_dofs)
    if space.mesh.d == 1:
        contrib = np.einsum("eq,qa->ea", space.quad_w * g_quad, space._dphi_q)
    else:
        contrib = np.einsum("eqd,eq,ead->ea", g_quad, space.quad_w, space._grads)
    np.add.at(out, space.elem_dofs, contrib)
    return out


def solve_dirichlet(op: FactorizedLaplacian, rhs) -> FeFunction:
    """Galerkin solution with zero boundary values.

    `rhs` is either a callable forcing f (assembled by quadrature) or an
    already-assembled dual vector over all dofs.
    """
    space = op.space
    if callable(rhs):
        rhs = load_vector(space, rhs)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (space.n_dofs,):
        raise ValueError("rhs dual vector must cover all dofs")
    coeffs = np.zeros(space.n_dofs)
    coeffs[space.interior] = op.solve(rhs[space.interior])
    return FeFunction(space, coeffs)


_NORM_KINDS = ("lp", "w1p-seminorm", "w1p")


def fe_norm(fn: FeFunction, kind: str = "lp", p: float = 2.0) -> float:
    """Quadrature approximation of the L^p norm, W^{1,p} seminorm, or full
    W^{1,p} norm."""
    if kind not in _NORM_KINDS:
        raise ValueError(f"kind must be one of {_NORM_KINDS}, got {kind!r}")
    if p < 1.0:
        raise ValueError(f"exponent p must be >= 1, got {p}")
    space = fn.space
    w = space.quad_w
    total = 0.0
    if kind in ("lp", "w1p"):
        vals = space.values_at_quad(fn.coeffs)
        total += float(np.sum(w * np.abs(vals) ** p))
    if kind in ("w1p-seminorm", "w1p"):
        grads = space.gradients_at_quad(fn.coeffs)
        mag = np.abs(grads) if space.mesh.d == 1 else np.linalg.norm(grads, axis=-1)
        total += float(np.sum(w * mag ** p))
    return total ** (1.0 / p)


def fe_error(fn: FeFunction, ref: FeFunction, kind: str = "lp", p: float = 2.0) -> float:
    """Norm of (fn - ref) using the quadrature of the finer space.

    Both functions are evaluated exactly at the chosen quadrature points, so
    nested uniform meshes incur no extra consistency error.
    """
    if kind not in _NORM_KINDS:
        raise ValueError(f"kind must be one of {_NORM_KINDS}, got {kind!r}")
    if fn.space is ref.space:
        return fe_norm(fn - ref, kind, p)
    fine, coarse = (ref, fn) if ref.space.n_dofs >= fn.space.n_dofs else (fn, ref)
    space = fine.space
    if space.mesh.d != coarse.space.mesh.d:
        raise ValueError("functions live on meshes of different dimension")
    w = space.quad_w.ravel()
    xq = space.quad_x.ravel() if space.mesh.d == 1 else space.quad_x.reshape(-1, 2)
    total = 0.0
    if kind in ("lp", "w1p"):
        diff = (space.values_at_quad(fine.coeffs).ravel()
                - coarse.space.eval_coeffs(coarse.coeffs, xq))
        total += float(np.sum(w * np.abs(diff) ** p))
    if kind in ("w1p-seminorm", "w1p"):
        gf = space.gradients_at_quad(fine.coeffs).reshape(w.size, -1)
        gc = coarse.space.eval_coeffs_gradient(coarse.coeffs, xq).reshape(w.size, -1)
        mag = np.linalg.norm(gf - gc, axis=-1)
        total += float(np.sum(w * mag ** p))
    return total ** (1.0 / p)
