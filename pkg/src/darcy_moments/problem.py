"""Turn a StudyConfig into the concrete objects every pipeline shares:
mesh, space, factorized operator, forcing, nominal solution, level family,
kernel, and moment evaluator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import StudyConfig
from .fem import (FactorizedLaplacian, FeFunction, FeSpace, assemble_laplacian,
                  build_mesh, solve_dirichlet)
from .random_field import CovarianceKernel, MomentEvaluator
from .sparse_grid import LevelFamily


def forcing_callable(kind: str):
    if kind == "one":
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    if kind == "sin":
        return lambda x: np.pi ** 2 * np.sin(np.pi * np.asarray(x, dtype=float))
    raise ValueError(f"unknown forcing kind {kind!r}")


@dataclass
class Problem:
    """Shared, read-only ingredients of one study configuration."""
    config: StudyConfig
    space: FeSpace
    operator: FactorizedLaplacian
    forcing: callable
    u0: FeFunction
    family: LevelFamily
    kernel: CovarianceKernel
    moments: MomentEvaluator


def setup_problem(config: StudyConfig, quad_refine: int = 1) -> Problem:
    mesh = build_mesh(config.mesh.d, config.mesh.n)
    space = FeSpace(mesh, config.mesh.degree, quad_refine=quad_refine)
    op = assemble_laplacian(space)
    f = forcing_callable(config.forcing.kind)
    u0 = solve_dirichlet(op, f)
    family = LevelFamily(config.sparse.h0)
    kernel = CovarianceKernel(config.kernel.kind, config.kernel.sigma,
                              config.kernel.corr_length, config.kernel.gamma)
    ev = MomentEvaluator(kernel, max_order=config.caps.max_moment_order)
    return Problem(config, space, op, f, u0, family, kernel, ev)
