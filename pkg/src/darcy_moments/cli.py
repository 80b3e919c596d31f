"""Command-line studies over the moment-equation pipeline.

Subcommands: solve | converge-h | converge-sparse | validate | sigma-sweep | mc.
Exit codes: 0 success / all checks pass, 1 validation failure, 2 I/O or
config error, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from math import comb
from pathlib import Path

import numpy as np

from .config import (StudyConfig, config_to_dict, default_config, load_config)
from .errors import CapacityError, FactorizationError
from .fem import (FeSpace, assemble_laplacian, build_mesh, evaluate,
                  fe_error, fe_norm, fe_project, load_vector, solve_dirichlet,
                  stiffness_matrix)
from .moment_recursion import (run_recursion, seed_correlation, taylor_mean,
                               trace_rhs)
from .oracles import (CoefficientInputs, full_tensor_oracle, holder_norm_1d,
                      lambda_coeffs, mc_mean, mixed_holder_norm, theta_coeffs)
from .problem import setup_problem
from .random_field import (CovarianceKernel, MomentEvaluator, _pairings,
                           build_sampler, covariance_matrix, moment_eval,
                           sample_field)
from .sparse_grid import (LevelFamily, grid_points, smolyak_build,
                          smolyak_eval, smolyak_eval_many)
from .storage import (save_fe_function, save_mc_estimate, save_table,
                      write_csv)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CAP = 3


def _write_meta(out: Path, config: StudyConfig, command: str, **extra) -> None:
    meta = {"command": command, "config": config_to_dict(config)}
    meta.update(extra)
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _with(config: StudyConfig, **section_updates) -> StudyConfig:
    parts = {}
    for name, updates in section_updates.items():
        parts[name] = dataclasses.replace(getattr(config, name), **updates)
    return dataclasses.replace(config, **parts)


# ---------------------------------------------------------------- solve

def cmd_solve(config: StudyConfig, out: Path, args) -> int:
    table = run_recursion(config)
    tm = taylor_mean(table)
    save_fe_function(tm.mean, out / "mean.csv")
    p = config.norm_p
    rows = []
    for k in range(0, config.recursion.K + 1):
        corr = table.correction(k)
        rows.append((k, fe_norm(corr, "lp", p), fe_norm(corr, "w1p", p)))
    write_csv(out / "corrections.csv", ["k", "lp_norm", "w1p_norm"], rows)
    _write_meta(out, config, "solve", solve_count=table.solve_count,
                norm_p=p, skipped_odd=table.skipped_odd)
    if getattr(args, "save_table", False):
        save_table(table, out / "table")
    return EXIT_OK


# ---------------------------------------------------------------- converge

def _running_slopes(params, errors, to_h) -> list:
    slopes = [""]
    for i in range(1, len(params)):
        num = np.log(errors[i - 1] / errors[i])
        den = np.log(to_h(params[i - 1]) / to_h(params[i]))
        slopes.append(num / den)
    return slopes


def cmd_converge(config: StudyConfig, out: Path, args, axis: str) -> int:
    sweep = config.sweeps.n if axis == "h" else config.sweeps.L
    if not sweep:
        print(f"error: empty sweep list for axis {axis}", file=sys.stderr)
        return EXIT_IO
    # the overkill reference refines the swept axis only, so the measured
    # error isolates that axis's contribution
    if axis == "h":
        ref_config = _with(config, mesh={"n": config.reference.n})
        to_h = lambda n: 1.0 / n
    else:
        ref_config = _with(config, sparse={"L": config.reference.L})
        to_h = lambda L: 2.0 ** (-L)
    ref = taylor_mean(run_recursion(ref_config))

    errs_l2, errs_h1 = [], []
    for value in sweep:
        cfg = (_with(config, mesh={"n": int(value)}) if axis == "h"
               else _with(config, sparse={"L": int(value)}))
        tm = taylor_mean(run_recursion(cfg))
        errs_l2.append(fe_error(tm.mean, ref.mean, "lp", 2.0))
        errs_h1.append(fe_error(tm.mean, ref.mean, "w1p", 2.0))
    slopes = _running_slopes(sweep, errs_h1, to_h)
    rows = list(zip(sweep, errs_l2, errs_h1, slopes))
    name = f"converge_{axis}.csv"
    write_csv(out / name, ["param", "L2_error", "H1_error", "running_slope"],
              rows)
    _write_meta(out, config, f"converge-{axis}", sweep=list(sweep),
                reference=dataclasses.asdict(config.reference))
    if getattr(args, "plots", False):
        _loglog_plot(out / f"converge_{axis}.svg",
                     [to_h(v) for v in sweep], {"L2": errs_l2, "H1": errs_h1},
                     xlabel="h" if axis == "h" else "h_L")
    return EXIT_OK


def _loglog_plot(path: Path, x, curves: dict, xlabel: str) -> None:
    try:
        import matplotlib
        matplotlib.use("svg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib unavailable; skipping plot", file=sys.stderr)
        return
    fig, ax = plt.subplots()
    for label, y in curves.items():
        ax.loglog(x, y, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error vs overkill reference")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------- mc

def cmd_mc(config: StudyConfig, out: Path, args) -> int:
    est = mc_mean(config, threads=args.threads)
    save_mc_estimate(est, out / "mc_mean.csv")
    _write_meta(out, config, "mc", samples=est.samples, seed=est.seed,
                skipped=est.skipped)
    return EXIT_OK


# ---------------------------------------------------------------- sigma sweep

def cmd_sigma_sweep(config: StudyConfig, out: Path, args) -> int:
    sigmas = config.sweeps.sigma
    orders = config.sweeps.K
    if not sigmas or not orders:
        print("error: sigma-sweep needs nonempty sigma and K sweeps",
              file=sys.stderr)
        return EXIT_IO
    kmax = max(orders)
    rows = []
    for sigma in sigmas:
        cfg = _with(config, kernel={"sigma": float(sigma)},
                    recursion={"K": int(kmax)})
        est = mc_mean(cfg, threads=args.threads)
        table = run_recursion(cfg)
        for K in orders:
            tm = taylor_mean(table, int(K))
            err = fe_norm(est.mean - tm.mean, "lp", 2.0)
            rows.append((sigma, K, err))
    write_csv(out / "sigma_sweep.csv", ["sigma", "K", "L2_error"], rows,
              comment="exploratory: Taylor degree vs field strength; "
                      "divergence for large sigma is permitted, not asserted")
    _write_meta(out, config, "sigma-sweep", samples=config.mc.samples)
    return EXIT_OK


# ---------------------------------------------------------------- validate

def run_validation_battery(config: StudyConfig, threads: int = 1) -> list:
    """The deterministic acceptance battery behind `validate`: each entry is
    (check, value, bound, passed) with value <= bound when passed."""
    rng = np.random.default_rng(np.random.SeedSequence([config.mc.seed, 97]))
    checks = []

    def add(name, value, bound):
        checks.append((name, float(value), float(bound),
                       bool(value <= bound)))

    # finite elements
    mesh = build_mesh(1, 16)
    space2 = FeSpace(mesh, 2)
    full = stiffness_matrix(space2)
    add("stiffness_symmetry", np.abs((full - full.T).toarray()).max(), 1e-14)
    add("stiffness_rowsum",
        np.abs(np.asarray(full.sum(axis=1)).ravel()).max(), 1e-12)

    space = FeSpace(build_mesh(1, 32), 1)
    op = assemble_laplacian(space)
    rhs = load_vector(space, lambda x: np.pi ** 2 * np.sin(np.pi * x))
    uh = solve_dirichlet(op, rhs)
    res = op.matrix @ uh.coeffs[space.interior] - rhs[space.interior]
    scale = max(1.0, np.abs(rhs).max())
    add("galerkin_orthogonality", np.abs(res).max() / scale, 1e-10)

    space8 = FeSpace(build_mesh(1, 8), 1)
    op8 = assemble_laplacian(space8)
    u8 = solve_dirichlet(op8, lambda x: np.ones_like(x))
    exact = 0.5 * space8.dof_coords * (1.0 - space8.dof_coords)
    add("p1_nodal_exactness", np.abs(u8.coeffs - exact).max(), 1e-10)

    proj = fe_project(lambda x: x ** 2, space2)
    exact2 = space2.dof_coords ** 2
    add("p2_projection_exact", np.abs(proj.coeffs - exact2).max(), 1e-12)

    # sparse interpolation
    family = LevelFamily(config.sparse.h0)
    target = lambda y: float(np.exp(y[0] * y[1]))
    interp = smolyak_build(family, 3, 2, target)
    oracle = full_tensor_oracle(family, 3, 2, target)
    pts = rng.random((100, 2))
    diff = max(abs(smolyak_eval(interp, tuple(p)) - oracle(tuple(p)))
               for p in pts)
    add("smolyak_combination_identity", diff, 1e-12)

    nodes, _ = grid_points(family, 3, 2)
    nodal = smolyak_eval_many(interp, nodes)
    truth = np.array([target(tuple(p)) for p in nodes])
    add("smolyak_nodal_exactness", np.abs(nodal - truth).max(), 1e-12)

    const = smolyak_build(family, 2, 2, lambda y: 1.0)
    vals = smolyak_eval_many(const, rng.random((50, 2)))
    add("smolyak_partition_of_unity", np.abs(vals - 1.0).max(), 1e-13)

    # Gaussian moments and sampling
    add("isserlis_pairings_m6", abs(len(_pairings(6)) - 15), 0.0)
    kernel = CovarianceKernel(config.kernel.kind, config.kernel.sigma,
                              config.kernel.corr_length)
    ev = MomentEvaluator(kernel)
    add("isserlis_odd_zero", abs(moment_eval(ev, (0.1, 0.5, 0.9))), 0.0)
    pts6 = tuple(rng.random(6))
    base = moment_eval(ev, pts6)
    worst = 0.0
    for _ in range(8):
        perm = tuple(rng.permutation(pts6))
        worst = max(worst, abs(moment_eval(ev, perm) - base) / abs(base))
    add("isserlis_permutation", worst, 1e-13)

    c = 1.7
    scaled = MomentEvaluator(kernel.with_sigma(kernel.sigma * c))
    hom = abs(moment_eval(scaled, pts6) - c ** 6 * base) / abs(c ** 6 * base)
    add("moment_sigma_homogeneity", hom, 1e-13)

    locs = np.linspace(0.0, 1.0, 65)
    s1 = build_sampler(kernel, locs, seed=config.mc.seed)
    s2 = build_sampler(kernel, locs, seed=config.mc.seed)
    add("sampler_determinism",
        np.abs(sample_field(s1) - sample_field(s2)).max(), 0.0)
    resid = np.abs(s1.factor @ s1.factor.T - covariance_matrix(kernel, locs)).max()
    add("sampler_residual", resid, 10.0 * max(s1.jitter, 1e-15) * kernel.sigma ** 2)

    # recursion structure
    small = _with(config, mesh={"n": 16}, sparse={"L": 2}, recursion={"K": 2})
    u0 = setup_problem(small).u0
    odd_seed = seed_correlation(u0, ev, 3, family, 2)
    add("seed_odd_zero", 0.0 if odd_seed.is_zero else 1.0, 0.0)

    t1 = run_recursion(small)
    t2 = run_recursion(_with(small, kernel={"sigma": 2 * small.kernel.sigma}))
    e1, e2 = t1.correction(2).coeffs, t2.correction(2).coeffs
    denom = max(np.abs(e2).max(), 1e-300)
    add("sigma_homogeneity_k2", np.abs(e2 - 4.0 * e1).max() / denom, 1e-10)

    add("trace_rank1_closed_form", _trace_rank1_error(small), 1e-12)

    # quadrature insensitivity: with h_L a multiple of h the trace integrands
    # are elementwise polynomial, so refining the rule must not move E[u^2]
    tq = _recursion_with_quad_refine(small, 2)
    add("quadrature_insensitivity",
        np.abs(tq - t1.correction(2).coeffs).max()
        / max(np.abs(e1).max(), 1e-300), 1e-12)

    # coefficient recursions
    unit = CoefficientInputs(1, 1, 1)
    lam = lambda_coeffs(3, unit)
    exact_ints = (abs(lam[0] - 1) + abs(lam[1] - 1) + abs(lam[2] - 3)
                  + abs(lam[3] - 13) + abs(theta_coeffs(3, 3, unit) - 1)
                  + abs(theta_coeffs(2, 3, unit)))
    add("theta_lambda_exact", exact_ints, 0.0)

    # mixed-Holder product identity
    g1 = np.linspace(0.0, 1.0, 9)
    g2 = np.linspace(0.0, 1.0, 7)
    v1 = np.sin(2.0 * g1) + 1.5
    v2 = np.exp(-g2)
    prod = np.outer(v1, v2)
    lhs = mixed_holder_norm(prod, [g1, g2], 0.5)
    rhs_norm = holder_norm_1d(v1, g1, 0.5) * holder_norm_1d(v2, g2, 0.5)
    add("holder_product_identity", abs(lhs - rhs_norm) / rhs_norm, 1e-12)

    # cross-pipeline: MC mean vs second-order Taylor mean
    mc_cfg = _with(config, mesh={"n": 32}, sparse={"L": 3},
                   recursion={"K": 2}, mc={"samples": 2000})
    est = mc_mean(mc_cfg, threads=threads)
    table = run_recursion(mc_cfg)
    tm = taylor_mean(table)
    err_t2 = fe_norm(est.mean - tm.mean, "lp", 2.0)
    err_u0 = fe_norm(est.mean - table.correction(0), "lp", 2.0)
    add("mc_taylor_improves_on_u0", err_t2 / err_u0, 1.0)

    return checks


def _trace_rank1_error(config: StudyConfig) -> float:
    """Exactness of the trace functional on a rank-1 correlation whose
    auxiliary factor lives on the coarsest level (closed-form reference)."""
    from .moment_recursion import Correlation

    problem = setup_problem(config)
    space, family, L = problem.space, problem.family, config.sparse.L
    g = fe_project(lambda x: x * (1.0 - x), space)
    cnodes = family.nodes(0)
    cvals = 0.5 + 0.25 * cnodes          # piecewise-linear factor on level 0
    cfun = lambda y: float(np.interp(y, cnodes, cvals))

    def target(y):
        return g.coeffs * cfun(y[0]) * cfun(y[1])

    interp = smolyak_build(family, L, 2, target)
    corr = Correlation(0, 2, space, family, L, interp=interp)
    y_fixed = (0.3,)
    got = trace_rhs(corr, 1, y_fixed, space)

    gq = space.gradients_at_quad(g.coeffs)
    xq = space.quad_x
    want_vals = gq * np.interp(xq, cnodes, cvals) * cfun(y_fixed[0])
    from .fem import gradient_load_vector
    want = gradient_load_vector(space, want_vals)
    scale = max(np.abs(want).max(), 1e-300)
    return np.abs(got - want).max() / scale


def _recursion_with_quad_refine(config: StudyConfig, refine: int) -> np.ndarray:
    """E[u^2] recomputed with a refine-times finer quadrature rule."""
    from .moment_recursion import CorrectionTable, solve_correlation

    problem = setup_problem(config, quad_refine=refine)
    family, L = problem.family, config.sparse.L
    seed = seed_correlation(problem.u0, problem.moments, 2, family, L)
    c11 = solve_correlation(2, 1, {1: seed}, problem.operator, family, L)
    c20 = solve_correlation(2, 0, {1: c11, 2: seed}, problem.operator,
                            family, L)
    return c20.at().coeffs


def cmd_validate(config: StudyConfig, out: Path, args) -> int:
    checks = run_validation_battery(config, threads=args.threads)
    write_csv(out / "validate.csv", ["check", "value", "bound", "pass"],
              checks)
    _write_meta(out, config, "validate",
                passed=sum(1 for c in checks if c[3]),
                total=len(checks))
    failed = [c for c in checks if not c[3]]
    for name, value, bound, _ in failed:
        print(f"FAIL {name}: {value!r} > {bound!r}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_VALIDATION


# ---------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darcy-moments",
        description="Expected value of the lognormal Darcy solution via "
                    "recursive first-moment equations with sparse grids.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON study configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for Monte Carlo loops")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        p.add_argument("--plots", action="store_true",
                       help="emit SVG plots where applicable")

    p = sub.add_parser("solve", help="run the recursion and write the mean")
    common(p)
    p.add_argument("--save-table", action="store_true",
                   help="also dump the full correction table")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("converge-h", help="mesh refinement study")
    common(p)
    p.set_defaults(func=lambda c, o, a: cmd_converge(c, o, a, "h"))

    p = sub.add_parser("converge-sparse", help="sparse level refinement study")
    common(p)
    p.set_defaults(func=lambda c, o, a: cmd_converge(c, o, a, "L"))

    p = sub.add_parser("validate", help="run the acceptance battery")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sigma-sweep",
                       help="exploratory Taylor-vs-MC error over sigma and K")
    common(p)
    p.set_defaults(func=cmd_sigma_sweep)

    p = sub.add_parser("mc", help="Monte Carlo estimate of E[u]")
    common(p)
    p.set_defaults(func=cmd_mc)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else default_config()
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.seed is not None:
        config.mc.seed = args.seed
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(config, out, args)
    except CapacityError as exc:
        print(f"error: resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except FactorizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
