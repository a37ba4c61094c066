"""Command-line entry points.

Subcommands:
  run         batch experiment sweep from a preset and/or key-value config file
  mesh-info   entity counts for a cube mesh
  coercivity  rotated-form identity violation on an assembled system
  fov         numerical-range boundary and distance to the origin
  abs-error   relative solution change when absorption is added
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import analysis
from .experiments import ConfigError, config_from_preset, parse_config_file, run_table
from .fem import Coefficients, assemble, build_edge_space
from .mesh import build_cube_mesh

__all__ = ["main"]


def _cmd_run(args) -> int:
    file_raw = parse_config_file(args.config) if args.config else None
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.out:
        overrides["out"] = args.out
    if args.seed is not None:
        overrides["seed"] = str(args.seed)

    if args.preset == "abs-error":
        k = float(overrides.get("k", 5.0))
        n = int(overrides.get("n", 6))
        ratios = analysis.relative_error_sweep(k, [k / 8.0, k / 4.0, k / 2.0], n)
        print(f"k={k:g} n={n}")
        print("xi,ratio")
        lines = [f"{xi:.10g},{ratio:.10e}" for xi, ratio in ratios]
        print("\n".join(lines))
        if overrides.get("out"):
            with open(overrides["out"], "w", encoding="utf-8", newline="\n") as f:
                f.write("xi,ratio\n" + "\n".join(lines) + "\n")
        return 0

    cfg = config_from_preset(args.preset, file_raw, overrides)
    records, csv_text = run_table(cfg)
    for rec in records:
        status = "ok" if rec.converged else "MAXIT"
        print(
            f"k={rec.k:g} {rec.preconditioner:>9s} n={rec.n} N={rec.n_sub} "
            f"ncs={rec.n_cs} iters={rec.iterations} [{status}]"
        )
    if cfg.out:
        print(f"wrote {cfg.out}")
    elif not args.out:
        sys.stdout.write(csv_text)
    return 0


def _cmd_mesh_info(args) -> int:
    mesh = build_cube_mesh(args.n)
    print(f"vertices={mesh.n_vertices} tets={mesh.n_tets} edges={mesh.n_edges}")
    print(f"boundary_faces={mesh.boundary_faces.shape[0]} h={mesh.h:.6g}")
    return 0


def _cmd_coercivity(args) -> int:
    mesh = build_cube_mesh(args.n)
    space = build_edge_space(mesh, "pec")
    bundle = assemble(space, Coefficients(k=args.k, xi=args.xi))
    dev = analysis.coercivity_check(
        bundle.S, bundle.M, args.k, args.xi, n_probes=args.probes, seed=args.seed
    )
    print(f"max relative identity violation: {dev:.3e}")
    return 0 if dev <= 1e-12 else 1


def _cmd_fov(args) -> int:
    if args.identity:
        res = analysis.fov(np.eye(args.size), n_angles=args.n_angles)
    else:
        from .decomp import build_decomposition
        from .fem import gaussian_source
        from .krylov import KrylovConfig  # noqa: F401  (re-exported for configs)
        from .precond import PreconditionerSpec, setup

        mesh = build_cube_mesh(args.n)
        space = build_edge_space(mesh, "pec")
        problem = assemble(space, Coefficients(k=args.k, xi=args.xi), source=gaussian_source)
        coarse = build_edge_space(build_cube_mesh(args.coarse), "pec")
        decomp = build_decomposition(space, args.p_axis, args.layers, coarse_space=coarse)
        state = setup(
            problem, decomp, PreconditionerSpec(family="as", levels="two", xi_prec=args.xi)
        )
        n = space.ndof
        bmat = np.zeros((n, n), dtype=complex)
        eye = np.eye(n)
        for j in range(n):
            bmat[:, j] = state.apply(eye[:, j])
        res = analysis.fov(bmat @ problem.A.toarray(), problem.Dk, n_angles=args.n_angles)
    for p in res.boundary_points:
        print(f"{p.real:.12g} {p.imag:.12g}")
    print(f"dist={res.dist_to_origin:.12g} norm={res.norm_D:.12g}")
    return 0


def _cmd_abs_error(args) -> int:
    xi_list = (
        [float(x) for x in args.xi_list.split(",")]
        if args.xi_list
        else [args.k / 8.0, args.k / 4.0, args.k / 2.0]
    )
    ratios = analysis.relative_error_sweep(args.k, xi_list, args.n)
    print("xi,ratio")
    for xi, ratio in ratios:
        print(f"{xi:.10g},{ratio:.10e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxwelldd")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment sweep")
    p_run.add_argument("--config", help="key-value configuration file")
    p_run.add_argument("--preset", help="named preset (table1..table6, medimax-cube, abs-error)")
    p_run.add_argument("--out", help="CSV output path")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p_run.set_defaults(func=_cmd_run)

    p_mesh = sub.add_parser("mesh-info", help="cube mesh entity counts")
    p_mesh.add_argument("--n", type=int, required=True)
    p_mesh.set_defaults(func=_cmd_mesh_info)

    p_co = sub.add_parser("coercivity", help="verify the rotated-form identity")
    p_co.add_argument("--k", type=float, required=True)
    p_co.add_argument("--xi", type=float, required=True)
    p_co.add_argument("--n", type=int, required=True)
    p_co.add_argument("--probes", type=int, default=200)
    p_co.add_argument("--seed", type=int, default=0)
    p_co.set_defaults(func=_cmd_coercivity)

    p_fov = sub.add_parser("fov", help="numerical-range boundary")
    p_fov.add_argument("--identity", action="store_true", help="use the identity operator")
    p_fov.add_argument("--size", type=int, default=4)
    p_fov.add_argument("--k", type=float, default=2.0)
    p_fov.add_argument("--xi", type=float, default=4.0)
    p_fov.add_argument("--n", type=int, default=4)
    p_fov.add_argument("--p-axis", type=int, default=2)
    p_fov.add_argument("--coarse", type=int, default=2)
    p_fov.add_argument("--layers", type=int, default=2)
    p_fov.add_argument("--n-angles", type=int, default=32)
    p_fov.set_defaults(func=_cmd_fov)

    p_abs = sub.add_parser("abs-error", help="absorption relative-error sweep")
    p_abs.add_argument("--k", type=float, required=True)
    p_abs.add_argument("--n", type=int, default=6)
    p_abs.add_argument("--xi-list", help="comma-separated shifts (default k/8,k/4,k/2)")
    p_abs.set_defaults(func=_cmd_abs_error)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
