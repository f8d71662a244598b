"""Command line entry point: mesh, solve, study and export subcommands.

Exit status is 0 on success, 1 for bad input (arguments, files, unsupported
configurations) and 2 when the numerical solve fails.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .analysis import ETA_CHOICES, PRESETS, StudyConfig, eta_field, export_mode, nondimensionalize, run_study, select_branch
from .assembly import NotPositiveDefiniteError, assemble, build_elements
from .eigensolver import EigenBreakdownError, SolverConfig, solve_buckling
from .element import STABILIZATIONS
from .mesh import DOMAINS, FAMILIES, generate_mesh, read_mesh, write_mesh

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _family(text: str) -> str:
    fam = text.upper()
    if fam not in FAMILIES:
        raise argparse.ArgumentTypeError(f"family must be one of {', '.join(FAMILIES)}")
    return fam


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", type=Path, help="mesh file written by the mesh subcommand")
    src.add_argument("--family", type=_family, help="generate a mesh of this family instead")
    p.add_argument("--N", type=int, default=8, help="refinement when generating (default 8)")
    p.add_argument("--domain", choices=DOMAINS, default="square")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eta", choices=ETA_CHOICES, default="eta1")
    p.add_argument("--alpha", type=float, default=0.0, help="load gradient for eta2_alpha")
    p.add_argument("--bc", default="clamped", help="clamped, ss_free_test3 or free")
    p.add_argument("--nev", type=int, default=4)
    p.add_argument("--mode", choices=("auto", "dense", "iterative"), default="auto")
    p.add_argument("--stabilization", choices=STABILIZATIONS, default="combined")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="platevem", description="C1 virtual elements for plate buckling")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="generate a mesh file")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--domain", choices=DOMAINS, default="square")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("solve", help="lowest buckling coefficients on one mesh")
    _add_problem_args(p)

    p = sub.add_parser("study", help="convergence study with order and extrapolation")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--family", type=_family)
    p.add_argument("--domain", choices=DOMAINS)
    p.add_argument("--k", type=int)
    p.add_argument("--N", type=_int_list, help="comma-separated, doubling, e.g. 8,16,32")
    p.add_argument("--eta", choices=ETA_CHOICES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bc")
    p.add_argument("--nev", type=int)
    p.add_argument("--branch", choices=("magnitude", "positive", "negative"))
    p.add_argument("--stabilization", choices=STABILIZATIONS)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--name", help="basename of the output files (default: preset or 'study')")

    p = sub.add_parser("export", help="write one buckling mode as a VTK file")
    _add_problem_args(p)
    p.add_argument("--index", type=int, default=1, help="1-based mode index by |lambda|")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _load_mesh(args):
    if args.mesh is not None:
        return read_mesh(args.mesh)
    return generate_mesh(args.family, args.N, args.domain)


def _system(args):
    mesh = _load_mesh(args)
    elements = build_elements(mesh, args.k, stabilization=args.stabilization)
    return assemble(mesh, args.k, eta_field(args.eta, args.alpha), args.bc, elements=elements)


def _cmd_mesh(args) -> int:
    mesh = generate_mesh(args.family, args.N, args.domain)
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_cells} cells")
    return EXIT_OK


def _cmd_solve(args) -> int:
    system = _system(args)
    res = solve_buckling(system, SolverConfig(nev=args.nev, mode=args.mode))
    print(f"free DOFs {system.n_free}, mode {res.mode}")
    print(f"{'i':>3s} {'lambda':>16s} {'lambda_hat':>12s} {'|lambda_hat|':>12s} {'residual':>10s}")
    for i, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals)):
        hat = float(nondimensionalize(lam))
        print(f"{i + 1:>3d} {lam:16.8f} {hat:12.6f} {abs(hat):12.6f} {r:10.2e}")
    return EXIT_OK


def _cmd_study(args) -> int:
    cfg = PRESETS[args.preset] if args.preset else StudyConfig()
    overrides = {
        "family": args.family,
        "domain": args.domain,
        "k": args.k,
        "Ns": args.N,
        "eta": args.eta,
        "alpha": args.alpha,
        "bc": args.bc,
        "nev": args.nev,
        "branch": args.branch,
        "stabilization": args.stabilization,
    }
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    name = args.name or args.preset or "study"
    args.out_dir.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, out_table=str(args.out_dir / f"{name}.txt"), out_report=str(args.out_dir / f"{name}.json"))
    t0 = time.perf_counter()
    report = run_study(cfg)
    sys.stdout.write(report.table())
    print(f"wrote {cfg.out_table} and {cfg.out_report} ({time.perf_counter() - t0:.1f} s)", file=sys.stderr)
    return EXIT_NUMERICAL if any(r.error for r in report.rows) else EXIT_OK


def _cmd_export(args) -> int:
    system = _system(args)
    if args.index < 1:
        raise InputError("--index is 1-based")
    res = solve_buckling(system, SolverConfig(nev=max(args.nev, args.index), mode=args.mode))
    keep = select_branch(res.eigenvalues, "magnitude", args.index)
    j = keep[args.index - 1]
    lam_hat = float(nondimensionalize(res.eigenvalues[j]))
    export_mode(system, res.eigenvectors[:, j], args.out, title=f"buckling mode {args.index} lambda_hat={lam_hat:.6f}")
    print(f"wrote {args.out} (lambda_hat = {lam_hat:.6f})")
    return EXIT_OK


COMMANDS = {"mesh": _cmd_mesh, "solve": _cmd_solve, "study": _cmd_study, "export": _cmd_export}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except (NotPositiveDefiniteError, EigenBreakdownError, spla.ArpackError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InputError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
