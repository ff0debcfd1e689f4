"""Command-line driver: ``sphwave {solve,sweep,zeros,diagnostics,demo}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .solver import (
    ScatteringProblem,
    convergence_sweep,
    load_config,
    scattering_demo,
    solve,
    write_table,
)

_FLAG_FIELDS = {"bc": "bc", "order": "N", "ptime": "p", "steps": "N_T", "radius": "r",
                "time": "T", "grid_factor": "grid_factor", "data": "data_file"}


def _common(parser):
    parser.add_argument("--bc", choices=("dirichlet", "robin"))
    parser.add_argument("--order", type=int, metavar="N", help="truncation order N")
    parser.add_argument("--ptime", type=int, metavar="p", help="collocation points per step")
    parser.add_argument("--steps", type=int, metavar="N_T", help="number of time steps")
    parser.add_argument("--radius", type=float, metavar="r", help="target sphere radius")
    parser.add_argument("--time", type=float, metavar="T", help="final time")
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--out", default="-", help="output file ('-' for stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--grid-factor", type=int, dest="grid_factor",
                        help="grid points per unit of N in each direction")
    parser.add_argument("--data", help="tabulated boundary data CSV (t,theta,phi,value)")
    parser.add_argument("--workers", type=int, default=1, help="threads for sampling/marching")


def build_parser():
    parser = argparse.ArgumentParser(prog="sphwave", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sphwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one problem and report the error")
    _common(p)
    p.add_argument("--probe", action="append", default=[], metavar="THETA,PHI",
                   help="emit the time trace at this direction (repeatable)")

    p = sub.add_parser("sweep", help="convergence sweep over N or N_T")
    _common(p)
    p.add_argument("--axis", choices=("N", "N_T"), default="N")
    p.add_argument("--values", required=True, help="comma-separated ascending values")

    p = sub.add_parser("zeros", help="poles of one mode order")
    _common(p)

    p = sub.add_parser("diagnostics", help="residue sums, growth and conditioning")
    _common(p)

    p = sub.add_parser("demo", help="exterior-source scattering traces and annulus")
    _common(p)
    return parser


def problem_from_args(args, **defaults):
    """Config file values, then explicit flags on top."""
    kw = dict(defaults)
    if args.config is not None:
        kw.update(load_config(args.config))
    for flag, fieldname in _FLAG_FIELDS.items():
        val = getattr(args, flag, None)
        if val is not None:
            kw[fieldname] = val
    return ScatteringProblem(**kw)


def _cmd_solve(args):
    prob = problem_from_args(args)
    probes = [tuple(float(v) for v in s.split(",")) for s in args.probe]
    res = solve(prob, workers=args.workers, probes=probes or None)
    cfg = prob.summary()
    if probes:
        tr = res.timings["probes"]
        rows = [(t, i, *probes[i], tr[k, i]) for k, t in enumerate(res.times)
                for i in range(len(probes))]
        write_table(args.out, rows, ("t", "probe", "theta", "phi", "value"), cfg, args.format)
        return 0
    rows = [("rel_l2_error", res.rel_l2_error)]
    rows += [(f"{k}_seconds", v) for k, v in res.timings.items() if np.isscalar(v)]
    write_table(args.out, rows, ("quantity", "value"), cfg, args.format)
    return 0


def _cmd_sweep(args):
    prob = problem_from_args(args)
    values = [int(v) for v in args.values.split(",") if v.strip()]
    rows = convergence_sweep(prob, args.axis, values, workers=args.workers)
    write_table(args.out, rows, ("axis", "value", "rel_l2_error", "wall_seconds"),
                prob.summary(), args.format)
    return 0


def _cmd_zeros(args):
    from .zero_finder import zero_table

    n = args.order if args.order is not None else 10
    bc = args.bc or "dirichlet"
    tab = zero_table(n, bc)
    rows = [(j, z.real, z.imag, res)
            for j, (z, res) in enumerate(zip(tab.zeros, tab.residuals))]
    write_table(args.out, rows, ("j", "real", "imag", "residual"),
                {"bc": bc, "n": n, "count": len(tab.zeros)}, args.format)
    return 0


def _cmd_diagnostics(args):
    from .kernel_analysis import (
        dirichlet_residues,
        eigenvector_condition,
        growth_exponent_curve,
        residue_sum,
        robin_residues,
    )

    n = args.order if args.order is not None else 40
    r = args.radius if args.radius is not None else 2.0
    bc = args.bc or "dirichlet"
    res = (dirichlet_residues if bc == "dirichlet" else robin_residues)(n, r)
    rows = [(n, r, "max_log10_abs_residue", res.max_log10_abs),
            (n, r, "residue_sum_real", residue_sum(res).real),
            (n, r, "growth_exponent", growth_exponent_curve(r))]
    cond = eigenvector_condition(n, r)
    rows += [(n, r, k, v) for k, v in cond.items() if k.startswith("cond")]
    write_table(args.out, rows, ("n", "r", "quantity", "value"),
                {"bc": bc, "n": n, "r": r}, args.format)
    return 0


def _cmd_demo(args):
    prob = None
    if any(getattr(args, f) is not None for f in _FLAG_FIELDS) or args.config:
        from .solver import PointSource

        base = dict(sources=(PointSource(1.0, (0, 0, 1.3), 0.6, 0.02, 20.0),
                             PointSource(1.0, (0, 0, 1.7), 1.2, 0.02, 20.0)),
                    N=32, p=8, N_T=60, r=10.0, T=13.0)
        prob = problem_from_args(args, **base)
    data = scattering_demo(prob)
    prob = data["result"].problem
    out = Path("sphwave-demo" if args.out == "-" else args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = prob.summary()
    heads = {"boundary_trace": ("t", "value"), "target_trace": ("t", "value"),
             "annulus": ("x", "z", "value")}
    for key, head in heads.items():
        ext = "json" if args.format == "json" else "csv"
        write_table(out / f"{key}.{ext}", data[key].tolist(), head, cfg, args.format)
    print(f"wrote {', '.join(heads)} to {out}", file=sys.stderr)
    return 0


_COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "zeros": _cmd_zeros,
             "diagnostics": _cmd_diagnostics, "demo": _cmd_demo}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"sphwave {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
