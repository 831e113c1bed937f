"""Command-line front end.

Exit status is 0 on success, 1 on any computation or I/O failure (reported as
a single ``error: <code>: <message>`` line on stderr) and 2 on bad arguments
or unparsable regularizer/generator specs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, extremes, figures, inference, svg
from .core import QuantileIndex, certify_quantile, dist_fn
from .errors import DomainError, GeoquantError, SpecParseError
from .measure import GENERATOR_HELP, parse_generator, read_csv, sample
from .regularizer import parse_regularizer
from .solver import SolverOptions, componentwise_median, contour, quantile

DEFAULT_EXTREME_ALPHAS = "0.9,0.99,0.999,0.9999"


class ArgError(Exception):
    """Bad command-line configuration (exit status 2)."""


def _floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ArgError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ArgError(f"{what}: empty list")
    return vals


def _alpha(v: float) -> float:
    if not 0.0 <= v < 1.0:
        raise ArgError(f"alpha must lie in [0, 1), got {v}")
    return v


def _fmt(v) -> str:
    return repr(float(v))


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("GEOQUANT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ArgError(f"GEOQUANT_THREADS must be an integer, got {env!r}") from None
    return 1


def _measure(args):
    if args.input and args.generator:
        raise ArgError("give exactly one of --input and --generator")
    if args.input:
        return read_csv(args.input)
    if args.generator:
        return sample(parse_generator(args.generator), args.n, args.seed)
    raise ArgError("an input is required: --input FILE or --generator SPEC")


def _opts(args) -> SolverOptions:
    return SolverOptions(grad_tol=args.tol, max_iter=args.max_iter)


def _direction(text: str | None, d: int) -> np.ndarray:
    if text is None:
        u = np.zeros(d)
        u[0] = 1.0
        return u
    u = np.array(_floats(text, "--u"))
    if u.shape[0] != d:
        raise ArgError(f"--u has {u.shape[0]} components, data have dimension {d}")
    nu = float(np.linalg.norm(u))
    if nu == 0.0:
        raise ArgError("--u must be nonzero")
    return u / nu


class _Output:
    """Text sink: a file given by --output or stdout."""

    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()

    def close(self):
        text = self.buf.getvalue()
        if self.path in (None, "-"):
            sys.stdout.write(text)
        else:
            Path(self.path).write_text(text)


def _solution_cells(sol) -> list[str]:
    return [_fmt(v) for v in sol.point] + [_fmt(sol.certificate.residual), sol.status.value,
                                           str(sol.iterations)]


def _json_cell(cell):
    # numbers go out as JSON numbers; non-finite values and labels stay strings
    if not isinstance(cell, str):
        return cell
    for kind in (int, float):
        try:
            v = kind(cell)
        except ValueError:
            continue
        return v if math.isfinite(v) else cell
    return cell


def _write_rows(out, header, rows, fmt):
    if fmt == "json":
        json.dump([{k: _json_cell(c) for k, c in zip(header, r)} for r in rows], out.buf, indent=1)
        out.buf.write("\n")
        return
    w = csv.writer(out.buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


# -- subcommands ------------------------------------------------------------

def cmd_quantile(args):
    m = _measure(args)
    reg = parse_regularizer(args.reg)
    alpha = _alpha(args.alpha)
    u = _direction(args.u, m.dim)
    sol = quantile(m, reg, QuantileIndex(alpha, u), _opts(args))
    header = (["alpha"] + [f"u{i + 1}" for i in range(m.dim)] + [f"x{i + 1}" for i in range(m.dim)]
              + ["residual", "status", "iterations"])
    row = [_fmt(alpha)] + [_fmt(v) for v in u] + _solution_cells(sol)
    out = _Output(args.output)
    _write_rows(out, header, [row], args.format)
    out.close()
    return 0


def _contour_rows(m, reg, alphas, n_dirs, opts, threads):
    rows = []
    theta = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    for a in alphas:
        res = contour(m, reg, a, n_dirs=n_dirs, opts=opts, threads=threads)
        for t, (_, sol) in zip(theta, res):
            if isinstance(sol, GeoquantError):
                rows.append([_fmt(t), _fmt(a), "nan", "nan", "nan", f"error:{sol.code}", "0"])
            else:
                rows.append([_fmt(t), _fmt(a)] + _solution_cells(sol))
    return rows


CONTOUR_HEADER = ["theta", "alpha", "x1", "x2", "residual", "status", "iterations"]


def cmd_contour(args):
    m = _measure(args)
    if m.dim != 2:
        raise DomainError("contours are drawn for 2-D data only")
    reg = parse_regularizer(args.reg)
    alphas = [_alpha(a) for a in _floats(args.alphas or str(args.alpha), "--alpha")]
    if args.dirs < 1:
        raise ArgError("--dirs must be positive")
    rows = _contour_rows(m, reg, alphas, args.dirs, _opts(args), _threads(args))
    out = _Output(args.output)
    if args.format == "svg":
        curves = []
        for a in alphas:
            pts = [[float(r[2]), float(r[3])] for r in rows if r[1] == _fmt(a)]
            curves.append((reg.name, a, pts))
        out.buf.write(svg.contour_svg(m.atoms, curves, componentwise_median(m)))
    else:
        _write_rows(out, CONTOUR_HEADER, rows, args.format)
    out.close()
    return 0


def _parse_points(text: str, d: int) -> np.ndarray:
    pts = [_floats(p, "--at") for p in text.split(";") if p.strip()]
    if any(len(p) != d for p in pts):
        raise ArgError(f"--at points must have {d} coordinates")
    return np.array(pts)


def cmd_distfn(args):
    m = _measure(args)
    reg = parse_regularizer(args.reg)
    pts = m.atoms if args.at is None else _parse_points(args.at, m.dim)
    d = m.dim
    header = [f"x{i + 1}" for i in range(d)] + [f"F{i + 1}" for i in range(d)] + ["norm"]
    rows = []
    for x in pts:
        F = dist_fn(m, reg, x)
        rows.append([_fmt(v) for v in x] + [_fmt(v) for v in F] + [_fmt(np.linalg.norm(F))])
    out = _Output(args.output)
    _write_rows(out, header, rows, args.format)
    out.close()
    return 0


def cmd_blackholes(args):
    m = _measure(args)
    reg = parse_regularizer(args.reg)
    holes = analysis.black_holes(m, reg)
    out = _Output(args.output)
    if args.format == "svg":
        if m.dim != 2:
            raise DomainError("black-hole pictures need 2-D data")
        out.buf.write(svg.black_hole_svg(holes))
    else:
        json.dump([h.to_json() for h in holes], out.buf, indent=1)
        out.buf.write("\n")
    out.close()
    if args.svg:
        if m.dim != 2:
            raise DomainError("black-hole pictures need 2-D data")
        Path(args.svg).write_text(svg.black_hole_svg(holes))
    return 0


def cmd_extremes(args):
    m = _measure(args)
    reg = parse_regularizer(args.reg)
    u = _direction(args.u, m.dim)
    alphas = [_alpha(a) for a in _floats(args.alphas, "--alphas")]
    curve = extremes.extreme_curve(m, reg, u, alphas, _opts(args), beta=args.beta)
    limit = extremes.predicted_norm_limit(m, reg, u, curve.beta)
    d = m.dim
    header = (["alpha", "norm", "scaled_norm"] + [f"gap{i + 1}" for i in range(d)]
              + ["predicted_limit", "status"])
    rows = [[_fmt(r.alpha), _fmt(r.norm), _fmt(r.scaled_norm)] + [_fmt(v) for v in r.direction_gap]
            + [_fmt(limit), r.status.value] for r in curve.rows]
    out = _Output(args.output)
    _write_rows(out, header, rows, args.format)
    out.close()
    return 0


def _config_echo(args) -> dict:
    skip = {"func", "output", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_clt(args):
    if not args.generator:
        raise ArgError("clt needs --generator (the population is sampled repeatedly)")
    g = parse_generator(args.generator)
    reg = parse_regularizer(args.reg)
    idx = QuantileIndex(_alpha(args.alpha), _direction(args.u, g.dim))
    rep = inference.clt_experiment(g, reg, idx, args.n, args.reps, args.seed, _opts(args),
                                   oracle_n=args.oracle_n, threads=_threads(args))
    payload = {"config": _config_echo(args), "report": rep.to_json()}
    if args.n_grid:
        grid = [int(v) for v in _floats(args.n_grid, "--n-grid")]
        cc = inference.consistency_curve(g, reg, idx, grid, args.reps, args.seed, _opts(args),
                                         oracle_n=args.oracle_n, threads=_threads(args))
        payload["consistency"] = {"points": cc.points, "slope": cc.slope,
                                  "failures": cc.failures, "valid": cc.valid}
    out = _Output(args.output)
    json.dump(payload, out.buf, indent=1)
    out.buf.write("\n")
    out.close()
    if not rep.valid:
        raise GeoquantError(f"experiment invalid: {rep.failures} of {rep.reps} solves failed")
    return 0


def cmd_stability(args):
    m = _measure(args)
    reg2 = parse_regularizer(args.reg)
    idx = QuantileIndex(_alpha(args.alpha), _direction(args.u, m.dim))
    rows = []
    for spec in args.reg1.split(","):
        gap = inference.stability_gap(m, parse_regularizer(spec), reg2, idx, _opts(args))
        rows.append({"reg1": spec, "reg2": args.reg, "sq_dist": gap.sq_dist, "l1": gap.l1,
                     "ratio": gap.ratio, "flag": gap.flag})
    out = _Output(args.output)
    json.dump({"config": _config_echo(args), "rows": rows}, out.buf, indent=1)
    out.buf.write("\n")
    out.close()
    return 0


def cmd_figures(args):
    names = figures.FIGURE_NAMES if args.name == "all" else [args.name]
    outdir = Path(args.output or "figures")
    outdir.mkdir(parents=True, exist_ok=True)
    opts = _opts(args)
    threads = _threads(args)
    for name in names:
        for panel in figures.panels(name, args.seed):
            m = panel.measure
            (outdir / f"{panel.name}_data.csv").write_text(_measure_csv(m))
            curves = []
            for spec in panel.regs:
                reg = parse_regularizer(spec)
                rows = _contour_rows(m, reg, panel.levels, args.dirs, opts, threads)
                buf = _Output(outdir / f"{panel.name}_{spec.replace(':', '')}.csv")
                _write_rows(buf, CONTOUR_HEADER, rows, "csv")
                buf.close()
                for a in panel.levels:
                    pts = [[float(r[2]), float(r[3])] for r in rows if r[1] == _fmt(a)]
                    curves.append((spec, a, pts))
            (outdir / f"{panel.name}.svg").write_text(
                svg.contour_svg(m.atoms, curves, componentwise_median(m)))
            if name in figures.TRIANGLES:
                holes = analysis.black_holes(m, parse_regularizer("geometric"))
                (outdir / f"{panel.name}_blackholes.svg").write_text(svg.black_hole_svg(holes))
            print(f"{panel.name}: {len(panel.regs)} regularizers x {len(panel.levels)} levels",
                  file=sys.stderr)
    return 0


def _measure_csv(m) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(m.dim)] + ["weight"])
    for z, p in zip(m.atoms, m.weights):
        w.writerow([_fmt(v) for v in z] + [_fmt(p)])
    return buf.getvalue()


def cmd_validate(args):
    """Re-check every row of a quantile/contour CSV against the first-order condition."""
    m = _measure(args)
    reg = parse_regularizer(args.reg)
    d = m.dim
    checked = failed = skipped = 0
    with open(args.rows, newline="") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), start=2):
            if row.get("status", "").startswith("error:"):
                skipped += 1
                continue
            try:
                alpha = float(row["alpha"])
                if "theta" in row:
                    u = np.array([math.cos(float(row["theta"])), math.sin(float(row["theta"]))])
                else:
                    u = np.array([float(row[f"u{i + 1}"]) for i in range(d)])
                x = np.array([float(row[f"x{i + 1}"]) for i in range(d)])
            except (KeyError, ValueError):
                raise DomainError(f"{args.rows}:{lineno}: malformed row") from None
            cert = certify_quantile(m, reg, QuantileIndex(alpha, u / np.linalg.norm(u)), x)
            checked += 1
            if not cert.satisfied:
                failed += 1
                print(f"{args.rows}:{lineno}: residual {cert.residual!r} exceeds "
                      f"{cert.atom_slack + cert.tol!r}", file=sys.stderr)
    print(json.dumps({"checked": checked, "failed": failed, "skipped": skipped}))
    if failed:
        raise GeoquantError(f"{failed} of {checked} rows fail the first-order condition")
    return 0


# -- parser -----------------------------------------------------------------

def _add_input(p, required=True):
    p.add_argument("--input", help="CSV of points (header row, optional weight column)")
    p.add_argument("--generator", help="generator spec, see below")
    p.add_argument("--n", type=int, default=1000, help="sample size for --generator")
    p.add_argument("--seed", type=int, default=0)


def _add_common(p, formats=("csv", "json")):
    p.add_argument("--reg", default="geometric", help="geometric | power:<beta> | smoothstep:<tau>")
    p.add_argument("--tol", type=float, default=SolverOptions.grad_tol, help="gradient tolerance")
    p.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)
    p.add_argument("--format", choices=formats, default=formats[0])
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $GEOQUANT_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoquant", description="Regularized geometric quantiles of discrete measures.",
        epilog=GENERATOR_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, formats=("csv", "json")):
        p = sub.add_parser(name, help=help_text, epilog=GENERATOR_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_input(p)
        _add_common(p, formats)
        p.set_defaults(func=func)
        return p

    p = add("quantile", cmd_quantile, "one quantile with its certificate")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--u", help="direction, comma-separated (default e1)")

    p = add("contour", cmd_contour, "quantile contours over equally spaced directions",
            ("csv", "json", "svg"))
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--alphas", help="comma-separated levels (overrides --alpha)")
    p.add_argument("--dirs", type=int, default=128)

    p = add("distfn", cmd_distfn, "the r-distribution function at points (default: the atoms)")
    p.add_argument("--at", help="points 'x1,y1;x2,y2;...'")

    p = add("blackholes", cmd_blackholes, "black holes of the atoms", ("json", "svg"))
    p.add_argument("--svg", help="also write an SVG picture here")

    p = add("extremes", cmd_extremes, "extreme-quantile growth curve")
    p.add_argument("--u", help="direction, comma-separated (default e1)")
    p.add_argument("--alphas", default=DEFAULT_EXTREME_ALPHAS)
    p.add_argument("--beta", type=float, default=None, help="growth exponent (default from reg)")

    p = add("clt", cmd_clt, "Monte Carlo check of the sandwich normal limit", ("json",))
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--u", help="direction, comma-separated (default e1)")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--oracle-n", type=int, default=inference.ORACLE_N)
    p.add_argument("--n-grid", help="sample sizes for a consistency curve, e.g. 100,1000,10000")

    p = add("stability", cmd_stability, "quantile shift between two regularizers", ("json",))
    p.add_argument("--reg1", default="power:2,power:4,power:8,power:16",
                   help="comma-separated regularizers compared against --reg")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--u", help="direction, comma-separated (default e1)")

    p = sub.add_parser("figures", help="regenerate the contour data of a named figure set")
    p.add_argument("--name", required=True, choices=(*figures.FIGURE_NAMES, "all"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dirs", type=int, default=128)
    p.add_argument("--output", help="output directory (default ./figures)")
    p.add_argument("--tol", type=float, default=SolverOptions.grad_tol)
    p.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_figures)

    p = add("validate", cmd_validate, "re-check a quantile/contour CSV against the data")
    p.add_argument("--rows", required=True, help="CSV written by quantile or contour")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArgError, SpecParseError) as exc:
        print(f"error: parse: {_one_line(exc)}", file=sys.stderr)
        return 2
    except GeoquantError as exc:
        print(f"error: {exc.code}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
