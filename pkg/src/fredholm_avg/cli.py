"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 numerical failure (including a
violated bound in ``bounds``).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .adaptive import DiscrepancyConfig, LadderConfig, algorithm1
from .experiments import ExperimentConfig, emit_table, run_experiment
from .kernels import KERNEL_HINTS, KERNELS, default_solution, get_kernel
from .quadrature_svd import (
    NumericalError,
    bound_context,
    build_collocation,
    grid_estimate,
    singular_function_gram,
)
from .sampling import average, delta_from_snr, make_grid, sample_noisy
from .spectral_deriv2 import estimate, sigma_cont, sigma_semi

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _add_problem_args(p, need_noise=True):
    p.add_argument("--kernel", choices=sorted(KERNELS), required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--s", type=float, default=0.375, help="smoothness of the deriv2 solution")
    if need_noise:
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--snr", type=float)
        g.add_argument("--delta", type=float)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--distribution", choices=("gaussian", "heavy_tailed"), default="gaussian")


def _make_sample(args):
    kernel = get_kernel(args.kernel)
    f = default_solution(args.kernel, args.s)
    scheme = "uniform_interior" if args.kernel == "deriv2" else kernel.collocation
    grid = make_grid(args.m, scheme)
    sample = sample_noisy(kernel, f, grid, 0.0, args.seed, args.distribution)
    delta = args.delta if args.delta is not None else delta_from_snr(float(np.linalg.norm(sample.exact)), args.m, args.snr)
    if delta < 0:
        raise UsageError("--delta must be nonnegative")
    sample = sample_noisy(kernel, f, grid, delta, args.seed, args.distribution, exact=sample.exact)
    return kernel, f, sample


def cmd_list(args) -> int:
    print(" ".join(sorted(KERNELS, key=["deriv2", "gravity", "heat"].index)))
    for name in ("deriv2", "gravity", "heat"):
        print(f"  {name}: {KERNEL_HINTS[name]}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    _, _, sample = _make_sample(args)
    _emit(sample.to_csv(), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    kernel, _, sample = _make_sample(args)
    if args.o < 1 or args.m % args.o:
        raise UsageError(f"--o {args.o} does not divide --m {args.m}")
    avg = average(sample, args.o)
    if args.kernel == "deriv2":
        est = estimate(avg, args.k)
        x = avg.grid.points
        values = est(x)
        spectrum = sigma_semi(avg.grid.m)
    else:
        sys_ = build_collocation(kernel, avg.grid.m)
        est = grid_estimate(sys_, avg, args.k)
        x = sys_.nodes
        values = est.values
        spectrum = sys_.sigma
    lines = ["x,value"] + [f"{a!r},{b!r}" for a, b in zip(np.asarray(x).tolist(), np.asarray(values).tolist())]
    _emit("\n".join(lines) + "\n", args.out)
    if args.dump_spectrum:
        rows = ["j,sigma"] + [f"{j},{s!r}" for j, s in enumerate(np.asarray(spectrum).tolist(), start=1)]
        text = "\n".join(rows) + "\n"
        if args.dump_spectrum == "-":
            sys.stdout.write(text)
        else:
            atomic_write(args.dump_spectrum, text)
    return EXIT_OK


def cmd_adapt(args) -> int:
    n = round(math.log(args.m, args.a))
    if args.a**n != args.m:
        raise UsageError(f"--m {args.m} is not a power of --a {args.a}")
    ladder = LadderConfig(a=args.a, n=n, n0=args.n0)
    kernel, _, sample = _make_sample(args)
    if args.gprime_norm is not None:
        cfg = DiscrepancyConfig(delta=sample.delta, tau=args.tau, err_sys_variant="gprime", g_prime_norm=args.gprime_norm)
    else:
        cfg = DiscrepancyConfig(delta=sample.delta, tau=args.tau, err_sys_variant="gpp", g_pp_inf=args.gpp_inf)
    path = "deriv2" if args.kernel == "deriv2" else "quadrature"
    res = algorithm1(sample, cfg, ladder, path, kernel)
    doc = {
        "chosen_level": res.chosen_level,
        "chosen_k": res.chosen_k,
        "delta": sample.delta,
        "trajectory": [{"m_o": lv, "k_dp": k} for lv, k in res.trajectory],
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[experiment]\n" + fh.read())
    return dict(parser["experiment"])


def _floats(text) -> list[float]:
    return [float(t) for t in str(text).replace(",", " ").split()]


def cmd_table(args) -> int:
    conf = _read_config(args.config) if args.config else {}
    known = {"problem", "s", "snr", "runs", "seed", "format", "out", "m", "levels", "tau", "err_sys", "distribution"}
    unknown = set(conf) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")

    def pick(name, cli_value, cast):
        if cli_value is not None:
            return cli_value
        return cast(conf[name]) if name in conf else None

    problem = pick("problem", args.problem, str)
    if problem not in KERNELS:
        raise UsageError("--problem must be one of " + ", ".join(sorted(KERNELS)))
    s_values = args.s if args.s else (_floats(conf["s"]) if "s" in conf else [None])
    if problem == "deriv2" and s_values == [None]:
        raise UsageError("deriv2 tables need --s")
    m = pick("m", args.m, int) or 4096
    snrs = args.snr or (_floats(conf["snr"]) if "snr" in conf else [512.0, 64.0, 8.0, 1.0])
    levels = args.levels or ([int(v) for v in _floats(conf["levels"])] if "levels" in conf else None)
    if levels is None:
        levels = [lv for lv in (4096, 1024, 256, 64, 16) if lv <= m and m % lv == 0]
    fmt = pick("format", args.format, str) or "markdown"
    if fmt not in ("csv", "json", "markdown"):
        raise UsageError("--format must be csv, json or markdown")
    out = pick("out", args.out, str)
    ext = {"csv": "csv", "json": "json", "markdown": "md"}[fmt]

    for s in s_values:
        cfg = ExperimentConfig(
            problem=problem,
            s=s if problem == "deriv2" else None,
            m=m,
            levels=tuple(levels),
            snr_list=tuple(snrs),
            runs=pick("runs", args.runs, int) or 50,
            tau=pick("tau", args.tau, float) or 1.5,
            seed=pick("seed", args.seed, int) or 0,
            err_sys_variant=pick("err_sys", args.err_sys, str) or "gprime",
            distribution=pick("distribution", None, str) or "gaussian",
        )
        text = emit_table(run_experiment(cfg), fmt)
        if out:
            name = problem + (f"_s{s:g}" if s is not None else "")
            atomic_write(Path(out) / f"{name}.{ext}", text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def _check_lem00(args):
    kernel = get_kernel(args.kernel)
    sys_ = build_collocation(kernel, args.m)
    if args.kernel == "deriv2":
        ref = sigma_cont(np.arange(1, args.m + 1))
    else:
        ref = build_collocation(kernel, 4 * args.m).sigma[: args.m]
    value = float(np.max(np.abs(ref**2 - sys_.sigma**2)))
    bound = kernel.smoothness_bound**2 / (3 * args.m**2)
    return value, bound, {"surrogate_reference": args.kernel != "deriv2"}


def _check_lem002(args):
    kernel = get_kernel(args.kernel)
    sys_ = build_collocation(kernel, args.m)
    ctx = bound_context(sys_)
    J = ctx.J
    if J == 0:
        return 0.0, 0.0, {"J": 0, "note": "no index satisfies the validity condition"}
    G = singular_function_gram(sys_, J)
    s = ctx.sigma_cont[:J]
    allowed = ctx.C_K**2 / (3 * np.outer(s, s) * args.m**2)
    excess = np.abs(G - np.eye(J)) - allowed
    return float(np.max(excess)), 0.0, {"J": J}


def _check_t6e1(args):
    o = args.o
    if o < 1 or args.m % o:
        raise UsageError(f"--o {o} does not divide --m {args.m}")
    m_o = args.m // o
    fine = make_grid(args.m, "midpoint").points
    coarse = make_grid(m_o, "midpoint").points
    g = lambda x: np.sin(2 * np.pi * x)  # noqa: E731
    bias = g(fine).reshape(m_o, o).mean(axis=1) - g(coarse)
    value = float(bias @ bias)
    bound = (2 * np.pi) ** 4 / (9 * 64 * m_o**3)
    return value, bound, {"o": o}


def _check_s2err2(args):
    m = args.m
    inv = np.cumsum(sigma_semi(m) ** -2.0)
    k = np.arange(1, m + 1, dtype=float)
    lo = 2**4 * k**5 / (5 * (m + 1))
    hi = 3 * np.pi**4 * k**5 / (m + 1)
    worst = float(max(np.max(lo / inv), np.max(inv / hi)))
    return worst, 1.0, {"note": "value is the worst ratio against either side"}


CHECKS = {"lem00": _check_lem00, "lem002": _check_lem002, "t6e1": _check_t6e1, "s2err2": _check_s2err2}


def cmd_bounds(args) -> int:
    value, bound, extra = CHECKS[args.check](args)
    ok = value <= bound
    print(json.dumps({"check": args.check, "value": value, "bound": bound, "satisfied": ok, **extra}, sort_keys=True))
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fredholm-avg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("list", help="list available problems")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("simulate", help="draw a noisy sample")
    _add_problem_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="spectral cut-off estimate at a fixed k")
    _add_problem_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--o", type=int, default=1, help="averaging factor")
    p.add_argument("--out")
    p.add_argument("--dump-spectrum", nargs="?", const="-", default=None, metavar="PATH")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("adapt", help="discrepancy principle over the averaging ladder")
    _add_problem_args(p)
    p.add_argument("--a", type=int, default=4)
    p.add_argument("--n0", type=int, default=2)
    p.add_argument("--tau", type=float, default=1.5)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--gprime-norm", type=float)
    g.add_argument("--gpp-inf", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("table", help="Monte-Carlo error tables")
    p.add_argument("--problem", choices=sorted(KERNELS))
    p.add_argument("--s", type=float, nargs="+")
    p.add_argument("--snr", type=float, nargs="+")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--levels", type=int, nargs="+")
    p.add_argument("--tau", type=float)
    p.add_argument("--err-sys", choices=("gprime", "gpp"))
    p.add_argument("--format", choices=("csv", "json", "markdown"))
    p.add_argument("--out", help="results directory")
    p.add_argument("--config", help="key=value experiment file")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("bounds", help="evaluate a numerical inequality")
    p.add_argument("--check", choices=sorted(CHECKS), required=True)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="deriv2")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--o", type=int, default=2)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "m", None) is not None and args.m < 1:
        print(f"{parser.prog}: error: --m must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"{parser.prog}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


dispatch = main
