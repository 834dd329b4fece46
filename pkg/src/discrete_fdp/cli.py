"""Command-line front end: ``discrete-fdp <subcommand> ...``.

Every subcommand writes CSV (or JSON) whose leading ``#`` comments echo the
package version, the full argument list and the seed, so any output file can
be regenerated from its own header.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import sys
from typing import Iterator, Sequence, TextIO

import numpy as np

from discrete_fdp import __version__
from discrete_fdp import bench
from discrete_fdp import mechanisms as mech
from discrete_fdp.tradeoff import (
    DiscreteDist,
    TradeoffCurve,
    curve_to_delta,
    curve_to_epsilon,
    curve_to_gdp,
    identity_curve,
    np_tradeoff,
    read_curve_csv,
    write_curve_csv,
    write_samples_csv,
)

MECHANISMS = (
    "binomial-noise",
    "binomial-mech",
    "sto-sign",
    "cldp",
    "ternary",
    "ternarize",
    "pbm",
    "sqkr",
    "identity",
)


class UsageError(ValueError):
    pass


def _header(args: argparse.Namespace) -> list[str]:
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    return [
        f"discrete-fdp {__version__}",
        f"command: {args.command}",
        f"params: {json.dumps(echo, sort_keys=True, default=str)}",
        f"seed: {getattr(args, 'seed', None)}",
    ]


@contextlib.contextmanager
def _open_out(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _require(args: argparse.Namespace, *names: str) -> list:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"--mech {args.mech} requires {flags}")
    return [getattr(args, n) for n in names]


def _add_mech_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--mech", choices=MECHANISMS, required=required)
    p.add_argument("--M", type=int, help="binomial trial count")
    p.add_argument("--p", type=float, help="binomial success probability")
    p.add_argument("--l", type=int, help="input range {0..l} for binomial noise")
    p.add_argument("--p-min", type=float)
    p.add_argument("--p-max", type=float)
    p.add_argument("--A", type=float)
    p.add_argument("--B", type=float)
    p.add_argument("--c", type=float, help="per-coordinate magnitude bound")
    p.add_argument("--eps", type=float, help="local privacy level for cldp / sqkr")
    p.add_argument("--k", type=int, help="sqkr sampled coordinates")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--C", type=float, help="L2 bound (sqkr uses c = C/sqrt(d))")


def mechanism_params(args: argparse.Namespace) -> mech.MechanismParams | None:
    """Build validated parameters from flags; ``None`` for the identity curve."""
    m = args.mech
    if m == "binomial-noise":
        return mech.BinomialNoise(*_require(args, "M", "p", "l"))
    if m == "binomial-mech":
        return mech.BinomialMech(*_require(args, "M", "p_min", "p_max"))
    if m == "sto-sign":
        return mech.StoSign(*_require(args, "A", "c"))
    if m == "cldp":
        return mech.CldpInf(*_require(args, "eps", "c"))
    if m == "ternary":
        return mech.Ternary(*_require(args, "A", "B", "c"))
    if m == "ternarize":
        return mech.Ternarize(*_require(args, "B", "c"))
    if m == "pbm":
        return mech.PoissonBinomial(*_require(args, "p_min", "p_max"))
    if m == "sqkr":
        eps, k, d = _require(args, "eps", "k", "d")
        return mech.SqkrParams(eps, k, d, args.C if args.C is not None else 1.0)
    return None


def _curve_from_args(args: argparse.Namespace) -> TradeoffCurve:
    if getattr(args, "curve", None):
        with open(args.curve, encoding="utf-8") as fh:
            return read_curve_csv(fh)
    if args.mech is None:
        raise UsageError("give --mech or --curve")
    params = mechanism_params(args)
    return identity_curve() if params is None else mech.tradeoff_curve(params)


def _samples_path(out: str | None, explicit: str | None) -> str | None:
    if explicit:
        return explicit
    if out and out != "-":
        stem = out[:-4] if out.endswith(".csv") else out
        return stem + ".samples.csv"
    return None


def _write_curve_outputs(f: TradeoffCurve, args: argparse.Namespace, extra: Sequence[str] = ()) -> None:
    comments = _header(args) + list(extra) + [f"vertices: {len(f)}"]
    with _open_out(args.out) as fh:
        write_curve_csv(f, fh, comments)
    samples = _samples_path(args.out, args.samples)
    if samples:
        with _open_out(samples) as fh:
            write_samples_csv(f, fh, args.n, comments)


def cmd_tradeoff(args: argparse.Namespace) -> int:
    _write_curve_outputs(_curve_from_args(args), args)
    return 0


def _json_num(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def cmd_convert(args: argparse.Namespace) -> int:
    if not (args.eps_values or args.delta_values or args.gdp):
        raise UsageError("convert needs at least one of --at-eps, --at-delta, --gdp")
    f = _curve_from_args(args)
    out: dict = {"header": _header(args)}
    if args.eps_values:
        out["delta_at_eps"] = [{"eps": _json_num(e), "delta": curve_to_delta(f, e)} for e in args.eps_values]
    if args.delta_values:
        out["eps_at_delta"] = [{"delta": dl, "eps": _json_num(curve_to_epsilon(f, dl))} for dl in args.delta_values]
    if args.gdp:
        out["mu"] = _json_num(curve_to_gdp(f))
    with _open_out(args.out) as fh:
        json.dump(out, fh, indent=2)
        fh.write("\n")
    return 0


def _load_dist(spec: str) -> DiscreteDist:
    text = spec
    if spec.startswith("@"):
        with open(spec[1:], encoding="utf-8") as fh:
            text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"distribution is not valid JSON: {exc}") from exc
    return DiscreteDist.from_json(obj)


def cmd_oracle(args: argparse.Namespace) -> int:
    P, Q = _load_dist(args.P), _load_dist(args.Q)
    _write_curve_outputs(np_tradeoff(P, Q), args)
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    if args.mech not in ("ternary", "sto-sign"):
        raise UsageError("compose supports --mech ternary or sto-sign")
    A, c, d = _require(args, "A", "c", "d")
    B = A if args.mech == "sto-sign" else _require(args, "B")[0]
    mech.Ternary(A, B, c)
    if d < 1:
        raise UsageError("--d must be >= 1")
    bound = mech.ternary_clt_bound(A, B, c, d)
    summary = bound.to_json()
    if not bound.valid:
        summary["warning"] = f"gamma={bound.gamma:.4g} >= 1/2: the sandwich is vacuous"
        print(f"warning: {summary['warning']}", file=sys.stderr)
    alpha = np.linspace(0.0, 1.0, args.n)
    cols = {"lower": bound.lower(alpha), "center": bound.center(alpha), "upper": bound.upper(alpha)}
    if args.product:
        if d > 8:
            raise UsageError("--product enumerates 3^d outcomes; use d <= 8 or --exact")
        exact = np_tradeoff(*mech.ternary_product_pair(A, B, c, d))
        cols["exact"] = exact(alpha)
    elif args.exact:
        cols["exact"] = mech.ternary_composition_exact(A, B, c, d)(alpha)
    if args.json:
        with _open_out(args.json) as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    with _open_out(args.out) as fh:
        for line in _header(args) + [f"bound: {json.dumps(summary, sort_keys=True)}"]:
            fh.write(f"# {line}\n")
        fh.write(",".join(["alpha", *cols]) + "\n")
        for i, a in enumerate(alpha):
            fh.write(",".join(f"{v:.17g}" for v in [a, *(col[i] for col in cols.values())]) + "\n")
    return 0


def _finish_bench(result: bench.BenchResult, args: argparse.Namespace) -> int:
    with _open_out(args.out) as fh:
        result.write_csv(fh, _header(args))
    failed = result.failed
    for row in failed:
        print(f"row failed: {row.mechanism} {row.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_bench(args: argparse.Namespace) -> int:
    config = bench.BenchConfig.load(args.config)
    if args.trials is not None:
        config.trials = args.trials
    if args.seed is not None:
        config.seed = args.seed
    config.__post_init__()
    args.seed = config.seed
    return _finish_bench(bench.run_mean_estimation(config), args)


def cmd_compare(args: argparse.Namespace) -> int:
    config = bench.preset_config(args.preset, trials=args.trials, seed=args.seed, N=args.N, d=args.d_users, C=args.C_users)
    status = _finish_bench(bench.run_mean_estimation(config), args)
    if args.preset == "fig4-left" and args.curves_out:
        alpha, cols = bench.fig4_left_curves(config.d, config.C, args.n)
        with _open_out(args.curves_out) as fh:
            for line in _header(args):
                fh.write(f"# {line}\n")
            fh.write(",".join(["alpha", *cols]) + "\n")
            for i, a in enumerate(alpha):
                fh.write(",".join(f"{v:.17g}" for v in [a, *(col[i] for col in cols.values())]) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="discrete-fdp", description="Exact f-DP accounting for discrete mechanisms.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tradeoff", help="closed-form tradeoff curve of one mechanism")
    _add_mech_flags(p)
    p.add_argument("--out", help="vertex CSV (default stdout)")
    p.add_argument("--samples", help="dense sampling CSV (default <out>.samples.csv)")
    p.add_argument("--n", type=int, default=1001, help="dense sample count")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("convert", help="(eps, delta) and GDP conversions of a curve")
    _add_mech_flags(p, required=False)
    p.add_argument("--curve", help="vertex CSV to convert instead of a mechanism")
    p.add_argument("--at-eps", dest="eps_values", type=float, nargs="+", help="report delta at these eps")
    p.add_argument("--at-delta", dest="delta_values", type=float, nargs="+", help="report eps at these delta")
    p.add_argument("--gdp", action="store_true", help="report the tight GDP parameter")
    p.add_argument("--out", help="JSON output (default stdout)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("oracle", help="Neyman-Pearson curve between two finite distributions")
    p.add_argument("--P", required=True, help='JSON {"support": [...], "probs": [...]} or @file')
    p.add_argument("--Q", required=True, help="same format as --P")
    p.add_argument("--out")
    p.add_argument("--samples")
    p.add_argument("--n", type=int, default=1001)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compose", help="d-fold ternary composition: CLT sandwich and exact curve")
    _add_mech_flags(p)
    p.add_argument("--exact", action="store_true", help="add the exact composed curve")
    p.add_argument("--product", action="store_true", help="exact curve by 3^d enumeration (d <= 8)")
    p.add_argument("--n", type=int, default=1001)
    p.add_argument("--out", help="sandwich CSV (default stdout)")
    p.add_argument("--json", help="write the bound summary here as JSON")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("bench", help="mean-estimation benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--trials", type=int, help="override config trials")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="preset comparison sweeps")
    p.add_argument("--preset", choices=bench.PRESETS, required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--d-users", type=int, default=250, help="dimension")
    p.add_argument("--C-users", type=float, default=1.0, help="L2 bound")
    p.add_argument("--out")
    p.add_argument("--curves-out", help="fig4-left: dense curve samplings")
    p.add_argument("--n", type=int, default=1001)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
