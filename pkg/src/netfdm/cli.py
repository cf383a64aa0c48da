"""Command-line front end.

Subcommands: gen, splus, fdm, conditions, decay, clt, lln, tail, ingest.
Every output file starts with a '#'-prefixed manifest line holding the
canonical invocation (semantic flags plus seed; --threads/--out/--config
are runtime-only and excluded), so re-running the manifest reproduces the
file bit-exactly.

Exit codes: 0 success, 2 parameter error, 3 data/parse error,
4 convergence/experiment error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    CapabilityError,
    ConvergenceError,
    DataError,
    ExperimentError,
    NetfdmError,
    ParameterError,
)
from .fdm import delta_linear_exact, delta_monte_carlo, delta_sar_bound
from .io import fmt, read_matrix_csv, write_edgelist, write_matrix_csv
from .limits import concentration_params, ordered_decay_diagnostic
from .mc import ExperimentPlan, draw_network, run_clt, run_condition_table, run_lln, run_tail
from .networks import (
    LatticeConfig,
    WeightsMatrix,
    gen_lattice,
    graph_from_weights,
    ingest_edgelist,
    row_normalize,
)
from .sar import IDENTITY, TOBIT, LinkFunction, NoiseModel, SarSpec, compute_splus

EXIT_PARAMETER = 2
EXIT_DATA = 3
EXIT_EXPERIMENT = 4

#: flags that do not affect numeric results and stay out of manifests
RUNTIME_ONLY = {"out", "threads", "config"}


def _float_list(text):
    return tuple(float(t) for t in text.split(","))


def _int_list(text):
    return tuple(int(t) for t in text.split(","))


def parse_noise(text: str) -> NoiseModel:
    parts = text.split(":")
    family, args = parts[0], tuple(float(t) for t in parts[1:])
    if family == "gaussian":
        return NoiseModel("gaussian", args or (1.0,))
    if family == "uniform":
        return NoiseModel("uniform", args or (-1.0, 1.0))
    if family == "student-t":
        return NoiseModel("student-t", args or (5.0, 1.0))
    raise ParameterError(f"unknown noise spec {text!r}")


def parse_link(text: str) -> LinkFunction:
    if text == "identity":
        return IDENTITY
    if text == "tobit":
        return TOBIT
    raise ParameterError(f"unknown link {text!r} (CLI supports identity, tobit)")


def _load_config(path):
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParameterError(f"config line {lineno}: expected key = value")
            key, _, value = stripped.partition("=")
            pairs[key.strip()] = value.strip()
    return pairs


def manifest_line(subcommand: str, args: argparse.Namespace) -> str:
    parts = [f"netfdm {subcommand}"]
    for key in sorted(vars(args)):
        if key in RUNTIME_ONLY or key in ("command", "func"):
            continue
        value = getattr(args, key)
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                parts.append(flag)
            continue
        if isinstance(value, (tuple, list)):
            parts.append(f"{flag} {','.join(str(v) for v in value)}")
        else:
            parts.append(f"{flag} {value}")
    return " ".join(parts)


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _load_weights(args) -> WeightsMatrix:
    if getattr(args, "input", None):
        raw = read_matrix_csv(args.input)
        w = WeightsMatrix(raw.shape[0], raw, normalized=False, provenance={"source": args.input})
        return row_normalize(w)
    return draw_network(
        args.model,
        args.n,
        args.deg,
        args.seed,
        0,
        triangles=getattr(args, "tri", None),
        blocks=getattr(args, "blocks", "auto"),
        deg_between=getattr(args, "dbb", 2.0),
    )


def _build_spec(args) -> SarSpec:
    return SarSpec(
        _load_weights(args),
        parse_link(args.link),
        getattr(args, "lam"),
        parse_noise(args.noise),
    )


def cmd_gen(args):
    header = [manifest_line("gen", args), f"netfdm version {__version__}"]
    if args.model == "lattice":
        config = LatticeConfig(
            dim=args.dim,
            side=args.side,
            scheme=args.scheme,
            d0=args.d0,
            base=args.base,
            c0=args.c0,
            alpha=args.alpha,
        )
        w, dist = gen_lattice(config)
        write_matrix_csv(_out_path(args, "weights.csv"), w.entries, header)
        write_matrix_csv(_out_path(args, "distances.csv"), dist.entries, header)
        return 0
    w = _load_weights(args)
    g = graph_from_weights(w)
    write_edgelist(_out_path(args, "edges.tsv"), g.edges, header_lines=header)
    write_matrix_csv(_out_path(args, "weights.csv"), w.entries, header)
    return 0


def cmd_splus(args):
    w = _load_weights(args)
    s = compute_splus(w, lam=args.lam, lipschitz=args.lipschitz, method=args.method)
    header = [
        manifest_line("splus", args),
        f"zeta={fmt(s.zeta)} method={s.method}",
    ]
    write_matrix_csv(_out_path(args, "splus.csv"), s.entries, header)
    return 0


def cmd_fdm(args):
    spec = _build_spec(args)
    if args.mode == "bound":
        delta = delta_sar_bound(spec, args.p)
    elif args.mode == "exact":
        if spec.link.kind != "identity":
            raise ParameterError("exact mode needs the identity link")
        coeffs = np.linalg.solve(
            np.eye(spec.n) - args.lam * spec.weights.entries, np.eye(spec.n)
        )
        delta = delta_linear_exact(coeffs, spec.noise, args.p)
    elif args.mode == "mc":
        targets = None
        if args.targets:
            targets = [tuple(int(t) - 1 for t in pair.split(":")) for pair in args.targets.split(",")]
        delta = delta_monte_carlo(spec, args.p, args.reps, args.seed, targets=targets)
    else:
        raise ParameterError(f"unknown fdm mode {args.mode!r}")
    header = [
        manifest_line("fdm", args),
        f"p={fmt(args.p)} mode={delta.mode} reps={delta.meta.get('reps', 0)} seed={args.seed}",
    ]
    write_matrix_csv(_out_path(args, "delta.csv"), delta.entries, header)
    if delta.se is not None:
        write_matrix_csv(_out_path(args, "delta_se.csv"), delta.se, header)
    return 0


def cmd_conditions(args):
    weights = None
    if args.model == "file":
        raw = read_matrix_csv(args.input)
        weights = WeightsMatrix(
            raw.shape[0], raw, normalized=False, provenance={"source": args.input}
        )
        ns = (raw.shape[0],)
        degs = (float(raw.astype(bool).sum(axis=1).mean()),)
    else:
        ns = args.n
        degs = args.deg
    plan = ExperimentPlan(
        model=args.model,
        lambdas=args.lam,
        degrees=degs,
        ns=ns,
        draws=args.reps,
        p=args.p,
        seed=args.seed,
        triangles=args.tri,
        blocks=args.blocks,
        deg_between=args.dbb,
        weights=weights,
        threads=args.threads,
    )
    result = run_condition_table(plan)
    header = [manifest_line("conditions", args)]
    cols = ["model", "n", "deg", "lam", "eq15_mean", "eq15_se", "eq16_mean", "eq16_se"]
    if args.variant in ("orderfree", "both"):
        cols += ["eq16_orderfree_mean", "eq16_orderfree_se"]
    path = _out_path(args, "conditions.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        for row in result.rows:
            fh.write(",".join(fmt(row[c]) if isinstance(row[c], float) else str(row[c]) for c in cols) + "\n")
    return 0


def cmd_decay(args):
    spec = _build_spec(args)
    delta = delta_sar_bound(spec, args.p)
    diag = ordered_decay_diagnostic(delta, args.p)
    header = [
        manifest_line("decay", args),
        f"alpha_min={fmt(diag.alpha_min)} kappa={fmt(diag.kappa)} "
        f"tail_sup={fmt(diag.tail_sup)} budget={fmt(diag.tail_budget)} "
        f"threshold={fmt(diag.threshold)} verdict={'pass' if diag.passed else 'fail'}",
    ]
    path = _out_path(args, "decay.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("row,alpha_hat\n")
        for i, alpha in enumerate(diag.alpha_per_row):
            fh.write(f"{i + 1},{fmt(alpha) if np.isfinite(alpha) else 'skipped'}\n")
    return 0


def cmd_clt(args):
    spec = _build_spec(args)
    result = run_clt(spec, args.reps, args.seed)
    path = _out_path(args, "clt.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {manifest_line('clt', args)}\n")
        fh.write("n,reps,ks,critical,passed,sigma,standardization\n")
        fh.write(
            f"{result.n},{result.reps},{fmt(result.ks)},{fmt(result.critical)},"
            f"{int(result.passed)},{fmt(result.sigma)},{result.standardization}\n"
        )
    return 0


def cmd_lln(args):
    link = parse_link(args.link)
    noise = parse_noise(args.noise)

    def make_spec(n):
        w = draw_network(args.model, n, args.deg, args.seed, 0)
        return SarSpec(w, link, args.lam, noise)

    result = run_lln(make_spec, args.ladder, args.reps, args.seed)
    path = _out_path(args, "lln.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {manifest_line('lln', args)}\n")
        fh.write(f"# verdict={'pass' if result.passed else 'fail'}\n")
        fh.write("n,quantile95,se\n")
        for n, quant, se in zip(result.ladder, result.quantiles, result.standard_errors):
            fh.write(f"{n},{fmt(quant)},{fmt(se)}\n")
    return 0


def cmd_tail(args):
    spec = _build_spec(args)
    params = concentration_params(spec, args.nu)
    x_grid = np.linspace(args.xmin, args.xmax, args.xpoints)
    result = run_tail(spec, params, x_grid, args.reps, args.seed)
    header = [
        manifest_line("tail", args),
        f"alpha={fmt(params.alpha)} gamma0={fmt(params.gamma0)} rate={fmt(params.rate)}",
        f"slope={fmt(result.slope)} required={fmt(result.required_slope)} "
        f"verdict={'pass' if result.passed else 'fail'} truncated={int(result.truncated)}",
    ]
    path = _out_path(args, "tail.csv")
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("x,survival\n")
        for x, s in zip(result.x_grid, result.survival):
            fh.write(f"{fmt(x)},{fmt(s)}\n")
    # gnuplot-compatible two-column tail data
    with open(_out_path(args, "tail.dat"), "w", encoding="utf-8") as fh:
        fh.write(f"# {manifest_line('tail', args)}\n")
        for x, s in zip(result.x_grid, result.survival):
            fh.write(f"{fmt(x)} {fmt(s)}\n")
    return 0


def cmd_ingest(args):
    w = ingest_edgelist(args.input, schema=args.schema, n=args.n)
    if args.normalize:
        w = row_normalize(w)
    header = [
        manifest_line("ingest", args),
        f"n={w.n} normalized={int(w.normalized)}",
    ]
    write_matrix_csv(_out_path(args, "weights.csv"), w.entries, header)
    return 0


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=1)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--out", default=".")
    sub.add_argument("--config", default=None)


def _add_model_args(sub, need_n=True):
    sub.add_argument("--model", default="er", choices=["er", "triangle", "sbm", "file"])
    sub.add_argument("--input", default=None, help="weights CSV for --model file")
    if need_n:
        sub.add_argument("--n", type=int, default=100)
        sub.add_argument("--deg", type=float, default=3.0)
    sub.add_argument("--tri", type=float, default=None, help="triangle count (default n)")
    sub.add_argument("--blocks", default="auto")
    sub.add_argument("--dbb", type=float, default=2.0, help="SBM between-block mean degree")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netfdm")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="generate a network and export it")
    gen.add_argument("--model", required=True, choices=["er", "triangle", "sbm", "lattice"])
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--deg", type=float, default=3.0)
    gen.add_argument("--tri", type=float, default=None)
    gen.add_argument("--blocks", default="auto")
    gen.add_argument("--dwb", type=float, default=None, help="SBM within-block degree (alias for --deg)")
    gen.add_argument("--dbb", type=float, default=2.0)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--side", type=int, default=10)
    gen.add_argument("--scheme", default="cutoff", choices=["cutoff", "power"])
    gen.add_argument("--d0", type=float, default=2.0)
    gen.add_argument("--base", type=float, default=1.0)
    gen.add_argument("--c0", type=float, default=1.0)
    gen.add_argument("--alpha", type=float, default=3.0)
    _add_common(gen)
    gen.set_defaults(func=cmd_gen)

    splus = subs.add_parser("splus", help="envelope matrix export")
    _add_model_args(splus)
    splus.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.2)
    splus.add_argument("--lipschitz", type=float, default=1.0)
    splus.add_argument("--method", default="auto", choices=["auto", "direct", "neumann"])
    _add_common(splus)
    splus.set_defaults(func=cmd_splus)

    fdm = subs.add_parser("fdm", help="functional dependence matrices")
    _add_model_args(fdm)
    fdm.add_argument("--mode", default="bound", choices=["bound", "exact", "mc"])
    fdm.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.2)
    fdm.add_argument("--p", type=float, default=2.0)
    fdm.add_argument("--reps", type=int, default=1000)
    fdm.add_argument("--targets", default=None, help="1-based j:i pairs, comma separated")
    fdm.add_argument("--link", default="identity")
    fdm.add_argument("--noise", default="gaussian:1.0")
    _add_common(fdm)
    fdm.set_defaults(func=cmd_fdm)

    cond = subs.add_parser("conditions", help="condition table over a parameter grid")
    cond.add_argument("--model", default="er", choices=["er", "triangle", "sbm", "file"])
    cond.add_argument("--input", default=None)
    cond.add_argument("--lam", "--lambda", dest="lam", type=_float_list, default=(0.2, 0.3, 0.4, 0.8))
    cond.add_argument("--deg", type=_float_list, default=(3.0, 5.0, 10.0))
    cond.add_argument("--n", type=_int_list, default=(100, 400, 900))
    cond.add_argument("--reps", type=int, default=100)
    cond.add_argument("--p", type=float, default=4.0)
    cond.add_argument("--tri", type=float, default=None)
    cond.add_argument("--blocks", default="auto")
    cond.add_argument("--dbb", type=float, default=2.0)
    cond.add_argument("--variant", default="both", choices=["literal", "orderfree", "both"])
    _add_common(cond)
    cond.set_defaults(func=cmd_conditions)

    decay = subs.add_parser("decay", help="ordered-decay diagnostic")
    _add_model_args(decay)
    decay.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.2)
    decay.add_argument("--p", type=float, default=4.0)
    decay.add_argument("--link", default="identity")
    decay.add_argument("--noise", default="gaussian:1.0")
    _add_common(decay)
    decay.set_defaults(func=cmd_decay)

    clt = subs.add_parser("clt", help="KS test of the standardized sum")
    _add_model_args(clt)
    clt.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.2)
    clt.add_argument("--reps", type=int, default=2000)
    clt.add_argument("--link", default="identity")
    clt.add_argument("--noise", default="gaussian:1.0")
    _add_common(clt)
    clt.set_defaults(func=cmd_clt)

    lln = subs.add_parser("lln", help="LLN quantile ladder")
    lln.add_argument("--model", default="er", choices=["er", "triangle", "sbm"])
    lln.add_argument("--ladder", type=_int_list, default=(100, 400, 900))
    lln.add_argument("--deg", type=float, default=3.0)
    lln.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.3)
    lln.add_argument("--reps", type=int, default=2000)
    lln.add_argument("--link", default="identity")
    lln.add_argument("--noise", default="gaussian:1.0")
    _add_common(lln)
    lln.set_defaults(func=cmd_lln)

    tail = subs.add_parser("tail", help="empirical tail vs concentration bound")
    _add_model_args(tail)
    tail.add_argument("--lam", "--lambda", dest="lam", type=float, default=0.2)
    tail.add_argument("--nu", type=float, default=0.5)
    tail.add_argument("--reps", type=int, default=20000)
    tail.add_argument("--xmin", type=float, default=0.1)
    tail.add_argument("--xmax", type=float, default=3.0)
    tail.add_argument("--xpoints", type=int, default=15)
    tail.add_argument("--link", default="identity")
    tail.add_argument("--noise", default="gaussian:1.0")
    _add_common(tail)
    tail.set_defaults(func=cmd_tail)

    ingest = subs.add_parser("ingest", help="read an edge list or holdings table")
    ingest.add_argument("--input", required=True)
    ingest.add_argument("--schema", default="binary", choices=["binary", "weighted", "fcap"])
    ingest.add_argument("--n", type=int, default=None)
    ingest.add_argument("--normalize", action="store_true")
    _add_common(ingest)
    ingest.set_defaults(func=cmd_ingest)

    return parser


def _apply_config(argv):
    """Inject key=value pairs from --config as flags; CLI flags take precedence."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ParameterError("--config needs a path")
    path = argv[idx + 1]
    pairs = _load_config(path)
    if not argv:
        raise ParameterError("config without a subcommand")
    subcommand = argv[0]
    parser = build_parser()
    sub_actions = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    if subcommand not in sub_actions.choices:
        raise ParameterError(f"unknown subcommand {subcommand!r}")
    known = {
        opt.lstrip("-").replace("-", "_")
        for action in sub_actions.choices[subcommand]._actions
        for opt in action.option_strings
    }
    injected = []
    for key, value in pairs.items():
        norm = key.replace("-", "_")
        if norm not in known:
            raise ParameterError(f"unknown config key {key!r} for subcommand {subcommand}")
        injected += ["--" + norm.replace("_", "-"), value]
    # injected defaults go right after the subcommand, so explicit flags win
    return [argv[0]] + injected + argv[1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except CapabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMETER
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except NetfdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
