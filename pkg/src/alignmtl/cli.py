"""Command-line entry points.

Subcommands:
  align      align a gradient matrix dump and report balance coefficients
  synthetic  run the two-task benchmark sweep against the grid oracle
  train-toy  train one of the toy multi-task suites
  diagnose   emit stability reports for gradient matrix dumps

Exit codes: 0 success, 2 usage or input error, 3 degenerate input
(zero gradient system). All outputs are byte-deterministic for a fixed
configuration and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .aggregators import ZeroGradient, align, available_methods
from .diagnostics import stability_report
from .serialize import DumpFormatError, dumps, read_gradient_dump, write_json
from .synthetic import (
    DEFAULT_INITS,
    DEFAULT_LR,
    DEFAULT_STEPS,
    build_oracle,
    run_benchmark,
    synthetic_summary,
)
from .toy import (
    DivergenceError,
    make_linear_suite,
    make_tanh_suite,
    train,
    two_quadratics,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3

TOY_SUITES = ("two-quadratic", "linear-mtl", "tanh-mtl")


def _parse_floats(text: str, name: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError(f"{name} must not be empty")
    return values


def _weights_arg(text: str) -> list[float]:
    return _parse_floats(text, "--weights")


def _init_arg(text: str) -> tuple[float, float]:
    values = _parse_floats(text, "--init")
    if len(values) != 2:
        raise argparse.ArgumentTypeError("--init expects two coordinates: x,y")
    return values[0], values[1]


def _alpha_grid_arg(text: str) -> list[float]:
    values = _parse_floats(text, "--alpha-grid")
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise argparse.ArgumentTypeError("--alpha-grid values must lie in [0, 1]")
    return values


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_align(args) -> int:
    try:
        names, G = read_gradient_dump(args.input)
    except FileNotFoundError:
        return _fail(f"no such file: {args.input}", EXIT_INPUT)
    except DumpFormatError as exc:
        return _fail(f"malformed gradient dump {args.input}: {exc}", EXIT_INPUT)

    weights = args.weights
    if weights is not None and len(weights) != len(names):
        return _fail(f"{len(weights)} weights for {len(names)} tasks", EXIT_INPUT)
    try:
        result = align(G, weights)
    except ZeroGradient:
        return _fail("ZeroGradient: every task gradient is zero (Pareto-stationary input)", EXIT_DEGENERATE)
    except ValueError as exc:
        return _fail(str(exc), EXIT_INPUT)

    def maybe_report(M):
        # Reports need every column nonzero; alignment itself tolerates
        # zero columns, so emit null instead of failing the command.
        if np.any(np.all(M == 0.0, axis=0)):
            return None
        return stability_report(M).to_dict()

    payload = {
        "tasks": names,
        "alpha": result.alpha,
        "sigma": result.sigma,
        "rank": result.rank,
        "g_hat0": result.g_hat0,
        "weight_projections": result.weight_projections,
        "pre_report": maybe_report(G),
        "post_report": maybe_report(result.aligned_matrix(G)),
    }
    if args.out:
        write_json(args.out, payload)
    else:
        print(dumps(payload))
    return EXIT_OK


def cmd_synthetic(args) -> int:
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    known = set(available_methods())
    for m in methods:
        if m not in known:
            return _fail(f"unknown method {m!r}; known: {', '.join(sorted(known))}", EXIT_INPUT)
        if m == "aligned-mtl-ub":
            return _fail("aligned-mtl-ub needs shared-representation gradients; "
                         "the synthetic benchmark exposes only the parameter-space matrix", EXIT_INPUT)

    if args.weights is not None and len(args.weights) != 2:
        return _fail("the synthetic benchmark has exactly two tasks", EXIT_INPUT)
    if args.alpha_grid:
        weight_list = [(a, 1.0 - a) for a in args.alpha_grid]
    elif args.weights is not None:
        total = sum(args.weights)
        weight_list = [(args.weights[0] / total, args.weights[1] / total)]
    else:
        weight_list = [(0.5, 0.5)]
    inits = args.init if args.init else list(DEFAULT_INITS)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    oracle = build_oracle(resolution=args.oracle_resolution)
    if args.dump_oracle:
        oracle.write_grid_csv(out_dir / "oracle_grid.csv")
    oracle.write_summary_json(out_dir / "oracle_summary.json")

    runs = []
    for method in methods:
        for w in weight_list:
            for idx, init in enumerate(inits):
                traj = run_benchmark(
                    method,
                    init,
                    steps=args.steps,
                    lr=args.lr,
                    weights=w,
                    seed=args.seed,
                    record_stride=args.record_stride,
                )
                name = f"traj_{method}_w{w[0]:.3g}_init{idx}.jsonl"
                traj.write_jsonl(out_dir / name)
                entry = synthetic_summary(traj, oracle)
                entry["trajectory_file"] = name
                entry["init_index"] = idx
                runs.append(entry)
    write_json(out_dir / "summary.json", {"oracle": oracle.summary(), "runs": runs})
    return EXIT_OK


def _make_suite(name: str, seed: int):
    if name == "two-quadratic":
        return two_quadratics(seed=seed)
    if name == "linear-mtl":
        return make_linear_suite(seed=seed)
    if name == "tanh-mtl":
        return make_tanh_suite(seed=seed)
    raise KeyError(name)


def cmd_train_toy(args) -> int:
    if args.method not in available_methods():
        return _fail(f"unknown method {args.method!r}; known: {', '.join(available_methods())}", EXIT_INPUT)
    try:
        problem = _make_suite(args.suite, args.seed)
    except KeyError:
        return _fail(f"unknown suite {args.suite!r}; known: {', '.join(TOY_SUITES)}", EXIT_INPUT)

    n_tasks = problem.n_tasks
    if args.weights is not None and len(args.weights) != n_tasks:
        return _fail(f"{len(args.weights)} weights for {n_tasks} tasks", EXIT_INPUT)

    try:
        traj = train(
            problem,
            args.method,
            weights=args.weights,
            optimizer=args.optimizer,
            lr=args.lr,
            steps=args.steps,
            seed=args.seed,
            record_stride=args.record_stride,
        )
    except DivergenceError as exc:
        return _fail(f"training diverged: {exc}", EXIT_INPUT)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj.write_jsonl(out_dir / "trajectory.jsonl")
    summary = traj.summary()
    summary["suite"] = args.suite
    summary["optimizer"] = args.optimizer
    if args.suite == "two-quadratic":
        summary["lipschitz_bound"] = problem.lipschitz_bound(args.weights)
        summary["weighted_minimizer"] = problem.weighted_minimizer(args.weights)
        final_theta = np.asarray(traj.final.theta)
        summary["distance_to_weighted_minimizer"] = float(
            np.linalg.norm(final_theta - problem.weighted_minimizer(args.weights))
        )
    write_json(out_dir / "summary.json", summary)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    lines = []
    for path in args.inputs:
        try:
            names, G = read_gradient_dump(path)
        except FileNotFoundError:
            return _fail(f"no such file: {path}", EXIT_INPUT)
        except DumpFormatError as exc:
            return _fail(f"malformed gradient dump {path}: {exc}", EXIT_INPUT)
        try:
            report = stability_report(G, with_pairs=args.pairs)
        except ValueError as exc:
            return _fail(f"{path}: {exc}", EXIT_INPUT)
        payload = {"input": str(path), "tasks": names}
        payload.update(report.to_dict(include_pairs=args.pairs))
        lines.append(dumps(payload))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignmtl",
        description="Gradient alignment and aggregation for multi-task optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_align = sub.add_parser("align", help="align a gradient matrix CSV dump")
    p_align.add_argument("input", help="CSV dump: header of task names, one row per parameter")
    p_align.add_argument("--weights", type=_weights_arg, default=None)
    p_align.add_argument("--out", default=None, help="output JSON path (default: stdout)")
    p_align.set_defaults(func=cmd_align)

    p_syn = sub.add_parser("synthetic", help="run the two-task synthetic benchmark")
    p_syn.add_argument("--method", default="aligned-mtl", help="comma-separated method ids")
    p_syn.add_argument("--weights", type=_weights_arg, default=None)
    p_syn.add_argument("--alpha-grid", type=_alpha_grid_arg, default=None,
                       help="comma-separated task-1 weights; runs one sweep per value")
    p_syn.add_argument("--init", type=_init_arg, action="append", default=None,
                       help="initial point as x,y (repeatable; default: the five standard points)")
    p_syn.add_argument("--lr", type=float, default=DEFAULT_LR)
    p_syn.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p_syn.add_argument("--seed", type=int, default=0)
    p_syn.add_argument("--record-stride", type=int, default=1)
    p_syn.add_argument("--oracle-resolution", type=int, default=1000)
    p_syn.add_argument("--dump-oracle", action="store_true", help="also write the full oracle grid CSV")
    p_syn.add_argument("--out", required=True, help="output directory")
    p_syn.set_defaults(func=cmd_synthetic)

    p_toy = sub.add_parser("train-toy", help="train a toy multi-task suite")
    p_toy.add_argument("--suite", default="two-quadratic", help=f"one of: {', '.join(TOY_SUITES)}")
    p_toy.add_argument("--method", default="aligned-mtl")
    p_toy.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p_toy.add_argument("--weights", type=_weights_arg, default=None)
    p_toy.add_argument("--lr", type=float, default=0.01)
    p_toy.add_argument("--steps", type=int, default=500)
    p_toy.add_argument("--seed", type=int, default=0)
    p_toy.add_argument("--record-stride", type=int, default=1)
    p_toy.add_argument("--out", required=True, help="output directory")
    p_toy.set_defaults(func=cmd_train_toy)

    p_diag = sub.add_parser("diagnose", help="stability reports for gradient dumps")
    p_diag.add_argument("inputs", nargs="+", help="CSV gradient dumps")
    p_diag.add_argument("--pairs", action="store_true", help="include the per-pair table")
    p_diag.add_argument("--out", default=None, help="output JSONL path (default: stdout)")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
