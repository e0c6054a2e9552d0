"""Command-line surface.

Subcommands: make-toy, calibrate, convert, run, oracle, verify, report.
Exit codes: 0 success, 1 I/O or file-format trouble, 2 usage errors,
3 conversion/graph violations, 4 verification failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import calibrate as calibrate_mod
from . import model as model_mod
from . import runtime as runtime_mod
from . import verify as verify_mod
from .backend import backend_name
from .convert import convert as convert_graph, load_snn, save_snn
from .errors import DimensionError, DomainError, FormatError, GraphValidationError

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_CONVERT = 3
EXIT_VERIFY = 4


def _dtype(name: str):
    return np.float32 if name == "f32" else np.float64


def cmd_make_toy(args) -> int:
    cfg = model_mod.ModelConfig(
        num_blocks=args.blocks, dim=args.dim, heads=args.heads, mlp_dim=args.mlp_dim,
        num_tokens=args.tokens, num_classes=args.classes, input_dim=args.input_dim,
    )
    model = model_mod.build_toy_model(cfg, seed=args.seed)
    tokens, labels = model_mod.build_toy_dataset(cfg, count=args.samples, seed=args.seed + 1)
    cal_tokens, cal_labels = model_mod.build_toy_dataset(cfg, count=args.calib_samples, seed=args.seed + 2)
    out = Path(args.out)
    model_mod.save_model(model, out / "model")
    model_mod.save_dataset(tokens, labels, out / "data")
    model_mod.save_dataset(cal_tokens, cal_labels, out / "calib")
    print(f"wrote toy model + {args.samples} eval / {args.calib_samples} calibration samples under {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model = model_mod.load_model(args.model)
    tokens, _ = model_mod.load_dataset(args.data)
    stats = calibrate_mod.collect_stats(model, tokens, max_samples=args.max_samples, seed=args.seed)
    overrides = None if args.no_overrides else calibrate_mod.default_site_overrides(model.config)
    thresholds = calibrate_mod.derive_thresholds(
        stats, percent=args.percent, n=args.levels, overrides=overrides
    )
    calibrate_mod.save_thresholds(thresholds, args.out)
    for warning in thresholds.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"calibrated {len(thresholds.sites)} sites -> {args.out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    model = model_mod.load_model(args.model)
    thresholds = calibrate_mod.load_thresholds(args.thresholds)
    snn = convert_graph(model, thresholds)
    save_snn(snn, args.out)
    print(f"converted: {len(snn.ladders)} neuron sites, {len(snn.linears)} linear banks -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    snn = load_snn(args.snn)
    tokens, _ = model_mod.load_dataset(args.data)
    if args.max_samples is not None:
        tokens = tokens[: args.max_samples]
    dtype = _dtype(args.precision)
    result = runtime_mod.snn_run(snn, tokens, args.timesteps, mode=args.mode, dtype=dtype)
    ref = runtime_mod.oracle_logits(snn, tokens, dtype=result.logits.dtype)
    report = runtime_mod.run_report(snn, result, ref)
    report["kernel_backend"] = backend_name()
    if args.report:
        path = Path(args.report)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.csv:
        runtime_mod.write_sweep_csv(args.csv, report)
    last = report["per_step"][-1]
    print(
        f"mode={result.mode} T={result.timesteps} agreement={last['top1_agreement']:.4f} "
        f"logit_err={last['mean_logit_error']:.3e} "
        f"E_ratio(ac-only)={report['energy']['ratio_ac_only']:.4f} "
        f"E_ratio(strict)={report['energy']['ratio_strict']:.4f}"
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = model_mod.load_model(args.model)
    tokens, labels = model_mod.load_dataset(args.data)
    if args.max_samples is not None:
        tokens, labels = tokens[: args.max_samples], labels[: args.max_samples]
    if _dtype(args.precision) is np.float64:
        model = model.astype(np.float64)
        tokens = tokens.astype(np.float64)
    logits, _ = model_mod.ann_forward(model, tokens)
    preds = np.argmax(logits, axis=-1)
    accuracy = float((preds == labels).mean())
    payload = {
        "format_version": runtime_mod.FORMAT_VERSION,
        "count": int(tokens.shape[0]),
        "precision": args.precision,
        "accuracy": accuracy,
        "predictions": [int(p) for p in preds],
    }
    if args.logits:
        payload["logits"] = [[float(v) for v in row] for row in logits]
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"oracle: {tokens.shape[0]} samples, accuracy vs labels {accuracy:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suite or None
    try:
        results = verify_mod.run_suites(names, cases=args.cases, seed=args.seed)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    for res in results:
        print(res.line())
        for failure in res.failures[:5]:
            print(f"    {failure}")
    if args.out:
        payload = {
            "kernel_backend": backend_name(),
            "suites": {
                r.name: {
                    "passed": r.passed,
                    "checks": r.checks,
                    "seconds": r.seconds,
                    "failures": r.failures,
                }
                for r in results
            },
        }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_report(args) -> int:
    path = Path(args.run)
    if not path.is_file():
        raise FormatError(f"run report {path} not found")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"run report is not valid JSON: {exc}") from None
    if args.csv:
        runtime_mod.write_sweep_csv(args.csv, report)
    steps = report.get("per_step", [])
    energy = report.get("energy", {})
    print(f"mode={report.get('mode')} T={report.get('timesteps')} batch={report.get('batch')}")
    for row in steps:
        print(
            f"  T={row['t']:>3} agreement={row['top1_agreement']:.4f} "
            f"logit_err={row['mean_logit_error']:.3e}"
        )
    if energy:
        print(
            f"energy ratio: ac-only={energy.get('ratio_ac_only'):.4f} "
            f"strict={energy.get('ratio_strict'):.4f}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vit2snn",
        description="Convert a transformer oracle into a spiking network and simulate it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", help="generate a seeded toy model archive plus datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--mlp-dim", type=int, default=64)
    p.add_argument("--tokens", type=int, default=17)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--input-dim", type=int, default=24)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--calib-samples", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy)

    p = sub.add_parser("calibrate", help="derive per-site thresholds from oracle activations")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--percent", type=float, default=calibrate_mod.DEFAULT_PERCENT)
    p.add_argument("--levels", type=int, default=calibrate_mod.DEFAULT_LEVELS)
    p.add_argument("--max-samples", type=int, default=None)
    p.add_argument("--no-overrides", action="store_true",
                   help="skip the fixed thresholds for bounded-range sites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("convert", help="rewrite the oracle into a spiking archive")
    p.add_argument("--model", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("run", help="simulate a spiking archive over discrete time steps")
    p.add_argument("--snn", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--timesteps", "-T", type=int, required=True)
    p.add_argument("--mode", choices=runtime_mod.RUN_MODES, default="mt")
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--max-samples", type=int, default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--csv", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="run the bundled ANN oracle on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--logits", action="store_true", help="embed per-sample logits in the output")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--max-samples", type=int, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="run the built-in verification suites")
    p.add_argument("--suite", action="append", choices=sorted(verify_mod.SUITES),
                   help="run only this suite (repeatable)")
    p.add_argument("--cases", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="summarize an existing run report")
    p.add_argument("--run", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GraphValidationError as exc:
        print(f"error: invalid conversion: {exc}", file=sys.stderr)
        return EXIT_CONVERT
    except (DomainError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
