"""Command-line surface tying the modules into user workflows.

Every subcommand is a thin composition of library calls; no logic lives
only here.  Usage errors exit 2 (argparse), runtime failures exit 1 with a
message on stderr, clean runs exit 0.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .analysis import cost_report
from .archive import load_tensor, load_weights, save_tensor, save_weights
from .bench import DEFAULT_SWEEP_SIZES, resolution_sweep, write_csv
from .blocks import INFERENCE, TRAIN
from .errors import FastViTError
from .model import PRESETS, build_variant

_SIZES_ARG = ",".join(str(s) for s in DEFAULT_SWEEP_SIZES)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fastvit",
        description="Build, fuse, verify, audit and benchmark FastViT variants.",
    )
    sub = p.add_subparsers(dest="cmd", required=True)
    presets = sorted(PRESETS)

    b = sub.add_parser("build", help="build a variant and save its weights")
    b.add_argument("--variant", required=True, choices=presets)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.add_argument("--mode", choices=["train", "inference"], default="train")

    f = sub.add_parser("fuse", help="reparameterize a train archive")
    f.add_argument("--in", dest="src", required=True)
    f.add_argument("--out", required=True)

    v = sub.add_parser("verify", help="check train-vs-fused forward equivalence")
    v.add_argument("--train", dest="train_path", required=True)
    v.add_argument("--fused", dest="fused_path", required=True)
    v.add_argument("--size", type=int, default=256)
    v.add_argument("--inputs", type=int, default=20)
    v.add_argument("--tol", type=float, default=1e-4)
    v.add_argument("--seed", type=int, default=7)

    s = sub.add_parser("stats", help="parameter and MAC audit")
    s.add_argument("--variant", required=True, choices=presets)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--mode", choices=["train", "inference"], default="inference")
    s.add_argument("--json", action="store_true")

    be = sub.add_parser("bench", help="median-latency benchmark")
    be.add_argument("--variant", required=True, choices=presets)
    be.add_argument("--sizes", default=_SIZES_ARG)
    be.add_argument("--iters", type=int, default=100)
    be.add_argument("--warmup", type=int, default=20)
    be.add_argument("--batch", type=int, default=1)
    be.add_argument("--seed", type=int, default=0)
    be.add_argument("--csv")
    be.add_argument("--baseline", choices=["pooling"])
    be.add_argument("--mode", choices=["train", "inference", "both"],
                    default="inference")

    fw = sub.add_parser("forward", help="run a saved model on a tensor archive")
    fw.add_argument("--model", required=True)
    fw.add_argument("--input", dest="input_path", required=True)
    fw.add_argument("--out", required=True)
    return p


def _mode_name(short: str) -> str:
    return TRAIN if short == "train" else INFERENCE


def _cmd_build(args) -> int:
    model = build_variant(args.variant, seed=args.seed)
    if _mode_name(args.mode) == INFERENCE:
        model = model.reparameterize()
    save_weights(model, args.out)
    print(f"wrote {args.variant} ({model.mode}) to {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    model = load_weights(args.src)
    fused = model.reparameterize()
    save_weights(fused, args.out)
    print(f"wrote fused {fused.config.name} to {args.out}")
    return 0


def _cmd_verify(args) -> int:
    train = load_weights(args.train_path)
    fused = load_weights(args.fused_path)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.inputs):
        x = rng.standard_normal((1, 3, args.size, args.size)).astype(np.float32)
        dev = float(np.max(np.abs(train.forward(x) - fused.forward(x))))
        worst = max(worst, dev)
    ok = worst <= args.tol
    print(
        f"max-abs logit deviation over {args.inputs} inputs at "
        f"{args.size}x{args.size}: {worst:.3e} (tol {args.tol:g}) -> "
        f"{'OK' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


def _cmd_stats(args) -> int:
    model = build_variant(args.variant, seed=0)
    if _mode_name(args.mode) == INFERENCE:
        model = model.reparameterize()
    report = cost_report(model, (args.size, args.size))
    if args.json:
        print(json.dumps(report.to_json_dict(), indent=1))
    else:
        print(f"{args.variant} ({model.mode}) at {args.size}x{args.size}")
        print(report.to_text())
        print(f"params: {report.total_params / 1e6:.2f} M   "
              f"macs: {report.total_macs / 1e9:.3f} G")
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    base = build_variant(args.variant, seed=args.seed)
    models = []
    if args.mode in ("train", "both"):
        models.append(base)
    if args.mode in ("inference", "both"):
        models.append(base.reparameterize())
    if args.baseline == "pooling":
        pool_cfg = dataclasses.replace(
            base.config, name=f"{args.variant}-pooling",
            mixers=("pooling",) * 4, cpe_stages=(),
        ).validate()
        pool = build_variant(pool_cfg, seed=args.seed)
        if args.mode in ("train", "both"):
            models.append(pool)
        if args.mode in ("inference", "both"):
            models.append(pool.reparameterize())
    cells = resolution_sweep(models, sizes, warmup=args.warmup,
                             iters=args.iters, batch=args.batch, seed=args.seed)
    results = []
    medians = {}
    print(f"{'model':<24} {'mode':<20} {'size':>5} {'median_ms':>10} "
          f"{'p10_ms':>9} {'p90_ms':>9}")
    for cell in cells:
        if cell.error is not None:
            print(f"{cell.model_name:<24} {cell.mode:<20} {cell.size:>5} "
                  f"error: {cell.error}", file=sys.stderr)
            continue
        r = cell.result
        results.append(r)
        medians[(cell.model_name, cell.mode, cell.size)] = r.median_ms
        print(f"{cell.model_name:<24} {cell.mode:<20} {cell.size:>5} "
              f"{r.median_ms:>10.3f} {r.p10_ms:>9.3f} {r.p90_ms:>9.3f}")
    if args.baseline == "pooling":
        print(f"\n{'size':>5} {'repmixer/pooling':>17}")
        for size in sizes:
            for mode in (TRAIN, INFERENCE):
                a = medians.get((args.variant, mode, size))
                b = medians.get((f"{args.variant}-pooling", mode, size))
                if a is not None and b is not None and b > 0:
                    print(f"{size:>5} {a / b:>17.3f}  ({mode})")
    if args.csv:
        write_csv(results, args.csv)
        print(f"wrote {args.csv} (+ raw samples sidecar)")
    return 0


def _cmd_forward(args) -> int:
    model = load_weights(args.model)
    x = load_tensor(args.input_path)
    logits = model.forward(x)
    save_tensor(logits, args.out, name="logits")
    print(f"wrote logits {logits.shape} to {args.out}")
    return 0


_COMMANDS = {
    "build": _cmd_build,
    "fuse": _cmd_fuse,
    "verify": _cmd_verify,
    "stats": _cmd_stats,
    "bench": _cmd_bench,
    "forward": _cmd_forward,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.cmd](args)
    except FastViTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
