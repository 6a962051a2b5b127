"""Benchmark command line: train | bench-epoch | bench-inference | size.

Exit codes: 0 success, 2 usage error, 1 runtime error. The
SPARSEMLP_THREADS environment variable overrides --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from ._version import __version__
from .bench import (
    ExperimentConfig,
    bench_inference,
    build_model,
    run_training,
    sweep_depth,
    sweep_width,
)
from .data_io import archive_weight_file_bytes, model_size_report, save_model
from .errors import ConfigurationError, DatasetIOError, FormatError, InvalidArgumentError

THREADS_ENV = "SPARSEMLP_THREADS"


def _add_common(parser):
    parser.add_argument("--layers", default="3072,1024,512,10",
                        help="comma-separated layer sizes, input first")
    parser.add_argument("--density", type=float, default=1.0, help="global weight density in (0, 1]")
    parser.add_argument("--backend", choices=["sparse", "masked"], default="sparse")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--batch-size", type=int, default=100)
    parser.add_argument("--lr", type=float, default=None,
                        help="initial learning rate (default: density table)")
    parser.add_argument("--lr-milestones", default="0.5,0.75",
                        help="decay points as fractions of total epochs")
    parser.add_argument("--lr-gamma", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--dataset", default="synthetic:classes=10,features=3072,per_class=100,spread=1.0",
                        help="cifar10:DIR or synthetic:key=value,...")
    parser.add_argument("--out", default=None, help="output path prefix (or directory for size)")


def _parse_int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise InvalidArgumentError(f"expected comma-separated integers, got {text!r}")


def _parse_float_list(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise InvalidArgumentError(f"expected comma-separated numbers, got {text!r}")


def _config_from_args(args) -> ExperimentConfig:
    threads = args.threads
    if os.environ.get(THREADS_ENV):
        threads = int(os.environ[THREADS_ENV])
    return ExperimentConfig(
        layer_dims=_parse_int_list(args.layers),
        density=args.density,
        backend=args.backend,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lr_milestones=tuple(_parse_float_list(args.lr_milestones)),
        lr_gamma=args.lr_gamma,
        seed=args.seed,
        dataset=args.dataset,
        threads=threads,
        out=args.out,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsemlp",
        description="Truly sparse MLP training benchmarks (sparse CSR vs masked-dense backends)",
    )
    parser.add_argument("--version", action="version", version=f"sparsemlp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a run report")
    _add_common(p_train)
    p_train.add_argument("--csv", action="store_true", help="also export per-epoch CSV")
    p_train.add_argument("--augment", action="store_true",
                         help="flip + pad-4 random crop augmentation (image datasets)")
    p_train.add_argument("--no-eval", action="store_true",
                         help="skip per-epoch metric evaluation (timing only)")
    p_train.add_argument("--save-model", default=None, metavar="DIR",
                         help="also archive the trained model")

    p_epoch = sub.add_parser("bench-epoch", help="epoch-time benchmark, optional depth/width sweep")
    _add_common(p_epoch)
    p_epoch.add_argument("--sweep", choices=["none", "depth", "width"], default="none")
    p_epoch.add_argument("--depths", default="1,2,3,4,5,6,7,8,9,10")
    p_epoch.add_argument("--widths", default="1024,2048,4096,8192,16384,32768")
    p_epoch.add_argument("--sweep-width", type=int, default=1024,
                         help="hidden width used by the depth sweep")
    p_epoch.add_argument("--n-epochs", type=int, default=3, help="measured epochs per point")

    p_inf = sub.add_parser("bench-inference", help="single-example latency benchmark")
    _add_common(p_inf)
    p_inf.add_argument("--repeats", type=int, default=100)
    p_inf.add_argument("--warmup", type=int, default=10)

    p_size = sub.add_parser("size", help="model size report and archive")
    _add_common(p_size)
    return parser


def _emit(payload, out_path):
    text = json.dumps(payload, indent=1)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _cmd_train(args) -> int:
    config = _config_from_args(args)
    config.eval_metrics = not args.no_eval
    config.augment = args.augment
    report, model = run_training(config)
    if args.save_model:
        save_model(model, args.save_model)
        report.summary["archive_dir"] = args.save_model
        report.summary["archive_weight_file_bytes"] = archive_weight_file_bytes(args.save_model)
    if args.out:
        written = report.write(args.out, csv=args.csv)
        print(f"wrote {', '.join(written)}", file=sys.stderr)
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def _cmd_bench_epoch(args) -> int:
    config = _config_from_args(args)
    if args.sweep == "depth":
        records = sweep_depth(config, _parse_int_list(args.depths),
                              width=args.sweep_width, n_epochs=args.n_epochs)
    elif args.sweep == "width":
        records = sweep_width(config, _parse_int_list(args.widths), n_epochs=args.n_epochs)
    else:
        from .bench import bench_epoch_seconds

        seconds = bench_epoch_seconds(config, args.n_epochs)
        records = [{
            "sweep": "none",
            "layer_dims": config.layer_dims,
            "density": config.density,
            "backend": config.backend,
            "status": "ok",
            "epoch_seconds": seconds,
            "mean_epoch_seconds": float(np.mean(seconds)),
        }]
    lines = [json.dumps(r) for r in records]
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def _cmd_bench_inference(args) -> int:
    config = _config_from_args(args)
    result = bench_inference(config, n_repeats=args.repeats, warmup=args.warmup)
    _emit(result, args.out)
    return 0


def _cmd_size(args) -> int:
    config = _config_from_args(args)
    model, plan = build_model(config)
    size = model_size_report(model)
    archive_dir = args.out or tempfile.mkdtemp(prefix="sparsemlp_size_")
    save_model(model, archive_dir)
    on_disk = archive_weight_file_bytes(archive_dir)
    payload = {
        "config": config.to_dict(),
        "plan": plan.to_dict(),
        "size_report": size.to_dict(),
        "archive_dir": archive_dir,
        "archive_weight_file_bytes": on_disk,
        "archive_weight_megabytes": on_disk / 1e6,
    }
    print(json.dumps(payload, indent=1))
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "bench-epoch": _cmd_bench_epoch,
    "bench-inference": _cmd_bench_inference,
    "size": _cmd_size,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InvalidArgumentError, ConfigurationError) as exc:
        # bad flag values are usage errors
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DatasetIOError, FormatError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
