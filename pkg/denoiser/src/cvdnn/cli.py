"""Command line interface: train a denoiser, or denoise a tensor file.

The denoise subcommand implements the file contract expected by the
estimation workbench:

    cvdnn denoise --weights W.npz --input X.bin --output Y.bin

where X is a complex tensor container holding one (rows, cols) matrix
or an (n, rows, cols) stack, and Y has the identical shape.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .container import read_complex_tensor, write_complex_tensor
from .data import load_pairs
from .errors import (ConfigError, ContainerFormatError, TrainingDivergedError,
                     WeightsFormatError)
from .model import ModelSpec, denoise_array, load_weights, save_weights
from .training import TrainConfig, train


def _parse_milestones(text: str) -> tuple:
    text = text.strip()
    if not text or text.lower() == "none":
        return ()
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"milestones must be comma-separated integers, got {text!r}")


def _load_config_file(path) -> tuple[dict, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    unknown = set(data) - {"model", "training"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return data.get("model", {}), data.get("training", {})


_MODEL_FLAGS = ("depth", "width", "kernel", "normalization")
_TRAIN_FLAGS = ("patch", "epochs", "batch_size", "lr", "decay",
                "val_fraction", "seed", "limit")


def _build_configs(args) -> tuple[ModelSpec, TrainConfig]:
    model_dict, train_dict = {}, {}
    if args.config is not None:
        model_dict, train_dict = _load_config_file(args.config)
    for name in _MODEL_FLAGS:
        value = getattr(args, name)
        if value is not None:
            model_dict[name] = value
    for name in _TRAIN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            train_dict[name] = value
    if args.milestones is not None:
        train_dict["milestones"] = _parse_milestones(args.milestones)
    return ModelSpec.from_dict(model_dict), TrainConfig.from_dict(train_dict)


def _cmd_train(args) -> int:
    spec, config = _build_configs(args)
    noisy, clean = load_pairs(args.dataset, limit=config.limit)
    print(f"training on {noisy.shape[0]} samples of shape "
          f"{noisy.shape[1]}x{noisy.shape[2]} "
          f"(depth {spec.depth}, width {spec.width}, {spec.normalization} norm)")

    def progress(record):
        line = (f"epoch {record['epoch']:3d}/{config.epochs}  "
                f"lr {record['lr']:.2e}  train {record['train_loss']:.4e}")
        if "val_loss" in record:
            line += f"  val {record['val_loss']:.4e}"
        print(line)

    result = train(noisy, clean, spec, config, progress=progress)

    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(out, result.model, extra={"final": result.final,
                                           "elapsed_s": result.elapsed_s})
    log_path = Path(args.log) if args.log else out.with_name(out.stem + ".train_log.json")
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(result.to_log_dict(), fh, indent=2)
        fh.write("\n")
    final = result.final
    print(f"wrote {out} and {log_path}")
    print(f"final NMSE on {final['evaluated_on']} set: "
          f"{final['mean_noisy_nmse_db']:.3f} dB raw -> "
          f"{final['mean_enhanced_nmse_db']:.3f} dB enhanced "
          f"(gain {final['gain_db']:.3f} dB, "
          f"{100.0 * final['improved_fraction']:.1f}% improved)")
    return 0


def _cmd_denoise(args) -> int:
    model, _ = load_weights(args.weights)
    array, _ = read_complex_tensor(args.input)
    if array.ndim not in (2, 3):
        raise ContainerFormatError(
            f"ndim: expected a matrix or stack of matrices, got rank {array.ndim}")
    enhanced = denoise_array(model, array, tile=args.tile)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_complex_tensor(out, enhanced.astype(array.dtype),
                         {"kind": "enhanced", "weights": str(args.weights),
                          "source": str(args.input)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cvdnn",
        description="complex-valued residual denoiser for angular-delay channel estimates")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a denoiser on an exported dataset")
    tr.add_argument("--dataset", required=True, help="exported sample-pair directory")
    tr.add_argument("--output", required=True, help="weight file to write (.npz)")
    tr.add_argument("--config", help="JSON config with model/training sections")
    tr.add_argument("--log", help="training log path (default: next to the weights)")
    tr.add_argument("--depth", type=int)
    tr.add_argument("--width", type=int)
    tr.add_argument("--kernel", type=int)
    tr.add_argument("--normalization", choices=("whiten", "split"))
    tr.add_argument("--patch", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--milestones", help="comma-separated epochs, or 'none'")
    tr.add_argument("--decay", type=float)
    tr.add_argument("--val-fraction", dest="val_fraction", type=float)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--limit", type=int, help="cap the number of samples loaded")
    tr.set_defaults(func=_cmd_train)

    dn = sub.add_parser("denoise", help="denoise a complex tensor container")
    dn.add_argument("--weights", required=True)
    dn.add_argument("--input", required=True)
    dn.add_argument("--output", required=True)
    dn.add_argument("--tile", type=int,
                    help="tile size for large matrices (default: single pass)")
    dn.set_defaults(func=_cmd_denoise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContainerFormatError, WeightsFormatError,
            TrainingDivergedError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
