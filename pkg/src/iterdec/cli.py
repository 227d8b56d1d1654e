"""Command-line harness.

Subcommands: encode, decode-baseline, train, refine, eval, sweep-k,
gradcheck, make-synth.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 numeric failure.  A ``--config`` file supplies defaults for any
flag (key = value lines); explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import codec, metrics, synth, training
from .checkpoint import load_checkpoint, save_checkpoint
from .config import artifact_stamp, config_hash, parse_config_file
from .errors import ConfigError, DataError, NumericError, ParameterError, ShapeError
from .estimator import KINDS
from .patching import CORNERS
from .pgm import load_pgm, save_pgm
from .refinement import RefinementConfig, psnr_vs_k_sweep, reconstruct
from .report import evaluate, format_report_table, write_report_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="iterdec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[_config_parent()], help="encode a PGM into an NQC1 file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("decode-baseline", parents=[_config_parent()], help="non-learned decode of an NQC1 file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[_config_parent()], help="train a decoder on a directory of PGMs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.nidm)")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.add_argument("--kind", choices=KINDS, default="delta-rnn")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--quality", type=int, default=30)
    p.add_argument("--quality-range", default=None, help="lo,hi for variable-rate training")
    p.add_argument("--tied", action="store_true")
    p.add_argument("--lam", type=float, default=training.DEFAULT_LAMBDA)
    p.add_argument("--schedule", choices=("step", "annealed-stochastic"), default="step")
    p.add_argument("--eta0", type=float, default=training.DEFAULT_ETA0)
    p.add_argument("--gamma", type=float, default=training.DEFAULT_GAMMA)
    p.add_argument("--seed", type=int, default=1234)

    p = sub.add_parser("refine", parents=[_config_parent()], help="reconstruct an NQC1 file with a trained decoder")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--corner", choices=CORNERS, default="top-left")

    p = sub.add_parser("eval", parents=[_config_parent()], help="metrics table for baseline + models over a directory")
    p.add_argument("--models", default="", help="comma-separated checkpoint paths (may be empty)")
    p.add_argument("--data", required=True)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--corner", choices=CORNERS, default="top-left")
    p.add_argument("--out", default=None, help="CSV path (stdout table always printed)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep-k", parents=[_config_parent()], help="PSNR as a function of refinement steps")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--k", default="1,3,5", help="comma-separated step counts")
    p.add_argument("--corner", choices=CORNERS, default="top-left")
    p.add_argument("--out", default=None)

    p = sub.add_parser("gradcheck", parents=[_config_parent()], help="BPTT vs finite differences")
    p.add_argument("--kind", choices=KINDS, default="delta-rnn")
    p.add_argument("--h", dest="hidden", type=int, default=4)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--b", dest="lanes", type=int, default=2)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)

    p = sub.add_parser("make-synth", parents=[_config_parent()], help="generate synthetic PGM images")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)

    return parser


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="key = value defaults file")
    return parent


def _apply_config_file(parser: _Parser, argv: list[str]) -> argparse.Namespace:
    """Parse once to find --config, install its values as defaults, reparse."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
        subparser = _subparser_for(parser, args.command)
        actions = {a.dest: a for a in subparser._actions}
        unknown = [k for k in file_values if k not in actions]
        if unknown:
            raise UsageError(f"config file sets unknown keys {unknown} for {args.command!r}")
        converted = {}
        for key, raw in file_values.items():
            action = actions[key]
            if isinstance(action, argparse._StoreTrueAction):
                converted[key] = raw.lower() in ("1", "true", "yes", "on")
            elif action.type:
                converted[key] = action.type(raw)
            else:
                converted[key] = raw
        subparser.set_defaults(**converted)
        args = parser.parse_args(argv)
    return args


def _subparser_for(parser: _Parser, command: str):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            if command in action.choices:
                return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _load_images(directory) -> list[tuple[str, np.ndarray]]:
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise DataError(f"no .pgm files in {directory}")
    return [(p.stem, load_pgm(p)) for p in paths]


def _effective_config(args: argparse.Namespace) -> dict:
    skip = {"config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _cmd_encode(args) -> int:
    raster = load_pgm(args.input)
    coded = codec.encode_image(raster, args.quality)
    codec.save_coded(coded, args.out)
    print(f"encoded {args.input} -> {args.out} quality={args.quality} est_bpp={coded.estimated_bpp:.4f}")
    return EXIT_OK


def _cmd_decode_baseline(args) -> int:
    coded = codec.load_coded(args.input)
    raster = np.floor(codec.decode_baseline(coded) + 0.5).astype(np.uint8)
    save_pgm(raster, args.out)
    print(f"decoded {args.input} -> {args.out} ({coded.width}x{coded.height})")
    return EXIT_OK


def _parse_quality_range(args) -> tuple[int, int]:
    if args.quality_range:
        lo, hi = (int(x) for x in str(args.quality_range).split(","))
        return lo, hi
    return args.quality, args.quality


def _cmd_train(args) -> int:
    images = _load_images(args.data)
    lo, hi = _parse_quality_range(args)
    cfg = training.TrainConfig(
        kind=args.kind,
        hidden=args.hidden,
        k=args.k,
        batch=args.batch,
        epochs=args.epochs,
        tied=args.tied,
        quality_lo=lo,
        quality_hi=hi,
        seed=args.seed,
        lam=args.lam,
        schedule=args.schedule,
        eta0=args.eta0,
        gamma=args.gamma,
    )
    result = training.train([raster for _, raster in images], cfg)
    stamp_values = _effective_config(args)
    save_checkpoint(result.params, args.out, seed=args.seed, config_hash=config_hash(stamp_values))
    if args.log:
        training.write_training_log(result.log, args.log, artifact_stamp(stamp_values, args.seed))
    final = result.log[-1]
    print(
        f"trained {args.kind} H={args.hidden} K={args.k} for {args.epochs} epochs: "
        f"train_loss={final.train_loss:.6f} val_loss={final.val_loss:.6f} -> {args.out}"
    )
    return EXIT_OK


def _cmd_refine(args) -> int:
    params, _ = load_checkpoint(args.model)
    coded = codec.load_coded(args.input)
    cfg = RefinementConfig(k=args.k, d=params.d, corner=args.corner, kind=params.kind)
    refined = reconstruct(coded, params, cfg)
    save_pgm(refined.raster_255().astype(np.uint8), args.out)
    print(f"refined {args.input} -> {args.out} (K={args.k}, corner={args.corner})")
    return EXIT_OK


def _cmd_eval(args) -> int:
    images = _load_images(args.data)
    models = []
    if args.models:
        for path in str(args.models).split(","):
            params, _ = load_checkpoint(path.strip())
            models.append((Path(path.strip()).stem, params))
    rows = evaluate(models, images, args.quality, dataset=Path(args.data).name, k=args.k, corner=args.corner)
    print(format_report_table(rows))
    if args.out:
        write_report_csv(rows, args.out, artifact_stamp(_effective_config(args), args.seed))
    return EXIT_OK


def _cmd_sweep_k(args) -> int:
    params, _ = load_checkpoint(args.model)
    images = _load_images(args.data)
    k_values = [int(x) for x in str(args.k).split(",")]
    codeds = [codec.encode_image(raster, args.quality) for _, raster in images]
    originals = [raster.astype(np.float64) for _, raster in images]
    cfg = RefinementConfig(k=max(k_values), d=params.d, corner=args.corner, kind=params.kind)
    points = psnr_vs_k_sweep(codeds, originals, params, k_values, cfg)
    lines = ["k,psnr"] + [f"{p.k},{p.mean_psnr:.4f}" for p in points]
    output = "\n".join(lines)
    print(output)
    if args.out:
        Path(args.out).write_text(output + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    worst = training.gradient_check(
        args.kind, hidden=args.hidden, d=args.d, k=args.k, lanes=args.lanes, seed=args.seed
    )
    print(f"gradcheck kind={args.kind} H={args.hidden} K={args.k} max_rel_err={worst:.3e}")
    if worst > args.tolerance:
        print(f"FAIL: exceeds tolerance {args.tolerance:.1e}")
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_make_synth(args) -> int:
    paths = synth.make_synth(args.count, args.size, args.seed, args.out)
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "decode-baseline": _cmd_decode_baseline,
    "train": _cmd_train,
    "refine": _cmd_refine,
    "eval": _cmd_eval,
    "sweep-k": _cmd_sweep_k,
    "gradcheck": _cmd_gradcheck,
    "make-synth": _cmd_make_synth,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ParameterError, ConfigError, ShapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
