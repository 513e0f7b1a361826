"""``freqseg`` command line: gen | train | eval | ablate | infer | gradcheck | dwt.

Every command accepts ``--config FILE`` (key=value lines) and repeated
``--set key=value`` overrides; ``FREQSEG_SEED`` overrides the seed. Exit
codes: 0 success, 1 I/O failure or failed check, 2 invalid configuration or
input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .config import RunConfig
from .errors import FreqSegError, UsageError

log = logging.getLogger("freqseg")


def _config(args) -> RunConfig:
    return RunConfig.load(args.config, args.set or ()).validate()


def cmd_gen(args) -> int:
    from .data import generate_dataset
    cfg = _config(args)
    out = Path(args.out or cfg.data_dir)
    generate_dataset(out, args.n or cfg.n_samples, cfg.image_size, cfg.seed, cfg.split_ratios, cfg.distribution)
    print(f"wrote {args.n or cfg.n_samples} samples to {out}")
    return 0


def cmd_train(args) -> int:
    from .harness import train
    cfg = _config(args)
    out = Path(args.out or cfg.out_dir)

    def show(rec):
        print(f"epoch {rec['epoch']:4d}  loss {rec['loss']:.5f}  mask {rec['mask_loss']:.5f}  "
              f"boundary {rec['boundary_loss']:.5f}  val_dice {rec['val_dice']:.4f}", flush=True)

    res = train(cfg, args.data or cfg.data_dir, out, resume=args.resume, on_epoch=show)
    print(f"best val dice {res.best_val_dice:.4f} at epoch {res.best_epoch}; checkpoints in {out}")
    return 0


def cmd_eval(args) -> int:
    from .harness import evaluate
    cfg = _config(args)
    agg, _ = evaluate(args.checkpoint, args.data or cfg.data_dir, args.split, args.report, args.spacing)
    print(json.dumps(agg))
    return 0


def cmd_ablate(args) -> int:
    from .harness import ablate, format_ablation
    cfg = _config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    rows = ablate(cfg, args.data or cfg.data_dir, args.out, seeds, args.split)
    print(format_ablation(rows))
    return 0


def cmd_infer(args) -> int:
    from .harness import infer
    paths = infer(args.checkpoint, args.image, args.out, write_prob=args.prob, dump=args.dump_bands)
    for key, p in paths.items():
        print(f"{key}\t{p}")
    return 0


def cmd_gradcheck(args) -> int:
    from .harness import GRADCHECK_GEOMETRY, check_model_gradients
    cfg = RunConfig.load(args.config, args.set or ()) if args.config else \
        RunConfig().replace(**GRADCHECK_GEOMETRY).with_overrides(args.set or ())
    report = check_model_gradients(cfg, seed=args.seed, eps=args.eps, tol=args.tol)
    print(report.format())
    print(f"{'PASS' if report.passed else 'FAIL'}: worst relative error {report.worst:.3e} (tol {args.tol:g})")
    return 0 if report.passed else 1


def cmd_dwt(args) -> int:
    from .harness import image_bands
    from .tensorio import read_image
    for p in image_bands(read_image(args.image), args.out):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="freqseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--out", help="dataset directory (default: config data_dir)")
    p.add_argument("--n", type=int, help="number of samples (default: config n_samples)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="run directory (default: config out_dir)")
    p.add_argument("--resume", action="store_true", help="continue from <out>/last")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a split")
    p.add_argument("checkpoint")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--report", help="write JSONL report here")
    p.add_argument("--spacing", type=float, help="pixel spacing multiplier for HD")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="four-row module ablation")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="directory for runs and ablation.jsonl")
    p.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    p.add_argument("--split", default="test", choices=["val", "test"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer", parents=[common], help="segment one image")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--prob", action="store_true", help="also write the probability map")
    p.add_argument("--dump-bands", action="store_true", help="write wavelet bands and attention maps")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the full loss")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("dwt", parents=[common], help="one-level Haar bands of an image")
    p.add_argument("image")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_dwt)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"freqseg: internal usage error: {exc}", file=sys.stderr)
        return 1
    except FreqSegError as exc:
        print(f"freqseg: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"freqseg: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
