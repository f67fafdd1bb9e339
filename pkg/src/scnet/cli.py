"""Command-line driver.

Subcommands: pretrain, finetune, eval, gradcheck, synth. Exit codes:
0 success, 1 bad usage (unknown/missing/invalid flags), 2 runtime
failure (unreadable files, bad file contents, divergence).

--data accepts a CIFAR-10 binary batch file (*.bin, repeatable to
concatenate batches) or a directory of <label>_<id>.ppm images. The
SC_NUM_WORKERS environment variable caps sampler workers; the default
single worker keeps runs bit-reproducible.
"""

import argparse
import os
import sys

import numpy as np

from . import checkpoint, data, gradcheck, model, trainer
from .backend import BACKEND
from .errors import ScnetError

PRECISIONS = {"f32": np.float32, "f64": np.float64}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser():
    parser = Parser(prog="scnet",
                    description="Contrastive patch pretraining for small "
                                "conv nets")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def train_flags(p, phase):
        p.add_argument("--data", action="append", default=[],
                       help="dataset path (.bin CIFAR batch, repeatable, or "
                            "a PPM directory)")
        p.add_argument("--spec", help="model description file "
                                      "(default: built-in reference net)")
        p.add_argument("--ckpt-in", help="checkpoint to start from")
        p.add_argument("--ckpt-out", help="where to write the trained state")
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--lr", type=float, default=0.05)
        p.add_argument("--lr-decay", type=float, default=1.0)
        p.add_argument("--lr-decay-epochs", default="",
                       help="comma-separated epoch numbers")
        p.add_argument("--momentum", type=float, default=0.9)
        p.add_argument("--epochs", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--precision", choices=sorted(PRECISIONS),
                       default="f32")
        if phase == "pretrain":
            p.add_argument("--patch-size", type=int,
                           help="square patch side (default: half the short "
                                "image side)")
        if phase == "finetune":
            p.add_argument("--labels-per-class", type=int,
                           help="subsample this many labeled examples per "
                                "class before training")
            p.add_argument("--eval-data", action="append", default=[],
                           help="labeled dataset for per-epoch accuracy")

    p = sub.add_parser("pretrain", help="unsupervised contrastive phase")
    train_flags(p, "pretrain")
    p = sub.add_parser("finetune", help="supervised phase")
    train_flags(p, "finetune")

    p = sub.add_parser("eval", help="top-1 accuracy of a checkpoint")
    p.add_argument("--data", action="append", default=[])
    p.add_argument("--ckpt-in")

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate the clustered texture dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output: a directory for PPM files, or a "
                                 ".bin path for CIFAR records (32x32 RGB "
                                 "only)")
    return parser


def _require(args, flag):
    value = getattr(args, flag.lstrip("-").replace("-", "_"), None)
    if not value:
        raise UsageError(f"{flag} is required for {args.command}")
    return value


def _load_dataset(paths):
    if len(paths) == 1 and os.path.isdir(paths[0]):
        return data.load_ppm_dir(paths[0])
    for p in paths:
        if os.path.isdir(p):
            raise UsageError("--data accepts either one PPM directory or "
                             "binary batch files, not a mix")
    return data.load_cifar10_files(paths)


def _load_or_init(args, dtype):
    if args.ckpt_in:
        spec, state, _ = checkpoint.load(args.ckpt_in)
        state.params = {k: v.astype(dtype, copy=False)
                        for k, v in state.params.items()}
        return spec, state
    spec = model.load_spec(args.spec) if args.spec else model.default_spec()
    return spec, model.init_params(spec, seed=args.seed, dtype=dtype)


def _train_config(args, phase):
    decay_epochs = tuple(int(e) for e in args.lr_decay_epochs.split(",")
                         if e.strip())
    return trainer.TrainConfig(
        batch_size=args.batch_size, lr=args.lr, lr_decay=args.lr_decay,
        lr_decay_epochs=decay_epochs, momentum=args.momentum,
        epochs=args.epochs, seed=args.seed, phase=phase,
        patch_size=getattr(args, "patch_size", None),
        num_workers=int(os.environ.get("SC_NUM_WORKERS", "1")))


def cmd_pretrain(args):
    dataset = _load_dataset(_require(args, "--data")).unlabeled()
    spec, state = _load_or_init(args, PRECISIONS[args.precision])
    report = trainer.pretrain(spec, state, dataset,
                              _train_config(args, "pretrain"))
    if args.ckpt_out:
        checkpoint.save(args.ckpt_out, spec, report.final_state,
                        metadata={"phase": "pretrain",
                                  "dataset": dataset.name,
                                  "epochs": str(args.epochs)})
    return 0


def cmd_finetune(args):
    dataset = _load_dataset(_require(args, "--data"))
    if dataset.labels is None:
        raise UsageError("--data must carry labels for finetune")
    if args.labels_per_class:
        dataset = data.subsample_labeled(dataset, args.labels_per_class,
                                         seed=args.seed)
    eval_ds = _load_dataset(args.eval_data) if args.eval_data else None
    spec, state = _load_or_init(args, PRECISIONS[args.precision])
    report = trainer.finetune(spec, state, dataset,
                              _train_config(args, "finetune"),
                              eval_dataset=eval_ds)
    if args.ckpt_out:
        checkpoint.save(args.ckpt_out, spec, report.final_state,
                        metadata={"phase": "finetune",
                                  "dataset": dataset.name,
                                  "epochs": str(args.epochs)})
    return 0


def cmd_eval(args):
    dataset = _load_dataset(_require(args, "--data"))
    ckpt = _require(args, "--ckpt-in")
    spec, state, _ = checkpoint.load(ckpt)
    accuracy = trainer.evaluate(spec, state, dataset)
    print(f"accuracy {accuracy:.3f}")
    return 0


def cmd_gradcheck(args):
    print(f"kernel backend: {BACKEND}")
    results = gradcheck.run_suite(seed=args.seed, report=print)
    bad = [name for name, (err, thr) in results.items() if err >= thr]
    if bad:
        print(f"gradcheck FAILED for: {', '.join(bad)}", file=sys.stderr)
        return 2
    return 0


def cmd_synth(args):
    out = _require(args, "--out")
    dataset = data.synth_clustered(args.classes, args.per_class, args.size,
                                   seed=args.seed, channels=args.channels)
    if out.endswith(".bin"):
        data.save_cifar10_binary(dataset, out)
    else:
        data.save_ppm_dir(dataset, out)
    print(f"wrote {len(dataset)} images to {out}")
    return 0


COMMANDS = {
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            print("error: a command is required", file=sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ScnetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
