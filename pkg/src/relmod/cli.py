"""Command-line entry point: ``relmod {gen-data,train,eval,gradcheck}``.

Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
0 ok, 1 check failure, 2 configuration, 3 I/O, 4 numerical, 5 compatibility.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .diffcore import CheckpointFormatError

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_COMPAT = 0, 1, 2, 3, 4, 5

log = logging.getLogger("relmod")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    sys.stdout.flush()


def _load_config(path) -> config_mod.RunConfig:
    if path is None:
        return config_mod.RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        return config_mod.loads(text)
    except config_mod.ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"{path}: {exc}") from None


def _load_data(path):
    from .dataset import DatasetFormatError, load_dataset
    try:
        return load_dataset(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read dataset {path}: {exc.strerror or exc}") from None
    except DatasetFormatError as exc:
        raise CliError(EXIT_IO, f"dataset {path}: {exc}") from None


def cmd_gen_data(args) -> int:
    from .dataset import flatten_splits, generate, save_dataset, split_protocol
    cfg = _load_config(args.config)
    splits = split_protocol(generate(cfg.data), cfg.data.seed)
    try:
        save_dataset(flatten_splits(splits), args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write dataset to {args.out}: {exc.strerror or exc}") from None
    _emit({name: len(items) for name, items in splits.items()})
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import NumericalError, train
    cfg = _load_config(args.config)
    samples = _load_data(args.data)
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(out.suffix + ".log.jsonl")
    try:
        ckpt, metrics = train(cfg, samples, log_path=log_path)
        ckpt.save(out)
    except NumericalError as exc:
        raise CliError(EXIT_NUMERIC, f"training aborted: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {exc.filename or out}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"cannot train: {exc}") from None
    _emit({"checkpoint": str(out), "log": str(log_path), "epochs": len(metrics),
           "config_hash": ckpt.config_hash, "digest": ckpt.digest(),
           "final_loss_total": metrics[-1]["loss_total"]})
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import export_embeddings
    from .trainer import Checkpoint, CompatibilityError, embed_samples, evaluate_checkpoint
    try:
        ckpt = Checkpoint.load(args.ckpt)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read checkpoint {args.ckpt}: {exc.strerror or exc}") from None
    except CheckpointFormatError as exc:
        raise CliError(EXIT_IO, f"checkpoint {args.ckpt}: {exc}") from None
    except CompatibilityError as exc:
        raise CliError(EXIT_COMPAT, str(exc)) from None
    expected = _load_config(args.config).digest() if args.config else None
    samples = _load_data(args.data)
    try:
        report = evaluate_checkpoint(ckpt, samples, expected, args.gallery_is_probe)
        if args.export_embeddings:
            test = [s for s in samples if s.split in ("gallery", "probe")]
            export_embeddings(embed_samples(ckpt, test), [s.identity for s in test],
                              [s.domain for s in test], args.export_embeddings)
    except CompatibilityError as exc:
        raise CliError(EXIT_COMPAT, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write embeddings: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"cannot evaluate: {exc}") from None
    _emit(report.to_json())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import gradsuite
    scopes = gradsuite.SCOPES if args.scope == "all" else (args.scope,)
    report = gradsuite.run(scopes, seed=args.seed)
    _emit(report)
    failed = [f"{scope}/{name}" for scope, r in report.items() for name in r["failed"]]
    if failed:
        raise CliError(EXIT_CHECK, f"failed at tolerance {gradsuite.TOLERANCE:g}: {', '.join(failed)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="relmod", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and split the synthetic dataset",
                       formatter_class=fmt)
    p.add_argument("--config", default=None, help="run config JSON (built-in defaults if omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint", formatter_class=fmt)
    p.add_argument("--config", default=None, help="run config JSON (built-in defaults if omitted)")
    p.add_argument("--data", required=True, help="dataset directory written by gen-data")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None,
                   help="metrics log path (JSON lines); defaults to <out>.log.jsonl")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the gallery/probe split",
                       formatter_class=fmt)
    p.add_argument("--ckpt", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", default=None,
                   help="expected run config; a different config hash exits with 5")
    p.add_argument("--export-embeddings", default=None, metavar="PATH",
                   help="write test embeddings as CSV plus a 2-D PCA companion file")
    p.add_argument("--gallery-is-probe", action="store_true",
                   help="debug mode: match the gallery against itself")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="run finite-difference gradient suites",
                       formatter_class=fmt)
    p.add_argument("--scope", default="all", choices=("ops", "relation", "losses", "end2end", "all"),
                   help="which suite to run")
    p.add_argument("--seed", type=int, default=0, help="seed for the random test points")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"relmod {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
