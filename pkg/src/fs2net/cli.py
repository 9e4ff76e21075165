"""Command-line interface: the pipeline end to end.

Subcommands: gen, preprocess, train, defaultset, classify, eval, protocol,
gradcheck.  Every stochastic subcommand requires --seed; all inputs are
read-only; diagnostics go to stderr and data to files.  Exit codes: 0
success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import gradcheck as gradcheck_mod
from .classify import build_default_set, classify_all, load_default_set, load_predictions, \
    save_default_set, save_predictions
from .errors import Fs2NetError
from .evaluate import ProtocolConfig, compute_metrics, render_report_kv, render_report_text, \
    run_protocol
from .fibers import Level, label_at_level, load_dataset, parse_rotation_tag, rotate_dataset
from .preprocess import is_processed_file, load_processed, process_dataset, save_processed
from .siamese import TowerSizes
from .synthgen import GenConfig, generate_corpus
from .fibers import save_dataset
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_checkpoint, \
    write_training_log


def _threads_of(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("FS2NET_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"FS2NET_THREADS must be an integer, got {env!r}") from None
    return 1


def _rotation_tags(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _add_train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, default=1000, help="training iterations (default 1000)")
    p.add_argument("--batch-size", type=int, default=11,
                   help="pairs per batch (11 is the supported composition)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--blstm-hidden", type=int, default=32)
    p.add_argument("--lstm-hidden", type=int, default=64)
    p.add_argument("--dense-hidden", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=32)


def _train_config(args: argparse.Namespace, level: Level, data_path: str = "",
                  checkpoint_path: str = "") -> TrainConfig:
    return TrainConfig(
        level=level,
        iterations=args.iters,
        batch_size=args.batch_size,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        eps=args.eps,
        seed=args.seed,
        sizes=TowerSizes(
            blstm_hidden=args.blstm_hidden,
            lstm_hidden=args.lstm_hidden,
            dense_hidden=args.dense_hidden,
            embed_dim=args.embed_dim,
        ),
        data_path=data_path,
        checkpoint_path=checkpoint_path,
    )


def cmd_gen(args: argparse.Namespace) -> int:
    cfg = GenConfig(
        per_white_class=args.per_class,
        grey_fraction=args.grey_fraction,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        length_range=(args.length_min, args.length_max),
    )
    ds = generate_corpus(cfg)
    save_dataset(ds, args.out)
    print(f"gen: wrote {len(ds)} fibers to {args.out}")
    return 0


def cmd_preprocess(args: argparse.Namespace) -> int:
    ds = load_dataset(args.infile)
    processed = process_dataset(ds)
    save_processed(processed, args.out)
    print(f"preprocess: wrote {len(processed)} fibers to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    level = Level(args.level)
    cfg = _train_config(args, level, data_path=str(args.data), checkpoint_path=str(args.out))
    processed = load_processed(args.data)
    ckpt, log = train_checkpoint(cfg, processed)
    save_checkpoint(ckpt, args.out)
    log_path = args.log if args.log else str(args.out) + ".log"
    write_training_log(log, log_path)
    final = log[-1][1] if log else float("nan")
    print(f"train: {cfg.iterations} iterations, final loss {final:.6f}, "
          f"checkpoint {args.out}, log {log_path}")
    return 0


def cmd_defaultset(args: argparse.Namespace) -> int:
    ds = load_dataset(args.data)
    rotations = tuple(parse_rotation_tag(t) for t in _rotation_tags(args.rotations))
    defaults = build_default_set(
        ds, Level(args.level), per_class=args.per_class, rotations=rotations, seed=args.seed
    )
    save_default_set(defaults, args.out)
    print(f"defaultset: wrote {len(defaults)} entries to {args.out}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.model)
    defaults = load_default_set(args.defaults)
    threads = _threads_of(args)
    if is_processed_file(args.infile):
        if args.rotate:
            raise ValueError("--rotate needs raw input (rotation precedes preprocessing)")
        processed = load_processed(args.infile)
    else:
        raw = load_dataset(args.infile)
        if args.rotate:
            raw = rotate_dataset(raw, parse_rotation_tag(args.rotate))
        processed = process_dataset(raw)
    rows = classify_all(ckpt.model, defaults, processed.fibers, threads=threads)
    save_predictions(rows, args.out)
    print(f"classify: wrote {len(rows)} predictions to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rows = load_predictions(args.pred)
    level = Level(args.level)
    if args.truth:
        truth_ds = load_dataset(args.truth)
        by_id = {
            f.id: label_at_level(f.label, level).value
            for f in truth_ds
            if f.label is not None
        }
        rows = [
            r if r.truth != "?" or r.id not in by_id
            else type(r)(r.id, by_id[r.id], r.pred, r.score)
            for r in rows
        ]
    report = compute_metrics(rows, level, protocol="eval")
    text = render_report_text(report)
    Path(args.report).write_text(text, encoding="utf-8")
    if args.kv:
        Path(args.kv).write_text(render_report_kv(report), encoding="utf-8")
    print(f"eval: accuracy {report.accuracy:.2f} recall {report.recall:.2f} -> {args.report}")
    return 0


def cmd_protocol(args: argparse.Namespace) -> int:
    level = Level(args.level)
    pcfg = ProtocolConfig(
        protocol=args.protocol,
        level=level,
        train=_train_config(args, level),
        data=tuple(str(p) for p in args.data),
        fraction=args.fraction,
        per_class=args.per_class,
        default_rotations=_rotation_tags(args.rotations),
        rotate_test=args.rotate_test if args.rotate_test else None,
        merged_quota=args.merged_quota,
        threads=_threads_of(args),
    )
    reports = run_protocol(pcfg, out_dir=args.out_dir)
    for report in reports:
        print(f"protocol {args.protocol}/{level.value}: accuracy {report.accuracy:.2f} "
              f"recall {report.recall:.2f} over {report.counts['total']} fibers")
    print(f"protocol: artifacts in {args.out_dir}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = gradcheck_mod.run_suite(args.models, start_seed=args.seed, eps=args.eps)
    worst = 0.0
    for seed, err in results:
        print(f"gradcheck: seed={seed} max_rel_err={err:.3e}")
        worst = max(worst, err)
    print(f"gradcheck: {len(results)} models, worst {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst < args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fs2net",
        description="Fiber similarity network: synthetic corpora, curvature "
        "preprocessing, Siamese BLSTM/LSTM training, default-set classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    p.add_argument("--per-class", type=int, required=True, help="fibers per white class")
    p.add_argument("--grey-fraction", type=float, default=0.9)
    p.add_argument("--noise-sigma", type=float, default=0.3)
    p.add_argument("--length-min", type=int, default=36)
    p.add_argument("--length-max", type=int, default=120)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("preprocess", help="curvature-prune and pad a raw dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a comparator on a processed dataset")
    p.add_argument("--level", choices=[l.value for l in Level], required=True)
    p.add_argument("--data", required=True, help="processed dataset file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default="", help="training log path (default <out>.log)")
    _add_train_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("defaultset", help="build labeled (optionally rotated) references")
    p.add_argument("--data", required=True, help="raw labeled dataset file")
    p.add_argument("--level", choices=[l.value for l in Level], required=True)
    p.add_argument("--per-class", type=int, default=5)
    p.add_argument("--rotations", default="",
                   help="comma-separated rotation tags, e.g. 'z:10,z:-10,z:20'")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_defaultset)

    p = sub.add_parser("classify", help="label fibers against a default set")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--defaults", required=True, help="default set file")
    p.add_argument("--in", dest="infile", required=True, help="raw or processed dataset")
    p.add_argument("--rotate", default="", help="rotate raw test fibers first, e.g. 'z:30'")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="prediction TSV path")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="metrics from a prediction table")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", default="", help="raw dataset supplying missing truth labels")
    p.add_argument("--level", choices=[l.value for l in Level], required=True)
    p.add_argument("--report", required=True, help="human-readable report path")
    p.add_argument("--kv", default="", help="machine-readable key-value path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("protocol", help="run a full train/test protocol")
    p.add_argument("--protocol", choices=["intra", "inter", "merged"], required=True)
    p.add_argument("--level", choices=[l.value for l in Level], required=True)
    p.add_argument("--data", nargs="+", required=True,
                   help="intra: one file; inter: train file then test files; merged: all files")
    p.add_argument("--fraction", type=float, default=0.8, help="intra train fraction")
    p.add_argument("--per-class", type=int, default=5, help="default-set fibers per class")
    p.add_argument("--rotations", default="", help="default-set rotation tags")
    p.add_argument("--rotate-test", default="", help="rotate raw test fibers, e.g. 'z:30'")
    p.add_argument("--merged-quota", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    _add_train_options(p)
    p.set_defaults(func=cmd_protocol)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, required=True, help="first candidate model seed")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (Fs2NetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
