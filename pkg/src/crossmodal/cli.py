"""Command-line interface: generate / train / eval / ablate / gradcheck."""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__, config, gradcheck, synthdata, trainer
from .batch import FeatureLayout
from .core import RngStream
from .errors import ConfigError, CrossmodalError, ParseError
from .evalkit import report_table, report_text
from .model import load_checkpoint, save_checkpoint

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; remap to the documented 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="crossmodal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"crossmodal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic feature file")
    gen.add_argument("--ids", type=int, default=synthdata.BENCHMARK_N_IDS)
    gen.add_argument("--per-modality", type=int, default=synthdata.BENCHMARK_PER_MODALITY)
    gen.add_argument("--shared-dims", type=int, default=synthdata.BENCHMARK_LAYOUT.shared_dims)
    gen.add_argument("--color-dims", type=int, default=synthdata.BENCHMARK_LAYOUT.color_dims)
    gen.add_argument(
        "--modality-dims", type=int, default=synthdata.BENCHMARK_LAYOUT.modality_dims
    )
    gen.add_argument("--gap", type=float, default=synthdata.BENCHMARK_GAP)
    gen.add_argument("--noise", type=float, default=synthdata.BENCHMARK_NOISE)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train on a feature file and write a run directory")
    tr.add_argument("--config", help="key=value config file")
    tr.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    tr.add_argument("--out", required=True, help="run directory to create")
    tr.add_argument("--checkpoint-every", type=int, default=0)

    ev = sub.add_parser("eval", help="score a checkpoint on a feature file")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--direction", choices=trainer.DIRECTIONS, default="t2v")
    ev.add_argument("--out", help="directory for report files (defaults to stdout only)")

    ab = sub.add_parser("ablate", help="train config variants over seeds and tabulate")
    ab.add_argument("--config", help="base key=value config file")
    ab.add_argument("--data", required=True)
    ab.add_argument("--eval-data")
    ab.add_argument("--variants", help="file with 'name: key=value key=value' lines")
    ab.add_argument("--seeds", default="0", help="comma-separated seed list")
    ab.add_argument("--out", help="directory for the table file")

    gc = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    gc.add_argument("--seeds", type=int, default=20, help="instances per component")
    gc.add_argument("--seed", type=int, default=0, help="base RNG seed")
    gc.add_argument("--tol", type=float, default=gradcheck.DEFAULT_TOL)
    gc.add_argument("--component", action="append", choices=gradcheck.COMPONENTS)
    return parser


def cmd_generate(args) -> int:
    layout = FeatureLayout(args.shared_dims, args.color_dims, args.modality_dims)
    dataset = synthdata.generate(
        args.ids, args.per_modality, layout, args.gap, args.noise, RngStream(args.seed)
    )
    synthdata.save_features(dataset, args.out)
    print(
        f"wrote {len(dataset)} rows ({args.ids} identities x {args.per_modality} "
        f"per modality x 3 modalities, dim {dataset.dim}) to {args.out}"
    )
    return 0


def _load_run_config(args) -> config.RunConfig:
    cfg = config.parse_config_file(args.config) if args.config else config.RunConfig()
    overrides = dict(config.parse_assignment(item) for item in args.overrides)
    cfg = config.apply_overrides(cfg, overrides)
    cfg.train.validate()
    return cfg


def _epoch_csv_row(log: trainer.EpochLog) -> str:
    def term(key):
        return f"{log.terms[key]:.10g}" if key in log.terms else ""

    cells = [
        str(log.epoch),
        str(log.stage),
        f"{log.lr:.10g}",
        term("intra"),
        term("global"),
        term("msel"),
        term("dcl"),
        term("id"),
    ]
    if log.eval is not None:
        cells += [f"{log.eval.rank1:.10g}", f"{log.eval.mean_ap:.10g}", f"{log.eval.minp:.10g}"]
    else:
        cells += ["", "", ""]
    return ",".join(cells)


EPOCH_CSV_HEADER = "epoch,stage,lr,intra,global,msel,dcl,id,rank1,mean_ap,minp"


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    if not cfg.data_path:
        raise ConfigError("config must set data.path")
    dataset = synthdata.load_features(cfg.data_path)
    eval_dataset = synthdata.load_features(cfg.eval_path) if cfg.eval_path else None
    out_dir = args.out
    if os.path.exists(out_dir) and os.listdir(out_dir):
        raise ConfigError(f"run directory {out_dir!r} already exists and is not empty")
    os.makedirs(out_dir, exist_ok=True)

    manifest = {
        "tool": "crossmodal",
        "version": __version__,
        "command": "train",
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": cfg.train.seed,
        "config": dict(config.resolved_items(cfg)),
        "inputs": {
            "data": os.path.abspath(cfg.data_path),
            "eval_data": os.path.abspath(cfg.eval_path) if cfg.eval_path else None,
        },
        "artifacts": {
            "resolved_config": "config.resolved.cfg",
            "epoch_log": "epochs.csv",
            "checkpoint": "checkpoint.npz",
            "report": "report_{direction}.txt".format(direction=cfg.train.eval_direction),
            "report_hist": "report_{direction}_hist.csv".format(
                direction=cfg.train.eval_direction
            ),
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "config.resolved.cfg"), "w", encoding="ascii") as fh:
        fh.write(config.resolved_text(cfg))

    log_path = os.path.join(out_dir, "epochs.csv")
    log_fh = open(log_path, "w", encoding="ascii")
    log_fh.write(EPOCH_CSV_HEADER + "\n")

    def on_epoch(epoch, params, log):
        log_fh.write(_epoch_csv_row(log) + "\n")
        if args.checkpoint_every and (epoch + 1) % args.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, f"checkpoint_epoch{epoch}.npz"), params)

    try:
        params, logs = trainer.train(dataset, cfg.train, eval_dataset, on_epoch=on_epoch)
    finally:
        log_fh.close()
    save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), params)
    report = logs[-1].eval
    direction = cfg.train.eval_direction
    with open(os.path.join(out_dir, f"report_{direction}.txt"), "w", encoding="ascii") as fh:
        fh.write(report_text(report))
    with open(os.path.join(out_dir, f"report_{direction}_hist.csv"), "w", encoding="ascii") as fh:
        fh.write(report_table(report))
    print(f"run directory: {out_dir}")
    print(
        f"final: rank1={report.rank1:.4f} mAP={report.mean_ap:.4f} "
        f"mINP={report.minp:.4f} gap_ratio={report.gap_ratio:.4f}"
    )
    return 0


def cmd_eval(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    dataset = synthdata.load_features(args.data)
    report = trainer.evaluate_params(params, dataset, args.direction)
    text = report_text(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(
            os.path.join(args.out, f"report_{args.direction}.txt"), "w", encoding="ascii"
        ) as fh:
            fh.write(text)
        with open(
            os.path.join(args.out, f"report_{args.direction}_hist.csv"), "w", encoding="ascii"
        ) as fh:
            fh.write(report_table(report))
    sys.stdout.write(text)
    return 0


def _parse_variants_file(path) -> list[tuple[str, dict[str, str]]]:
    variants = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if ":" not in text:
                raise ParseError("expected 'name: key=value ...'", line=lineno)
            name, _, rest = text.partition(":")
            delta = dict(config.parse_assignment(tok) for tok in rest.split())
            variants.append((name.strip(), delta))
    return variants


def cmd_ablate(args) -> int:
    base = config.parse_config_file(args.config) if args.config else config.RunConfig()
    base.train.validate()
    dataset = synthdata.load_features(args.data)
    eval_dataset = synthdata.load_features(args.eval_data) if args.eval_data else None
    variants = _parse_variants_file(args.variants) if args.variants else []
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {args.seeds!r}") from None
    rows = trainer.ablate(dataset, base.train, variants, seeds, eval_dataset)
    table = trainer.ablation_table(rows)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "ablation.csv"), "w", encoding="ascii") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_suite(
        instances=args.seeds, seed=args.seed, tol=args.tol, components=args.component
    )
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(
            f"{status} {res.name}: max_rel_error={res.max_rel_error:.3e} "
            f"over {res.instances} instances (tol {args.tol:g})"
        )
        failed = failed or not res.passed
    return RUNTIME_EXIT if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "generate": cmd_generate,
        "train": cmd_train,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (CrossmodalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


def main_entry() -> None:
    raise SystemExit(main())
