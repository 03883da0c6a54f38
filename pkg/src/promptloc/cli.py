"""Command-line entry point: ``promptloc <command> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Paths are relative
to ``--workdir``. Logs go to standard error as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import workflow
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import SyntheticConfig, generate_synthetic, load_manifest, save_manifest, to_model_images
from .localize import LocalizeConfig, localize, write_map_grid, write_pgm, write_predictions
from .localize.export import read_predictions
from .localize.run import ground_truth, predict_records, rows_to_predictions
from .metrics import evaluate
from .promptlearn import JsonlLog

log = logging.getLogger("promptloc")

DEFAULT_DATA = "data/manifest.jsonl"
STAGE_FILES = {
    "clip": "checkpoints/clip.ckpt",
    "unet": "checkpoints/unet.ckpt",
    "embedding": "checkpoints/embedding.ckpt",
    "finetune": "checkpoints/finetune.ckpt",
}


class JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"time": round(record.created, 3), "level": record.levelname, "msg": record.getMessage()})


class UsageError(Exception):
    pass


def _floats(text):
    """'0:1:0.1' (inclusive range) or '0.2,0.4' -> list of floats."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range {text!r} must be start:stop:step")
        lo, hi, step = map(float, parts)
        if step <= 0:
            raise UsageError("range step must be positive")
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(v) for v in text.split(",")]


def _int_sets(text):
    """'1;100;1,100' -> [(1,), (100,), (1, 100)]."""
    return [tuple(int(v) for v in group.split(",")) for group in text.split(";")]


def _ints(text):
    return tuple(int(v) for v in text.split(","))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="base directory for all relative paths")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--config", default=None, help="YAML overrides (default: $PROMPTLOC_CONFIG)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="promptloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("gen-data", parents=[common], help="render the synthetic dataset")
    p.add_argument("--out", default="data")

    def stage_cmd(name, needs_ckpt, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--data", default=DEFAULT_DATA)
        if needs_ckpt:
            p.add_argument("--ckpt", required=False, default=None, help="input checkpoint")
        p.add_argument("--out", default=None, help="output checkpoint")
        p.add_argument("--log", default=None, help="training log (JSONL)")
        p.add_argument("--steps", type=int, default=None)
        return p

    stage_cmd("pretrain-clip", False, "contrastive text/image pretraining")
    stage_cmd("pretrain-unet", True, "train the denoiser on captioned images")
    p = stage_cmd("train-embedding", True, "learn one concept vector per category")
    p.add_argument("--init", choices=["copy", "random"], default="copy")
    stage_cmd("finetune", True, "finetune the denoiser on both prompt embeddings")

    def loc_flags(p):
        p.add_argument("--ckpt", default=STAGE_FILES["finetune"])
        p.add_argument("--data", default=DEFAULT_DATA)
        p.add_argument("--split", default="test", choices=["train", "test"])
        p.add_argument("--limit", type=int, default=None, help="first N images per category")
        p.add_argument("--w", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--timesteps", type=_ints, default=None)
        p.add_argument("--resolutions", type=_ints, default=None)
        p.add_argument("--noise", choices=["sampled", "zero"], default=None)
        p.add_argument("--ensemble", action="store_true")

    p = sub.add_parser("localize", parents=[common], help="predict boxes for a split")
    loc_flags(p)
    p.add_argument("--out", default="predictions.jsonl")

    p = sub.add_parser("evaluate", parents=[common], help="score a predictions file")
    p.add_argument("--predictions", default="predictions.jsonl")
    p.add_argument("--data", default=DEFAULT_DATA)
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--population", choices=["failed", "all"], default="failed")
    p.add_argument("--json", default=None, help="also write the report as JSON")

    p = sub.add_parser("sweep", parents=[common], help="localization accuracy over one parameter")
    loc_flags(p)
    p.add_argument("--param", required=True, choices=["w", "tau", "timesteps", "resolutions"])
    p.add_argument("--values", required=True, help="w/tau: 0:1:0.1 or 0.2,0.4; sets: 1;100;1,100")
    p.add_argument("--json", default=None)

    p = sub.add_parser("export-map", parents=[common], help="write one image's activation map")
    loc_flags(p)
    p.add_argument("--image-id", required=True)
    p.add_argument("--category", default=None, help="defaults to the ground-truth category")
    p.add_argument("--out", default="map.plmap")
    p.add_argument("--pgm", default=None)
    return parser


def _path(args, rel):
    return Path(args.workdir) / rel


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _train_data(args):
    manifest = load_manifest(_path(args, args.data))
    records = manifest.split("train")
    images = to_model_images(manifest.load_images(records))
    labels = np.array([r.category_id for r in records])
    return manifest, images, labels


def _localize_config(args, cfg):
    c = dict(cfg["localize"])
    for key in ("w", "tau", "timesteps", "resolutions", "noise"):
        val = getattr(args, key, None)
        if val is not None:
            c[key] = val
    if getattr(args, "ensemble", False):
        c["ensemble"] = True
    return LocalizeConfig(seed=cfg["seed"], **c)


def cmd_gen_data(args, cfg):
    out = _path(args, args.out)
    config = SyntheticConfig(**cfg["data"])
    manifest = generate_synthetic(config, cfg["seed"], out)
    save_manifest(manifest, out / "manifest.jsonl")
    log.info("wrote %d records to %s", len(manifest.records), out / "manifest.jsonl")


def _stage(args, cfg, stage, prev):
    manifest, images, labels = _train_data(args)
    if prev is None:
        pipeline = workflow.new_pipeline(manifest.categories, cfg)
    else:
        pipeline, _ = load_checkpoint(_path(args, args.ckpt or STAGE_FILES[prev]))
    if pipeline.categories != manifest.categories:
        raise RuntimeError("checkpoint categories do not match the dataset")
    log_fn = JsonlLog(_path(args, args.log)) if args.log else None
    overrides = {"steps": args.steps} if args.steps is not None else {}
    t0 = time.time()
    if stage == "clip":
        if overrides:
            cfg["clip"]["steps"] = args.steps
        workflow.run_clip(pipeline, images, labels, cfg, log_fn=log_fn)
    elif stage == "unet":
        workflow.run_pretrain(pipeline, images, labels, cfg, log_fn=log_fn, **overrides)
    elif stage == "embedding":
        workflow.run_embedding(pipeline, images, labels, cfg, init=args.init, log_fn=log_fn, **overrides)
    else:
        workflow.run_finetune(pipeline, images, labels, cfg, log_fn=log_fn, **overrides)
    out = _path(args, args.out or STAGE_FILES[stage])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(pipeline, out, meta={"seed": cfg["seed"], "config_hash": manifest.config_hash})
    log.info("%s stage done in %.1fs -> %s", stage, time.time() - t0, out)


def _records(args, manifest):
    records = manifest.split(args.split)
    if args.limit is not None:
        records = [r for r in records if int(r.image_id.rsplit("_", 1)[1]) < args.limit]
    return records


def cmd_localize(args, cfg):
    pipeline, _ = load_checkpoint(_path(args, args.ckpt))
    manifest = load_manifest(_path(args, args.data))
    records = _records(args, manifest)
    rows = predict_records(pipeline, manifest, records, _localize_config(args, cfg), workers=args.workers)
    write_predictions(rows, _path(args, args.out))
    log.info("wrote %d predictions to %s", len(rows), _path(args, args.out))


def cmd_evaluate(args, cfg):
    manifest = load_manifest(_path(args, args.data))
    preds = read_predictions(_path(args, args.predictions))
    ids = {p.image_id for p in preds}
    gts = ground_truth([r for r in manifest.split(args.split) if r.image_id in ids])
    report = evaluate(preds, gts, population=args.population)
    print(report.table())
    if args.json:
        _path(args, args.json).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def sweep_values(param, text):
    try:
        return _floats(text) if param in ("w", "tau") else _int_sets(text)
    except ValueError:
        raise UsageError(f"cannot parse --values {text!r} for --param {param}") from None


def cmd_sweep(args, cfg):
    values = sweep_values(args.param, args.values)
    pipeline, _ = load_checkpoint(_path(args, args.ckpt))
    manifest = load_manifest(_path(args, args.data))
    records = _records(args, manifest)
    base = _localize_config(args, cfg)
    gts = ground_truth(records)
    results = []
    for value in values:
        config = LocalizeConfig(**{**base.to_dict(), args.param: value})
        rows = predict_records(pipeline, manifest, records, config, workers=args.workers)
        rep = evaluate(rows_to_predictions(rows), gts)
        label = value if args.param in ("w", "tau") else "+".join(map(str, value))
        results.append({"param": args.param, "value": label, **rep.to_dict()})
        log.info("sweep %s=%s top1=%.2f gt_known=%.2f", args.param, label, rep.top1_loc, rep.gt_known_loc)
    print(f"{args.param:>12} {'Top-1 Loc':>10} {'Top-5 Loc':>10} {'GT-known':>10}")
    for r in results:
        print(f"{str(r['value']):>12} {r['top1_loc']:10.2f} {r['top5_loc']:10.2f} {r['gt_known_loc']:10.2f}")
    if args.json:
        _path(args, args.json).write_text(json.dumps(results, indent=2) + "\n")


def cmd_export_map(args, cfg):
    pipeline, _ = load_checkpoint(_path(args, args.ckpt))
    manifest = load_manifest(_path(args, args.data))
    rec = manifest.by_id().get(args.image_id)
    if rec is None:
        raise KeyError(f"image id {args.image_id!r} not in the manifest")
    image = to_model_images(manifest.load_images([rec]))[0]
    box, amap = localize(image, args.category or rec.category, pipeline, _localize_config(args, cfg), rec.image_id)
    write_map_grid(amap.values, _path(args, args.out))
    if args.pgm:
        write_pgm(amap.values, _path(args, args.pgm), scale=4)
    print(json.dumps({"image_id": rec.image_id, "box": list(box.as_tuple()), "fallback": box.fallback}))


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain-clip": lambda a, c: _stage(a, c, "clip", None),
    "pretrain-unet": lambda a, c: _stage(a, c, "unet", "clip"),
    "train-embedding": lambda a, c: _stage(a, c, "embedding", "unet"),
    "finetune": lambda a, c: _stage(a, c, "finetune", "embedding"),
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "export-map": cmd_export_map,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(args.log_level)
    log.propagate = False
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"promptloc: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - every failure maps to exit status 1
        log.error("%s: %s", type(e).__name__, e)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
