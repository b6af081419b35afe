"""Command line: ``synth``, ``train``, ``predict``, ``eval`` and ``sweep``.

Exit codes are 0 on success, 1 for invalid input (config, files, formats)
and 2 for runtime failures such as a diverging training run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .config import ConfigError, RunConfig, load_config
from .core import DivergenceError, load_dataset, load_predictions, save_dataset, save_predictions
from .gcnet import load_model, save_model
from .metrics import MetricReport, evaluate
from .predict import average_predictions, forecast_dataset, fuse_reports, fuse_sets
from .synth import generate
from .train import TrainingDiverged, train

log = logging.getLogger("gcnforecast")


def _write(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- synth


def cmd_synth(cfg: RunConfig, out=None):
    path = out or os.path.join(cfg.out_dir, "synth.jsonl")
    spec = replace(cfg.synth, seed=cfg.seed)
    dataset = generate(spec)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_dataset(dataset, path)
    _write(path + ".config.json", cfg.snapshot(command="synth"))
    log.info("wrote %d sequences to %s", len(dataset.sequences), path)
    return path


# ---------------------------------------------------------------- train


def _train_setup(cfg: RunConfig, short_term=None):
    setup = cfg.setup()
    if short_term is not None:
        if short_term > cfg.window.output_frames:
            raise ConfigError("--short-term frames must not exceed window.output_frames")
        setup = replace(setup, train=replace(setup.train, short_term_frames=short_term))
    return setup


def cmd_train(cfg: RunConfig, out=None, short_term=None):
    cfg.validate_paths("train_data")
    if cfg.val_data is not None:
        cfg.validate_paths("val_data")
    out_dir = out or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_dataset(cfg.train_data)
    val = load_dataset(cfg.val_data) if cfg.val_data else None
    setup = _train_setup(cfg, short_term)
    _write(os.path.join(out_dir, "config.json"), cfg.snapshot(command="train", short_term_frames=short_term))
    try:
        model, report = train(dataset, setup, cfg.seed, val)
    except TrainingDiverged as exc:
        if exc.model is not None:
            save_model(exc.model, os.path.join(out_dir, "model.npz"))
        if exc.report is not None:
            _write(os.path.join(out_dir, "report.json"), exc.report.to_json())
        raise
    save_model(model, os.path.join(out_dir, "model.npz"))
    _write(os.path.join(out_dir, "report.json"), report.to_json())
    _write(os.path.join(out_dir, "report.csv"), report.to_csv())
    log.info("trained %d epochs; final loss %.6g", len(report.epochs), report.losses[-1])
    return model, report


# -------------------------------------------------------------- predict


def _load_checkpoint(path):
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path}")
    return load_model(path)


def _forecast(cfg: RunConfig, model, dataset):
    info = model.info
    preprocess = cfg.preprocess
    if info.get("scale") is not None:
        preprocess = replace(preprocess, scale=info["scale"])
    repr_ = info.get("input_repr") or cfg.train.resolved(dataset.dims).input_repr
    return forecast_dataset(model, dataset, cfg.window, preprocess, repr_)


def cmd_predict(cfg: RunConfig, data, out, models=(), fuse=None, average=()):
    """Forecast every window of ``data``.

    ``models`` holds one checkpoint; ``fuse=(short, long)`` splices the
    short-term model's first frames onto the long-term forecast;
    ``average`` checkpoints are averaged output-wise (the averaging variant
    of model fusion).
    """
    modes = sum(bool(x) for x in (models, fuse, average))
    if modes != 1:
        raise ConfigError("give exactly one of --model, --fuse or --average")
    if not os.path.exists(data):
        raise ConfigError(f"input dataset not found: {data}")
    dataset = load_dataset(data)
    if models:
        if len(models) != 1:
            raise ConfigError("--model takes one checkpoint; use --average for several")
        preds = _forecast(cfg, _load_checkpoint(models[0]), dataset)
        provenance = {"mode": "single", "models": list(models)}
    elif fuse:
        short, long = fuse
        ps = _forecast(cfg, _load_checkpoint(short), dataset)
        pl = _forecast(cfg, _load_checkpoint(long), dataset)
        preds = fuse_sets(ps, pl, cfg.fusion)
        provenance = {
            "mode": "short_long",
            "short_model": short,
            "long_model": long,
            "short_frames": cfg.fusion.short_frames,
        }
    else:
        sets = [_forecast(cfg, _load_checkpoint(p), dataset) for p in average]
        merged = [average_predictions(group) for group in zip(*(s.predictions for s in sets))]
        preds = replace(sets[0], predictions=merged)
        provenance = {"mode": "average", "models": list(average)}
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    save_predictions(preds, out)
    _write(out + ".fusion.json", cfg.snapshot(command="predict", input=data, fusion=provenance))
    log.info("wrote %d predictions to %s", len(preds.predictions), out)
    return preds


# ----------------------------------------------------------------- eval


def cmd_eval(cfg: RunConfig, preds, gt, out=None):
    """Score prediction files against ``gt``.

    One file gives ``metrics.{json,csv,svg}``; several give one set per
    file stem plus ``selection.json``, the best value per offset and which
    file it came from (the per-metric selection variant of model fusion).
    """
    out_dir = out or os.path.join(cfg.out_dir, "eval")
    for p in list(preds) + [gt]:
        if not os.path.exists(p):
            raise ConfigError(f"file not found: {p}")
    truth = load_dataset(gt)
    reports = {}
    for p in preds:
        report = evaluate(load_predictions(p), truth, cfg.metric)
        name = os.path.splitext(os.path.basename(p))[0]
        if name in reports:
            raise ConfigError(f"prediction files share the name {name!r}")
        reports[name] = report
    os.makedirs(out_dir, exist_ok=True)
    for name, report in reports.items():
        stem = "metrics" if len(reports) == 1 else f"{name}.metrics"
        _write(os.path.join(out_dir, stem + ".json"), report.to_json())
        _write(os.path.join(out_dir, stem + ".csv"), report.to_csv())
        _write(os.path.join(out_dir, stem + ".svg"), report.to_svg())
    if len(reports) > 1:
        _write(os.path.join(out_dir, "selection.json"), _json(fuse_reports(reports).to_dict()))
    _write(os.path.join(out_dir, "eval_config.json"), cfg.snapshot(command="eval", predictions=list(preds), gt=gt))
    return reports


# ---------------------------------------------------------------- sweep


def _sweep_point(cfg_dict, point):
    """Train and evaluate one grid point; runs in a worker process when ``jobs > 1``."""
    from .config import from_dict

    cfg = from_dict(cfg_dict)
    scale, blocks, channels = point
    row = {"scale": scale, "num_blocks": blocks, "hidden_channels": channels}
    try:
        cfg = replace(
            cfg,
            preprocess=replace(cfg.preprocess, scale=scale),
            model=replace(cfg.model, num_blocks=blocks, hidden_channels=channels),
        )
        dataset = load_dataset(cfg.train_data)
        val = load_dataset(cfg.val_data) if cfg.val_data else None
        model, _ = train(dataset, cfg.setup(), cfg.seed, val)
        target = val if val is not None else dataset
        report = evaluate(_forecast(cfg, model, target), target, cfg.metric)
        row.update(status="ok", metric=report.metric, values=list(report.values), average=report.average)
    except Exception as exc:  # a failed member is recorded, the sweep goes on
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_table(rows, offsets):
    head = "| scale | #block | channels | " + " | ".join(f"{o:g} ms" for o in offsets) + " | avg |"
    lines = [head, "|" + "---|" * (4 + len(offsets))]
    for r in rows:
        if r["status"] != "ok":
            continue
        vals = " | ".join(f"{v:.2f}" for v in r["values"])
        lines.append(f"| {r['scale']:g} | {r['num_blocks']} | {r['hidden_channels']} | {vals} | {r['average']:.2f} |")
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg: RunConfig, out=None, jobs=None):
    """Train and score every (scale, blocks, channels) combination with the same seed."""
    cfg.validate_paths("train_data")
    if cfg.val_data is not None:
        cfg.validate_paths("val_data")
    out_dir = out or os.path.join(cfg.out_dir, "sweep")
    os.makedirs(out_dir, exist_ok=True)
    points = cfg.sweep.points()
    jobs = jobs or cfg.sweep.jobs
    doc = cfg.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, [doc] * len(points), points))
    else:
        rows = [_sweep_point(doc, p) for p in points]
    dims = load_dataset(cfg.val_data or cfg.train_data).dims
    offsets = cfg.metric.resolved(dims).offsets_ms
    _write(os.path.join(out_dir, "sweep.json"), _json({"offsets_ms": list(offsets), "rows": rows}))
    _write(os.path.join(out_dir, "sweep.md"), sweep_table(rows, offsets))
    _write(os.path.join(out_dir, "config.json"), cfg.snapshot(command="sweep"))
    for r in rows:
        if r["status"] != "ok":
            log.warning("sweep point %s/%s/%s failed: %s", r["scale"], r["num_blocks"], r["hidden_channels"], r["error"])
    return rows


# ----------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output file (synth, predict) or directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value with a dotted key, e.g. model.num_blocks=8")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gcnforecast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", help="training dataset (overrides train_data)")
    p.add_argument("--val", help="validation dataset (overrides val_data)")
    p.add_argument("--short-term", nargs="?", type=int, const=-1, default=None, metavar="K",
                   help="train the short-term model on the first K forecast frames (default fusion.short_frames)")

    p = sub.add_parser("predict", parents=[common], help="forecast every window of a dataset")
    p.add_argument("--data", required=True, help="input dataset")
    p.add_argument("--model", nargs="+", default=[], help="checkpoint")
    p.add_argument("--fuse", nargs=2, metavar=("SHORT", "LONG"), help="short-term and long-term checkpoints")
    p.add_argument("--average", nargs="+", default=[], help="checkpoints whose outputs are averaged")

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred", nargs="+", required=True, help="prediction file(s)")
    p.add_argument("--gt", required=True, help="ground-truth dataset")

    p = sub.add_parser("sweep", parents=[common], help="grid over scale x blocks x channels")
    p.add_argument("--data", help="training dataset (overrides train_data)")
    p.add_argument("--val", help="evaluation dataset (overrides val_data)")
    p.add_argument("--jobs", type=int, help="worker processes (default sweep.jobs)")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if getattr(args, "data", None) and args.command in ("train", "sweep"):
        overrides.append(f"train_data={json.dumps(args.data)}")
    if getattr(args, "val", None):
        overrides.append(f"val_data={json.dumps(args.val)}")
    cfg = load_config(args.config, overrides, args.seed)

    if args.command == "synth":
        cmd_synth(cfg, args.out)
    elif args.command == "train":
        k = args.short_term
        if k == -1:
            k = cfg.fusion.short_frames
        cmd_train(cfg, args.out, k)
    elif args.command == "predict":
        out = args.out or os.path.join(cfg.out_dir, "predictions.jsonl")
        fuse, average = args.fuse, args.average
        if not (args.model or fuse or average):
            # fall back to the checkpoints named in the fusion section
            fc = cfg.fusion
            pair = (fc.short_model, fc.long_model)
            if all(pair) and fc.extra_models:
                raise ConfigError("fusion config names both a short/long pair and extra_models; pick one")
            if all(pair):
                fuse = list(pair)
            elif fc.extra_models:
                average = list(fc.extra_models)
        cmd_predict(cfg, args.data, out, args.model, fuse, average)
    elif args.command == "eval":
        cmd_eval(cfg, args.pred, args.gt, args.out)
    elif args.command == "sweep":
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cmd_sweep(cfg, args.out, args.jobs)
    return 0


def main(argv=None):
    try:
        return run(argv)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
