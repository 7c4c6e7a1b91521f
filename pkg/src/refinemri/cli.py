"""Command-line workflow: data generation, training, reconstruction,
evaluation and reporting.

Options can also come from a plain-text file passed with ``--config``::

    # comments start with '#'
    epochs = 20
    preset = desk

Flags given on the command line override values from the file. Log verbosity
is read from the ``REFINEMRI_LOG`` environment variable (default ``INFO``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("refinemri")

COMMANDS = ("gen-data", "train-recon", "train-refine", "train-seg", "ablate-joint", "recon", "eval", "report")


class CliError(Exception):
    pass


# -- config files ------------------------------------------------------------------


def _parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return json.loads(text)
    except ValueError:
        return text


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _parse_value(value)
    return out


def write_config_file(path, values: dict) -> None:
    lines = [f"{k} = {json.dumps(v)}" for k, v in sorted(values.items())]
    Path(path).write_text("\n".join(lines) + "\n")


# -- parser -------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (default 0)")


def _train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset directory written by gen-data")
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", action="store_true", default=None, help="continue from <out>/state")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--ratio", type=float, help="fraction of k-space columns kept (0.25 = 4x)")
    p.add_argument("--noise-std", type=float)
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--val-limit", type=int, help="validate on the first N validation images")
    p.add_argument("--max-steps", type=int, help="stop (and save state) after this many steps")
    p.add_argument("--train-limit", type=int, help="train on the first N training images")


def _eval_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--ratio", type=float)
    p.add_argument("--mask-seed", type=int, help="seed of the fixed per-image evaluation masks")
    p.add_argument("--limit", type=int, help="use the first N images of the split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refinemri", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset")
    _common(p)
    p.add_argument("--spec", help="key = value phantom specification file")
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--size", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-val", type=int)
    p.add_argument("--n-test", type=int)

    for name, text in (
        ("train-recon", "stage 1: train the reconstruction cascade"),
        ("train-refine", "stage 2: train the gated refiner on a frozen cascade"),
        ("train-seg", "train the ROI segmenter"),
        ("ablate-joint", "train cascade and refiner jointly (ablation)"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        _train_flags(p)
        if name == "train-refine":
            p.add_argument("--stage1-ckpt", help="stage-1 checkpoint directory")

    p = sub.add_parser("recon", help="write reconstructions of a split")
    _common(p)
    _eval_flags(p)
    p.add_argument("--ckpt", help="stage-1 (or joint) checkpoint")
    p.add_argument("--refine-ckpt", help="stage-2 checkpoint")

    p = sub.add_parser("eval", help="PSNR/SSIM/Dice/SIS reports per method")
    _common(p)
    _eval_flags(p)
    p.add_argument("--ckpts", nargs="*", help="checkpoints as DIR or NAME=DIR")
    p.add_argument("--seg-ckpt", help="segmenter checkpoint (enables Dice and SIS)")
    p.add_argument("--identity", action="store_true", default=None, help="also evaluate the ground truth as a method")
    p.add_argument("--panels", type=int, help="number of images saved for report panels (default 4)")

    p = sub.add_parser("report", help="tables and plots from eval directories")
    _common(p)
    p.add_argument("--eval-dirs", nargs="+", help="directories written by eval")
    p.add_argument("--logs", nargs="*", help="training output directories with train_log.jsonl")
    p.add_argument("--out", help="output directory")
    return parser


DEFAULTS = {
    "seed": 0,
    "ratio": 0.25,
    "mask_seed": 1000,
    "split": "test",
    "preset": "desk",
    "noise_std": 0.0,
    "panels": 4,
    "resume": False,
    "identity": False,
}


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < explicit flags."""
    values = {k: v for k, v in vars(args).items() if k not in ("config",)}
    file_values = read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - set(values)
    if unknown:
        raise CliError(f"unknown key(s) in {args.config} for {args.command}: {', '.join(sorted(unknown))}")
    resolved = {}
    for k, v in values.items():
        if v is not None:
            resolved[k] = v
        elif k in file_values:
            resolved[k] = file_values[k]
        elif k in DEFAULTS:
            resolved[k] = DEFAULTS[k]
        else:
            resolved[k] = None
    return resolved


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if cfg.get(k) in (None, [], "")]
    if missing:
        raise CliError(f"{cfg['command']}: missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _write_resolved(out: Path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")


def _load_data(path):
    from .phantoms import load_dataset

    if not path or not (Path(path) / "manifest.json").exists():
        raise CliError(f"dataset not found: {path} (run gen-data first)")
    return load_dataset(path)


# -- commands ---------------------------------------------------------------------------


def cmd_gen_data(cfg: dict) -> None:
    from .phantoms import PhantomSpec, generate_dataset, save_dataset

    _require(cfg, "out")
    spec_values = read_config_file(cfg["spec"]) if cfg.get("spec") else {}
    counts = dict(spec_values.pop("counts", {"train": 600, "val": 150, "test": 150}))
    for split in ("train", "val", "test"):
        if f"n_{split}" in spec_values:
            counts[split] = spec_values.pop(f"n_{split}")
        if cfg.get(f"n_{split}") is not None:
            counts[split] = cfg[f"n_{split}"]
    if cfg.get("size") is not None:
        spec_values["size"] = cfg["size"]
    spec_values["seed"] = cfg["seed"]
    try:
        spec = PhantomSpec(counts=counts, **spec_values)
    except TypeError as exc:
        raise CliError(f"invalid phantom specification: {exc}") from None
    out = Path(cfg["out"])
    save_dataset(generate_dataset(spec), out)
    _write_resolved(out, cfg)
    print(f"dataset written to {out}")


def _train_config(cfg: dict, stage: str):
    from .training import TrainConfig

    keys = ("epochs", "batch_size", "lr", "beta1", "beta2", "ratio", "noise_std", "preset", "val_limit", "max_steps", "seed")
    kwargs = {k: cfg[k] for k in keys if cfg.get(k) is not None}
    return TrainConfig(stage=stage, dataset=str(cfg["data"]), out_dir=str(cfg["out"]), **kwargs)


def _limit_train(dataset, limit):
    if limit:
        dataset.train = dataset.train.subset(np.arange(min(limit, len(dataset.train))))
    return dataset


def cmd_train(cfg: dict) -> None:
    from . import training as T

    _require(cfg, "data", "out")
    stage = {"train-recon": "recon", "train-refine": "refine", "train-seg": "segment", "ablate-joint": "joint"}[cfg["command"]]
    dataset = _limit_train(_load_data(cfg["data"]), cfg.get("train_limit"))
    tcfg = _train_config(cfg, stage)
    out = Path(cfg["out"])
    if cfg["resume"] and not (out / "state" / "manifest.json").exists():
        raise CliError(f"--resume given but no training state in {out / 'state'}")
    if not cfg["resume"] and (out / "train_log.jsonl").exists():
        (out / "train_log.jsonl").unlink()
    _write_resolved(out, {**cfg, "train": tcfg.to_dict()})
    if stage == "refine":
        _require(cfg, "stage1_ckpt")
        trainer = T.RefineTrainer(tcfg, dataset, cfg["stage1_ckpt"])
    else:
        trainer = {"recon": T.ReconTrainer, "segment": T.SegmentTrainer, "joint": T.JointTrainer}[stage](tcfg, dataset)
    if cfg["resume"]:
        trainer.load_state(out / "state")
    trainer.fit()
    print(f"best checkpoint: {trainer.best_path}")


def _methods(cfg: dict) -> tuple[dict, dict]:
    from .evaluation import checkpoint_method, identity_method

    methods, info = {}, {}
    for entry in cfg.get("ckpts") or []:
        name, _, path = entry.rpartition("=")
        if not Path(path, "manifest.json").exists():
            raise CliError(f"checkpoint not found: {path}")
        fn, meta = checkpoint_method(path)
        name = name or {"stage1": "stage1", "stage2": "two_stage", "joint": "joint"}.get(meta["kind"], meta["kind"])
        if name in methods:
            raise CliError(f"duplicate method name {name!r}; use NAME=DIR")
        methods[name], info[name] = fn, meta
    if cfg.get("identity"):
        methods["identity"] = identity_method
    return methods, info


def _split(cfg: dict):
    dataset = _load_data(cfg["data"])
    split = dataset.split(cfg["split"])
    if cfg.get("limit"):
        split = split.subset(np.arange(min(cfg["limit"], len(split))))
    return dataset, split


def cmd_eval(cfg: dict) -> None:
    from .evaluation import evaluate, reconstruct_split, segmenter_fn, checkpoint_id

    _require(cfg, "data", "out")
    dataset, split = _split(cfg)
    methods, info = _methods(cfg)
    seg = None
    if cfg.get("seg_ckpt"):
        if not Path(cfg["seg_ckpt"], "manifest.json").exists():
            raise CliError(f"segmenter checkpoint not found: {cfg['seg_ckpt']}")
        seg = segmenter_fn(cfg["seg_ckpt"])
    provenance = {"dataset_hash": dataset.content_hash(), "seed": cfg["seed"], "split": cfg["split"]}
    if seg is not None:
        provenance["segmenter_id"] = checkpoint_id(cfg["seg_ckpt"])
    reports = evaluate(methods, split, cfg["ratio"], cfg["mask_seed"], seg, provenance, info)
    out = Path(cfg["out"])
    _write_resolved(out, cfg)
    for report in reports.values():
        report.write(out)
    _write_summary(out / "summary.csv", reports)

    n = min(int(cfg["panels"] or 0), len(split))
    if n:
        from .evaluation import zero_filled_method

        panels = out / "panels"
        panels.mkdir(exist_ok=True)
        sub = split.subset(np.arange(n))
        all_methods = {"zero_filled": zero_filled_method, **methods}
        gt = None
        for name, fn in all_methods.items():
            gt, rec = reconstruct_split(fn, sub, cfg["ratio"], cfg["mask_seed"])
            np.save(panels / f"{name}.npy", rec.astype(np.float32))
            if seg is not None:
                np.save(panels / f"{name}.seg.npy", seg(rec.astype(np.float32)))
        np.save(panels / "ground_truth.npy", gt.astype(np.float32))
        np.save(panels / "labels.npy", sub.labels)
        (panels / "order.json").write_text(json.dumps(list(all_methods)))
    for name, r in reports.items():
        p = r.aggregates["psnr_db"]["mean"]
        extra = f", SIS {r.sis:.4f}" if r.sis is not None else ""
        print(f"{name}: PSNR {p:.3f} dB, SSIM {r.aggregates['ssim']['mean']:.4f}{extra}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return repr(float(v)) if isinstance(v, float) else v


def _write_summary(path: Path, reports: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "sis", "n"])
        for name, r in reports.items():
            a = r.aggregates
            w.writerow([name, _fmt(a["psnr_db"]["mean"]), _fmt(a["psnr_db"]["std"]), _fmt(a["ssim"]["mean"]), _fmt(a["ssim"]["std"]), _fmt(r.sis), a["psnr_db"]["n"]])


def cmd_recon(cfg: dict) -> None:
    from .evaluation import checkpoint_method, zero_filled_method
    from .kspace import from_channels, save_complex
    from .phantoms import batch_iterator
    from .training import evaluation_batch

    _require(cfg, "data", "out", "ckpt")
    _, split = _split(cfg)
    methods = {"zero_filled": zero_filled_method}
    for name, key in (("stage1", "ckpt"), ("refined", "refine_ckpt")):
        if cfg.get(key):
            if not Path(cfg[key], "manifest.json").exists():
                raise CliError(f"checkpoint not found: {cfg[key]}")
            methods[name], _ = checkpoint_method(cfg[key])
    out = Path(cfg["out"])
    _write_resolved(out, cfg)
    for name in methods:
        (out / name).mkdir(parents=True, exist_ok=True)
    for index in batch_iterator(split, 16, shuffle=False):
        batch = evaluation_batch(split, index, cfg["ratio"], cfg["mask_seed"])
        for name, fn in methods.items():
            images = from_channels(fn(batch))
            for i, img in zip(index, images):
                save_complex(out / name / f"{split.ids[i]}.c64", img, split.intensity_scale)
    print(f"{len(split)} images x {len(methods)} methods written to {out}")


def cmd_report(cfg: dict) -> None:
    from .metrics import read_report
    from . import plots

    _require(cfg, "eval_dirs", "out")
    out = Path(cfg["out"])
    for d in cfg["eval_dirs"]:
        if not Path(d).is_dir():
            raise CliError(f"eval directory not found: {d}")
    out.mkdir(parents=True, exist_ok=True)
    rows, per_image = [], {}
    for d in cfg["eval_dirs"]:
        d = Path(d)
        files = sorted(p for p in d.glob("*.json") if p.name != "run_config.json")
        if not files:
            raise CliError(f"no metric reports in {d}")
        for f in files:
            rep = read_report(f)
            a = rep["aggregates"]
            rows.append([str(d), rep["method"], _fmt(a["psnr_db"]["mean"]), _fmt(a["psnr_db"]["std"]), _fmt(a["ssim"]["mean"]), _fmt(a["ssim"]["std"]), _fmt(rep.get("sis")), a["psnr_db"]["n"]])
            per_image[f"{d.name}/{rep['method']}" if len(cfg["eval_dirs"]) > 1 else rep["method"]] = rep["records"]
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eval_dir", "method", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "sis", "n"])
        w.writerows(rows)
    plots.metric_distributions(per_image, out / "metric_distributions.png")
    for d in cfg["eval_dirs"]:
        panels = Path(d) / "panels"
        if panels.is_dir():
            plots.reconstruction_panels(panels, out / f"panels_{Path(d).name}.png")
    logs = {}
    for d in cfg.get("logs") or []:
        f = Path(d) / "train_log.jsonl"
        if not f.exists():
            raise CliError(f"training log not found: {f}")
        logs[Path(d).name] = [json.loads(line) for line in f.read_text().splitlines() if line.strip()]
    if logs:
        plots.loss_curves(logs, out / "loss_curves.png")
    print(f"report written to {out}")


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-recon": cmd_train,
    "train-refine": cmd_train,
    "train-seg": cmd_train,
    "ablate-joint": cmd_train,
    "recon": cmd_recon,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("REFINEMRI_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        HANDLERS[cfg["command"]](cfg)
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # one-line diagnostic for every failure
        log.debug("traceback", exc_info=True)
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
