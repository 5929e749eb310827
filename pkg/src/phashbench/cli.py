"""Command-line front end.

Subcommands: hash, edit, attack, invert, sweep-edits, snr, report.  Options
resolve as defaults < PHASH_SEED (seed only) < config file < flags, and every
file-producing run writes ``manifest.txt`` — itself a valid config file — so
any run can be repeated exactly with ``--config <output_dir>/manifest.txt``.

Config grammar: one ``key = value`` pair per line; blank lines and lines
starting with ``#`` are ignored; list values are comma-separated; unknown
keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus, harness, image_ops, inversion
from .evasion import DISTORTION_THETA, AttackMode
from .hash_core import HashAlgoId, compute_hash, format_fixture_line


class CliError(Exception):
    """Abort with a message and an explicit exit code."""

    def __init__(self, message: str, code: int = 2) -> None:
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Option tables and config resolution


@dataclass(frozen=True)
class Opt:
    key: str
    typ: str  # int | float | optfloat | str | bool | floats | strs
    default: object
    help: str


_GLOBAL_OPTS = (
    Opt("seed", "int", 0, "master seed; PHASH_SEED is the fallback"),
    Opt("output_dir", "str", "out", "directory for results and the manifest"),
)

_ALGO_OPT = Opt("algo", "str", "dct256", "hash: dct64, dct256, dct1024, mean64")
_CORPUS_OPT = Opt("corpus_path", "str", "", "image directory; empty = built-in corpus")
_MAX_IMAGES_OPT = Opt("max_images", "int", 0, "limit corpus size; 0 = all")

OPTION_TABLES: dict[str, tuple[Opt, ...]] = {
    "hash": (
        _ALGO_OPT,
        Opt("output_dir", "str", "", "write hashes.txt + manifest here; empty = stdout only"),
    ),
    "edit": (
        Opt("op", "str", "", "compress, resize, rotate, or vignette"),
        Opt("quality", "int", 75, "compress: JPEG quality factor"),
        Opt("scale", "float", 1.0, "resize: down/up scale factor"),
        Opt("degrees", "float", 0.0, "rotate: angle"),
        Opt("strength", "float", 0.5, "vignette: darkening strength"),
    ),
    "attack": (
        *_GLOBAL_OPTS,
        _ALGO_OPT,
        _CORPUS_OPT,
        _MAX_IMAGES_OPT,
        Opt("mode", "str", "untargeted", "untargeted or targeted"),
        Opt("method", "strs", ["nes+hsja"], "comma list from: " + ",".join(harness.METHOD_NAMES)),
        Opt("budget1", "int", 3000, "step-one query budget"),
        Opt("budget2", "int", 2000, "step-two query budget (+hsja methods)"),
        Opt("defense_q", "floats", [0.0], "comma list of bit-flip fractions"),
        Opt("d0", "optfloat", None, "distance goal; empty = per-mode default"),
        Opt("theta", "float", DISTORTION_THETA, "distortion gate for success"),
        Opt("workers", "int", 1, "parallel image workers"),
        Opt("save_images", "bool", True, "write adversarial PNGs"),
    ),
    "invert": (
        *_GLOBAL_OPTS,
        _ALGO_OPT,
        Opt("source", "str", "synthetic:regular", "synthetic:regular, synthetic:diverse, dir, or IDX file"),
        Opt("count", "int", 512, "dataset size"),
        Opt("defense_q", "float", 0.0, "bit-flip fraction applied when hashing the dataset"),
        Opt("train_fraction", "float", 0.9, "train split fraction"),
        Opt("features", "int", 32, "decoder channel width"),
        Opt("epochs", "int", 50, "training epochs"),
        Opt("batch_size", "int", 64, "minibatch size"),
        Opt("lr", "float", 0.005, "initial learning rate (cosine schedule)"),
        Opt("weight_decay", "float", 0.01, "decoupled weight decay"),
        Opt("eval_split", "str", "test", "split for the metrics table"),
    ),
    "sweep-edits": (
        *_GLOBAL_OPTS,
        _ALGO_OPT,
        _CORPUS_OPT,
        _MAX_IMAGES_OPT,
        Opt("draws_per_image", "int", 5, "random parameter draws per image per op"),
    ),
    "snr": (
        *_GLOBAL_OPTS,
        _ALGO_OPT,
        _CORPUS_OPT,
        Opt("image", "str", "", "probe image path; empty = first corpus image"),
        Opt("betas", "floats", [0.001, 0.005, 0.01, 0.05], "smoothing radii"),
        Opt("k", "int", 60, "queries per gradient estimate"),
        Opt("trials", "int", 20, "estimates per beta"),
    ),
    "report": (
        Opt("output_dir", "str", "out", "directory for results and the manifest"),
        _ALGO_OPT,
        Opt("input_dir", "str", "", "directory of raw outcome CSVs"),
        Opt("theta", "float", DISTORTION_THETA, "distortion gate for success"),
    ),
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(opt: Opt, text: str):
    text = text.strip()
    try:
        if opt.typ == "int":
            return int(text)
        if opt.typ == "float":
            return float(text)
        if opt.typ == "optfloat":
            return None if text in ("", "none") else float(text)
        if opt.typ == "bool":
            return _parse_bool(text)
        if opt.typ == "floats":
            return [float(part) for part in text.split(",") if part.strip() != ""]
        if opt.typ == "strs":
            return [part.strip() for part in text.split(",") if part.strip() != ""]
        return text
    except ValueError as exc:
        raise CliError(f"bad value for {opt.key}: {exc}") from exc


def _format_value(opt: Opt, value) -> str:
    if opt.typ == "bool":
        return "true" if value else "false"
    if opt.typ == "optfloat":
        return "none" if value is None else repr(float(value))
    if opt.typ == "floats":
        return ",".join(repr(float(v)) for v in value)
    if opt.typ == "strs":
        return ",".join(value)
    if opt.typ == "float":
        return repr(float(value))
    return str(value)


def parse_config_text(text: str, source: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise CliError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        pairs[key.strip()] = value.strip()
    return pairs


def resolve_config(subcommand: str, args: argparse.Namespace) -> dict:
    opts = {opt.key: opt for opt in OPTION_TABLES[subcommand]}
    resolved = {key: opt.default for key, opt in opts.items()}
    if "seed" in resolved and os.environ.get("PHASH_SEED"):
        try:
            resolved["seed"] = int(os.environ["PHASH_SEED"])
        except ValueError as exc:
            raise CliError(f"PHASH_SEED: {exc}") from exc
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        for key, raw in parse_config_text(path.read_text(), str(path)).items():
            if key == "subcommand":
                if raw != subcommand:
                    raise CliError(
                        f"{path}: manifest is for {raw!r}, not {subcommand!r}"
                    )
                continue
            if key not in opts:
                raise CliError(f"{path}: unknown key {key!r} for {subcommand}")
            resolved[key] = _parse_value(opts[key], raw)
    for key in opts:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = _parse_value(opts[key], flag_value)
    return resolved


def write_manifest(out_dir: Path, subcommand: str, cfg: dict) -> Path:
    opts = {opt.key: opt for opt in OPTION_TABLES[subcommand]}
    lines = ["# phashbench manifest; reuse with --config", f"subcommand = {subcommand}"]
    for key in sorted(cfg):
        lines.append(f"{key} = {_format_value(opts[key], cfg[key])}")
    path = out_dir / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_algo(name: str) -> HashAlgoId:
    try:
        return HashAlgoId(name)
    except ValueError:
        valid = ", ".join(a.value for a in HashAlgoId)
        raise CliError(f"unknown algo {name!r}; expected one of: {valid}") from None


def _load_corpus(cfg: dict) -> list[tuple[str, np.ndarray]]:
    directory = cfg.get("corpus_path") or corpus.default_corpus_dir()
    try:
        images = corpus.load_corpus(directory)
    except (OSError, image_ops.ImageOpsError) as exc:
        raise CliError(f"cannot load corpus from {directory}: {exc}") from exc
    if not images:
        raise CliError(f"no images found in {directory}")
    limit = int(cfg.get("max_images") or 0)
    if limit > 0:
        images = images[:limit]
    return images


def _ensure_out_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_hash(args: argparse.Namespace) -> int:
    cfg = resolve_config("hash", args)
    algo = _parse_algo(cfg["algo"])
    if not args.images:
        raise CliError("hash: at least one image path required")
    lines = []
    for image_path in args.images:
        try:
            img = image_ops.load_image(image_path)
        except (OSError, image_ops.ImageOpsError) as exc:
            raise CliError(f"{image_path}: {exc}") from exc
        digest = compute_hash(algo, img)
        lines.append(format_fixture_line(Path(image_path).name, digest))
    for line in lines:
        print(line)
    if cfg["output_dir"]:
        out = _ensure_out_dir(cfg)
        (out / "hashes.txt").write_text("\n".join(lines) + "\n")
        write_manifest(out, "hash", cfg)
    return 0


def _build_edit_op(cfg: dict) -> image_ops.EditOp:
    op = cfg["op"]
    try:
        if op == "compress":
            return image_ops.Compress(quality=cfg["quality"])
        if op == "resize":
            return image_ops.Resize(scale=cfg["scale"])
        if op == "rotate":
            return image_ops.Rotate(degrees=cfg["degrees"])
        if op == "vignette":
            return image_ops.Vignette(strength=cfg["strength"])
    except image_ops.ParameterRangeError as exc:
        raise CliError(f"edit: {exc}") from exc
    raise CliError(f"edit: unknown op {op!r}")


def cmd_edit(args: argparse.Namespace) -> int:
    cfg = resolve_config("edit", args)
    op = _build_edit_op(cfg)
    try:
        img = image_ops.load_image(args.input)
    except (OSError, image_ops.ImageOpsError) as exc:
        raise CliError(f"{args.input}: {exc}") from exc
    edited = image_ops.apply_edit(img, op)
    try:
        image_ops.save_image(args.output, edited)
    except (OSError, image_ops.ImageOpsError) as exc:
        raise CliError(f"{args.output}: {exc}") from exc
    print(f"{args.output}: {harness._describe_op(op)}")
    return 0


def cmd_attack(args: argparse.Namespace) -> int:
    cfg = resolve_config("attack", args)
    algo = _parse_algo(cfg["algo"])
    try:
        mode = AttackMode(cfg["mode"])
    except ValueError:
        raise CliError(f"unknown mode {cfg['mode']!r}") from None
    for name in cfg["method"]:
        try:
            harness.parse_method(name)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    images = _load_corpus(cfg)
    out = _ensure_out_dir(cfg)
    write_manifest(out, "attack", cfg)
    try:
        result = harness.run_attack_campaign(
            algo,
            images,
            cfg["method"],
            mode,
            q_levels=tuple(cfg["defense_q"]),
            budget1=cfg["budget1"],
            budget2=cfg["budget2"],
            seed=cfg["seed"],
            d0=cfg["d0"],
            theta=cfg["theta"],
            workers=cfg["workers"],
        )
    except ValueError as exc:
        raise CliError(f"attack: {exc}") from exc
    harness.write_outcomes_csv(out / "outcomes.csv", result.items)
    harness.write_asr_reports_csv(out / "reports.csv", result.reports)
    harness.write_asr_reports_json(out / "reports.json", result.reports)
    (out / "asr.svg").write_text(
        harness.asr_reports_chart(result.reports, f"{algo.value} {mode.value} ASR")
    )
    if cfg["save_images"]:
        img_dir = out / "images"
        img_dir.mkdir(exist_ok=True)
        for item in result.items:
            stem = f"{item.method}_q{harness._fmt_q(item.q)}_{Path(item.image_name).stem}"
            image_ops.save_image(img_dir / f"{stem}.png", item.outcome.adv_image)
    for rep in result.reports:
        cells = "  ".join(f"ASR({p:g})={rep.asr[p]:.2f}" for p in sorted(rep.asr))
        print(f"{rep.method} q={rep.q:g}: {cells}  mean_queries={rep.mean_queries:.0f}")
    print(f"wrote {out / 'outcomes.csv'}")
    if result.errors:
        for item in result.errors:
            print(
                f"error: {item.image_name} {item.method} q={item.q:g}: {item.error}",
                file=sys.stderr,
            )
        return 1
    return 0


def _reconstruction_grid(model, ds, count: int = 8) -> np.ndarray:
    inputs, targets = ds.test_pairs()
    if inputs.shape[0] == 0:
        inputs, targets = ds.train_pairs()
    count = min(count, inputs.shape[0])
    recon = model.forward_batch(inputs[:count])
    sep_v = np.full((32, 2, 1), 0.5)
    sep_h = np.full((2, count * 32 + (count - 1) * 2, 1), 0.5)

    def row(imgs: np.ndarray) -> np.ndarray:
        tiles: list[np.ndarray] = []
        for i in range(count):
            if i:
                tiles.append(sep_v)
            tiles.append(np.clip(imgs[i], 0.0, 1.0))
        return np.concatenate(tiles, axis=1)

    return np.concatenate([row(targets[:count]), sep_h, row(recon)], axis=0)


def cmd_invert(args: argparse.Namespace) -> int:
    cfg = resolve_config("invert", args)
    algo = _parse_algo(cfg["algo"])
    try:
        ds = inversion.build_dataset(
            cfg["source"],
            algo,
            count=cfg["count"],
            seed=cfg["seed"],
            defense_q=cfg["defense_q"],
            train_fraction=cfg["train_fraction"],
        )
    except (inversion.EmptySourceError, inversion.ShapeMismatchError, OSError) as exc:
        raise CliError(f"invert: {exc}") from exc
    out = _ensure_out_dir(cfg)
    write_manifest(out, "invert", cfg)
    model = inversion.DecoderModel(
        algo.n_bits, features=cfg["features"], init_seed=cfg["seed"]
    )
    train_cfg = inversion.TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        initial_lr=cfg["lr"],
        weight_decay=cfg["weight_decay"],
        seed=cfg["seed"],
    )
    try:
        result = inversion.train(model, ds, train_cfg)
    except inversion.DivergenceError as exc:
        raise CliError(f"training diverged: {exc}", code=1) from exc
    inversion.save_checkpoint(out / "decoder.ckpt", model)
    with open(out / "loss.csv", "w", newline="") as fh:
        fh.write("epoch,loss,lr\n")
        for epoch, (loss, lr) in enumerate(zip(result.loss_curve, result.lr_curve)):
            fh.write(f"{epoch},{loss:.8f},{lr:.8f}\n")
    report = inversion.evaluate_inversion(model, ds, split=cfg["eval_split"])
    metrics = {
        "split": cfg["eval_split"],
        "n": len(report.l2_values),
        "l2_mean": round(report.mean_l2, 6),
        "l2_std": round(report.std_l2, 6),
        "ssim_mean": round(report.mean_ssim, 6),
        "ssim_std": round(report.std_ssim, 6),
        "final_loss": round(result.loss_curve[-1], 8),
        "n_params": result.n_params,
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    image_ops.save_image(out / "reconstructions.png", _reconstruction_grid(model, ds))
    print(
        f"L2 {report.mean_l2:.4f} +/- {report.std_l2:.4f}  "
        f"SSIM {report.mean_ssim:.4f} +/- {report.std_ssim:.4f}  "
        f"({cfg['eval_split']} split, n={len(report.l2_values)})"
    )
    print(f"wrote {out / 'decoder.ckpt'}")
    return 0


def cmd_sweep_edits(args: argparse.Namespace) -> int:
    cfg = resolve_config("sweep-edits", args)
    algo = _parse_algo(cfg["algo"])
    images = _load_corpus(cfg)
    out = _ensure_out_dir(cfg)
    write_manifest(out, "sweep-edits", cfg)
    report = harness.run_edit_sweep(
        algo, images, seed=cfg["seed"], draws_per_image=cfg["draws_per_image"]
    )
    harness.write_edit_raw_csv(out / "edits_raw.csv", report)
    harness.write_edit_report_csv(out / "edits_asr.csv", report)
    harness.write_edit_report_json(out / "edits.json", report)
    (out / "edits.svg").write_text(harness.edit_report_chart(report))
    for entry in report.entries:
        cells = "  ".join(f"ASR({p:g})={entry.asr[p]:.2f}" for p in sorted(entry.asr))
        print(f"{entry.op_name}: {cells}")
    print(f"wrote {out / 'edits_asr.csv'}")
    return 0


def cmd_snr(args: argparse.Namespace) -> int:
    cfg = resolve_config("snr", args)
    algo = _parse_algo(cfg["algo"])
    if not cfg["betas"]:
        raise CliError("snr: empty beta grid")
    if cfg["image"]:
        try:
            img = image_ops.load_image(cfg["image"])
        except (OSError, image_ops.ImageOpsError) as exc:
            raise CliError(f"{cfg['image']}: {exc}") from exc
    else:
        img = _load_corpus(cfg)[0][1]
    out = _ensure_out_dir(cfg)
    write_manifest(out, "snr", cfg)
    table = harness.gradient_snr_experiment(
        algo,
        img,
        betas=tuple(cfg["betas"]),
        k=cfg["k"],
        trials=cfg["trials"],
        seed=cfg["seed"],
    )
    harness.write_snr_csv(out / "snr.csv", table)
    if any(math.isfinite(v) for v in table.values()):
        (out / "snr.svg").write_text(harness.snr_chart(table))
    for beta in sorted(table):
        print(f"beta={beta:g}: {table[beta]:.2f} dB")
    print(f"wrote {out / 'snr.csv'}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = resolve_config("report", args)
    if not cfg["input_dir"]:
        raise CliError("report: input_dir is required")
    in_dir = Path(cfg["input_dir"])
    if not in_dir.is_dir():
        raise CliError(f"report: {in_dir} is not a directory")
    csv_paths = sorted(in_dir.glob("*.csv"))
    if not csv_paths:
        raise CliError(f"report: no CSV files in {in_dir}")
    # Other workflows drop their own CSVs next to outcomes; only files with
    # the raw-outcome header participate, anything unrecognizable is an error.
    records = []
    matched = 0
    for path in csv_paths:
        try:
            if len(csv_paths) > 1 and not harness.is_outcomes_csv(path):
                continue
            matched += 1
            records.extend(harness.read_outcomes_csv(path))
        except harness.ReportFormatError as exc:
            raise CliError(f"report: {exc}") from exc
    if not matched:
        raise CliError(f"report: no outcome CSVs in {in_dir}")
    try:
        reports = harness.aggregate_outcome_records(records, cfg["algo"], cfg["theta"])
    except (harness.ReportFormatError, ValueError) as exc:
        raise CliError(f"report: {exc}") from exc
    out = _ensure_out_dir(cfg)
    write_manifest(out, "report", cfg)
    harness.write_asr_reports_csv(out / "reports.csv", reports)
    harness.write_asr_reports_json(out / "reports.json", reports)
    (out / "asr.svg").write_text(
        harness.asr_reports_chart(reports, f"{cfg['algo']} aggregated ASR")
    )
    for rep in reports:
        cells = "  ".join(f"ASR({p:g})={rep.asr[p]:.2f}" for p in sorted(rep.asr))
        print(f"{rep.method} {rep.mode.value} q={rep.q:g}: {cells} (m={rep.m})")
    print(f"wrote {out / 'reports.csv'}")
    return 0


# ---------------------------------------------------------------------------
# Entry point


_HANDLERS = {
    "hash": cmd_hash,
    "edit": cmd_edit,
    "attack": cmd_attack,
    "invert": cmd_invert,
    "sweep-edits": cmd_sweep_edits,
    "snr": cmd_snr,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phashbench",
        description="Perceptual-hash security workbench",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, opts in OPTION_TABLES.items():
        p = sub.add_parser(name, help=f"{name} workflow")
        p.add_argument("--config", default=None, help="key = value config file")
        for opt in opts:
            flag = "--" + opt.key.replace("_", "-")
            p.add_argument(flag, dest=opt.key, default=None, help=opt.help)
        if name == "hash":
            p.add_argument("images", nargs="*", help="image files to hash")
        if name == "edit":
            p.add_argument("input", help="source image")
            p.add_argument("output", help="edited image destination")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.subcommand]
    try:
        return handler(args)
    except CliError as exc:
        print(f"phashbench: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"phashbench: unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
