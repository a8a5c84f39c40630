"""Command-line entry point: ``camotion <group> <action> [options]``.

Options may also come from a JSON run config (``--config`` or the
``CAMOTION_CONFIG`` environment variable); explicit flags win over config
values. Failures print ``{"error": code, "message": ...}`` on stderr and
exit with status 1.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import optics
from .attack import leakage
from .clip import load_clip_dir, save_clip_dir
from .errors import CamotionError, ParameterError, SchemaError
from .features import StrideConfig, extract_mstrs, write_stack
from .learn import REGIMES, Hyper, MaskRegime, evaluate, load_model, save_model, train
from .mask import FAMILIES, generate_mask, is_broadband, load_mask, save_mask, spectral_report
from .motion import peak_offset, t_map
from .optics import CaptureConfig, capture, capture_clip
from .pgm import read_pgm, write_pgm
from .synth import CLASSES, benchmark_specs, smooth_texture, write_benchmark

CONFIG_ENV = "CAMOTION_CONFIG"

_section = {"type": "object", "additionalProperties": False}
RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "capture": dict(_section, properties={
            "boundary_effect": {"type": "boolean"},
            "noise_sigma": {"type": "number", "minimum": 0},
            "normalize_output": {"type": "boolean"},
        }),
        "stride": dict(_section, properties={
            "strides": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "clip_length": {"type": "integer", "minimum": 2},
            "sim_size": {"type": "integer", "minimum": 8},
            "crop_size": {"type": "integer", "minimum": 8},
        }),
        "regime": dict(_section, properties={
            "mode": {"enum": list(REGIMES)},
            "train_seed": {"type": "integer", "minimum": 0},
            "val_seed": {"type": "integer", "minimum": 0},
        }),
        "hyper": dict(_section, properties={
            "epochs": {"type": "integer", "minimum": 0},
            "batch_size": {"type": "integer", "minimum": 1},
            "lr": {"type": "number", "exclusiveMinimum": 0},
            "beta1": {"type": "number"},
            "beta2": {"type": "number"},
            "l2": {"type": "number", "minimum": 0},
            "pool": {"type": "integer", "minimum": 1},
            "input": {"enum": ["mstrs", "t", "ca"]},
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "augment": {"type": "boolean"},
            "aug_views": {"type": ["integer", "null"], "minimum": 1},
        }),
        "paths": dict(_section, properties={
            "data": {"type": "string"},
            "out": {"type": "string"},
            "model": {"type": "string"},
        }),
    },
}


def load_run_config(path) -> dict:
    """Read and schema-check a run config; unknown keys are rejected."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(doc, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SchemaError(f"{path}: {where}: {exc.message}") from exc
    return doc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _pick(args, name, config, section, key=None, default=None):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(section, {}).get(key or name, default)


def _capture_cfg(args, config) -> CaptureConfig:
    return CaptureConfig(
        boundary_effect=bool(_pick(args, "boundary_effect", config, "capture", default=False)),
        noise_sigma=float(_pick(args, "noise", config, "capture", "noise_sigma", 0.0)),
        normalize_output=bool(config.get("capture", {}).get("normalize_output", True)),
        seed=args.seed,
    )


def _stride_cfg(args, config, frame_size: int | None = None) -> StrideConfig:
    st = config.get("stride", {})
    sim = _pick(args, "sim_size", config, "stride", default=frame_size or 256)
    crop = _pick(args, "crop_size", config, "stride", default=None)
    if crop is None:
        crop = 224 if sim == 256 else max(8, sim * 7 // 8)
    return StrideConfig(
        strides=tuple(args.strides) if getattr(args, "strides", None) else tuple(st.get("strides", (2, 3, 4, 6))),
        clip_length=_pick(args, "clip_len", config, "stride", "clip_length", 13),
        sim_size=sim,
        crop_size=crop,
    )


def _hyper(args, config) -> Hyper:
    values = dict(config.get("hyper", {}))
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"), ("pool", "pool"),
                      ("input", "input"), ("aug_views", "aug_views")):
        if getattr(args, flag, None) is not None:
            values[key] = getattr(args, flag)
    values["seed"] = args.seed
    values["boundary_effect"] = bool(_pick(args, "boundary_effect", config, "capture", default=False))
    return Hyper(**values)


# ---- subcommands -------------------------------------------------------------


def cmd_mask_gen(args, config):
    h, w = args.size
    mask = generate_mask(args.family, h, w, args.open_fraction, args.seed)
    save_mask(mask, args.out)
    _emit({"out": str(args.out), "family": mask.family, "open_fraction": mask.open_fraction}, None)


def cmd_mask_report(args, config):
    mask = load_mask(args.mask)
    rep = spectral_report(mask, args.threshold)
    doc = dataclasses.asdict(rep)
    doc["broadband"] = bool(is_broadband(rep, args.max_fraction))
    _emit(doc, args.out)


def cmd_sim_capture(args, config):
    mask = load_mask(args.mask)
    cfg = _capture_cfg(args, config)
    src = Path(args.input)
    if src.is_dir():
        out = capture_clip(load_clip_dir(src), mask, cfg)
        peak = out.frames.max()
        frames = out.frames / peak if peak > 0 else out.frames
        save_clip_dir(out.replace(frames=np.clip(frames, 0.0, 1.0)), args.out, bit_depth=16)
    else:
        frame, _ = read_pgm(src)
        d = capture(frame, mask, cfg)
        peak = d.max()
        write_pgm(args.out, d / peak if peak > 0 else d, bit_depth=16)
    _emit({"out": str(args.out)}, None)


def cmd_synth_gen(args, config):
    classes = tuple(args.classes) if args.classes else CLASSES
    unknown = set(classes) - set(CLASSES)
    if unknown:
        raise ParameterError(f"unknown classes {sorted(unknown)}; expected a subset of {CLASSES}")
    specs = benchmark_specs(args.per_class, args.size, args.length, args.seed, classes)
    manifest = write_benchmark(args.out, specs, split_seed=args.seed)
    _emit({"manifest": str(manifest), "clips": len(specs)}, None)


def cmd_feat_extract(args, config):
    clip = load_clip_dir(args.clip)
    h, w = clip.frame_shape
    if h != w:
        raise ParameterError(f"square frames required, got {h}x{w}")
    cfg = _stride_cfg(args, config, frame_size=h)
    frames = clip.frames
    if args.mask:
        frames = capture_clip(clip, load_mask(args.mask), _capture_cfg(args, config)).frames
    eps = float(config.get("hyper", {}).get("epsilon", 1e-3))
    kinds = ("T",) if args.t_only else ("T", "RS")
    stack = extract_mstrs(frames, cfg, eps, start=args.start, kinds=kinds)
    write_stack(stack, args.out)
    _emit({"out": str(args.out), "shape": list(stack.tensor.shape)}, None)


def _benchmark(path):
    root = Path(path)
    try:
        manifest = json.loads((root / "benchmark.json").read_text())
    except FileNotFoundError as exc:
        raise CamotionError(f"{root}: missing benchmark.json") from exc
    by_dir = {c["dir"]: c for c in manifest["clips"]}

    def split(name):
        return [load_clip_dir(root / d).replace(label=by_dir[d]["label"]) for d in manifest["splits"][name]]

    return manifest, split


def cmd_learn_train(args, config):
    data = args.data or config.get("paths", {}).get("data")
    if not data:
        raise ParameterError("--data (or paths.data in the config) is required")
    manifest, split = _benchmark(data)
    train_clips, val_clips = split("train"), split("val")
    cfg = _stride_cfg(args, config, frame_size=train_clips[0].frame_shape[0])
    rc = config.get("regime", {})
    regime = MaskRegime(args.regime or rc.get("mode", "dm1dm2"), rc.get("train_seed", 1), rc.get("val_seed", 2))
    model, report = train(train_clips, val_clips, cfg, regime, _hyper(args, config), classes=manifest["classes"])
    out = Path(args.out)
    save_model(model, out)
    report.write(out.with_suffix(".report.json"), out.with_suffix(".epochs.csv"))
    _emit({"model": str(out), "final": report.epochs[-1] if report.epochs else None}, None)


def cmd_learn_eval(args, config):
    model = load_model(args.model)
    _, split = _benchmark(args.data)
    clips = split(args.split)
    scales = tuple(args.scales) if args.scales else (None,)
    rep = evaluate(model, clips, args.mask_seed, scales=scales, n_starts=args.starts)
    _emit(rep.to_json(), args.out)


def cmd_attack_leak(args, config):
    scene, _ = read_pgm(args.scene)
    ca, _ = read_pgm(args.ca)
    _emit(leakage(scene, ca).to_dict(), args.out)


def invariance_suite(n_masks: int, n_shifts: int, size: int = 256, seed: int = 0, epsilon: float = 1e-3,
                     max_shift: int = 20) -> dict:
    """Compare T maps of CA and raw frame pairs over masks and global shifts."""
    rng = np.random.default_rng(seed)
    scene = smooth_texture((size, size), rng, exponent=2.0)
    same, rel = [], []
    for m in range(n_masks):
        mask = generate_mask("pseudorandom", size, size, 0.5, int(rng.integers(2**31)))
        d1 = capture(scene, mask)
        for _ in range(n_shifts):
            shift = tuple(int(v) for v in rng.integers(-max_shift, max_shift + 1, 2))
            moved = np.roll(scene, shift, axis=(0, 1))
            raw = t_map(scene, moved, epsilon)
            ca = t_map(d1, capture(moved, mask), epsilon)
            same.append(peak_offset(raw) == peak_offset(ca))
            rel.append(float(np.linalg.norm(ca.values - raw.values) / np.linalg.norm(raw.values)))
    rel = np.array(rel)
    return {
        "cases": len(rel),
        "argmax_agreement": float(np.mean(same)),
        "max_rel_l2": float(rel.max()),
        "p95_rel_l2": float(np.percentile(rel, 95)),
        "fraction_within_0.1": float(np.mean(rel <= 0.1)),
    }


def cmd_verify_invariance(args, config):
    stats = invariance_suite(args.masks, args.shifts, args.size, args.seed)
    stats["pass"] = stats["argmax_agreement"] == 1.0 and stats["fraction_within_0.1"] >= 0.95
    _emit(stats, args.out)
    if not stats["pass"]:
        raise CamotionError("mask invariance check failed")


# ---- parser ------------------------------------------------------------------


def _size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}") from exc
    if len(values) == 1:
        return values[0], values[0]
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0 or config seed)")
    common.add_argument("--threads", type=int, default=None, help="FFT worker cap (default: all cores)")
    common.add_argument("--config", default=None, help=f"JSON run config (env {CONFIG_ENV} overrides)")
    common.add_argument("-v", "--verbose", action="store_true")

    capture_opts = argparse.ArgumentParser(add_help=False)
    capture_opts.add_argument("--boundary-effect", dest="boundary_effect", action="store_true", default=None)
    capture_opts.add_argument("--noise", type=float, default=None, help="Gaussian read-noise sigma")

    stride_opts = argparse.ArgumentParser(add_help=False)
    stride_opts.add_argument("--strides", type=_ints, default=None)
    stride_opts.add_argument("--clip-len", dest="clip_len", type=int, default=None)
    stride_opts.add_argument("--sim-size", dest="sim_size", type=int, default=None)
    stride_opts.add_argument("--crop-size", dest="crop_size", type=int, default=None)

    parser = argparse.ArgumentParser(prog="camotion", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True)

    g = groups.add_parser("mask", help="mask generation and spectra").add_subparsers(dest="action", required=True)
    p = g.add_parser("gen", parents=[common])
    p.add_argument("--family", choices=FAMILIES, default="pseudorandom")
    p.add_argument("--size", type=_size, default=(256, 256), help="N or HxW")
    p.add_argument("--open-fraction", dest="open_fraction", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask_gen)
    p = g.add_parser("report", parents=[common])
    p.add_argument("--mask", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--max-fraction", dest="max_fraction", type=float, default=0.01)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_mask_report)

    g = groups.add_parser("sim", help="CA capture").add_subparsers(dest="action", required=True)
    p = g.add_parser("capture", parents=[common, capture_opts])
    p.add_argument("--mask", required=True)
    p.add_argument("--input", required=True, help="clip directory or single PGM frame")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sim_capture)

    g = groups.add_parser("synth", help="synthetic benchmark").add_subparsers(dest="action", required=True)
    p = g.add_parser("gen", parents=[common])
    p.add_argument("--classes", type=lambda s: [c for c in s.split(",") if c], default=None)
    p.add_argument("--per-class", dest="per_class", type=int, default=60)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--length", type=int, default=21)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen)

    g = groups.add_parser("feat", help="MS-TRS features").add_subparsers(dest="action", required=True)
    p = g.add_parser("extract", parents=[common, capture_opts, stride_opts])
    p.add_argument("--clip", required=True, help="clip directory (treated as CA frames unless --mask)")
    p.add_argument("--mask", default=None, help="simulate capture with this mask first")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--t-only", dest="t_only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_feat_extract)

    g = groups.add_parser("learn", help="classifier").add_subparsers(dest="action", required=True)
    p = g.add_parser("train", parents=[common, capture_opts, stride_opts])
    p.add_argument("--data", default=None, help="benchmark directory")
    p.add_argument("--regime", choices=REGIMES, default=None)
    p.add_argument("--input", choices=["mstrs", "t", "ca"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--pool", type=int, default=None)
    p.add_argument("--aug-views", dest="aug_views", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_train)
    p = g.add_parser("eval", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--scales", type=_ints, default=None)
    p.add_argument("--starts", type=int, default=1)
    p.add_argument("--mask-seed", dest="mask_seed", type=int, default=12345)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_learn_eval)

    g = groups.add_parser("attack", help="privacy probe").add_subparsers(dest="action", required=True)
    p = g.add_parser("leak", parents=[common])
    p.add_argument("--scene", required=True)
    p.add_argument("--ca", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_attack_leak)

    g = groups.add_parser("verify", help="end-to-end checks").add_subparsers(dest="action", required=True)
    p = g.add_parser("invariance", parents=[common])
    p.add_argument("--masks", type=int, default=20)
    p.add_argument("--shifts", type=int, default=10)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_verify_invariance)
    return parser


def _fail(code: str, message: str) -> int:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config_path = os.environ.get(CONFIG_ENV) or args.config
        config = load_run_config(config_path) if config_path else {}
        if args.seed is None:
            args.seed = int(config.get("seed", 0))
        threads = args.threads if args.threads is not None else config.get("threads")
        optics.set_workers(threads)
        args.func(args, config)
    except CamotionError as exc:
        return _fail(exc.code, str(exc))
    except OSError as exc:
        return _fail("io", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
