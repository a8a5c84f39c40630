"""Clip container and its on-disk layout (numbered PGM frames + manifest.json)."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClipLoadError, FormatError, ValidationError
from .pgm import read_pgm, write_pgm


@dataclass(frozen=True)
class Clip:
    """An ordered stack of single-channel frames, shape ``(T, H, W)``."""

    frames: np.ndarray = field(repr=False)
    fps: float = 25.0
    label: int = -1
    label_name: str = ""
    provenance: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3:
            raise ValidationError(f"clip frames must be (T, H, W), got shape {frames.shape}")
        if frames.shape[0] < 2:
            raise ValidationError("a clip needs at least 2 frames")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("clip frames must be finite")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int]:
        return self.frames.shape[1:]

    def replace(self, **changes) -> "Clip":
        return dataclasses.replace(self, **changes)


def save_clip_dir(clip: Clip, path: str | os.PathLike, bit_depth: int = 8) -> Path:
    """Write frames as ``frame_00000.pgm ...`` plus ``manifest.json``.

    Frames are clipped to [0, 1]; CA clips should be normalized first and
    saved with ``bit_depth=16``.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    digits = max(5, len(str(len(clip) - 1)))
    names = []
    for i, frame in enumerate(clip.frames):
        name = f"frame_{i:0{digits}d}.pgm"
        write_pgm(path / name, frame, bit_depth=bit_depth)
        names.append(name)
    manifest = {
        "fps": clip.fps,
        "label": clip.label,
        "label_name": clip.label_name,
        "frame_files": names,
        "bit_depth": bit_depth,
        "provenance": clip.provenance,
    }
    with open(path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, default=_jsonable)
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_clip_dir(path: str | os.PathLike) -> Clip:
    path = Path(path)
    try:
        with open(path / "manifest.json") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise ClipLoadError(f"{path}: missing manifest.json") from exc
    except json.JSONDecodeError as exc:
        raise ClipLoadError(f"{path}: malformed manifest ({exc})") from exc
    for key in ("fps", "label", "frame_files", "bit_depth"):
        if key not in manifest:
            raise ClipLoadError(f"{path}: manifest lacks {key!r}")
    if not isinstance(manifest["frame_files"], list) or not manifest["frame_files"]:
        raise ClipLoadError(f"{path}: frame_files must be a non-empty list")

    frames = []
    for name in manifest["frame_files"]:
        fpath = path / name
        if not fpath.is_file():
            raise ClipLoadError(f"{path}: missing frame {name}")
        try:
            image, depth = read_pgm(fpath)
        except FormatError as exc:
            raise ClipLoadError(str(exc)) from exc
        if depth != manifest["bit_depth"]:
            raise ClipLoadError(f"{fpath}: bit depth {depth} != manifest {manifest['bit_depth']}")
        if frames and image.shape != frames[0].shape:
            raise ValidationError(f"{fpath}: frame size {image.shape} differs from {frames[0].shape}")
        frames.append(image)
    return Clip(
        np.stack(frames),
        fps=float(manifest["fps"]),
        label=int(manifest["label"]),
        label_name=manifest.get("label_name", ""),
        provenance=manifest.get("provenance", {"source": str(path)}),
    )
