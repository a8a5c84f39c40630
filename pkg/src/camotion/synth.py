"""Synthetic action clips: one textured sprite moving over a static background.

Each class is a parametric trajectory of the sprite pose
``(x, y, theta, scale)``; the per-frame poses are stored in the clip
provenance as ground truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .clip import Clip, save_clip_dir
from .errors import ParameterError

CLASSES = ("translate-h", "translate-v", "diagonal", "rotate", "scale-pulse", "jump", "still")

# half-period (frames) of the triangle waves used by jump and scale-pulse
PULSE_HALF_PERIOD = 4


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters for one clip.

    ``speed`` is px/frame per moving axis for the translating classes and
    ``jump``, rad/frame for ``rotate``, and the per-frame relative scale
    change for ``scale-pulse``. ``direction`` (+1 or -1) flips the motion.
    """

    cls: str
    size: int = 128
    length: int = 21
    speed: float = 2.0
    direction: int = 1
    sprite_radius: float = 0.22
    background_contrast: float = 0.1
    seed: int = 0
    fps: float = 25.0

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ParameterError(f"unknown class {self.cls!r}; expected one of {CLASSES}")
        if self.speed < 0:
            raise ParameterError("speed must be >= 0")
        if self.length < 2:
            raise ParameterError("length must be >= 2")
        if self.direction not in (1, -1):
            raise ParameterError("direction must be +1 or -1")
        if not 0 < self.sprite_radius < 0.5:
            raise ParameterError("sprite_radius must be a fraction of the frame in (0, 0.5)")
        if self.size < 16:
            raise ParameterError("size must be >= 16")

    @property
    def label(self) -> int:
        return CLASSES.index(self.cls)


def smooth_texture(shape, rng: np.random.Generator, exponent: float = 2.0) -> np.ndarray:
    """Random field with a ``1/f**exponent`` power spectrum, rescaled to [0, 1]."""
    ky = np.fft.fftfreq(shape[0])[:, None]
    kx = np.fft.rfftfreq(shape[1])[None, :]
    k = np.hypot(ky, kx)
    k[0, 0] = 1.0
    noise = np.fft.rfft2(rng.standard_normal(shape))
    field = np.fft.irfft2(noise / k ** (exponent / 2), s=shape)
    field -= field.min()
    return field / field.max()


def _sprite(rng: np.random.Generator, radius: int):
    side = 2 * radius + 1
    yy, xx = np.mgrid[:side, :side] - radius
    # elongated ellipse so rotation is visible
    ry, rx = radius, radius * rng.uniform(0.45, 0.65)
    support = ((yy / ry) ** 2 + (xx / rx) ** 2 <= 1.0).astype(np.float64)
    texture = smooth_texture((side, side), rng, exponent=1.0)
    texture = 0.15 + 0.85 * texture
    return texture, support


def _trajectory(spec: SynthSpec, rng: np.random.Generator, margin: float):
    n = spec.length
    t = np.arange(n, dtype=np.float64)
    tri = PULSE_HALF_PERIOD - np.abs(t % (2 * PULSE_HALF_PERIOD) - PULSE_HALF_PERIOD)
    d = spec.direction
    dx = np.zeros(n)
    dy = np.zeros(n)
    theta = np.zeros(n)
    log_scale = np.zeros(n)
    if spec.cls == "translate-h":
        dx = d * spec.speed * t
    elif spec.cls == "translate-v":
        dy = d * spec.speed * t
    elif spec.cls == "diagonal":
        dx = d * spec.speed * t
        dy = d * spec.speed * t
    elif spec.cls == "rotate":
        theta = d * spec.speed * t
    elif spec.cls == "scale-pulse":
        log_scale = np.log1p(spec.speed) * tri
    elif spec.cls == "jump":
        dy = -spec.speed * tri
    scale = np.exp(log_scale)

    lo, hi = margin * scale.max(), spec.size - 1 - margin * scale.max()
    if hi < lo:
        raise ParameterError("sprite does not fit in the frame")

    def start(offsets):
        span_lo, span_hi = lo - offsets.min(), hi - offsets.max()
        if span_hi >= span_lo:
            return float(np.round(rng.uniform(span_lo, span_hi)))
        return float(np.round((lo + hi) / 2 - (offsets.min() + offsets.max()) / 2))

    x = np.clip(start(dx) + dx, lo, hi)
    y = np.clip(start(dy) + dy, lo, hi)
    return x, y, theta, scale


def _render(background, texture, support, x, y, theta, scale):
    radius = (texture.shape[0] - 1) / 2.0
    c, s = np.cos(theta), np.sin(theta)
    # output (row, col) -> sprite (row, col); counter-clockwise on screen for theta > 0
    inv = np.array([[c, s], [-s, c]]) / scale
    offset = np.array([radius, radius]) - inv @ np.array([y, x])
    tex = ndimage.affine_transform(texture * support, inv, offset=offset, output_shape=background.shape, order=3)
    alpha = ndimage.affine_transform(support, inv, offset=offset, output_shape=background.shape, order=3)
    return background * (1.0 - alpha) + tex


def generate_clip(spec: SynthSpec) -> Clip:
    """Render a clip; poses per frame are recorded under ``provenance["poses"]``."""
    rng = np.random.default_rng(spec.seed)
    radius = int(round(spec.sprite_radius * spec.size))
    if 2 * radius + 1 > spec.size:
        raise ParameterError("sprite larger than frame")
    bg = smooth_texture((spec.size, spec.size), rng, exponent=2.0)
    background = 0.5 + spec.background_contrast * (bg - 0.5)
    texture, support = _sprite(rng, radius)
    x, y, theta, scale = _trajectory(spec, rng, margin=radius + 1)
    frames = np.stack([_render(background, texture, support, *pose) for pose in zip(x, y, theta, scale)])
    poses = [
        {"x": float(a), "y": float(b), "theta": float(c), "scale": float(d)}
        for a, b, c, d in zip(x, y, theta, scale)
    ]
    provenance = {"generator": "camotion.synth", "spec": asdict(spec), "poses": poses}
    return Clip(np.clip(frames, 0.0, 1.0), spec.fps, spec.label, spec.cls, provenance)


def flip_vertical(frames: np.ndarray) -> np.ndarray:
    return frames[..., ::-1, :]


def flip_horizontal(frames: np.ndarray) -> np.ndarray:
    return frames[..., :, ::-1]


def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    # pixel-area aligned linear interpolation, edges clamped
    pos = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.arange(n_out), lo), 1.0 - frac)
    np.add.at(mat, (np.arange(n_out), hi), frac)
    return mat


def resize_frames(frames: np.ndarray, size) -> np.ndarray:
    """Bilinear resize of a ``(T, H, W)`` stack to ``size = (h, w)``.

    Same sampling as ``ndimage.zoom(order=1, grid_mode=True,
    mode="nearest")``, done as two matrix products.
    """
    frames = np.asarray(frames, dtype=np.float64)
    h, w = frames.shape[1:]
    if (h, w) == tuple(size):
        return frames.copy()
    return _interp_matrix(h, size[0]) @ frames @ _interp_matrix(w, size[1]).T


def augment(clip: Clip, target: int, seed: int, horizontal_flip: bool = False, max_ratio: float = 256 / 224) -> Clip:
    """Seeded rescale, flip and random crop, applied identically to every frame.

    The short side is rescaled to a random size in ``[target,
    target * max_ratio]`` (aspect ratio kept), the clip is flipped
    vertically with probability 1/2 (horizontally instead when
    ``horizontal_flip``), then a random ``target x target`` window is cut.
    """
    h, w = clip.frame_shape
    if target > min(h, w):
        raise ParameterError(f"target {target} exceeds the clip's short side {min(h, w)}")
    rng = np.random.default_rng(seed)
    short = int(rng.integers(target, int(np.floor(target * max_ratio)) + 1))
    ratio = short / min(h, w)
    size = (max(target, int(round(h * ratio))), max(target, int(round(w * ratio))))
    frames = resize_frames(clip.frames, size)
    flipped = bool(rng.random() < 0.5)
    if flipped:
        frames = flip_horizontal(frames) if horizontal_flip else flip_vertical(frames)
    y0 = int(rng.integers(0, size[0] - target + 1))
    x0 = int(rng.integers(0, size[1] - target + 1))
    frames = np.ascontiguousarray(frames[:, y0:y0 + target, x0:x0 + target])
    provenance = dict(clip.provenance)
    provenance["augment"] = {
        "seed": seed,
        "short_side": short,
        "flipped": flipped,
        "flip_axis": "horizontal" if horizontal_flip else "vertical",
        "crop": [y0, x0],
    }
    return clip.replace(frames=frames, provenance=provenance)


def benchmark_specs(
    n_per_class: int = 60,
    size: int = 128,
    length: int = 21,
    seed: int = 0,
    classes=CLASSES,
) -> list[SynthSpec]:
    """Randomized generator parameters, ``n_per_class`` clips for every class."""
    rng = np.random.default_rng(seed)
    specs = []
    for cls in classes:
        for _ in range(n_per_class):
            if cls in ("translate-h", "translate-v", "diagonal"):
                speed = rng.uniform(1.0, 3.0)
            elif cls == "jump":
                speed = rng.uniform(2.0, 4.0)
            elif cls == "rotate":
                speed = rng.uniform(0.05, 0.08)
            elif cls == "scale-pulse":
                speed = rng.uniform(0.03, 0.06)
            else:
                speed = 0.0
            specs.append(
                SynthSpec(
                    cls=cls,
                    size=size,
                    length=length,
                    speed=float(round(speed, 3)),
                    direction=int(rng.choice([-1, 1])),
                    sprite_radius=float(round(rng.uniform(0.18, 0.26), 3)),
                    seed=int(rng.integers(0, 2**63 - 1)),
                )
            )
    return specs


def split_indices(labels, seed: int, fractions=(0.70, 0.15, 0.15)) -> dict[str, list[int]]:
    """Stratified train/val/test split of clip indices."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    out = {"train": [], "val": [], "test": []}
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        rng.shuffle(idx)
        n_train = int(round(fractions[0] * len(idx)))
        n_val = int(round(fractions[1] * len(idx)))
        out["train"] += idx[:n_train].tolist()
        out["val"] += idx[n_train:n_train + n_val].tolist()
        out["test"] += idx[n_train + n_val:].tolist()
    return {k: sorted(v) for k, v in out.items()}


def write_benchmark(out_dir: str | os.PathLike, specs: list[SynthSpec], split_seed: int = 0) -> Path:
    """Render every spec to ``out_dir/clip_NNNN/`` and write ``benchmark.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, spec in enumerate(specs):
        name = f"clip_{i:04d}"
        save_clip_dir(generate_clip(spec), out_dir / name)
        names.append(name)
    splits = split_indices([s.label for s in specs], split_seed)
    manifest = {
        "classes": list(CLASSES),
        "clips": [{"dir": n, "label": s.label, "class": s.cls} for n, s in zip(names, specs)],
        "splits": {k: [names[i] for i in v] for k, v in splits.items()},
        "split_seed": split_seed,
    }
    with open(out_dir / "benchmark.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return out_dir / "benchmark.json"
