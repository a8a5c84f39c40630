"""Lensless coded-aperture capture: scene frames convolved with a mask.

DFT convention (shared by the whole package): forward transform
unnormalized, inverse scaled by ``1/(H*W)``. Mask index ``(0, 0)`` is the
kernel origin, so the convolution without boundary effect is

    d[y, x] = sum_{m, n} a[m, n] * o[(y - m) % H, (x - n) % W]

The boundary-effect variant zero-pads frame and mask, convolves linearly,
and keeps the central ``H x W`` window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .errors import DimensionError, ParameterError
from .mask import Mask

WORKERS = 1


def set_workers(n: int | None) -> None:
    """Cap the thread count used by batched FFTs (``None`` = all cores)."""
    global WORKERS
    WORKERS = -1 if n is None else max(1, int(n))


@dataclass(frozen=True)
class CaptureConfig:
    boundary_effect: bool = False
    noise_sigma: float = 0.0
    normalize_output: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma >= 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _pattern(mask) -> np.ndarray:
    return mask.as_float() if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)


def _padded_shape(h: int, w: int) -> tuple[int, int]:
    # 2n - 1 rounded up to even
    return 2 * h, 2 * w


def convolve(frames: np.ndarray, mask, boundary_effect: bool = False) -> np.ndarray:
    """Noise-free CA image(s) for a frame ``(H, W)`` or a stack ``(N, H, W)``."""
    frames = np.asarray(frames, dtype=np.float64)
    a = _pattern(mask)
    h, w = a.shape
    if frames.shape[-2:] != (h, w):
        raise DimensionError(f"frame shape {frames.shape[-2:]} does not match mask shape {(h, w)}")
    if not boundary_effect:
        spec = sfft.rfft2(frames, workers=WORKERS) * sfft.rfft2(a)
        return sfft.irfft2(spec, s=(h, w), workers=WORKERS)
    ph, pw = _padded_shape(h, w)
    spec = sfft.rfft2(frames, s=(ph, pw), workers=WORKERS) * sfft.rfft2(a, s=(ph, pw))
    full = sfft.irfft2(spec, s=(ph, pw), workers=WORKERS)
    # the linear result occupies the first 2h-1 rows; take its central h rows
    y0, x0 = (h - 1) // 2, (w - 1) // 2
    return full[..., y0:y0 + h, x0:x0 + w]


def _finish(ca: np.ndarray, cfg: CaptureConfig, rng: np.random.Generator | None) -> np.ndarray:
    if cfg.normalize_output:
        peak = ca.max()
        if peak > 0:
            ca = ca / peak
    if cfg.noise_sigma > 0:
        ca = ca + rng.normal(0.0, cfg.noise_sigma, size=ca.shape)
    return ca


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def capture(frame: np.ndarray, mask, cfg: CaptureConfig = CaptureConfig(), frame_index: int = 0) -> np.ndarray:
    """Simulate one coded-aperture observation of ``frame``.

    Noise (if any) is added after the optional peak normalization, so
    ``noise_sigma`` is expressed in display intensity units when
    ``normalize_output`` is set.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2:
        raise DimensionError(f"expected a 2D frame, got shape {frame.shape}")
    ca = convolve(frame, mask, cfg.boundary_effect)
    rng = frame_rng(cfg.seed, frame_index) if cfg.noise_sigma > 0 else None
    return _finish(ca, cfg, rng)


def capture_frames(frames: np.ndarray, mask, cfg: CaptureConfig = CaptureConfig()) -> np.ndarray:
    """Capture a ``(N, H, W)`` stack with one mask; frame ``i`` uses noise stream ``(seed, i)``."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise DimensionError(f"expected a (N, H, W) stack, got shape {frames.shape}")
    ca = convolve(frames, mask, cfg.boundary_effect)
    out = np.empty_like(ca)
    for i in range(ca.shape[0]):
        rng = frame_rng(cfg.seed, i) if cfg.noise_sigma > 0 else None
        out[i] = _finish(ca[i], cfg, rng)
    return out


def capture_clip(clip, mask, cfg: CaptureConfig = CaptureConfig()):
    """Capture every frame of a :class:`~camotion.clip.Clip` with the same mask."""
    frames = capture_frames(clip.frames, mask, cfg)
    provenance = dict(clip.provenance)
    provenance["capture"] = {
        "mask_family": getattr(mask, "family", "array"),
        "mask_seed": getattr(mask, "seed", None),
        "boundary_effect": cfg.boundary_effect,
        "noise_sigma": cfg.noise_sigma,
        "normalize_output": cfg.normalize_output,
        "seed": cfg.seed,
    }
    return clip.replace(frames=frames, provenance=provenance)
