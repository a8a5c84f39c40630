"""Multi-stride TRS feature stacks and the ``.mstr`` tensor file format.

For stride ``s`` and clip length ``l`` the frame pairs are
``(d[i*s], d[i*s + s])`` for ``i = 0 .. n_pairs(s, l) - 1``. Channels are
ordered by stride (ascending); within a stride every T map comes first,
then every RS map, each in pair order.

``.mstr`` layout (all little-endian)::

    b"MSTR" | u32 version=1 | u32 C | u32 H | u32 W
    C*H*W float32, channel-major, row-major
    JSON trailer (UTF-8) | u32 trailer length
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .clip import Clip
from .errors import DimensionError, FormatError, ParameterError, TruncationError, ValidationError
from .motion import (
    DEFAULT_EPSILON,
    LogPolarParams,
    centered_magnitude,
    cross_power_spectra,
    log_polar_resample,
    unit_contrast_rfft2,
)

MAGIC = b"MSTR"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_TRAILER_LEN = struct.Struct("<I")


def n_pairs(stride: int, clip_length: int) -> int:
    if not 1 <= stride < clip_length:
        raise ParameterError(f"need 1 <= stride < clip_length, got stride={stride}, l={clip_length}")
    # last pair (i*s, i*s + s) must end on frame l - 1 at the latest
    return (clip_length - 1) // stride


@dataclass(frozen=True)
class StrideConfig:
    strides: tuple[int, ...] = (2, 3, 4, 6)
    clip_length: int = 13
    sim_size: int = 256
    crop_size: int = 224

    def __post_init__(self):
        strides = tuple(int(s) for s in self.strides)
        object.__setattr__(self, "strides", strides)
        if not strides:
            raise ParameterError("at least one stride is required")
        if any(s < 1 for s in strides) or list(strides) != sorted(set(strides)):
            raise ParameterError(f"strides must be positive, unique and ascending, got {strides}")
        if strides[-1] >= self.clip_length:
            raise ParameterError(f"max stride {strides[-1]} must be < clip length {self.clip_length}")
        if self.crop_size > self.sim_size:
            raise ParameterError("crop_size must not exceed sim_size")
        if self.crop_size < 8:
            raise ParameterError("crop_size must be >= 8")

    @property
    def channels(self) -> int:
        return stack_channels(self)

    def pairs(self):
        """Yield ``(stride, pair_index, first_frame, second_frame)`` in channel order."""
        for s in self.strides:
            for i in range(n_pairs(s, self.clip_length)):
                yield s, i, i * s, i * s + s


def stack_channels(cfg: StrideConfig) -> int:
    return sum(2 * n_pairs(s, cfg.clip_length) for s in cfg.strides)


@dataclass(frozen=True)
class FeatureStack:
    tensor: np.ndarray = field(repr=False)
    channels: tuple[dict, ...]
    crop_size: int

    def __post_init__(self):
        if self.tensor.ndim != 3:
            raise ValidationError("feature tensor must be (C, H, W)")
        if len(self.channels) != self.tensor.shape[0]:
            raise ValidationError("channel metadata length differs from tensor channel count")
        keys = {(c["stride"], c["pair_index"], c["kind"]) for c in self.channels}
        if len(keys) != len(self.channels):
            raise ValidationError("duplicate channel metadata")

    def select(self, kind: str) -> "FeatureStack":
        idx = [i for i, c in enumerate(self.channels) if c["kind"] == kind]
        return FeatureStack(self.tensor[idx], tuple(self.channels[i] for i in idx), self.crop_size)


def channel_layout(cfg: StrideConfig) -> list[dict]:
    layout = []
    for s in cfg.strides:
        n = n_pairs(s, cfg.clip_length)
        for kind in ("T", "RS"):
            layout.extend({"stride": s, "pair_index": i, "kind": kind} for i in range(n))
    return layout


def center_crop(values: np.ndarray, size: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    start = n // 2 - size // 2
    return np.take(values, np.arange(start, start + size), axis=axis)


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    # linear interpolation with end points aligned
    pos = np.linspace(0.0, n_in - 1, n_out)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    frac = pos - lo
    mat = np.zeros((n_out, n_in))
    mat[np.arange(n_out), lo] = 1.0 - frac
    mat[np.arange(n_out), lo + 1] = frac
    return mat


def extract_mstrs(
    ca_clip,
    cfg: StrideConfig,
    epsilon: float = DEFAULT_EPSILON,
    start: int = 0,
    lp_params: LogPolarParams | None = None,
    kinds: tuple[str, ...] = ("T", "RS"),
) -> FeatureStack:
    """Compute the MS-TRS stack of a CA clip (frames at ``cfg.sim_size``).

    The ``cfg.clip_length`` frames starting at ``start`` are used. T maps
    are center-cropped to ``crop_size``. RS maps are center-cropped along
    the angle axis and linearly resized along the log-radius axis.
    ``kinds=("T",)`` skips the RS computation entirely.
    """
    frames = ca_clip.frames if isinstance(ca_clip, Clip) else np.asarray(ca_clip, dtype=np.float64)
    if frames.ndim != 3:
        raise DimensionError("expected a (T, H, W) clip")
    if frames.shape[1:] != (cfg.sim_size, cfg.sim_size):
        raise DimensionError(f"clip frames are {frames.shape[1:]}, expected {cfg.sim_size}x{cfg.sim_size}")
    if start < 0 or start + cfg.clip_length > frames.shape[0]:
        raise ParameterError(
            f"clip of {frames.shape[0]} frames is too short for l={cfg.clip_length} at start {start}"
        )
    frames = frames[start:start + cfg.clip_length]
    shape = frames.shape[1:]
    crop = cfg.crop_size
    pairs = list(cfg.pairs())
    first = np.array([p[2] for p in pairs])
    second = np.array([p[3] for p in pairs])
    layout = [c for c in channel_layout(cfg) if c["kind"] in kinds]

    maps = {}
    if "T" in kinds:
        spectra = unit_contrast_rfft2(frames)
        t = cross_power_spectra(spectra[first], spectra[second], shape, epsilon)
        maps["T"] = center_crop(center_crop(t, crop, 1), crop, 2)
    if "RS" in kinds:
        if lp_params is None:
            lp_params = LogPolarParams.for_shape(shape)
        if lp_params.n_theta < crop:
            raise ParameterError("n_theta must be >= crop_size")
        lp = log_polar_resample(centered_magnitude(frames), lp_params)
        spectra = unit_contrast_rfft2(lp)
        rs = cross_power_spectra(spectra[first], spectra[second], lp.shape[1:], epsilon)
        rs = center_crop(rs, crop, 2)
        maps["RS"] = np.matmul(_resize_matrix(lp_params.n_rho, crop), rs)

    blocks = []
    row = 0
    for s in cfg.strides:
        n = n_pairs(s, cfg.clip_length)
        for kind in ("T", "RS"):
            if kind in maps:
                blocks.append(maps[kind][row:row + n])
        row += n
    tensor = np.concatenate(blocks).astype(np.float32)
    return FeatureStack(tensor, tuple(layout), crop)


def write_stack(stack: FeatureStack, path: str | os.PathLike) -> None:
    c, h, w = stack.tensor.shape
    trailer = json.dumps(
        {"channels": list(stack.channels), "crop_size": stack.crop_size}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, c, h, w))
        fh.write(np.ascontiguousarray(stack.tensor, dtype="<f4").tobytes())
        fh.write(trailer)
        fh.write(_TRAILER_LEN.pack(len(trailer)))


def read_stack(path: str | os.PathLike) -> FeatureStack:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + _TRAILER_LEN.size:
        raise TruncationError(f"{path}: file too short for an .mstr header")
    magic, version, c, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (trailer_len,) = _TRAILER_LEN.unpack_from(data, len(data) - _TRAILER_LEN.size)
    payload = 4 * c * h * w
    expected = _HEADER.size + payload + trailer_len + _TRAILER_LEN.size
    if expected != len(data):
        raise TruncationError(
            f"{path}: header declares {c}x{h}x{w} with a {trailer_len}-byte trailer "
            f"({expected} bytes) but the file has {len(data)} bytes"
        )
    tensor = np.frombuffer(data, dtype="<f4", count=c * h * w, offset=_HEADER.size)
    tensor = tensor.astype(np.float32).reshape(c, h, w)
    start = _HEADER.size + payload
    try:
        meta = json.loads(data[start:start + trailer_len].decode("utf-8"))
        channels = tuple(meta["channels"])
        crop_size = int(meta["crop_size"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable metadata trailer") from exc
    if len(channels) != c:
        raise FormatError(f"{path}: trailer lists {len(channels)} channels, header says {c}")
    return FeatureStack(tensor, channels, crop_size)
