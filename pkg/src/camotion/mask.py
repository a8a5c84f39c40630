"""Binary coded-aperture patterns and their spectral diagnostics.

Three families are available:

- ``pseudorandom``: i.i.d. Bernoulli cells, broadband spectrum.
- ``mls-separable``: rank-one product of two 0/1 maximum length sequences
  (a truly separable transmission, about 25% open), with strong response
  along the frequency axes.
- ``circular``: a centered hard-edged disk, whose spectrum has deep
  high-frequency dropoffs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import max_len_seq

from .errors import FormatError, ParameterError, UnsupportedSizeError
from .pgm import read_pgm, write_pgm

FAMILIES = ("pseudorandom", "mls-separable", "circular")

# broadband threshold relative to the DC magnitude
DEFAULT_RELATIVE_THRESHOLD = 1e-3


@dataclass(frozen=True)
class Mask:
    """Binary transmission pattern (1 = clear, 0 = opaque)."""

    pattern: np.ndarray = field(repr=False)
    family: str
    seed: int
    open_fraction: float

    def __post_init__(self):
        pattern = np.asarray(self.pattern, dtype=np.uint8)
        if pattern.ndim != 2:
            raise ParameterError("mask pattern must be 2D")
        if np.any(pattern > 1):
            raise ParameterError("mask pattern must be binary")
        pattern.setflags(write=False)
        object.__setattr__(self, "pattern", pattern)

    @property
    def height(self) -> int:
        return self.pattern.shape[0]

    @property
    def width(self) -> int:
        return self.pattern.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pattern.shape

    def as_float(self) -> np.ndarray:
        return self.pattern.astype(np.float64)


@dataclass(frozen=True)
class SpectralReport:
    min_magnitude: float
    mean_magnitude: float
    fraction_below_threshold: float
    threshold: float


def _check_params(height, width, open_fraction):
    if int(height) != height or int(width) != width:
        raise ParameterError("mask dimensions must be integers")
    if height < 8 or width < 8:
        raise ParameterError(f"mask dimensions must be >= 8, got {height}x{width}")
    if not 0.0 < open_fraction < 1.0:
        raise ParameterError(f"open_fraction must lie in (0, 1), got {open_fraction}")


def _mls(length: int, rng: np.random.Generator) -> np.ndarray:
    nbits = int(np.floor(np.log2(length + 1)))
    if nbits < 2:
        raise UnsupportedSizeError(f"no maximum length sequence fits in {length} cells")
    state = rng.integers(0, 2, size=nbits)
    if not state.any():
        state[0] = 1
    seq, _ = max_len_seq(nbits, state=state)
    # tile the 2^k - 1 period to cover the requested length
    return np.resize(seq, length)


def generate_mask(
    family: str,
    height: int,
    width: int,
    open_fraction: float = 0.5,
    seed: int = 0,
) -> Mask:
    """Create a mask of the given family.

    ``open_fraction`` sets the Bernoulli probability for pseudorandom masks
    and the disk area for circular ones. MLS-separable masks ignore it
    (their open fraction is fixed near 1/4). The returned mask records its
    realized open fraction.
    """
    _check_params(height, width, open_fraction)
    height, width = int(height), int(width)
    if family == "pseudorandom":
        rng = np.random.default_rng(seed)
        pattern = rng.random((height, width)) < open_fraction
    elif family == "mls-separable":
        rng = np.random.default_rng(seed)
        rows = _mls(height, rng)
        cols = _mls(width, rng)
        pattern = np.outer(rows, cols) > 0
    elif family == "circular":
        radius = np.sqrt(open_fraction * height * width / np.pi)
        yy, xx = np.mgrid[:height, :width]
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        pattern = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    else:
        raise ParameterError(f"unknown mask family {family!r}; expected one of {FAMILIES}")
    pattern = pattern.astype(np.uint8)
    return Mask(pattern, family, int(seed), float(pattern.mean()))


def delta_mask(height: int, width: int) -> Mask:
    """Identity kernel: a single clear cell at the convolution origin (0, 0)."""
    pattern = np.zeros((height, width), dtype=np.uint8)
    pattern[0, 0] = 1
    return Mask(pattern, "delta", 0, 1.0 / (height * width))


def spectral_report(mask: Mask, threshold: float | None = None) -> SpectralReport:
    """Summarize the DFT magnitude of the mask pattern over all bins.

    When ``threshold`` is None it defaults to ``1e-3 * |A(0, 0)|``.
    """
    mag = np.abs(np.fft.fft2(mask.as_float()))
    if threshold is None:
        threshold = DEFAULT_RELATIVE_THRESHOLD * mag[0, 0]
    return SpectralReport(
        min_magnitude=float(mag.min()),
        mean_magnitude=float(mag.mean()),
        fraction_below_threshold=float(np.mean(mag < threshold)),
        threshold=float(threshold),
    )


def is_broadband(report: SpectralReport, max_fraction: float = 0.01) -> bool:
    return report.fraction_below_threshold <= max_fraction


def axis_energy_ratio(mask: Mask) -> float:
    """Mean spectral magnitude on the two frequency axes over the off-axis mean (DC excluded)."""
    mag = np.abs(np.fft.fft2(mask.as_float()))
    on_axis = np.zeros(mag.shape, dtype=bool)
    on_axis[0, :] = True
    on_axis[:, 0] = True
    on_axis[0, 0] = False
    off_axis = ~on_axis
    off_axis[0, 0] = False
    return float(mag[on_axis].mean() / mag[off_axis].mean())


def save_mask(mask: Mask, path: str | os.PathLike) -> None:
    """Write ``path`` (8-bit PGM, 255 = clear) and a ``.json`` sidecar."""
    write_pgm(path, mask.as_float(), bit_depth=8)
    meta = {
        "family": mask.family,
        "seed": mask.seed,
        "open_fraction": mask.open_fraction,
        "height": mask.height,
        "width": mask.width,
    }
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_mask(path: str | os.PathLike) -> Mask:
    image, _ = read_pgm(path)
    if not np.all((image == 0.0) | (image == 1.0)):
        raise FormatError(f"{path}: mask PGM must contain only 0 and 255")
    sidecar = _sidecar(path)
    meta = {"family": "unknown", "seed": 0}
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            meta = json.load(fh)
        if (meta.get("height"), meta.get("width")) != image.shape:
            raise FormatError(f"{sidecar}: dimensions disagree with {path}")
    pattern = image.astype(np.uint8)
    return Mask(pattern, meta["family"], int(meta["seed"]), float(pattern.mean()))


def _sidecar(path) -> str:
    root, _ = os.path.splitext(os.fspath(path))
    return root + ".json"
