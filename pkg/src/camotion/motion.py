"""Phase-correlation motion maps: translation (T) and rotation/scale (RS).

Sign conventions
----------------
For a pair ``(f1, f2)`` with ``f1(p) = f2(p + dp)`` the T map peaks at
``center - dp``; equivalently, circularly shifting ``f2`` by ``delta``
moves the peak by ``-delta``. :func:`recover_motion` turns the peak back
into ``dp``.

The RS map is the same correlation taken between log-polar resamplings of
the centered DFT magnitudes. Rows index log-radius, columns index angle in
``[0, pi)``. A :class:`MotionEstimate` reports ``dtheta`` and ``scale`` as
the rotation (counter-clockwise on screen, radians) and magnification that
map the content of ``f1`` onto ``f2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy import sparse

from . import optics
from .errors import DegenerateInputError, DimensionError, ParameterError

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class CorrelationMap:
    values: np.ndarray
    kind: str
    epsilon: float

    @property
    def center(self) -> tuple[int, int]:
        h, w = self.values.shape[-2:]
        return h // 2, w // 2


@dataclass(frozen=True)
class LogPolarParams:
    n_rho: int
    n_theta: int
    rho_min: float = 1.0

    def __post_init__(self):
        if self.n_rho < 8 or self.n_theta < 8:
            raise ParameterError("n_rho and n_theta must be >= 8")
        if self.rho_min < 1:
            raise ParameterError("rho_min must be >= 1")

    @classmethod
    def for_shape(cls, shape) -> "LogPolarParams":
        return cls(n_rho=shape[0], n_theta=shape[0], rho_min=1.0)

    def rho_max(self, shape) -> float:
        return min(shape[-2:]) / 2.0

    def log_rho_step(self, shape) -> float:
        return np.log(self.rho_max(shape) / self.rho_min) / (self.n_rho - 1)

    @property
    def theta_step(self) -> float:
        return np.pi / self.n_theta


@dataclass(frozen=True)
class LogPolarImage:
    values: np.ndarray
    rho_min: float
    rho_max: float
    n_rho: int
    n_theta: int


@dataclass(frozen=True)
class MotionEstimate:
    dx: int
    dy: int
    dtheta: float
    scale: float
    peak_value: float
    confidence: float
    rs_peak_value: float = float("nan")
    rs_confidence: float = float("nan")


def _check_pair(f1, f2):
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise DimensionError(f"frame shapes differ: {f1.shape} vs {f2.shape}")
    if f1.ndim < 2:
        raise DimensionError("frames must be at least 2D")
    return f1, f2


def unit_contrast_rfft2(f: np.ndarray) -> np.ndarray:
    """Half spectrum of ``f`` after scaling each frame to unit standard deviation.

    The scaling makes the epsilon-regularized whitening exactly invariant
    to a global gain on either frame, and keeps epsilon small next to the
    non-DC spectrum whatever the frame's mean level.
    """
    f = np.asarray(f, dtype=np.float64)
    level = np.std(f, axis=(-2, -1), keepdims=True)
    f = f / np.where(level > 0, level, 1.0)
    return sfft.rfft2(f, workers=optics.WORKERS)


def cross_power_spectra(s1: np.ndarray, s2: np.ndarray, shape, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Centered phase-correlation surface from half spectra made by :func:`unit_contrast_rfft2`."""
    prod = s1 * np.conj(s2)
    prod /= np.abs(prod) + epsilon
    surface = sfft.irfft2(prod, s=shape, workers=optics.WORKERS)
    return sfft.fftshift(surface, axes=(-2, -1))


def cross_power(f1, f2, epsilon: float = DEFAULT_EPSILON, kind: str = "T") -> CorrelationMap:
    """Normalized cross-power spectrum of two frames, back in the signal domain.

    Works on single frames or on matching ``(..., H, W)`` stacks. The
    result is the real part of the inverse DFT, shifted so zero motion
    sits at ``(H // 2, W // 2)``. Each frame is scaled to unit standard
    deviation first, so ``epsilon`` is relative to that contrast level.
    """
    if not epsilon > 0:
        raise ParameterError("epsilon must be > 0")
    f1, f2 = _check_pair(f1, f2)
    shape = f1.shape[-2:]
    s1 = unit_contrast_rfft2(f1)
    s2 = unit_contrast_rfft2(f2)
    return CorrelationMap(cross_power_spectra(s1, s2, shape, epsilon), kind, epsilon)


def t_map(ca1, ca2, epsilon: float = DEFAULT_EPSILON) -> CorrelationMap:
    return cross_power(ca1, ca2, epsilon, kind="T")


@lru_cache(maxsize=16)
def _log_polar_operator(shape: tuple[int, int], n_rho: int, n_theta: int, rho_min: float) -> sparse.csr_matrix:
    # bilinear weights as a sparse (n_rho*n_theta, H*W) matrix; neighbors off the grid count as 0
    h, w = shape
    cy, cx = h // 2, w // 2
    rho_max = min(h, w) / 2.0
    rho = rho_min * (rho_max / rho_min) ** (np.arange(n_rho) / (n_rho - 1))
    theta = np.pi * np.arange(n_theta) / n_theta
    y = cy - rho[:, None] * np.sin(theta)[None, :]
    x = cx + rho[:, None] * np.cos(theta)[None, :]
    y0 = np.floor(y).astype(np.int64)
    x0 = np.floor(x).astype(np.int64)
    fy = y - y0
    fx = x - x0
    rows, cols, vals = [], [], []
    out_index = np.arange(n_rho * n_theta).reshape(n_rho, n_theta)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            rows.append(out_index[ok])
            cols.append((yy * w + xx)[ok])
            vals.append((wy * wx)[ok])
    op = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rho * n_theta, h * w),
    )
    return op.tocsr()


def centered_magnitude(f: np.ndarray) -> np.ndarray:
    """Centered DFT magnitude of the mean-removed frame(s)."""
    f = np.asarray(f, dtype=np.float64)
    # zero DC so its leakage into the innermost log-polar rings stays out
    f = f - f.mean(axis=(-2, -1), keepdims=True)
    spec = sfft.fft2(f, workers=optics.WORKERS)
    return np.abs(sfft.fftshift(spec, axes=(-2, -1)))


def log_polar_resample(magnitude: np.ndarray, params: LogPolarParams) -> np.ndarray:
    """Resample centered magnitude image(s) ``(..., H, W)`` onto the log-polar grid."""
    shape = magnitude.shape[-2:]
    op = _log_polar_operator(tuple(shape), params.n_rho, params.n_theta, float(params.rho_min))
    lead = magnitude.shape[:-2]
    flat = magnitude.reshape(-1, shape[0] * shape[1])
    out = (op @ flat.T).T
    return out.reshape(*lead, params.n_rho, params.n_theta)


def log_polar_magnitude(f, n_rho: int | None = None, n_theta: int | None = None, rho_min: float = 1.0) -> LogPolarImage:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise DimensionError("log_polar_magnitude expects a single 2D frame")
    params = LogPolarParams(n_rho or f.shape[0], n_theta or f.shape[0], rho_min)
    values = log_polar_resample(centered_magnitude(f), params)
    return LogPolarImage(values, params.rho_min, params.rho_max(f.shape), params.n_rho, params.n_theta)


def rs_map(ca1, ca2, epsilon: float = DEFAULT_EPSILON, lp_params: LogPolarParams | None = None) -> CorrelationMap:
    """Phase correlation between the log-polar magnitude spectra of two frames."""
    ca1, ca2 = _check_pair(ca1, ca2)
    if lp_params is None:
        lp_params = LogPolarParams.for_shape(ca1.shape[-2:])
    lp1 = log_polar_resample(centered_magnitude(ca1), lp_params)
    lp2 = log_polar_resample(centered_magnitude(ca2), lp_params)
    return cross_power(lp1, lp2, epsilon, kind="RS")


def _peak_and_runner_up(values: np.ndarray) -> tuple[tuple[int, int], float, float]:
    iy, ix = np.unravel_index(int(np.argmax(values)), values.shape)
    top = float(values[iy, ix])
    h, w = values.shape
    rest = values.copy()
    # 3x3 exclusion zone, wrapped because the surfaces are circular
    rest[np.ix_([(iy + k) % h for k in (-1, 0, 1)], [(ix + k) % w for k in (-1, 0, 1)])] = -np.inf
    second = float(rest.max()) if np.isfinite(rest).any() else float("-inf")
    return (iy, ix), top, second


def _ratio(top: float, second: float) -> float:
    return top / second if second > 0 else float("inf")


def peak_offset(cmap: CorrelationMap) -> tuple[int, int]:
    """Integer ``(row, col)`` offset of the map maximum from the zero-motion bin."""
    (iy, ix), _, _ = _peak_and_runner_up(cmap.values)
    cy, cx = cmap.center
    return iy - cy, ix - cx


def recover_motion(
    map_t: CorrelationMap | None,
    map_rs: CorrelationMap | None = None,
    lp_params: LogPolarParams | None = None,
    frame_shape=None,
) -> MotionEstimate:
    """Read integer-bin motion parameters off T and RS correlation maps.

    ``frame_shape`` (the source frame size) fixes the log-radius grid; it
    defaults to the T map's shape.
    """
    dx = dy = 0
    peak = conf = float("nan")
    if map_t is not None:
        if not np.any(map_t.values):
            raise DegenerateInputError("T map is identically zero")
        (iy, ix), peak, second = _peak_and_runner_up(map_t.values)
        cy, cx = map_t.center
        dy, dx = -(iy - cy), -(ix - cx)
        conf = _ratio(peak, second)
        if frame_shape is None:
            frame_shape = map_t.values.shape
    dtheta, scale = 0.0, 1.0
    rs_peak = rs_conf = float("nan")
    if map_rs is not None:
        if not np.any(map_rs.values):
            raise DegenerateInputError("RS map is identically zero")
        if frame_shape is None:
            raise ParameterError("frame_shape is required to convert an RS map without a T map")
        if lp_params is None:
            lp_params = LogPolarParams.for_shape(frame_shape)
        (ir, it), rs_peak, second = _peak_and_runner_up(map_rs.values)
        cr, ct = map_rs.center
        dtheta = -(it - ct) * lp_params.theta_step
        if dtheta >= np.pi / 2:
            dtheta -= np.pi
        scale = float(np.exp((ir - cr) * lp_params.log_rho_step(frame_shape)))
        rs_conf = _ratio(rs_peak, second)
    return MotionEstimate(int(dx), int(dy), float(dtheta), scale, peak, conf, rs_peak, rs_conf)
