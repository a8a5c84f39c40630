"""Autocorrelation leakage probe for coded-aperture frames.

Convolving with a broadband mask leaves the scene autocorrelation nearly
intact, because the mask autocorrelation is close to a delta.  The probe
measures how much of the scene autocorrelation an adversary can read off a
CA frame without knowing the mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from . import optics
from .errors import DimensionError
from .mask import generate_mask
from .optics import CaptureConfig, capture


@dataclass(frozen=True)
class LeakageReport:
    """Similarity between the autocorrelations of a scene and its CA frame.

    Attributes
    ----------
    autocorr_similarity : float
        Zero-lag normalized cross-correlation of the two peak-normalized
        autocorrelations, in [-1, 1].
    per_family : dict
        Optional mean similarity per mask family, filled by `family_breakdown`.
    """

    autocorr_similarity: float
    per_family: dict = field(default_factory=dict)

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.autocorr_similarity <= 1.0 + 1e-9:
            raise ValueError("similarity must lie in [-1, 1]")

    def to_dict(self) -> dict:
        return {"autocorr_similarity": self.autocorr_similarity, "per_family": dict(self.per_family)}


def autocorrelation(f) -> np.ndarray:
    """Circular autocorrelation of the mean-removed frame, origin at the array center."""
    f = np.asarray(f, dtype=np.float64)
    f = f - f.mean()
    power = np.abs(sfft.fft2(f, workers=optics.WORKERS)) ** 2
    return sfft.fftshift(sfft.ifft2(power, workers=optics.WORKERS).real)


def _peak_normalized(r: np.ndarray) -> np.ndarray:
    peak = r.max()
    return r / peak if peak > 0 else np.zeros_like(r)


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine between two maps; 0 when either map is identically zero."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.sum(a * b) / (na * nb), -1.0, 1.0))


def leakage(scene, ca) -> LeakageReport:
    """Compare scene and CA autocorrelations."""
    scene = np.asarray(scene, dtype=np.float64)
    ca = np.asarray(ca, dtype=np.float64)
    if scene.ndim != 2 or scene.shape != ca.shape:
        raise DimensionError(f"scene {scene.shape} and CA frame {ca.shape} must be equal 2D shapes")
    a = _peak_normalized(autocorrelation(scene))
    b = _peak_normalized(autocorrelation(ca))
    return LeakageReport(similarity(a, b))


def family_breakdown(
    scene,
    families=("pseudorandom", "mls-separable", "circular"),
    seeds=range(20),
    open_fraction: float = 0.5,
    capture_cfg: CaptureConfig | None = None,
) -> LeakageReport:
    """Mean leakage of one scene over masks of each family."""
    scene = np.asarray(scene, dtype=np.float64)
    h, w = scene.shape
    cfg = capture_cfg or CaptureConfig()
    per_family = {}
    overall = []
    for family in families:
        values = []
        for seed in seeds:
            mask = generate_mask(family, h, w, open_fraction, seed)
            values.append(leakage(scene, capture(scene, mask, cfg, frame_index=seed)).autocorr_similarity)
        per_family[family] = float(np.mean(values))
        overall.extend(values)
    return LeakageReport(float(np.mean(overall)), per_family)
