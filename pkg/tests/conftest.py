import numpy as np
import pytest

from camotion.synth import smooth_texture


def direct_circular_conv(o, a):
    """O(N^4) spatial circular convolution with kernel origin at a[0, 0]."""
    out = np.zeros_like(o, dtype=np.float64)
    for m, n in zip(*np.nonzero(a)):
        out += a[m, n] * np.roll(o, (m, n), axis=(0, 1))
    return out


def direct_linear_conv_same(o, a):
    """Zero-padded linear convolution, central H x W window of the full result."""
    h, w = o.shape
    full = np.zeros((2 * h - 1, 2 * w - 1))
    for m, n in zip(*np.nonzero(a)):
        full[m:m + h, n:n + w] += a[m, n] * o
    y0, x0 = (h - 1) // 2, (w - 1) // 2
    return full[y0:y0 + h, x0:x0 + w]


def brute_force_xcorr_shift(f1, f2):
    """Shift d maximizing sum_p f1(p) f2(p + d) over all circular shifts (mean removed)."""
    a = f1 - f1.mean()
    b = f2 - f2.mean()
    h, w = a.shape
    best, arg = -np.inf, None
    for dy in range(h):
        for dx in range(w):
            v = np.sum(a * np.roll(b, (-dy, -dx), axis=(0, 1)))
            if v > best:
                best, arg = v, (dy, dx)
    dy, dx = arg
    # wrap into the centered range
    return (dy + h // 2) % h - h // 2, (dx + w // 2) % w - w // 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scene(rng):
    def make(n=128, exponent=2.0):
        return smooth_texture((n, n), rng, exponent)

    return make
