"""Coded-aperture video simulation and mask-invariant motion features."""

from .errors import CamotionError
from .mask import Mask, generate_mask, spectral_report, is_broadband
from .optics import CaptureConfig, capture, capture_clip
from .motion import cross_power, t_map, rs_map, log_polar_magnitude, recover_motion
from .features import StrideConfig, FeatureStack, n_pairs, stack_channels, extract_mstrs, read_stack, write_stack
from .clip import Clip, load_clip_dir, save_clip_dir

__version__ = "0.1.0"
