import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camotion.errors import DimensionError, FormatError, ParameterError, TruncationError, ValidationError
from camotion.features import (
    FeatureStack,
    StrideConfig,
    center_crop,
    extract_mstrs,
    n_pairs,
    read_stack,
    stack_channels,
    write_stack,
)
from camotion.motion import LogPolarParams, cross_power, rs_map

TABLE = [
    ((2, 3, 4, 6), 13, 30),
    ((3, 4, 6), 13, 18),
    ((4, 6), 13, 10),
    ((3, 4, 6), 19, 26),
    ((4, 6), 19, 14),
    ((2,), 13, 12),
]


@pytest.mark.parametrize("strides,length,channels", TABLE)
def test_channel_counts(strides, length, channels):
    assert stack_channels(StrideConfig(strides, length)) == channels


def test_single_stride_split():
    assert n_pairs(2, 13) == 6


@given(s=st.integers(1, 30), extra=st.integers(1, 40))
def test_pairs_stay_in_clip(s, extra):
    length = s + extra
    n = n_pairs(s, length)
    assert (n - 1) * s + s <= length - 1
    assert n * s + s > length - 1
    if length % s:
        assert n == (length - s) // s + 1


def test_config_validation():
    with pytest.raises(ParameterError):
        StrideConfig((3, 2), 13)
    with pytest.raises(ParameterError):
        StrideConfig((2, 13), 13)
    with pytest.raises(ParameterError):
        StrideConfig((2,), 13, sim_size=64, crop_size=96)
    with pytest.raises(ParameterError):
        n_pairs(0, 5)


def test_center_crop():
    a = np.arange(10)
    assert list(center_crop(a, 4, 0)) == [3, 4, 5, 6]


def small_cfg(strides=(2, 3), length=7):
    return StrideConfig(strides, length, sim_size=32, crop_size=24)


def test_extract_layout_and_values(rng):
    cfg = small_cfg()
    frames = rng.random((9, 32, 32))
    st_ = extract_mstrs(frames, cfg, start=1)
    assert st_.tensor.shape == (cfg.channels, 24, 24)
    assert st_.tensor.dtype == np.float32
    kinds = [(c["stride"], c["kind"]) for c in st_.channels]
    assert kinds == [(2, "T")] * 3 + [(2, "RS")] * 3 + [(3, "T")] * 2 + [(3, "RS")] * 2
    # first stride-3 T channel pairs frames 1 and 4 of the source
    ref = cross_power(frames[1], frames[4]).values[4:28, 4:28]
    assert np.allclose(st_.tensor[6], ref, atol=1e-6)
    # RS channel: theta axis center-cropped, rho axis resized end to end
    rs = rs_map(frames[1], frames[3]).values
    got = st_.tensor[3]
    assert np.allclose(got[0], rs[0, 4:28], atol=1e-6)
    assert np.allclose(got[-1], rs[-1, 4:28], atol=1e-6)


def test_t_only_skips_rs(rng):
    cfg = small_cfg()
    frames = rng.random((7, 32, 32))
    full = extract_mstrs(frames, cfg)
    t_only = extract_mstrs(frames, cfg, kinds=("T",))
    assert np.array_equal(t_only.tensor, full.select("T").tensor)
    assert len(full.select("RS").channels) == cfg.channels // 2


def test_extract_errors(rng):
    cfg = small_cfg()
    with pytest.raises(DimensionError):
        extract_mstrs(rng.random((7, 30, 30)), cfg)
    with pytest.raises(ParameterError):
        extract_mstrs(rng.random((6, 32, 32)), cfg)
    with pytest.raises(ParameterError):
        extract_mstrs(rng.random((7, 32, 32)), cfg, lp_params=LogPolarParams(32, 16))


def test_feature_stack_validation():
    with pytest.raises(ValidationError):
        FeatureStack(np.zeros((2, 4, 4)), ({"stride": 2, "pair_index": 0, "kind": "T"},), 4)


def test_roundtrip_bit_exact(tmp_path, rng):
    st_ = extract_mstrs(rng.random((7, 32, 32)), small_cfg())
    path = tmp_path / "a.mstr"
    write_stack(st_, path)
    back = read_stack(path)
    assert back.tensor.tobytes() == st_.tensor.tobytes()
    assert back.channels == st_.channels
    assert back.crop_size == 24
    head = path.read_bytes()[:20]
    assert struct.unpack("<4sIIII", head) == (b"MSTR", 1, 10, 24, 24)


@pytest.fixture
def stack_file(tmp_path, rng):
    path = tmp_path / "s.mstr"
    write_stack(extract_mstrs(rng.random((7, 32, 32)), small_cfg()), path)
    return path


def test_bad_magic(stack_file):
    data = bytearray(stack_file.read_bytes())
    data[:4] = b"XXXX"
    stack_file.write_bytes(bytes(data))
    with pytest.raises(FormatError) as info:
        read_stack(stack_file)
    assert info.value.code == "format"


def test_bad_version(stack_file):
    data = bytearray(stack_file.read_bytes())
    data[4:8] = struct.pack("<I", 9)
    stack_file.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        read_stack(stack_file)


@pytest.mark.parametrize("cut", [1, 100, 4000])
def test_truncated(stack_file, cut):
    data = stack_file.read_bytes()
    stack_file.write_bytes(data[:-cut])
    with pytest.raises(TruncationError) as info:
        read_stack(stack_file)
    assert info.value.code == "truncation"


def test_wrong_declared_length(stack_file):
    data = bytearray(stack_file.read_bytes())
    data[8:12] = struct.pack("<I", 11)
    stack_file.write_bytes(bytes(data))
    with pytest.raises(TruncationError):
        read_stack(stack_file)


def test_tiny_file(tmp_path):
    p = tmp_path / "t.mstr"
    p.write_bytes(b"MSTR")
    with pytest.raises(TruncationError):
        read_stack(p)


def test_garbled_trailer(stack_file):
    data = bytearray(stack_file.read_bytes())
    data[-10] = 0xFF
    stack_file.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        read_stack(stack_file)
