import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tsisc.array_sim import AnalogArray
from tsisc.cell_model import load_preset
from tsisc.digital_surface import SaeMap, read_tsf
from tsisc.errors import ConfigError, StreamFormatError
from tsisc.events import SceneConfig, generate_synthetic, make_events
from tsisc.frames import (
    FrameSpec, dequantize_u8, export_frames, quantize_u8, read_pgm, resize_bilinear, write_pgm,
)

M20 = load_preset("20fF")


def test_edge_aligned_upsampling():
    out = resize_bilinear([[0.0, 1.0], [0.0, 1.0]], 4, 4)
    np.testing.assert_allclose(out, np.tile([0, 1 / 3, 2 / 3, 1], (4, 1)), atol=1e-15)


def test_checkerboard_halving_averages_blocks():
    board = (np.indices((224, 224)).sum(0) % 2).astype(float)
    out = resize_bilinear(board, 112, 112)
    blocks = board.reshape(112, 2, 112, 2).mean(axis=(1, 3))
    np.testing.assert_allclose(out, blocks, atol=1e-6)


def test_non_integer_downscale_is_area_weighted():
    row = np.array([[0.0, 3.0, 6.0]])
    # two outputs of width 1.5 input pixels each
    np.testing.assert_allclose(resize_bilinear(row, 2, 1), [[1.0, 5.0]])


@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(0, 1)))
def test_identity_resize_is_exact(a):
    assert np.array_equal(resize_bilinear(a, a.shape[1], a.shape[0]), a)


@given(st.floats(0, 1), st.integers(1, 20), st.integers(1, 20), st.integers(1, 40),
       st.integers(1, 40))
def test_constant_preserved(v, h, w, oh, ow):
    out = resize_bilinear(np.full((h, w), v), ow, oh)
    assert out.shape == (oh, ow)
    np.testing.assert_allclose(out, v, atol=1e-12)


def test_resize_keeps_range_and_rejects_empty():
    rng = np.random.default_rng(0)
    out = resize_bilinear(rng.random((2, 13, 17)), 40, 9)
    assert out.shape == (2, 9, 40) and out.min() >= 0 and out.max() <= 1
    with pytest.raises(ConfigError):
        resize_bilinear(np.ones((3, 3)), 0, 5)


@given(st.floats(0, 1))
def test_u8_quantisation_error_bound(v):
    back = dequantize_u8(quantize_u8(np.array([v])))
    assert abs(back[0] - v) <= 1 / 510 + 1e-12


def test_pgm_roundtrip(tmp_path):
    frame = np.random.default_rng(2).integers(0, 256, (5, 7), dtype=np.uint8)
    write_pgm(tmp_path / "f.pgm", frame)
    assert (tmp_path / "f.pgm").read_bytes()[:11] == b"P5\n7 5\n255\n"
    np.testing.assert_array_equal(read_pgm(tmp_path / "f.pgm"), frame)
    (tmp_path / "g.pgm").write_bytes(b"P2\n1 1\n255\n\x00")
    with pytest.raises(StreamFormatError):
        read_pgm(tmp_path / "g.pgm")


def _stream():
    return generate_synthetic(SceneConfig(width=16, height=12, duration_us=120_000,
                                          speed_px_s=200.0))


def test_windowing_drops_partial_frame(tmp_path):
    _, ev = _stream()
    spec = FrameSpec(size=32)
    rows = export_frames(ev, lambda: AnalogArray(16, 12, M20), spec, tmp_path,
                         duration_us=120_000)
    assert [(f, t) for f, t, _ in rows] == [(0, 50_000), (1, 100_000)]
    index = (tmp_path / "index.csv").read_text().splitlines()
    assert index == ["frame_id,t_us,path", "0,50000,frame_00000.pgm",
                     "1,100000,frame_00001.pgm"]
    assert read_pgm(tmp_path / "frame_00000.pgm").shape == (32, 32)


def test_emit_partial_adds_last_frame(tmp_path):
    _, ev = _stream()
    rows = export_frames(ev, lambda: AnalogArray(16, 12, M20), FrameSpec(emit_partial=True),
                         tmp_path, duration_us=120_000)
    assert [t for _, t, _ in rows] == [50_000, 100_000, 120_000]


def test_timestamp_mode_and_default_size(tmp_path):
    _, ev = _stream()
    spec = FrameSpec(timestamps=(5_000, 33_000, 90_000), quantization="float32")
    rows = export_frames(ev, lambda: AnalogArray(16, 12, M20), spec, tmp_path)
    assert [t for _, t, _ in rows] == [5_000, 33_000, 90_000]
    frame = read_tsf(tmp_path / rows[0][2])
    assert frame.shape == (256, 256) and frame.dtype == np.float32
    assert 0.0 <= frame.min() and frame.max() <= 1.0


def test_frame_matches_resized_surface(tmp_path):
    from tsisc.array_sim import read_surface, write_events
    _, ev = _stream()
    spec = FrameSpec(size=(20, 10), quantization="float32")
    rows = export_frames(ev, lambda: AnalogArray(16, 12, M20), spec, tmp_path,
                         duration_us=120_000)
    arr = AnalogArray(16, 12, M20)
    write_events(arr, ev[ev["t"] <= 50_000])
    ref = resize_bilinear(read_surface(arr, 50_000), 20, 10).astype(np.float32)
    np.testing.assert_array_equal(read_tsf(tmp_path / rows[0][2]), ref)


def test_empty_window_still_emitted(tmp_path):
    ev = make_events([130_000], [0], [0])
    rows = export_frames(ev, lambda: SaeMap(4, 4), FrameSpec(size=8), tmp_path)
    assert len(rows) == 2
    assert read_pgm(tmp_path / rows[0][2]).max() == 0


def test_split_channels_one_file_each(tmp_path):
    _, ev = _stream()
    rows = export_frames(ev, lambda: AnalogArray(16, 12, M20, polarity_mode="split"),
                         FrameSpec(size=16, channels=2), tmp_path, duration_us=120_000)
    assert [p for _, _, p in rows[:2]] == ["frame_00000_c0.pgm", "frame_00000_c1.pgm"]
    with pytest.raises(ConfigError):
        export_frames(ev, lambda: AnalogArray(16, 12, M20), FrameSpec(channels=2), tmp_path)


def test_digital_backend_frames(tmp_path):
    _, ev = _stream()
    rows = export_frames(ev, lambda: SaeMap(16, 12), FrameSpec(size=16, digital_tau_us=20_000),
                         tmp_path, duration_us=120_000)
    assert read_pgm(tmp_path / rows[0][2]).max() == 255


def test_spec_validation():
    with pytest.raises(ConfigError):
        FrameSpec(window_us=0).validate()
    with pytest.raises(ConfigError):
        FrameSpec(timestamps=(5, 3)).validate()
    with pytest.raises(ConfigError):
        FrameSpec(quantization="u16").validate()
