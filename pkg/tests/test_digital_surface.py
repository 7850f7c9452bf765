import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_stream
from tsisc.digital_surface import (
    EMPTY, SaeMap, global_ts, patch_ts, read_tsf, sae_write, sae_write_many, wrap_error_demo,
    wrapped_ts, write_tsf,
)
from tsisc.errors import BoundsError, ClockError, StreamFormatError
from tsisc.events import make_events


def _one(x, y, t, p=1):
    return make_events([t], [x], [y], [p])[0]


def test_single_write_decays_exponentially():
    sae = SaeMap(4, 4)
    sae_write(sae, _one(1, 2, 0))
    ts = global_ts(sae, 24_000, tau=10_000)
    assert ts[2, 1] == pytest.approx(0.0907180, abs=1e-7)
    assert ts.sum() == pytest.approx(ts[2, 1])


def test_unwritten_cells_are_zero_and_fresh_cells_one():
    sae = SaeMap(3, 3)
    sae_write(sae, _one(0, 0, 500))
    ts = global_ts(sae, 500)
    assert ts[0, 0] == 1.0 and ts.sum() == 1.0


def test_query_before_latest_write_raises():
    sae = SaeMap(3, 3)
    sae_write(sae, _one(0, 0, 500))
    with pytest.raises(ClockError):
        global_ts(sae, 499)


def test_counter_latches_modular_ticks():
    sae = SaeMap(2, 2, counter_bits=4, counter_tick=1000)
    sae_write(sae, _one(0, 0, 17_000))
    assert sae.counter[0, 0, 0] == 1


def test_last_write_wins_and_indexing():
    sae = SaeMap(4, 4)
    sae_write_many(sae, make_events([1, 2, 3], [1, 1, 2], [1, 1, 3]))
    assert sae[1, 1] == 2 and sae[2, 3] == 3 and sae[0, 0] == EMPTY
    assert sae.latest_t == 3


def test_split_polarity_planes():
    sae = SaeMap(4, 4, "split")
    sae_write_many(sae, make_events([1, 2], [0, 0], [0, 0], [0, 1]))
    assert sae[0, 0, 0] == 1 and sae[0, 0, 1] == 2
    assert global_ts(sae, 10).shape == (2, 4, 4)
    assert global_ts(sae, 10, polarity=1).shape == (4, 4)


def test_write_out_of_bounds():
    with pytest.raises(BoundsError):
        sae_write(SaeMap(2, 2), _one(2, 0, 0))


def test_patch_zero_padded_at_border():
    sae = SaeMap(5, 5)
    sae_write_many(sae, make_events([0, 1_000, 2_000], [1, 0, 0], [0, 1, 0]))
    patch = patch_ts(sae, _one(0, 0, 2_000), radius=1, tau=1_000)
    expected = np.array([[0, 0, 0],
                         [0, 1.0, math.exp(-2.0)],
                         [0, math.exp(-1.0), 0]])
    np.testing.assert_allclose(patch.values, expected, atol=1e-15)


def test_patch_requires_current_centre():
    sae = SaeMap(3, 3)
    sae_write_many(sae, make_events([0, 5], [1, 1], [1, 1]))
    with pytest.raises(ClockError):
        patch_ts(sae, _one(1, 1, 0))


@given(st.integers(0, 2**31), st.integers(2, 12))
def test_wrapped_matches_exact_within_one_period(seed, bits):
    rng = np.random.default_rng(seed)
    tick = 100
    period = tick * (1 << bits)
    _, ev = random_stream(rng, 6, 6, 40, period // 2)
    sae = SaeMap(6, 6, counter_bits=bits, counter_tick=tick)
    sae_write_many(sae, ev)
    t = int(ev["t"][-1])
    # with tick-aligned writes the only error is the sub-tick quantisation
    np.testing.assert_allclose(wrapped_ts(sae, t, tau=1e9), global_ts(sae, t, tau=1e9),
                               atol=2 * tick / 1e9)


def test_wrap_demo_flags_stale_pixel():
    ev = make_events([1_000, 60_000], [0, 1], [0, 0])
    q = np.array([66_536 + 1_000 + 3])  # one counter period after the first write
    report = wrap_error_demo(ev, 2, 1, counter_bits=4, counter_tick=4_096, tau=10_000,
                             query_times=q)
    assert report.n_aliased >= 1


def test_tsf_roundtrip(tmp_path):
    surf = np.random.default_rng(0).random((7, 9)).astype(np.float32)
    write_tsf(tmp_path / "a.tsf", surf)
    data = (tmp_path / "a.tsf").read_bytes()
    assert data.startswith(b"TSF1 9 7\n") and len(data) == 9 + 4 * 63
    np.testing.assert_array_equal(read_tsf(tmp_path / "a.tsf"), surf)


def test_tsf_rejects_garbage(tmp_path):
    (tmp_path / "b.tsf").write_bytes(b"TSF1 2 2\n" + bytes(3))
    with pytest.raises(StreamFormatError):
        read_tsf(tmp_path / "b.tsf")
    (tmp_path / "c.tsf").write_bytes(b"PGM 2 2\n")
    with pytest.raises(StreamFormatError):
        read_tsf(tmp_path / "c.tsf")
