import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_stream
from oracles import support_bruteforce
from tsisc.array_sim import AnalogArray
from tsisc.cell_model import VariabilitySpec, load_preset, load_variability
from tsisc.digital_surface import SaeMap
from tsisc.errors import ConfigError
from tsisc.events import NOISE, SIGNAL, SceneConfig, StreamHeader, generate_synthetic, \
    inject_noise, make_events
from tsisc.stcf import (
    StcfConfig, auc_from_points, classify_event, denoise_stream, roc_curve, state_factory_for,
    support_counts, write_roc_csv,
)


def _factory(cfg, w, h, cap="20fF", var=None, arch="3d"):
    return state_factory_for(cfg, w, h, load_preset(cap), var or VariabilitySpec(), arch)


@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 5_000), st.booleans(),
       st.integers(0, 4), st.booleans())
def test_timestamp_support_matches_bruteforce(seed, radius, window, split, th, write_noise):
    rng = np.random.default_rng(seed)
    _, ev = random_stream(rng, 10, 8, 150, 20_000)
    cfg = StcfConfig(radius=radius, window_us=window, threshold=min(th, (2 * radius + 1) ** 2 - 1),
                     polarity_mode="split" if split else "merged", write_noise=write_noise)
    sup = support_counts(ev, cfg, SaeMap(10, 8, cfg.polarity_mode))
    ref = support_bruteforce(ev, radius, window, 2 if split else 1, cfg.threshold, write_noise)
    np.testing.assert_array_equal(sup, ref)


@given(st.integers(0, 2**31), st.sampled_from(["20fF", "10fF"]), st.booleans())
def test_voltage_backend_equals_timestamp_without_variability(seed, cap, split):
    rng = np.random.default_rng(seed)
    _, ev = random_stream(rng, 16, 16, 400, 200_000)
    mode = "split" if split else "merged"
    ts = StcfConfig(polarity_mode=mode)
    vs = StcfConfig(backend="voltage", polarity_mode=mode)
    a = support_counts(ev, ts, _factory(ts, 16, 16)())
    b = support_counts(ev, vs, _factory(vs, 16, 16, cap)())
    np.testing.assert_array_equal(a, b)


def test_kept_set_shrinks_with_threshold():
    rng = np.random.default_rng(1)
    _, ev = random_stream(rng, 32, 32, 5_000, 500_000)
    prev = None
    for th in range(0, 9):
        cfg = StcfConfig(threshold=th)
        out, _ = denoise_stream(ev, cfg, _factory(cfg, 32, 32), labeled=False)
        if prev is not None:
            assert not np.any(out.decision & ~prev)
        prev = out.decision


def test_sparse_noise_rejection_matches_poisson_oracle():
    rate, window, w = 1.0, 24_000, 64
    header = StreamHeader(w, w, 10_000_000)
    _, ev = inject_noise(make_events([], [], []), header, rate, seed=3)
    cfg = StcfConfig(threshold=2, window_us=window)
    out, kept = denoise_stream(ev, cfg, _factory(cfg, w, w), labeled=False)
    fpr = kept.size / ev.size
    # each neighbour independently fired within the window with prob q
    q = 1.0 - np.exp(-rate * window * 1e-6)
    side = np.array([2] + [3] * (w - 2) + [2])
    n_nb = (side[:, None] * side[None, :] - 1).ravel()
    p_lt2 = (1 - q) ** n_nb + n_nb * q * (1 - q) ** (n_nb - 1)
    oracle = float(np.mean(1.0 - p_lt2))
    assert fpr < 0.1
    assert fpr == pytest.approx(oracle, abs=0.004)


def test_moving_edge_mostly_kept(edge_fixture):
    _, ev = edge_fixture
    cfg = StcfConfig(threshold=1)
    out, _ = denoise_stream(ev, cfg, _factory(cfg, 64, 64))
    assert out.tpr > 0.95


def test_shuffled_labels_give_chance_auc(edge_fixture):
    _, ev = edge_fixture
    ev = ev.copy()
    ev["label"] = np.random.default_rng(0).permutation(ev["label"])
    cfg = StcfConfig()
    assert roc_curve(ev, cfg, _factory(cfg, 64, 64)).auc == pytest.approx(0.5, abs=0.03)


def test_roc_endpoints_and_csv(tmp_path, edge_fixture):
    _, ev = edge_fixture
    cfg = StcfConfig()
    out = roc_curve(ev, cfg, _factory(cfg, 64, 64))
    assert out.roc[0][1:] == (1.0, 1.0)  # th = 0 keeps everything
    assert len(out.roc) == 9
    fprs = [f for _, f, _ in out.roc]
    assert fprs == sorted(fprs, reverse=True)
    write_roc_csv(tmp_path / "roc.csv", out.roc)
    assert (tmp_path / "roc.csv").read_text().splitlines()[0] == "th,fpr,tpr"


def test_roc_without_write_noise_runs_per_threshold(edge_fixture):
    _, ev = edge_fixture
    cfg = StcfConfig(write_noise=False)
    out = roc_curve(ev[:5_000], cfg, _factory(cfg, 64, 64), thresholds=[1, 2, 3])
    assert len(out.roc) == 3 and 0.0 <= out.auc <= 1.0


def test_roc_requires_both_classes():
    ev = make_events([1, 2], [0, 1], [0, 0], 1, SIGNAL)
    cfg = StcfConfig()
    with pytest.raises(ConfigError):
        roc_curve(ev, cfg, _factory(cfg, 4, 4))


def test_auc_of_perfect_and_diagonal_classifiers():
    assert auc_from_points([(0.0, 1.0)]) == pytest.approx(1.0)
    assert auc_from_points([(0.3, 0.3), (0.7, 0.7)]) == pytest.approx(0.5)


def test_classify_event_then_write():
    sae = SaeMap(4, 4)
    cfg = StcfConfig(threshold=1)
    ev = make_events([0, 100, 200], [0, 1, 3], [0, 0, 3])
    assert classify_event(sae, ev[0], cfg) == (NOISE, 0)
    assert classify_event(sae, ev[1], cfg) == (SIGNAL, 1)
    assert classify_event(sae, ev[2], cfg) == (NOISE, 0)
    assert sae[3, 3] == 200


def test_window_boundary_is_inclusive():
    ev = make_events([0, 24_000, 48_001], [0, 1, 2], [0, 0, 0])
    sup = support_counts(ev, StcfConfig(), SaeMap(4, 4))
    assert sup.tolist() == [0, 1, 0]


def test_2d_droop_costs_support():
    # cell (0,0) is written, then 20 row-mates fire before its neighbour (1,1) looks at it
    n = 20
    xs = [0] + list(range(3, 3 + n)) + [1]
    ts = [0] + [1_000 * (i + 1) for i in range(n)] + [21_000]
    ys = [0] * (n + 1) + [1]
    ev = make_events(ts, xs, ys)
    cfg = StcfConfig(backend="voltage")
    ideal = support_counts(ev, cfg, _factory(cfg, 32, 4)())
    droop = support_counts(ev, cfg, _factory(cfg, 32, 4, arch="2d")())
    assert ideal[-1] == 1 and droop[-1] == 0


def test_config_validation():
    with pytest.raises(ConfigError):
        StcfConfig(radius=0).validate()
    with pytest.raises(ConfigError):
        StcfConfig(threshold=9).validate()
    with pytest.raises(ConfigError):
        StcfConfig(backend="fpga").validate()
    with pytest.raises(ConfigError):
        support_counts(make_events([0], [0], [0]), StcfConfig(backend="voltage"), SaeMap(2, 2))
