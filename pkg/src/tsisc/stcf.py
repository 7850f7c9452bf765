"""Spatio-temporal correlation filter (STCF) with exact-timestamp and
cell-voltage back-ends, plus ROC/AUC evaluation against labels.

An event is signal when at least ``th`` cells of its (2r+1)^2 neighbourhood
(centre excluded) were written within the correlation window. The voltage
back-end replaces "t - SAE <= window" with "V_mem >= V_tw", V_tw being the
cell voltage the nominal decay model holds after exactly one window.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .array_sim import AnalogArray
from .cell_model import v_threshold_for_window
from .digital_surface import SaeMap
from .errors import BoundsError, ConfigError
from .events import NOISE, SIGNAL

DEFAULT_WINDOW_US = 24_000


@dataclass
class StcfConfig:
    radius: int = 1
    window_us: int = DEFAULT_WINDOW_US
    threshold: int = 1
    backend: str = "timestamp"
    v_tw: float | None = None
    polarity_mode: str = "merged"
    write_noise: bool = True

    def validate(self):
        if self.radius < 1:
            raise ConfigError("radius must be >= 1", "radius")
        if self.window_us <= 0:
            raise ConfigError("time window must be > 0", "window_us")
        if not 0 <= self.threshold <= (2 * self.radius + 1) ** 2 - 1:
            raise ConfigError("threshold exceeds neighbourhood size", "threshold")
        if self.backend not in ("timestamp", "voltage"):
            raise ConfigError(f"unknown backend {self.backend!r}", "backend")
        if self.polarity_mode not in ("merged", "split"):
            raise ConfigError(f"unknown polarity_mode {self.polarity_mode!r}", "polarity_mode")

    @property
    def max_support(self):
        return (2 * self.radius + 1) ** 2 - 1


def _voltage_threshold(cfg: StcfConfig, state: AnalogArray) -> float:
    if cfg.v_tw is not None:
        return float(cfg.v_tw)
    return v_threshold_for_window(state.model, cfg.window_us)


def _columns(events, planes):
    ks = (events["p"].astype(np.int64) if planes == 2
          else np.zeros(events.size, np.int64))
    return (events["x"].astype(np.int64), events["y"].astype(np.int64),
            events["t"].astype(np.int64), ks)


def support_counts(events: np.ndarray, cfg: StcfConfig, state) -> np.ndarray:
    """Run the filter over ``events`` updating ``state``; returns support per event."""
    cfg.validate()
    if events.size == 0:
        return np.empty(0, np.int32)
    if np.any(events["x"] >= state.width) or np.any(events["y"] >= state.height):
        raise BoundsError("event outside the filter state")
    cols = _columns(events, state.planes)
    if cfg.backend == "timestamp":
        if not isinstance(state, SaeMap):
            raise ConfigError("timestamp backend needs an SaeMap state", "backend")
        sup = K.stcf_timestamp(*cols, state.timestamps, cfg.radius, cfg.window_us,
                               cfg.threshold, cfg.write_noise)
    else:
        if not isinstance(state, AnalogArray):
            raise ConfigError("voltage backend needs an AnalogArray state", "backend")
        sup = K.stcf_voltage(*cols, *state.state_arrays(), state.droop_k, state.dv,
                             cfg.radius, _voltage_threshold(cfg, state), cfg.threshold,
                             cfg.write_noise)
    written = sup >= cfg.threshold if not cfg.write_noise else np.ones(sup.size, bool)
    if written.any():
        state.latest_t = max(state.latest_t, int(cols[2][written][-1]))
    return sup


def classify_event(state, event, cfg: StcfConfig):
    """Classify one event against the current state, then write it.

    Returns ``(label, support)`` with label SIGNAL or NOISE.
    """
    ev = np.asarray(event).reshape(1)
    s = int(support_counts(ev, cfg, state)[0])
    return (SIGNAL if s >= cfg.threshold else NOISE), s


@dataclass
class DenoiseOutcome:
    support: np.ndarray
    decision: np.ndarray
    labels: np.ndarray | None = None
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    roc: list = field(default_factory=list)  # (th, fpr, tpr)
    auc: float | None = None

    @property
    def tpr(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def fpr(self):
        return self.fp / (self.fp + self.tn) if self.fp + self.tn else 0.0


def _confusion(decision, labels):
    sig = labels == SIGNAL
    tp = int(np.sum(decision & sig))
    fp = int(np.sum(decision & ~sig))
    return tp, fp, int(np.sum(~sig)) - fp, int(np.sum(sig)) - tp


def denoise_stream(events: np.ndarray, cfg: StcfConfig, state_factory, labeled=None):
    """Filter a stream in one pass.

    ``state_factory()`` returns a fresh SaeMap or AnalogArray. Returns the
    outcome and the events classified as signal.
    """
    state = state_factory()
    support = support_counts(events, cfg, state)
    decision = support >= cfg.threshold
    if labeled is None:
        labeled = events.size > 0 and bool(np.any(events["label"] == SIGNAL))
    out = DenoiseOutcome(support, decision)
    if labeled:
        out.labels = events["label"].copy()
        out.tp, out.fp, out.tn, out.fn = _confusion(decision, out.labels)
    return out, events[decision]


def auc_from_points(points) -> float:
    """Trapezoidal area under (fpr, tpr) points with (0,0) and (1,1) added."""
    pts = sorted({(0.0, 0.0), (1.0, 1.0), *((float(f), float(t)) for f, t in points)})
    f = np.array([p[0] for p in pts])
    t = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2))


def roc_curve(events: np.ndarray, cfg: StcfConfig, state_factory, thresholds=None):
    """One (FPR, TPR) point per threshold and the trapezoidal AUC.

    With ``write_noise`` (the default) the state evolution does not depend on
    the threshold, so a single pass provides every point.
    """
    if events.size == 0 or not np.any(events["label"] == SIGNAL) \
            or not np.any(events["label"] == NOISE):
        raise ConfigError("ROC needs a labeled stream with both classes", "labels")
    cfg.validate()
    if thresholds is None:
        thresholds = range(0, cfg.max_support + 1)
    labels = events["label"]
    points = []
    if cfg.write_noise:
        support = support_counts(events, cfg, state_factory())
        for th in thresholds:
            tp, fp, tn, fn = _confusion(support >= th, labels)
            points.append((th, fp / (fp + tn), tp / (tp + fn)))
    else:
        for th in thresholds:
            c = StcfConfig(**{**cfg.__dict__, "threshold": th})
            support = support_counts(events, c, state_factory())
            tp, fp, tn, fn = _confusion(support >= th, labels)
            points.append((th, fp / (fp + tn), tp / (tp + fn)))
    base_th = cfg.threshold
    c = StcfConfig(**{**cfg.__dict__, "threshold": base_th})
    outcome, _ = denoise_stream(events, c, state_factory, labeled=True)
    outcome.roc = points
    outcome.auc = auc_from_points([(f, t) for _, f, t in points])
    return outcome


def write_roc_csv(path, roc):
    with open(path, "w") as fh:
        fh.write("th,fpr,tpr\n")
        for th, f, t in roc:
            fh.write(f"{th},{f!r},{t!r}\n")


def state_factory_for(cfg: StcfConfig, width, height, model=None, variability=None,
                      architecture="3d", **array_kw):
    """Factory producing fresh filter state matching ``cfg``."""
    if cfg.backend == "timestamp":
        return lambda: SaeMap(width, height, cfg.polarity_mode)
    if model is None:
        raise ConfigError("voltage backend needs a decay model", "cap")
    return lambda: AnalogArray(width, height, model, variability, architecture,
                               cfg.polarity_mode, **array_kw)
