"""Event-driven simulation of an eDRAM time-surface array.

Two write architectures:

* ``3d``: every pixel drives its own cell through a vertical bond; a write
  touches only the target cell.
* ``2d``: cells share write word lines (rows) and write bit lines
  (columns). Writing a cell turns on the switch of every row-mate whose bit
  line is low, which discharges it by a factor exp(-T_p / tau_on) per pulse
  (green half-select). Column-mates see a coupling step of ``coupling_v``
  volts (blue half-select, default 0).

Nothing is advanced per time step: each cell keeps its last write time and
the number of half-select pulses since then, and voltages are computed at
read time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .cell_model import DecayModel, VariabilitySpec, sample_cells
from .errors import BoundsError, ClockError, ConfigError

THREE_D, TWO_D = "3d", "2d"
EMPTY = K.EMPTY


@dataclass
class HalfSelectStats:
    event_index: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dt_us: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    dv_volts: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))

    def extend(self, idx, dt, dv):
        self.event_index = np.concatenate([self.event_index, idx])
        self.dt_us = np.concatenate([self.dt_us, dt])
        self.dv_volts = np.concatenate([self.dv_volts, dv])

    def __len__(self):
        return self.event_index.size

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("event_index,dt_us,dv_volts\n")
            for i, dt, dv in zip(self.event_index.tolist(), self.dt_us.tolist(),
                                 self.dv_volts.tolist()):
                fh.write(f"{i},{dt},{dv!r}\n")


class AnalogArray:
    def __init__(self, width, height, model: DecayModel, variability: VariabilitySpec = None,
                 architecture=THREE_D, polarity_mode="merged", pulse_ns=5.0,
                 tau_on_ns=100.0, coupling_v=0.0):
        if architecture not in (THREE_D, TWO_D):
            raise ConfigError(f"unknown architecture {architecture!r}", "architecture")
        if polarity_mode not in ("merged", "split"):
            raise ConfigError(f"unknown polarity_mode {polarity_mode!r}", "polarity_mode")
        if pulse_ns < 0 or tau_on_ns <= 0 or coupling_v < 0:
            raise ConfigError("half-select parameters out of range", "pulse_ns/tau_on_ns")
        self.width, self.height = width, height
        self.model = model
        self.variability = variability or VariabilitySpec()
        self.architecture = architecture
        self.polarity_mode = polarity_mode
        self.planes = 2 if polarity_mode == "split" else 1
        self.pulse_ns, self.tau_on_ns, self.coupling_v = pulse_ns, tau_on_ns, coupling_v

        shape = (self.planes, height, width)
        cells = sample_cells(model, self.variability, int(np.prod(shape)))
        self.a1 = cells.a1.reshape(shape)
        self.tau1 = cells.tau1_us.reshape(shape)
        self.a2 = cells.a2.reshape(shape)
        self.tau2 = cells.tau2_us.reshape(shape)
        self.b = cells.b.reshape(shape)
        self.vr = cells.v_reset.reshape(shape)
        self.reset()

    def reset(self):
        shape = (self.planes, self.height, self.width)
        self.last_t = np.full(shape, EMPTY, np.int64)
        self.row_cnt = np.zeros((self.planes, self.height), np.int64)
        self.col_cnt = np.zeros((self.planes, self.width), np.int64)
        self.row_mark = np.zeros(shape, np.int64)
        self.col_mark = np.zeros(shape, np.int64)
        self.latest_t = EMPTY

    @property
    def droop_k(self) -> float:
        if self.architecture == THREE_D:
            return 1.0
        return math.exp(-self.pulse_ns / self.tau_on_ns)

    @property
    def dv(self) -> float:
        return self.coupling_v if self.architecture == TWO_D else 0.0

    @property
    def v_reset(self) -> float:
        return self.model.v_reset

    @property
    def half_selects(self) -> np.ndarray:
        """Word-line half-select pulses each cell has taken since its write."""
        if self.architecture == THREE_D:
            return np.zeros_like(self.last_t)
        n = self.row_cnt[:, :, None] - self.row_mark
        return np.where(self.last_t == EMPTY, 0, n)

    @property
    def droop_factor(self) -> np.ndarray:
        return self.droop_k ** self.half_selects

    def state_arrays(self):
        return (self.last_t, self.a1, self.tau1, self.a2, self.tau2, self.b, self.vr,
                self.row_cnt, self.row_mark, self.col_cnt, self.col_mark)

    def _planes_of(self, p):
        p = np.asarray(p, dtype=np.int64)
        return p if self.planes == 2 else np.zeros_like(p)

    def _check_batch(self, events):
        if events.size == 0:
            return
        if np.any(events["x"] >= self.width) or np.any(events["y"] >= self.height):
            i = int(np.flatnonzero((events["x"] >= self.width)
                                   | (events["y"] >= self.height))[0])
            raise BoundsError(f"event {i} outside {self.width}x{self.height} array")
        t = events["t"].astype(np.int64)
        if t[0] < self.latest_t or np.any(t[1:] < t[:-1]):
            raise ClockError("event time goes backwards")


def write_event(array: AnalogArray, event, stats: HalfSelectStats | None = None,
                index: int = 0) -> None:
    """Write one event; in 2D mode half-select records go into ``stats``."""
    ev = np.asarray(event).reshape(1) if np.ndim(event) == 0 else event
    write_events(array, ev, stats, first_index=index)


def write_events(array: AnalogArray, events: np.ndarray, stats: HalfSelectStats | None = None,
                 first_index: int = 0) -> None:
    array._check_batch(events)
    if events.size == 0:
        return
    xs = events["x"].astype(np.int64)
    ys = events["y"].astype(np.int64)
    ts = events["t"].astype(np.int64)
    ks = array._planes_of(events["p"])
    if stats is not None and array.architecture == TWO_D:
        idx, dts, dvs = K.write_batch_stats(xs, ys, ts, ks, first_index, *array.state_arrays(),
                                            array.droop_k, array.dv)
        stats.extend(idx, dts, dvs)
    else:
        K.write_batch(xs, ys, ts, ks, array.last_t, array.row_cnt, array.row_mark,
                      array.col_cnt, array.col_mark)
    array.latest_t = int(ts[-1])


def read_surface(array: AnalogArray, t_read) -> np.ndarray:
    """Cell voltages at ``t_read``: (H, W), or (2, H, W) in split mode."""
    if t_read < array.latest_t:
        raise ClockError(f"read at {t_read} precedes last write at {array.latest_t}")
    written = array.last_t != EMPTY
    dt = np.where(written, t_read - array.last_t, 0).astype(np.float64)
    v = array.a1 * np.exp(-dt / array.tau1) + array.a2 * np.exp(-dt / array.tau2) + array.b
    if array.architecture == TWO_D:
        v = v * array.droop_factor
        n_col = array.col_cnt[:, None, :] - array.col_mark
        v = v - array.dv * n_col
    v = np.clip(v, 0.0, array.vr)
    v = np.where(written, v, 0.0)
    return v[0] if array.planes == 1 else v


def replay(array: AnalogArray, events: np.ndarray, read_times, collect_stats=False):
    """Interleave writes and reads in time order.

    A read at time t sees every event with timestamp <= t. Yields
    ``(t_read, surface)``; the final half-select stats are returned by the
    generator (``StopIteration.value``) and also available via
    :func:`replay_all`.
    """
    stats = HalfSelectStats() if collect_stats else None
    read_times = np.asarray(read_times, dtype=np.int64)
    if np.any(read_times[1:] < read_times[:-1]):
        raise ClockError("read times must be sorted")
    ev_t = events["t"].astype(np.int64)
    cursor = 0
    for tr in read_times:
        nxt = int(np.searchsorted(ev_t, tr, side="right"))
        write_events(array, events[cursor:nxt], stats, first_index=cursor)
        cursor = nxt
        yield int(tr), read_surface(array, int(tr))
    write_events(array, events[cursor:], stats, first_index=cursor)
    return stats


def replay_all(array, events, read_times, collect_stats=False):
    gen = replay(array, events, read_times, collect_stats)
    surfaces = []
    while True:
        try:
            surfaces.append(next(gen))
        except StopIteration as stop:
            return surfaces, stop.value


def first_half_select_times(events: np.ndarray, width, height, polarity_mode="merged"):
    """For each write, time until the cell's first word-line half-select (µs).

    Writes whose cell is rewritten (or the stream ends) before any row-mate
    fires contribute nothing.
    """
    planes = 2 if polarity_mode == "split" else 1
    ks = (events["p"].astype(np.int64) if planes == 2
          else np.zeros(events.size, np.int64))
    return K.first_half_select(events["x"].astype(np.int64), events["y"].astype(np.int64),
                               events["t"].astype(np.int64), ks, planes, height, width)


def first_half_select_histogram(events, width, height, bins=None, polarity_mode="merged"):
    """Histogram (counts, edges in µs) of first half-select times.

    Default bins: 1 ms wide up to 50 ms plus an overflow bin.
    """
    dts = first_half_select_times(events, width, height, polarity_mode)
    if bins is None:
        bins = np.r_[np.arange(0, 50_001, 1000), np.iinfo(np.int64).max].astype(np.float64)
    counts, edges = np.histogram(dts, bins=bins)
    return counts, edges
