"""Digital reference time-surfaces built on a Surface of Active Events (SAE).

Also emulates a finite-width timestamp counter so that wrap-around errors of
digital timestamp storage can be measured against the exact surface.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundsError, ClockError, ConfigError, StreamFormatError

EMPTY = -1
DEFAULT_TAU_US = 10_000.0


class SaeMap:
    """Per-pixel (per-polarity in split mode) most-recent timestamp.

    ``timestamps`` has shape (planes, H, W) with ``EMPTY`` for unwritten
    cells. When ``counter_bits`` is set, ``counter`` holds what an
    ``counter_bits``-wide hardware counter with ``counter_tick`` µs per LSB
    would have latched.
    """

    def __init__(self, width, height, polarity_mode="merged", counter_bits=None,
                 counter_tick=1000):
        if polarity_mode not in ("merged", "split"):
            raise ConfigError(f"unknown polarity_mode {polarity_mode!r}", "polarity_mode")
        if counter_bits is not None and counter_bits < 1:
            raise ConfigError("counter_bits must be >= 1", "counter_bits")
        if counter_tick <= 0:
            raise ConfigError("counter_tick must be > 0", "counter_tick")
        self.width, self.height = width, height
        self.polarity_mode = polarity_mode
        self.planes = 2 if polarity_mode == "split" else 1
        self.counter_bits = counter_bits
        self.counter_tick = counter_tick
        self.timestamps = np.full((self.planes, height, width), EMPTY, dtype=np.int64)
        self.counter = (np.full_like(self.timestamps, EMPTY)
                        if counter_bits is not None else None)
        self.latest_t = EMPTY

    def plane(self, p) -> int:
        return int(p) if self.planes == 2 else 0

    def counter_value(self, t):
        return (np.asarray(t, dtype=np.int64) // self.counter_tick) % (1 << self.counter_bits)

    def copy(self) -> "SaeMap":
        other = object.__new__(SaeMap)
        other.__dict__.update(self.__dict__)
        other.timestamps = self.timestamps.copy()
        other.counter = None if self.counter is None else self.counter.copy()
        return other

    def __getitem__(self, key):
        x, y, *p = key
        return int(self.timestamps[self.plane(p[0] if p else 0), y, x])


def sae_write(sae: SaeMap, event) -> None:
    x, y, t, p = int(event["x"]), int(event["y"]), int(event["t"]), int(event["p"])
    if not (0 <= x < sae.width and 0 <= y < sae.height):
        raise BoundsError(f"event ({x}, {y}) outside {sae.width}x{sae.height} map")
    k = sae.plane(p)
    sae.timestamps[k, y, x] = t
    if sae.counter is not None:
        sae.counter[k, y, x] = sae.counter_value(t)
    sae.latest_t = max(sae.latest_t, t)


def sae_write_many(sae: SaeMap, events: np.ndarray) -> None:
    """Write a time-sorted batch; the last write per cell wins."""
    if events.size == 0:
        return
    if np.any(events["x"] >= sae.width) or np.any(events["y"] >= sae.height):
        raise BoundsError("event outside map")
    k = events["p"].astype(np.int64) if sae.planes == 2 else np.zeros(events.size, np.int64)
    t = events["t"].astype(np.int64)
    # fancy assignment keeps the last duplicate
    sae.timestamps[k, events["y"], events["x"]] = t
    if sae.counter is not None:
        sae.counter[k, events["y"], events["x"]] = sae.counter_value(t)
    sae.latest_t = max(sae.latest_t, int(t[-1]))


def _decay(elapsed, tau):
    return np.exp(-elapsed / tau)


def global_ts(sae: SaeMap, t, tau=DEFAULT_TAU_US, polarity=None) -> np.ndarray:
    """exp(-(t - SAE)/tau) over the whole map; EMPTY cells are 0.

    Returns (H, W) in merged mode or when ``polarity`` is given, else (2, H, W).
    """
    if t < sae.latest_t:
        raise ClockError(f"query time {t} precedes stored timestamp {sae.latest_t}")
    ts = sae.timestamps if polarity is None else sae.timestamps[sae.plane(polarity)][None]
    out = np.where(ts == EMPTY, 0.0, _decay((t - ts).astype(np.float64), tau))
    return out[0] if out.shape[0] == 1 else out


def wrapped_ts(sae: SaeMap, t, tau=DEFAULT_TAU_US) -> np.ndarray:
    """Time-surface as reconstructed from the finite-width counter.

    Elapsed time is the modular counter difference, the best any wrapping
    counter can do; aliasing appears once true elapsed exceeds the period.
    """
    if sae.counter is None:
        return global_ts(sae, t, tau)
    period = 1 << sae.counter_bits
    now = int(sae.counter_value(t))
    c = sae.counter
    elapsed = ((now - c) % period).astype(np.float64) * sae.counter_tick
    out = np.where(c == EMPTY, 0.0, _decay(elapsed, tau))
    return out[0] if out.shape[0] == 1 else out


@dataclass
class TimeSurfacePatch:
    center: tuple
    radius: int
    tau: float
    values: np.ndarray


def patch_ts(sae: SaeMap, event, radius=1, tau=DEFAULT_TAU_US) -> TimeSurfacePatch:
    x, y, t, p = int(event["x"]), int(event["y"]), int(event["t"]), int(event["p"])
    k = sae.plane(p)
    if sae.timestamps[k, y, x] != t:
        raise ClockError(f"event at ({x}, {y}, t={t}) is not the latest write at its pixel")
    size = 2 * radius + 1
    padded = np.full((size, size), EMPTY, dtype=np.int64)
    y0, y1 = max(0, y - radius), min(sae.height, y + radius + 1)
    x0, x1 = max(0, x - radius), min(sae.width, x + radius + 1)
    padded[y0 - (y - radius):y1 - (y - radius), x0 - (x - radius):x1 - (x - radius)] = \
        sae.timestamps[k, y0:y1, x0:x1]
    values = np.where(padded == EMPTY, 0.0, _decay((t - padded).astype(np.float64), tau))
    values = np.clip(values, 0.0, 1.0)
    return TimeSurfacePatch((x, y, t, p), radius, tau, values)


@dataclass
class WrapErrorReport:
    query_times: np.ndarray
    flagged: list = field(default_factory=list)  # per query: array of (plane, y, x)
    aliased: list = field(default_factory=list)  # per query: cells whose counter elapsed wrapped
    max_abs_error: float = 0.0

    @property
    def n_flagged(self) -> int:
        return int(sum(len(f) for f in self.flagged))

    @property
    def n_aliased(self) -> int:
        return int(sum(len(a) for a in self.aliased))


def wrap_error_demo(events, width, height, counter_bits=16, counter_tick=1000,
                    tau=DEFAULT_TAU_US, query_times=None, tolerance=1e-3,
                    polarity_mode="merged") -> WrapErrorReport:
    """Compare counter-based and exact surfaces while replaying ``events``.

    Default query instants are a grid with step ``tau`` over the stream span.
    """
    if query_times is None:
        end = int(events["t"][-1]) if events.size else 0
        query_times = np.arange(0, end + 1, max(1, int(tau)), dtype=np.int64)
    query_times = np.asarray(query_times, dtype=np.int64)
    sae = SaeMap(width, height, polarity_mode, counter_bits, counter_tick)
    report = WrapErrorReport(query_times)
    ev_t = events["t"].astype(np.int64)
    cursor = 0
    for q in query_times:
        nxt = int(np.searchsorted(ev_t, q, side="right"))
        sae_write_many(sae, events[cursor:nxt])
        cursor = nxt
        exact = global_ts(sae, int(q), tau)
        approx = wrapped_ts(sae, int(q), tau)
        err = np.abs(np.atleast_3d(exact) - np.atleast_3d(approx))
        err = err.reshape(sae.planes, height, width)
        report.flagged.append(np.argwhere(err > tolerance))
        written = sae.timestamps != EMPTY
        ticks = int(q) // counter_tick - sae.timestamps // counter_tick
        report.aliased.append(np.argwhere(written & (ticks >= (1 << counter_bits))))
        report.max_abs_error = max(report.max_abs_error, float(err.max(initial=0.0)))
    return report


# ----------------------------------------------------------- TSF1 dumps

def write_tsf(path, surface) -> None:
    """Row-major little-endian float32 after an ASCII ``TSF1 <W> <H>`` line."""
    arr = np.asarray(surface, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("TSF1 holds a single 2-D surface")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"TSF1 {w} {h}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_tsf(path) -> np.ndarray:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    parts = data[:nl].split() if nl > 0 else []
    if len(parts) != 3 or parts[0] != b"TSF1":
        raise StreamFormatError("not a TSF1 file", "offset 0")
    w, h = int(parts[1]), int(parts[2])
    body = data[nl + 1:]
    if len(body) != 4 * w * h:
        raise StreamFormatError(f"expected {4 * w * h} data bytes, got {len(body)}",
                                f"offset {nl + 1}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).copy()
