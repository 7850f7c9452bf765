"""Event data model, file I/O, synthetic edge scenes and background-noise injection.

Streams are held as numpy structured arrays with ``EVENT_DTYPE``; the layout
is the 16-byte on-disk record of the binary format, so binary I/O is a plain
``tofile``/``fromfile``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import BoundsError, ConfigError, StreamFormatError, StreamOrderError

OFF, ON = 0, 1
NOISE, SIGNAL = 0, 1

EVENT_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("label", "u1"), ("_pad", "V2")]
)
assert EVENT_DTYPE.itemsize == 16

BIN_MAGIC = b"EVS1"
BIN_HEADER = struct.Struct("<4sHHB7x")
RECORD_SIZE = EVENT_DTYPE.itemsize
HEADER_SIZE = BIN_HEADER.size


class EventRecord(NamedTuple):
    x: int
    y: int
    t: int
    p: int
    label: int | None = None


@dataclass(frozen=True)
class StreamHeader:
    width: int
    height: int
    duration: int = 0
    polarity_mode: str = "merged"
    has_labels: bool = False

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("width and height must be >= 1", "width/height")
        if self.width > 0xFFFF or self.height > 0xFFFF:
            raise ConfigError("resolution exceeds 16-bit coordinate range", "width/height")
        if self.polarity_mode not in ("merged", "split"):
            raise ConfigError(f"unknown polarity_mode {self.polarity_mode!r}", "polarity_mode")


def empty_events(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=EVENT_DTYPE)


def make_events(t, x, y, p=None, label=None) -> np.ndarray:
    """Pack column arrays into a structured event array (no sorting)."""
    t = np.asarray(t)
    ev = empty_events(t.shape[0])
    ev["t"] = t
    ev["x"] = x
    ev["y"] = y
    ev["p"] = ON if p is None else p
    if label is not None:
        ev["label"] = label
    return ev


def records(events: np.ndarray, labeled: bool = True) -> Iterator[EventRecord]:
    for e in events:
        yield EventRecord(int(e["x"]), int(e["y"]), int(e["t"]), int(e["p"]),
                          int(e["label"]) if labeled else None)


def sort_events(events: np.ndarray) -> np.ndarray:
    """Stable sort by timestamp; ties keep input order."""
    return events[np.argsort(events["t"], kind="stable")]


def is_sorted(events: np.ndarray) -> bool:
    t = events["t"]
    return bool(np.all(t[1:] >= t[:-1]))


def check_bounds(events: np.ndarray, header: StreamHeader) -> None:
    bad = np.flatnonzero((events["x"] >= header.width) | (events["y"] >= header.height)
                         | (events["p"] > 1))
    if bad.size:
        i = int(bad[0])
        e = events[i]
        raise BoundsError(
            f"event {i} (x={e['x']}, y={e['y']}, p={e['p']}) outside "
            f"{header.width}x{header.height} stream"
        )


def _finish(header, events, allow_unsorted, where):
    if not is_sorted(events):
        if not allow_unsorted:
            i = int(np.flatnonzero(events["t"][1:] < events["t"][:-1])[0]) + 1
            raise StreamOrderError(f"timestamp decreases at event {i}", where(i))
        events = sort_events(events)
    check_bounds(events, header)
    if header.duration == 0 and events.size:
        header = replace(header, duration=int(events["t"][-1]))
    return header, events


# ---------------------------------------------------------------- CSV

def _parse_csv_header(line: str) -> dict:
    out = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            out[k.strip().lower()] = v.strip()
    return out


def read_csv(path, width=None, height=None, allow_unsorted=False):
    text = Path(path).read_text()
    meta = {}
    rows = []
    line_numbers = []
    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not rows:
                meta.update(_parse_csv_header(line))
            continue
        parts = line.split(",")
        if len(parts) not in (4, 5):
            raise StreamFormatError(f"expected 4 or 5 fields, got {len(parts)}", f"line {lineno}")
        try:
            vals = [int(v) for v in parts]
        except ValueError as exc:
            raise StreamFormatError(f"non-integer field: {exc}", f"line {lineno}") from None
        if min(vals) < 0 or vals[3] > 1 or (len(vals) == 5 and vals[4] > 1):
            raise StreamFormatError("field out of range", f"line {lineno}")
        rows.append(vals)
        line_numbers.append(lineno)

    has_labels = meta.get("labels", "0") == "1" or any(len(r) == 5 for r in rows)
    if has_labels and any(len(r) == 4 for r in rows):
        bad = next(i for i, r in enumerate(rows) if len(r) == 4)
        raise StreamFormatError("missing label in labeled stream", f"line {line_numbers[bad]}")
    n = len(rows)
    arr = np.array(rows, dtype=np.int64).reshape(n, 5 if has_labels else 4)
    events = make_events(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3],
                         arr[:, 4] if has_labels else None)
    w = width or (int(meta["w"]) if "w" in meta else (int(arr[:, 1].max()) + 1 if n else 1))
    h = height or (int(meta["h"]) if "h" in meta else (int(arr[:, 2].max()) + 1 if n else 1))
    header = StreamHeader(w, h, int(meta.get("duration", 0)), has_labels=has_labels)
    return _finish(header, events, allow_unsorted, lambda i: f"line {line_numbers[i]}")


def write_csv(header: StreamHeader, events: np.ndarray, path) -> None:
    labels = header.has_labels
    lines = [f"# w={header.width} h={header.height} labels={int(labels)}"]
    cols = [events["t"], events["x"], events["y"], events["p"]]
    if labels:
        cols.append(events["label"])
    body = np.column_stack([c.astype(np.uint64) for c in cols]) if events.size else []
    lines.extend(",".join(map(str, row)) for row in np.asarray(body).tolist())
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


# ------------------------------------------------------------- binary

def read_binary(path, allow_unsorted=False):
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE:
        raise StreamFormatError("truncated header", "offset 0")
    magic, w, h, flags = BIN_HEADER.unpack_from(data)
    if magic != BIN_MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}", "offset 0")
    if data[9:16] != bytes(7):
        raise StreamFormatError("reserved header bytes must be zero", "offset 9")
    body = len(data) - HEADER_SIZE
    if body % RECORD_SIZE:
        raise StreamFormatError("trailing partial record",
                                f"offset {HEADER_SIZE + body - body % RECORD_SIZE}")
    events = np.frombuffer(data, dtype=EVENT_DTYPE, offset=HEADER_SIZE).copy()
    if np.any(events["_pad"] != np.void(b"\x00\x00")):
        i = int(np.flatnonzero(events["_pad"] != np.void(b"\x00\x00"))[0])
        raise StreamFormatError("reserved record bytes must be zero",
                                f"offset {HEADER_SIZE + i * RECORD_SIZE + 14}")
    header = StreamHeader(w, h, has_labels=bool(flags & 1))
    return _finish(header, events, allow_unsorted,
                   lambda i: f"offset {HEADER_SIZE + i * RECORD_SIZE}")


def write_binary(header: StreamHeader, events: np.ndarray, path) -> None:
    ev = np.ascontiguousarray(events, dtype=EVENT_DTYPE).copy()
    ev["_pad"] = np.void(b"\x00\x00")
    if not header.has_labels:
        ev["label"] = 0
    try:
        with open(path, "wb") as fh:
            fh.write(BIN_HEADER.pack(BIN_MAGIC, header.width, header.height,
                                     1 if header.has_labels else 0))
            fh.write(ev.tobytes())
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def guess_format(path) -> str:
    return "csv" if str(path).lower().endswith((".csv", ".txt")) else "binary"


def read_stream(path, format=None, *, width=None, height=None, allow_unsorted=False):
    """Read a stream; returns ``(StreamHeader, events)`` with events sorted by t."""
    format = format or guess_format(path)
    if format == "csv":
        return read_csv(path, width, height, allow_unsorted)
    if format == "binary":
        header, events = read_binary(path, allow_unsorted)
        return header, events
    raise ConfigError(f"unknown stream format {format!r}", "format")


def write_stream(header: StreamHeader, events: np.ndarray, path, format=None) -> None:
    format = format or guess_format(path)
    check_bounds(events, header)
    if format == "csv":
        write_csv(header, events, path)
    elif format == "binary":
        write_binary(header, events, path)
    else:
        raise ConfigError(f"unknown stream format {format!r}", "format")


# -------------------------------------------------- synthetic generation

@dataclass
class SceneConfig:
    """A straight edge sweeping across the sensor.

    ``angle_deg`` is the direction of motion (0 = edge is vertical and moves
    towards +x). With ``passes > 1`` the edge sweeps repeatedly, alternating
    polarity, each pass starting when the previous one has left the array.
    """

    width: int = 64
    height: int = 64
    duration_us: int = 100_000
    speed_px_s: float = 640.0
    angle_deg: float = 0.0
    jitter_us: float = 0.0
    seed: int = 0
    passes: int = 1
    gap_us: int = 0

    def validate(self):
        if self.speed_px_s <= 0:
            raise ConfigError("edge speed must be > 0", "speed_px_s")
        if self.duration_us <= 0:
            raise ConfigError("duration must be > 0", "duration_us")
        if self.width < 1 or self.height < 1:
            raise ConfigError("width and height must be >= 1", "width/height")
        if self.jitter_us < 0:
            raise ConfigError("jitter must be >= 0", "jitter_us")
        if self.passes < 1:
            raise ConfigError("passes must be >= 1", "passes")


PRESETS = {
    # desk-scale fixture used for the denoising checks
    "edge": SceneConfig(width=64, height=64, duration_us=1_750_000, speed_px_s=100.0,
                        angle_deg=30.0, jitter_us=200.0, seed=7, passes=2),
}


def crossing_times_us(cfg: SceneConfig) -> np.ndarray:
    """Time (µs, float) at which the edge reaches each pixel centre, shape (H, W)."""
    theta = math.radians(cfg.angle_deg)
    nx, ny = math.cos(theta), math.sin(theta)
    ys, xs = np.mgrid[0:cfg.height, 0:cfg.width]
    proj = xs * nx + ys * ny
    proj = proj - proj.min()
    return proj / cfg.speed_px_s * 1e6


def generate_synthetic(cfg: SceneConfig):
    """Labeled events of a moving edge; every event is signal."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    cross = crossing_times_us(cfg)
    sweep = float(cross.max()) + 1e6 / cfg.speed_px_s
    ys, xs = np.mgrid[0:cfg.height, 0:cfg.width]
    xs, ys, cross = xs.ravel(), ys.ravel(), cross.ravel()

    chunks = []
    for k in range(cfg.passes):
        start = k * (sweep + cfg.gap_us)
        t = cross + start
        if cfg.jitter_us > 0:
            t = t + rng.normal(0.0, cfg.jitter_us, size=t.shape)
        t = np.rint(np.clip(t, 0, None))
        keep = t < cfg.duration_us
        chunks.append(make_events(t[keep].astype(np.uint64), xs[keep], ys[keep],
                                  (ON if k % 2 == 0 else OFF), SIGNAL))
    events = sort_events(np.concatenate(chunks))
    header = StreamHeader(cfg.width, cfg.height, cfg.duration_us, has_labels=True)
    return header, events


def inject_noise(events: np.ndarray, header: StreamHeader, rate_hz_per_pixel: float,
                 seed=0):
    """Merge homogeneous Poisson background activity into a stream.

    Noise events get label NOISE and Bernoulli(0.5) polarity; input events are
    relabelled SIGNAL. On equal timestamps input events precede noise.
    """
    if rate_hz_per_pixel < 0:
        raise ConfigError("noise rate must be >= 0", "rate_hz_per_pixel")
    out = events.copy()
    out["label"] = SIGNAL
    hdr = replace(header, has_labels=True)
    if rate_hz_per_pixel == 0 or header.duration == 0:
        return hdr, out
    rng = np.random.default_rng(seed)
    n_pix = header.width * header.height
    n = rng.poisson(rate_hz_per_pixel * n_pix * header.duration * 1e-6)
    pix = rng.integers(0, n_pix, size=n)
    noise = make_events(rng.integers(0, header.duration, size=n, dtype=np.uint64),
                        pix % header.width, pix // header.width,
                        rng.integers(0, 2, size=n), NOISE)
    return hdr, sort_events(np.concatenate([out, noise]))


def noisy_preset(preset: str = "edge", noise_hz: float = 5.0, seed: int = 1):
    """Preset scene plus uniform background activity (the bundled denoise fixture)."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}", "preset")
    header, events = generate_synthetic(PRESETS[preset])
    return inject_noise(events, header, noise_hz, seed)
