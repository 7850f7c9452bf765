"""Time-surface frame export for frame-based vision pipelines.

A surface is read at each frame instant, resized, optionally quantised to
8 bits and written as PGM (``u8``) or TSF1 (``float32``), with an index CSV
``frame_id,t_us,path``.

Resizing is separable, one weight matrix per axis:

* growing (or equal) axes use edge-aligned linear interpolation: output
  pixel ``i`` samples input coordinate ``i * (n_in - 1) / (n_out - 1)``, so
  the corner pixels map to corners and an identity resize is exact;
* shrinking axes use exact area averaging, i.e. each output pixel is the
  overlap-weighted mean of the input pixels its footprint covers. For an
  integer ratio this is a plain block mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_sim import AnalogArray, read_surface, write_events
from .digital_surface import DEFAULT_TAU_US, SaeMap, global_ts, sae_write_many, write_tsf
from .errors import ConfigError, StreamFormatError

CLASSIFICATION_SIZE = 224
RECONSTRUCTION_SIZE = 256
DEFAULT_WINDOW_US = 50_000


# ----------------------------------------------------------------- resize

def _axis_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix whose rows are convex combinations of inputs."""
    w = np.zeros((n_out, n_in))
    if n_out >= n_in:
        if n_out == 1 or n_in == 1:
            w[:, 0] = 1.0
            return w
        pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
        lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
        frac = pos - lo
        rows = np.arange(n_out)
        w[rows, lo] = 1.0 - frac
        w[rows, lo + 1] += frac
        return w
    scale = n_in / n_out
    for i in range(n_out):
        a, b = i * scale, (i + 1) * scale
        for j in range(int(np.floor(a)), min(int(np.ceil(b)), n_in)):
            w[i, j] = min(b, j + 1) - max(a, j)
        w[i] /= scale
    return w


def resize_bilinear(surface, out_w: int, out_h: int) -> np.ndarray:
    """Resize a 2-D surface, or each plane of a (C, H, W) stack."""
    arr = np.asarray(surface, dtype=np.float64)
    if out_w < 1 or out_h < 1:
        raise ConfigError(f"output size must be >= 1, got {out_w}x{out_h}", "size")
    if arr.ndim not in (2, 3) or min(arr.shape[-2:]) < 1:
        raise ConfigError("surface must be a non-empty (H, W) or (C, H, W) array", "surface")
    h, w = arr.shape[-2:]
    if (h, w) == (out_h, out_w):
        return arr.copy()
    wy = _axis_weights(h, out_h)
    wx = _axis_weights(w, out_w)
    return np.einsum("ij,...jk,lk->...il", wy, arr, wx)


# ---------------------------------------------------------------- quantise

def quantize_u8(surface, v_reset: float = 1.0) -> np.ndarray:
    q = np.rint(255.0 * np.asarray(surface, dtype=np.float64) / v_reset)
    return np.clip(q, 0, 255).astype(np.uint8)


def dequantize_u8(frame, v_reset: float = 1.0) -> np.ndarray:
    return np.asarray(frame, dtype=np.float64) * v_reset / 255.0


def write_pgm(path, frame) -> None:
    arr = np.asarray(frame)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("PGM frames must be 2-D uint8")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise StreamFormatError("truncated PGM header", f"offset {pos}")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or tokens[3] != b"255":
        raise StreamFormatError("only 8-bit binary PGM (P5, maxval 255) is supported", "offset 0")
    w, h = int(tokens[1]), int(tokens[2])
    body = data[pos + 1:]
    if len(body) != w * h:
        raise StreamFormatError(f"expected {w * h} pixel bytes, got {len(body)}",
                                f"offset {pos + 1}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


# ------------------------------------------------------------------ export

@dataclass
class FrameSpec:
    """Frame timing and output format.

    ``timestamps`` switches to aligned mode (one frame per listed instant,
    default size 256); otherwise frames are cut every ``window_us``
    (default size 224).
    """
    window_us: int = DEFAULT_WINDOW_US
    timestamps: tuple | None = None
    size: int | tuple | None = None
    channels: int = 1
    quantization: str = "u8"
    emit_partial: bool = False
    digital_tau_us: float = DEFAULT_TAU_US

    def validate(self) -> "FrameSpec":
        if self.timestamps is None and self.window_us <= 0:
            raise ConfigError("window must be > 0", "window_us")
        if self.timestamps is not None:
            ts = np.asarray(self.timestamps, dtype=np.int64)
            if ts.size and (ts.min() < 0 or np.any(np.diff(ts) < 0)):
                raise ConfigError("frame timestamps must be non-negative and sorted",
                                  "timestamps")
        w, h = self.out_size
        if w < 1 or h < 1:
            raise ConfigError("output size must be >= 1", "size")
        if self.channels not in (1, 2):
            raise ConfigError("channels must be 1 (merged) or 2 (split)", "channels")
        if self.quantization not in ("u8", "float32"):
            raise ConfigError(f"unknown quantization {self.quantization!r}", "quantization")
        return self

    @property
    def out_size(self) -> tuple[int, int]:
        size = self.size
        if size is None:
            size = RECONSTRUCTION_SIZE if self.timestamps is not None else CLASSIFICATION_SIZE
        if isinstance(size, (int, np.integer)):
            return int(size), int(size)
        return int(size[0]), int(size[1])

    def frame_times(self, duration_us: int) -> np.ndarray:
        if self.timestamps is not None:
            return np.asarray(self.timestamps, dtype=np.int64)
        n = duration_us // self.window_us
        times = np.arange(1, n + 1, dtype=np.int64) * self.window_us
        if self.emit_partial and duration_us > n * self.window_us:
            times = np.append(times, np.int64(duration_us))
        return times


def _write(state, events):
    if isinstance(state, AnalogArray):
        write_events(state, events)
    else:
        sae_write_many(state, events)


def _read(state, t, spec: FrameSpec, v_reset: float) -> np.ndarray:
    if isinstance(state, AnalogArray):
        surf = read_surface(state, t)
    else:
        surf = global_ts(state, t, spec.digital_tau_us) * v_reset
    return surf if surf.ndim == 3 else surf[None]


def export_frames(events: np.ndarray, state_factory, spec: FrameSpec, out_dir,
                  duration_us: int | None = None, v_reset: float = 1.0):
    """Write frames and ``index.csv`` into ``out_dir``; returns the index rows.

    ``state_factory()`` yields an AnalogArray (cell voltages) or an SaeMap
    (exponential surface scaled to ``v_reset``). A frame at ``t`` sees every
    event with timestamp ``<= t``.
    """
    spec.validate()
    state = state_factory()
    if isinstance(state, AnalogArray):
        v_reset = state.v_reset
    elif not isinstance(state, SaeMap):
        raise ConfigError("state must be an AnalogArray or an SaeMap", "backend")
    if state.planes != spec.channels:
        raise ConfigError(f"state has {state.planes} plane(s) but spec asks for "
                          f"{spec.channels} channel(s)", "channels")
    if duration_us is None:
        duration_us = int(events["t"][-1]) if events.size else 0

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_w, out_h = spec.out_size
    ext = "pgm" if spec.quantization == "u8" else "tsf"
    ev_t = events["t"].astype(np.int64)
    rows, cursor = [], 0
    for fid, tf in enumerate(spec.frame_times(duration_us)):
        nxt = int(np.searchsorted(ev_t, tf, side="right"))
        if nxt > cursor:
            _write(state, events[cursor:nxt])
        cursor = nxt
        planes = np.clip(resize_bilinear(_read(state, int(tf), spec, v_reset), out_w, out_h),
                         0.0, v_reset)
        for c, plane in enumerate(planes):
            name = (f"frame_{fid:05d}.{ext}" if spec.channels == 1
                    else f"frame_{fid:05d}_c{c}.{ext}")
            if spec.quantization == "u8":
                write_pgm(out_dir / name, quantize_u8(plane, v_reset))
            else:
                write_tsf(out_dir / name, plane.astype(np.float32))
            rows.append((fid, int(tf), name))
    with open(out_dir / "index.csv", "w") as fh:
        fh.write("frame_id,t_us,path\n")
        fh.writelines(f"{f},{t},{p}\n" for f, t, p in rows)
    return rows
