"""Compiled inner loops. Kept free of Python objects so numba can nopython them.

State layout shared by every kernel (P = polarity planes):
    last_t   (P, H, W) int64, -1 when never written
    a1, tau1, a2, tau2, b, vr  (P, H, W) float64 per-cell decay parameters
    row_cnt  (P, H) int64   writes seen by each word line
    row_mark (P, H, W) int64 row_cnt right after the cell's own write
    col_cnt / col_mark likewise for bit lines
Half-select droop of a cell is droop_k ** (row_cnt - row_mark); bit-line
coupling removes dv per column-mate write.
"""
import math

import numpy as np
from numba import njit

EMPTY = -1


@njit(cache=True)
def decay_scalar(a1, tau1, a2, tau2, b, dt):
    return a1 * math.exp(-dt / tau1) + a2 * math.exp(-dt / tau2) + b


@njit(cache=True)
def cell_voltage(k, y, x, t_now, last_t, a1, tau1, a2, tau2, b, vr,
                 row_cnt, row_mark, col_cnt, col_mark, droop_k, dv):
    t0 = last_t[k, y, x]
    if t0 == EMPTY:
        return 0.0
    v = decay_scalar(a1[k, y, x], tau1[k, y, x], a2[k, y, x], tau2[k, y, x],
                     b[k, y, x], float(t_now - t0))
    n_row = row_cnt[k, y] - row_mark[k, y, x]
    if n_row > 0:
        v = v * droop_k ** n_row
    n_col = col_cnt[k, x] - col_mark[k, y, x]
    if n_col > 0:
        v = v - dv * n_col
    if v < 0.0:
        return 0.0
    if v > vr[k, y, x]:
        return vr[k, y, x]
    return v


@njit(cache=True)
def write_cell(k, y, x, t, last_t, row_cnt, row_mark, col_cnt, col_mark):
    last_t[k, y, x] = t
    row_cnt[k, y] += 1
    col_cnt[k, x] += 1
    row_mark[k, y, x] = row_cnt[k, y]
    col_mark[k, y, x] = col_cnt[k, x]


@njit(cache=True)
def write_batch(xs, ys, ts, ks, last_t, row_cnt, row_mark, col_cnt, col_mark):
    for i in range(xs.shape[0]):
        write_cell(ks[i], ys[i], xs[i], ts[i], last_t, row_cnt, row_mark, col_cnt, col_mark)


@njit(cache=True)
def write_batch_stats(xs, ys, ts, ks, first_index, last_t, a1, tau1, a2, tau2, b, vr,
                      row_cnt, row_mark, col_cnt, col_mark, droop_k, dv):
    """Writes with per-victim half-select records (event_index, dt_us, dv_volts)."""
    cap = 1024
    ev_idx = np.empty(cap, np.int64)
    dts = np.empty(cap, np.int64)
    dvs = np.empty(cap, np.float64)
    n = 0
    width = last_t.shape[2]
    height = last_t.shape[1]
    for i in range(xs.shape[0]):
        k, y, x, t = ks[i], ys[i], xs[i], ts[i]
        # row-mates (shared word line) and, when coupling is modelled, column-mates
        for j in range(width + (height if dv > 0.0 else 0)):
            if j < width:
                vy, vx = y, j
                if vx == x:
                    continue
            else:
                vy, vx = j - width, x
                if vy == y:
                    continue
            t0 = last_t[k, vy, vx]
            if t0 == EMPTY:
                continue
            before = cell_voltage(k, vy, vx, t, last_t, a1, tau1, a2, tau2, b, vr,
                                  row_cnt, row_mark, col_cnt, col_mark, droop_k, dv)
            if j < width:
                after_v = decay_scalar(a1[k, vy, vx], tau1[k, vy, vx], a2[k, vy, vx],
                                       tau2[k, vy, vx], b[k, vy, vx], float(t - t0))
                n_row = row_cnt[k, vy] - row_mark[k, vy, vx] + 1
                after_v = after_v * droop_k ** n_row
                n_col = col_cnt[k, vx] - col_mark[k, vy, vx]
                after_v = after_v - dv * n_col
            else:
                after_v = before - dv
            if after_v < 0.0:
                after_v = 0.0
            if after_v > vr[k, vy, vx]:
                after_v = vr[k, vy, vx]
            if n == cap:
                cap *= 2
                ev_idx2 = np.empty(cap, np.int64)
                dts2 = np.empty(cap, np.int64)
                dvs2 = np.empty(cap, np.float64)
                ev_idx2[:n] = ev_idx[:n]
                dts2[:n] = dts[:n]
                dvs2[:n] = dvs[:n]
                ev_idx, dts, dvs = ev_idx2, dts2, dvs2
            ev_idx[n] = first_index + i
            dts[n] = t - t0
            dvs[n] = before - after_v
            n += 1
        write_cell(k, y, x, t, last_t, row_cnt, row_mark, col_cnt, col_mark)
    return ev_idx[:n], dts[:n], dvs[:n]


@njit(cache=True)
def first_half_select(xs, ys, ts, ks, planes, height, width):
    """Elapsed time from each write to that cell's first word-line half-select."""
    last = np.full((planes, height, width), EMPTY, np.int64)
    pending = np.zeros((planes, height, width), np.bool_)
    out = np.empty(xs.shape[0], np.int64)
    n = 0
    for i in range(xs.shape[0]):
        k, y, x, t = ks[i], ys[i], xs[i], ts[i]
        for j in range(width):
            if j != x and pending[k, y, j]:
                out[n] = t - last[k, y, j]
                n += 1
                pending[k, y, j] = False
        last[k, y, x] = t
        pending[k, y, x] = True
    return out[:n]


@njit(cache=True)
def stcf_timestamp(xs, ys, ts, ks, last_t, radius, window, th, write_noise):
    """Support counts for each event against an SAE; state updated in place."""
    planes, height, width = last_t.shape
    support = np.empty(xs.shape[0], np.int32)
    for i in range(xs.shape[0]):
        k, y, x, t = ks[i], ys[i], xs[i], ts[i]
        s = 0
        for yy in range(max(0, y - radius), min(height, y + radius + 1)):
            for xx in range(max(0, x - radius), min(width, x + radius + 1)):
                if yy == y and xx == x:
                    continue
                t0 = last_t[k, yy, xx]
                if t0 != EMPTY and t - t0 <= window:
                    s += 1
        support[i] = s
        if write_noise or s >= th:
            last_t[k, y, x] = t
    return support


@njit(cache=True)
def stcf_voltage(xs, ys, ts, ks, last_t, a1, tau1, a2, tau2, b, vr,
                 row_cnt, row_mark, col_cnt, col_mark, droop_k, dv,
                 radius, v_tw, th, write_noise):
    """Support counts using cell voltages compared against ``v_tw``."""
    planes, height, width = last_t.shape
    support = np.empty(xs.shape[0], np.int32)
    for i in range(xs.shape[0]):
        k, y, x, t = ks[i], ys[i], xs[i], ts[i]
        s = 0
        for yy in range(max(0, y - radius), min(height, y + radius + 1)):
            for xx in range(max(0, x - radius), min(width, x + radius + 1)):
                if (yy == y and xx == x) or last_t[k, yy, xx] == EMPTY:
                    continue
                v = cell_voltage(k, yy, xx, t, last_t, a1, tau1, a2, tau2, b, vr,
                                 row_cnt, row_mark, col_cnt, col_mark, droop_k, dv)
                if v >= v_tw:
                    s += 1
        support[i] = s
        if write_noise or s >= th:
            write_cell(k, y, x, t, last_t, row_cnt, row_mark, col_cnt, col_mark)
    return support
