"""Retention model of the 6T-1C eDRAM cell.

The stored voltage after a write decays as a double exponential

    f(dt) = A1 exp(-dt/tau1) + A2 exp(-dt/tau2) + b,   f(0) = V_reset,

with dt in microseconds. Amplitudes may have either sign; the fitted 20 fF
cell has a slow initial slope, which a sum of two positive exponentials
cannot produce.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy.special import ndtri

from ._kernels import decay_scalar
from .errors import ConfigError, FitError
from .kvformat import parse_kv, write_kv

V_RESET = 1.0
MONOTONE_DOMAIN_US = 100_000.0


@dataclass(frozen=True)
class DecayModel:
    a1: float
    tau1_us: float
    a2: float
    tau2_us: float
    b: float
    v_reset: float = V_RESET
    label: str = "custom"

    def __call__(self, dt):
        return evaluate(self, dt)

    @property
    def params(self):
        return self.a1, self.tau1_us, self.a2, self.tau2_us, self.b

    def slope_sign_ok(self, t_end=MONOTONE_DOMAIN_US) -> bool:
        # -f' is a sum of two exponentials, so it changes sign at most once:
        # checking both ends of the interval is exact.
        def neg_slope(t):
            return (self.a1 / self.tau1_us * math.exp(-t / self.tau1_us)
                    + self.a2 / self.tau2_us * math.exp(-t / self.tau2_us))
        return neg_slope(0.0) > 0 and neg_slope(t_end) > 0

    def validate(self) -> "DecayModel":
        if not (self.tau1_us > 0 and self.tau2_us > 0):
            raise ConfigError("time constants must be positive", "tau")
        if self.b < 0:
            raise ConfigError("floor b must be >= 0", "b")
        if abs(self.a1 + self.a2 + self.b - self.v_reset) > 1e-9:
            raise ConfigError("f(0) must equal v_reset", "v_reset")
        if not self.slope_sign_ok():
            raise ConfigError("f is not strictly decreasing on [0, 100 ms]", "a1/a2")
        # f >= b: the exponential part is positive at t=0 and its sign at
        # infinity is that of the slower component's amplitude
        slow = self.a1 if self.tau1_us > self.tau2_us else self.a2
        if slow < 0:
            raise ConfigError("f drops below b at long times", "a1/a2")
        return self

    def to_kv(self) -> dict:
        return {"a1": self.a1, "tau1_us": self.tau1_us, "a2": self.a2,
                "tau2_us": self.tau2_us, "b": self.b, "v_reset": self.v_reset,
                "label": self.label}

    @classmethod
    def from_kv(cls, kv: dict) -> "DecayModel":
        try:
            m = cls(float(kv["a1"]), float(kv["tau1_us"]), float(kv["a2"]),
                    float(kv["tau2_us"]), float(kv["b"]),
                    float(kv.get("v_reset", V_RESET)), kv.get("label", "custom"))
        except KeyError as exc:
            raise ConfigError(f"calibration missing key {exc}", str(exc)) from None
        return m.validate()

    def save(self, path, header=None):
        write_kv(path, self.to_kv(), header)

    @classmethod
    def load(cls, path):
        from .kvformat import read_kv
        return cls.from_kv(read_kv(path))


def evaluate(model: DecayModel, dt):
    """Cell voltage ``dt`` µs after a write."""
    if np.ndim(dt) == 0:
        if dt < 0:
            raise ValueError(f"negative elapsed time {dt}")
        return decay_scalar(model.a1, model.tau1_us, model.a2, model.tau2_us, model.b,
                            float(dt))
    dt = np.asarray(dt, dtype=np.float64)
    if np.any(dt < 0):
        raise ValueError("negative elapsed time")
    return (model.a1 * np.exp(-dt / model.tau1_us) + model.a2 * np.exp(-dt / model.tau2_us)
            + model.b)


# ------------------------------------------------------------------ presets

def _data_text(name):
    return resources.files("tsisc").joinpath("data", name).read_text()


def load_preset(name: str) -> DecayModel:
    """Shipped calibrations: ``20fF``, ``10fF``, ``tg``."""
    files = {"20ff": "cal_20fF.kv", "10ff": "cal_10fF.kv", "tg": "cal_tg.kv"}
    key = name.lower()
    if key not in files:
        raise ConfigError(f"unknown calibration preset {name!r}", "cap")
    return DecayModel.from_kv(parse_kv(_data_text(files[key])))


def load_variability(name: str = "20fF") -> "VariabilitySpec":
    kv = parse_kv(_data_text("variability.kv"))
    return VariabilitySpec(float(kv["sigma_tau1"]), float(kv["sigma_tau2"]),
                           float(kv["sigma_b"]), float(kv["correlation"]),
                           int(kv.get("seed", 0)))


def scale_retention(model: DecayModel, factor: float, label=None) -> DecayModel:
    """Multiply both time constants (RC scaling with storage capacitance)."""
    return replace(model, tau1_us=model.tau1_us * factor, tau2_us=model.tau2_us * factor,
                   label=label or model.label)


def with_floor(model: DecayModel, b: float, label=None) -> DecayModel:
    """Move the floor to ``b`` keeping f(0) and the shape of the transient."""
    s = (model.v_reset - b) / (model.v_reset - model.b)
    return replace(model, a1=model.a1 * s, a2=model.a2 * s, b=b, label=label or model.label)


# ---------------------------------------------------------------------- fit

@dataclass
class FitReport:
    model: DecayModel
    mse: float
    iterations: int
    degenerate: bool
    converged: bool = True


def _linear_part(dt_ms, v, v0, b_max, t1, t2):
    """Best (A1, A2, b) for fixed time constants with A1 + A2 + b = V(0), 0 <= b <= min V."""
    e1 = np.exp(-dt_ms / t1)
    e2 = np.exp(-dt_ms / t2)
    # v - v0*e2 = A1 (e1 - e2) + b (1 - e2)
    rhs = v - v0 * e2
    basis = np.column_stack([e1 - e2, 1.0 - e2])
    (a1, b), *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    if not 0.0 <= b <= b_max:
        b = min(max(b, 0.0), b_max)
        d = basis[:, 0]
        a1 = float(d @ (rhs - b * basis[:, 1]) / (d @ d)) if d @ d > 0 else 0.0
    return float(a1), float(v0 - a1 - b), float(b)


# starting points (tau1_ms, tau2_ms); the first is the documented default
FIT_STARTS_MS = ((5.0, 30.0), (2.0, 10.0), (10.0, 12.0), (20.0, 80.0), (1.0, 50.0))
# tau2 >= (1 + MIN_SEPARATION) tau1; data preferring coincident time constants
# would otherwise drive the amplitudes to +-infinity with opposite signs
MIN_SEPARATION = 0.05


def fit(samples, *, max_iter=5000, tol=1e-10, patience=10, label="custom") -> FitReport:
    """Least-squares fit of the double exponential to ``(dt_us, volts)`` samples.

    Variable projection: for given time constants the amplitudes and floor
    follow from a constrained linear solve (A1 + A2 + b = V(0), 0 <= b <= min V),
    and Levenberg-Marquardt with a central-difference Jacobian adjusts
    (ln tau1, ln(tau2/tau1 - 1 - MIN_SEPARATION)). Each start in ``FIT_STARTS_MS`` is refined until the
    relative MSE improvement stays below ``tol`` for ``patience`` iterations;
    the lowest-MSE result wins.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 6 or arr.shape[1] != 2:
        raise ConfigError("fit needs at least 6 (dt, V) samples", "samples")
    order = np.argsort(arr[:, 0], kind="stable")
    dt_ms = arr[order, 0] / 1000.0
    v = arr[order, 1]
    if dt_ms[0] != 0.0:
        raise ConfigError("samples must include dt=0", "samples")
    if np.any(v <= 0) or np.any(v > v[0]):
        raise ConfigError("sample voltages must lie in (0, V(0)]", "samples")
    v0 = float(v[0])
    b_max = float(v.min())

    def params(theta):
        t1 = math.exp(theta[0])
        t2 = t1 * (1.0 + MIN_SEPARATION + math.exp(theta[1]))
        return (t1, t2) + _linear_part(dt_ms, v, v0, b_max, t1, t2)

    def residual(theta):
        t1, t2, a1, a2, b = params(theta)
        return a1 * np.exp(-dt_ms / t1) + a2 * np.exp(-dt_ms / t2) + b - v

    def mse_of(theta):
        r = residual(theta)
        return float(r @ r) / r.size

    best = None
    total_iter = 0
    for start in FIT_STARTS_MS:
        theta = np.array([math.log(start[0]),
                          math.log(start[1] / start[0] - 1.0 - MIN_SEPARATION)])
        mse = mse_of(theta)
        lam, stall, it = 1e-3, 0, 0
        while True:
            it += 1
            if it > max_iter:
                t1, t2, a1, a2, b = params(theta)
                raise FitError(f"no convergence after {max_iter} iterations",
                               _to_model(a1, t1, a2, t2, b, v0, label), mse)
            r = residual(theta)
            jac = np.empty((r.size, 2))
            for j in range(2):
                h = 1e-6 * max(1.0, abs(theta[j]))
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                jac[:, j] = (residual(tp) - residual(tm)) / (2 * h)
            jtj = jac.T @ jac
            g = jac.T @ r
            rel = 0.0
            for _ in range(12):
                step = np.linalg.lstsq(jtj + lam * np.diag(np.diag(jtj) + 1e-12), -g,
                                       rcond=None)[0]
                cand = theta + step
                if np.all(np.isfinite(cand)) and np.all(np.abs(cand) < 30):
                    m = mse_of(cand)
                    if m < mse:
                        rel = (mse - m) / mse
                        theta, mse = cand, m
                        lam = max(lam / 3, 1e-15)
                        break
                lam = min(lam * 4, 1e12)
            stall = stall + 1 if rel < tol else 0
            # relative gains are float noise once the residual is at round-off level
            if stall >= patience or mse < 1e-20 * v0 * v0:
                break
        total_iter += it
        if best is None or mse < best[0]:
            best = (mse, theta)

    mse, theta = best
    t1, t2, a1, a2, b = params(theta)
    model = _to_model(a1, t1, a2, t2, b, v0, label)
    span = v0 - b
    degenerate = (min(abs(a1), abs(a2)) < 1e-4 * max(span, 1e-12)
                  or t2 / t1 < 1.0 + MIN_SEPARATION + 1e-3)
    return FitReport(model, mse, total_iter, degenerate)


def _to_model(a1, t1, a2, t2, b, v0, label):
    return DecayModel(a1, t1 * 1000.0, a2, t2 * 1000.0, b, v0, label)


# ------------------------------------------------------------- variability

@dataclass(frozen=True)
class VariabilitySpec:
    """Cell-to-cell mismatch.

    Time constants get lognormal scale factors exp(sigma * z) with the two z's
    correlated by ``correlation``; the floor ``b`` gets additive Gaussian noise
    (volts) with amplitudes rescaled so f(0) stays at V_reset.
    """

    sigma_tau1: float = 0.0
    sigma_tau2: float = 0.0
    sigma_b: float = 0.0
    correlation: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_tau1, self.sigma_tau2, self.sigma_b) < 0:
            raise ConfigError("variability sigmas must be >= 0", "sigma")
        if not -1.0 <= self.correlation <= 1.0:
            raise ConfigError("correlation must lie in [-1, 1]", "correlation")

    @property
    def is_zero(self):
        return self.sigma_tau1 == 0 and self.sigma_tau2 == 0 and self.sigma_b == 0


@dataclass
class CellParams:
    """Structure-of-arrays parameters for a population of cells."""

    a1: np.ndarray
    tau1_us: np.ndarray
    a2: np.ndarray
    tau2_us: np.ndarray
    b: np.ndarray
    v_reset: np.ndarray

    def __len__(self):
        return self.a1.shape[0]

    def model(self, i, label="cell") -> DecayModel:
        return DecayModel(float(self.a1[i]), float(self.tau1_us[i]), float(self.a2[i]),
                          float(self.tau2_us[i]), float(self.b[i]), float(self.v_reset[i]),
                          label)

    def evaluate(self, dt):
        return (self.a1 * np.exp(-dt / self.tau1_us) + self.a2 * np.exp(-dt / self.tau2_us)
                + self.b)


MAX_REJECTIONS = 100


def _normals(raw):
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def _apply(model, var, z):
    rho = var.correlation
    e1 = z[..., 0]
    e2 = rho * z[..., 0] + math.sqrt(max(0.0, 1 - rho * rho)) * z[..., 1]
    tau1 = model.tau1_us * np.exp(var.sigma_tau1 * e1)
    tau2 = model.tau2_us * np.exp(var.sigma_tau2 * e2)
    b = model.b + var.sigma_b * z[..., 2]
    scale = (model.v_reset - b) / (model.v_reset - model.b)
    return model.a1 * scale, tau1, model.a2 * scale, tau2, b


def _cell_ok(a1, t1, a2, t2, b, v_reset):
    m = DecayModel(float(a1), float(t1), float(a2), float(t2), float(b), v_reset)
    try:
        m.validate()
    except ConfigError:
        return False
    return b < v_reset


def sample_cells(model: DecayModel, var: VariabilitySpec, n: int, start: int = 0) -> CellParams:
    """Per-cell parameters for cell indices ``start .. start+n-1``.

    Cell ``i`` draws from Philox block ``i`` keyed by ``var.seed``, so the
    result for an index does not depend on how many cells are sampled.
    """
    if var.is_zero:
        ones = np.ones(n)
        return CellParams(model.a1 * ones, model.tau1_us * ones, model.a2 * ones,
                          model.tau2_us * ones, model.b * ones, model.v_reset * ones)
    bitgen = np.random.Philox(key=var.seed)
    if start:
        bitgen.advance(start)
    raw = bitgen.random_raw(4 * n).reshape(n, 4)[:, :3]
    a1, t1, a2, t2, b = _apply(model, var, _normals(raw))
    bad = np.flatnonzero(~_vector_ok(a1, t1, a2, t2, b, model.v_reset))
    for i in bad:
        a1[i], t1[i], a2[i], t2[i], b[i] = _resample(model, var, start + int(i))
    return CellParams(a1, t1, a2, t2, b, np.full(n, model.v_reset))


def _vector_ok(a1, t1, a2, t2, b, v_reset):
    ok = (t1 > 0) & (t2 > 0) & (b >= 0) & (b < v_reset)
    s0 = a1 / t1 + a2 / t2
    se = a1 / t1 * np.exp(-MONOTONE_DOMAIN_US / t1) + a2 / t2 * np.exp(-MONOTONE_DOMAIN_US / t2)
    slow = np.where(t1 > t2, a1, a2)
    return ok & (s0 > 0) & (se > 0) & (slow >= 0)


def _resample(model, var, index):
    for attempt in range(1, MAX_REJECTIONS + 1):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([var.seed, index, attempt])))
        params = _apply(model, var, rng.standard_normal(3))
        if _cell_ok(*params, model.v_reset):
            return params
    raise ConfigError(f"cell {index}: variability produced no valid decay curve "
                      f"after {MAX_REJECTIONS} draws", "sigma")


def sample_cell(model: DecayModel, var: VariabilitySpec, cell_index: int) -> DecayModel:
    return sample_cells(model, var, 1, start=cell_index).model(0, label=f"{model.label}#{cell_index}")


def population_cv(cells: CellParams, dts_us) -> np.ndarray:
    """Coefficient of variation of cell voltage at each elapsed time."""
    out = []
    for dt in np.atleast_1d(dts_us):
        v = cells.evaluate(float(dt))
        out.append(v.std() / v.mean())
    return np.array(out)


# ------------------------------------------------------ window <-> voltage

def v_threshold_for_window(model: DecayModel, window_us: float) -> float:
    """Voltage a cell holds exactly ``window_us`` after its write."""
    if window_us < 0:
        raise ValueError("window must be >= 0")
    if not model.slope_sign_ok(max(window_us, 1.0)):
        raise ConfigError("window lies outside the monotone range of the model", "window")
    v = float(evaluate(model, float(window_us)))
    if v - model.b <= 1e-9:
        raise ConfigError("window exceeds the cell's retention", "window")
    return v


def elapsed(model: DecayModel, voltage: float, tol_us: float = 1e-3) -> float:
    """Inverse of ``evaluate`` by bisection: time at which f falls to ``voltage``."""
    if voltage > model.v_reset or voltage <= model.b:
        raise ValueError(f"voltage {voltage} outside (b, V_reset]")
    lo, hi = 0.0, 1000.0
    while evaluate(model, hi) > voltage:
        lo, hi = hi, hi * 2
        if hi > 1e12:
            raise ValueError("voltage not reached")
    while hi - lo > tol_us:
        mid = 0.5 * (lo + hi)
        if evaluate(model, mid) > voltage:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
