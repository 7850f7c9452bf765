"""Closed-form power / area / latency model for time-surface storage.

Four storage architectures are compared at a given resolution and event rate:

* ``ISC_3D``   analog eDRAM array stacked under the sensor, one Cu-Cu bond per pixel
* ``ISC_2D``   the same cells in a planar word-line/bit-line array with
               encoder/decoder logic and line buffers
* ``SRAM_BOSE`` / ``SRAM_RIOS``  digital timestamp storage built from two
               published SRAM designs, rescaled to the requested resolution
               and timestamp width

Some absolute quantities are not available from first principles (ISC array
power, 2D peripheral energies, one SRAM bit-cell area). They live in
``CostInputs`` as calibration constants; :func:`backsolve_calibration` shows
how each was obtained, and report rows built on them carry ``calibrated=True``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

from .errors import ConfigError
from .kvformat import read_kv, write_kv

ISC_3D, ISC_2D, SRAM_BOSE, SRAM_RIOS = "ISC_3D", "ISC_2D", "SRAM_BOSE", "SRAM_RIOS"
ARCHITECTURES = (ISC_3D, ISC_2D, SRAM_BOSE, SRAM_RIOS)

# headline targets used only by the back-solve
TARGET_2D_OVER_3D_POWER = 69.0
TARGET_BOSE_OVER_ISC_POWER = 1600.0
TARGET_RIOS_OVER_ISC_POWER = 6761.0
TARGET_BOSE_OVER_ISC_AREA = 3.1

# fields that may be set to zero to switch a peripheral off
OVERHEAD_FIELDS = (
    "cucu_cap_f", "cucu_res_ohm", "cucu_energy_per_byte_j", "cucu_latency_ns",
    "cucu_pad_area_um2", "encdec_energy_j", "buffer_energy_j", "encdec_area_frac",
    "buffer_area_frac", "extra_latency_2d_ns",
)


@dataclass(frozen=True)
class CostInputs:
    width: int = 320
    height: int = 240
    event_rate: float = 1e8           # events / s
    timestamp_bits: int = 16
    supply_v: float = 1.0
    ref_v: float = 1.0                # supply at which energy constants are quoted

    # ISC cell
    cell_cap_f: float = 20e-15
    cell_w_um: float = 4.8
    cell_h_um: float = 3.9
    write_latency_ns: float = 5.0

    # Cu-Cu bond
    cucu_cap_f: float = 0.5e-15
    cucu_res_ohm: float = 0.2
    cucu_energy_per_byte_j: float = 0.7e-15
    cucu_bytes_per_event: float = 1.0
    cucu_latency_ns: float = 0.08
    cucu_pad_area_um2: float = 1.0    # assumed bond pad footprint per pixel

    # SRAM, first design
    bose_write_energy_per_bit_j: float = 5.1e-12
    bose_leak_a_per_bit: float = 350e-12

    # SRAM, second design (published for 346x260 pixels x 18 b)
    rios_static_w: float = 35e-3
    rios_ref_bits: int = 346 * 260 * 18
    rios_area_mm2: float = 4.3
    rios_access_7x7_j: float = 2.4e-9
    write_read_ratio: float = 1.5
    rios_write_energy_per_event_j: float = 0.072e-9

    # 2D overheads
    encdec_share: float = 0.538
    buffer_share: float = 0.455
    extra_latency_2d_ns: float = 6.0
    array_area_factor_2d: float = 2.0  # sensor and memory side by side
    encdec_area_frac: float = 0.025    # assumed, fraction of ISC array area
    buffer_area_frac: float = 0.020    # assumed, fraction of ISC array area

    # calibration constants (see backsolve_calibration)
    isc_static_w_per_cell: float = 4.137586360372518e-11
    encdec_energy_j: float = 1.952410723315637e-12
    buffer_energy_j: float = 1.6512023775253063e-12
    bose_bitcell_area_um2: float = 3.627

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in OVERHEAD_FIELDS:
                if v < 0:
                    raise ConfigError(f"{f.name} must be >= 0", f.name)
            elif f.name == "event_rate":
                if v < 0:
                    raise ConfigError("event_rate must be >= 0", f.name)
            elif not v > 0:
                raise ConfigError(f"{f.name} must be > 0", f.name)
        if self.encdec_share + self.buffer_share > 1.0:
            raise ConfigError("2D power shares exceed 100%", "encdec_share/buffer_share")
        return self

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def storage_bits(self) -> int:
        return self.pixels * self.timestamp_bits

    @property
    def cell_area_mm2(self) -> float:
        return self.cell_w_um * self.cell_h_um * 1e-6

    @property
    def voltage_scale(self) -> float:
        return (self.supply_v / self.ref_v) ** 2

    # ---- key-value files
    @classmethod
    def from_kv(cls, items: dict, base: "CostInputs | None" = None) -> "CostInputs":
        base = base or cls()
        types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        updates = {}
        for key, raw in items.items():
            if key not in types:
                raise ConfigError(f"unknown cost constant {key!r}", key)
            try:
                updates[key] = types[key](float(raw)) if types[key] is int else float(raw)
            except ValueError:
                raise ConfigError(f"{key}: not a number: {raw!r}", key) from None
        return replace(base, **updates).validate()

    @classmethod
    def load(cls, path, base=None):
        return cls.from_kv(read_kv(path), base)

    def save(self, path):
        write_kv(path, asdict(self), header="cost model constants")


@dataclass(frozen=True)
class ComponentCost:
    name: str
    static_w: float = 0.0
    dynamic_w: float = 0.0
    area_mm2: float = 0.0
    latency_ns: float = 0.0
    calibrated: bool = False

    @property
    def power_w(self) -> float:
        return self.static_w + self.dynamic_w


@dataclass(frozen=True)
class CostReport:
    architecture: str
    components: tuple[ComponentCost, ...] = field(default_factory=tuple)

    def _sum(self, attr):
        return math.fsum(getattr(c, attr) for c in self.components)

    @property
    def static_w(self):
        return self._sum("static_w")

    @property
    def dynamic_w(self):
        return self._sum("dynamic_w")

    @property
    def power_w(self):
        return self.static_w + self.dynamic_w

    @property
    def area_mm2(self):
        return self._sum("area_mm2")

    @property
    def latency_ns(self):
        return self._sum("latency_ns")

    def component(self, name) -> ComponentCost:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)


# ------------------------------------------------------------ components

def _isc_array(inp: CostInputs, area_factor=1.0) -> ComponentCost:
    # each event recharges one storage capacitor to the supply
    dyn = inp.event_rate * inp.cell_cap_f * inp.supply_v ** 2
    return ComponentCost("isc_array", static_w=inp.isc_static_w_per_cell * inp.pixels,
                         dynamic_w=dyn, area_mm2=inp.cell_area_mm2 * inp.pixels * area_factor,
                         latency_ns=inp.write_latency_ns, calibrated=True)


def _cucu(inp: CostInputs) -> ComponentCost:
    per_event = (inp.cucu_cap_f * inp.supply_v ** 2
                 + inp.cucu_energy_per_byte_j * inp.cucu_bytes_per_event * inp.voltage_scale)
    # the RC of one bond is ~1e-16 s; the published per-bond latency dominates
    latency = inp.cucu_latency_ns + inp.cucu_res_ohm * inp.cucu_cap_f * 1e9
    return ComponentCost("cucu_bond", dynamic_w=inp.event_rate * per_event,
                         area_mm2=inp.cucu_pad_area_um2 * 1e-6 * inp.pixels, latency_ns=latency)


def _isc_3d(inp):
    return (_isc_array(inp), _cucu(inp))


def _isc_2d(inp):
    array_area = inp.cell_area_mm2 * inp.pixels
    encdec = ComponentCost("encoder_decoder",
                           dynamic_w=inp.event_rate * inp.encdec_energy_j * inp.voltage_scale,
                           area_mm2=inp.encdec_area_frac * array_area,
                           latency_ns=inp.extra_latency_2d_ns, calibrated=True)
    buffers = ComponentCost("line_buffers",
                            dynamic_w=inp.event_rate * inp.buffer_energy_j * inp.voltage_scale,
                            area_mm2=inp.buffer_area_frac * array_area, calibrated=True)
    return (_isc_array(inp, inp.array_area_factor_2d), encdec, buffers)


def _sram_bose(inp):
    static = inp.bose_leak_a_per_bit * inp.supply_v * inp.storage_bits
    dyn = inp.event_rate * inp.timestamp_bits * inp.bose_write_energy_per_bit_j * inp.voltage_scale
    area = inp.bose_bitcell_area_um2 * 1e-6 * inp.storage_bits
    return (ComponentCost("sram_array", static_w=static, dynamic_w=dyn, area_mm2=area,
                          latency_ns=inp.write_latency_ns, calibrated=True),)


def _sram_rios(inp):
    scale = inp.storage_bits / inp.rios_ref_bits
    dyn = inp.event_rate * inp.rios_write_energy_per_event_j * inp.voltage_scale
    return (ComponentCost("sram_array", static_w=inp.rios_static_w * scale, dynamic_w=dyn,
                          area_mm2=inp.rios_area_mm2 * scale,
                          latency_ns=inp.write_latency_ns),)


_BUILDERS = {ISC_3D: _isc_3d, ISC_2D: _isc_2d, SRAM_BOSE: _sram_bose, SRAM_RIOS: _sram_rios}


def evaluate(inputs: CostInputs, architecture: str) -> CostReport:
    if architecture not in _BUILDERS:
        raise ConfigError(f"unknown architecture {architecture!r}; expected one of "
                          f"{', '.join(ARCHITECTURES)}", "architecture")
    inputs.validate()
    return CostReport(architecture, _BUILDERS[architecture](inputs))


def _ratio(a, b):
    return a / b if b else math.inf


def compare(inputs: CostInputs | None = None) -> dict[str, float]:
    """Headline ratios. SRAM designs are compared against the ISC storage array alone."""
    inputs = inputs or CostInputs()
    r3, r2 = evaluate(inputs, ISC_3D), evaluate(inputs, ISC_2D)
    isc = r3.component("isc_array")
    bose, rios = evaluate(inputs, SRAM_BOSE), evaluate(inputs, SRAM_RIOS)
    return {
        "2d_over_3d_power": _ratio(r2.power_w, r3.power_w),
        "2d_over_3d_area": _ratio(r2.area_mm2, r3.area_mm2),
        "2d_over_3d_latency": _ratio(r2.latency_ns, r3.latency_ns),
        "bose_over_isc_power": _ratio(bose.power_w, isc.power_w),
        "bose_over_isc_area": _ratio(bose.area_mm2, isc.area_mm2),
        "rios_over_isc_power": _ratio(rios.power_w, isc.power_w),
        "rios_over_isc_area": _ratio(rios.area_mm2, isc.area_mm2),
    }


def breakdown_report(inputs: CostInputs, architecture: str) -> dict[str, dict[str, float]]:
    """Per-component shares of power, area and latency (fractions summing to 1)."""
    rep = evaluate(inputs, architecture)
    out = {}
    for metric, total in (("power_w", rep.power_w), ("area_mm2", rep.area_mm2),
                          ("latency_ns", rep.latency_ns)):
        out[metric] = {c.name: (getattr(c, metric) / total if total else 0.0)
                       for c in rep.components}
    return out


def rios_write_energy_from_access(inputs: CostInputs) -> float:
    """Per-event write energy implied by the 7x7 access figure (cross-check only)."""
    return inputs.rios_access_7x7_j / 49 * inputs.write_read_ratio


# ----------------------------------------------------------- calibration

def backsolve_calibration(inputs: CostInputs | None = None) -> dict[str, float]:
    """Recover the calibration constants from the published headline figures.

    * ISC array power: geometric mean of the two values implied by the
      SRAM power ratios; the part not explained by C·V² switching is static.
    * 2D peripherals: the 2D total is fixed by the 2D/3D power ratio; the
      non-array remainder is split between encoder/decoder and buffers in the
      proportion of their published shares.
    * first SRAM bit cell: its area ratio over the ISC array.
    """
    inp = inputs or CostInputs()
    bose = evaluate(inp, SRAM_BOSE).power_w
    rios = evaluate(inp, SRAM_RIOS).power_w
    p_array = math.sqrt(bose / TARGET_BOSE_OVER_ISC_POWER * rios / TARGET_RIOS_OVER_ISC_POWER)
    dyn_array = inp.event_rate * inp.cell_cap_f * inp.supply_v ** 2
    static_per_cell = (p_array - dyn_array) / inp.pixels

    p_3d = p_array + _cucu(inp).power_w
    p_2d = TARGET_2D_OVER_3D_POWER * p_3d
    rest = p_2d - p_array
    total_share = inp.encdec_share + inp.buffer_share
    per_event = 1.0 / (inp.event_rate * inp.voltage_scale)
    encdec = rest * inp.encdec_share / total_share * per_event
    buffer = rest * inp.buffer_share / total_share * per_event

    bitcell = TARGET_BOSE_OVER_ISC_AREA * inp.cell_area_mm2 * inp.pixels / inp.storage_bits * 1e6
    return {"isc_static_w_per_cell": static_per_cell, "encdec_energy_j": encdec,
            "buffer_energy_j": buffer, "bose_bitcell_area_um2": bitcell}


# ---------------------------------------------------------------- output

REPORT_COLUMNS = ("architecture", "component", "static_w", "dynamic_w", "power_w",
                  "area_mm2", "latency_ns", "calibrated")


def report_rows(reports):
    rows = []
    for rep in reports:
        for c in rep.components:
            rows.append((rep.architecture, c.name, c.static_w, c.dynamic_w, c.power_w,
                         c.area_mm2, c.latency_ns, int(c.calibrated)))
        rows.append((rep.architecture, "TOTAL", rep.static_w, rep.dynamic_w, rep.power_w,
                     rep.area_mm2, rep.latency_ns, int(any(c.calibrated for c in rep.components))))
    return rows


def write_report_csv(path, reports):
    with open(path, "w") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in report_rows(reports):
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def format_table(reports) -> str:
    """Aligned text table; rows built on calibration constants are marked '*'."""
    head = ("architecture", "component", "static[W]", "dynamic[W]", "power[W]",
            "area[mm2]", "latency[ns]", "")
    body = [(a, c, f"{s:.4g}", f"{d:.4g}", f"{p:.4g}", f"{ar:.4g}", f"{lat:.4g}",
             "*" if cal else "")
            for a, c, s, d, p, ar, lat, cal in report_rows(reports)]
    widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(v.ljust(w) if i < 2 else v.rjust(w)
                       for i, (v, w) in enumerate(zip(r, widths))).rstrip()
             for r in [head, *body]]
    lines.append("* uses calibrated (back-solved) constants")
    return "\n".join(lines)


def format_ratios(ratios: dict[str, float]) -> str:
    w = max(map(len, ratios))
    return "\n".join(f"{k.ljust(w)}  {v:10.4g}x" for k, v in ratios.items())
