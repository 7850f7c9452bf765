"""Regenerate the decay-model calibration files shipped in src/tsisc/data."""
from pathlib import Path

import numpy as np

from tsisc import calibration
from tsisc.cell_model import evaluate, population_cv, sample_cells
from tsisc.kvformat import write_kv

DATA = Path(__file__).resolve().parents[1] / "src" / "tsisc" / "data"


def main():
    rep = calibration.calibrate_20ff()
    m20 = rep.model
    m20.save(DATA / "cal_20fF.kv",
             header=f"20 fF cell: fit to MC anchors + PCHIP midpoints\n"
                    f"mse={rep.mse:.3e} V^2 iterations={rep.iterations}")
    m10 = calibration.calibrate_10ff(m20)
    m10.save(DATA / "cal_10fF.kv", header="10 fF cell: 20 fF time constants x0.5, floor "
                                          "set by the 24 ms window voltage (approximate)")
    mtg = calibration.calibrate_tg(m20)
    mtg.save(DATA / "cal_tg.kv", header="transmission-gate switch preset (illustrative)")
    var = calibration.calibrate_variability(m20)
    write_kv(DATA / "variability.kv",
             {"sigma_tau1": var.sigma_tau1, "sigma_tau2": var.sigma_tau2,
              "sigma_b": var.sigma_b, "correlation": var.correlation, "seed": var.seed},
             header="cell mismatch, calibrated against the 20 fF CV targets")

    dts = np.array([0, 10_000, 20_000, 24_000, 30_000, 50_000])
    for m in (m20, m10, mtg):
        print(m.label, m.params, np.round(evaluate(m, dts), 4))
    cv = population_cv(sample_cells(m20, var, 8000), calibration.CV_TIMES_US)
    print("variability", var, "CV %", np.round(cv * 100, 3))


if __name__ == "__main__":
    main()
