"""Compare STCF denoising AUC across filter state backends.

Runs the timestamp (ideal) backend and the analog voltage backend for the
10 fF and 20 fF cells, in merged and split polarity, on one labeled stream
(the bundled synthetic fixture by default).  Results are reported, not
asserted.  With ``--expect-auc`` the ideal AUC is compared against a
reference value within ``--tol``; the exit status is 1 when outside.

    python scripts/denoise_experiment.py
    python scripts/denoise_experiment.py --in hotel_bar.csv --expect-auc 0.96
"""
import argparse
import sys
import time
from pathlib import Path

from tsisc.cell_model import load_preset, load_variability
from tsisc.events import read_stream
from tsisc.stcf import StcfConfig, roc_curve, state_factory_for

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "edge_noise_5hz.evb"


def run(events, header, backend, cap, polarity, arch, radius, window_us):
    cfg = StcfConfig(radius=radius, window_us=window_us, backend=backend,
                     polarity_mode=polarity)
    model = load_preset(cap) if cap else None
    var = load_variability() if cap else None
    fac = state_factory_for(cfg, header.width, header.height, model, var, arch)
    return roc_curve(events, cfg, fac).auc


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", type=Path, default=FIXTURE)
    ap.add_argument("--arch", choices=("3d", "2d"), default="3d")
    ap.add_argument("--radius", type=int, default=1)
    ap.add_argument("--window-us", type=int, default=24_000)
    ap.add_argument("--expect-auc", type=float, default=None)
    ap.add_argument("--tol", type=float, default=0.05)
    ap.add_argument("--out", type=Path, default=None, help="optional CSV of all AUCs")
    args = ap.parse_args(argv)

    header, events = read_stream(args.input)
    print(f"{args.input.name}: {events.size} events, {header.width}x{header.height}")
    rows = []
    for polarity in ("merged", "split"):
        for backend, cap in (("timestamp", None), ("voltage", "10fF"), ("voltage", "20fF")):
            t0 = time.perf_counter()
            auc = run(events, header, backend, cap, polarity, args.arch, args.radius,
                      args.window_us)
            name = "ideal" if cap is None else cap
            rows.append((polarity, name, auc))
            print(f"  {polarity:6s} {name:6s} AUC {auc:.4f}  ({time.perf_counter() - t0:.1f} s)")

    if args.out:
        args.out.write_text("polarity,state,auc\n"
                            + "".join(f"{p},{n},{a!r}\n" for p, n, a in rows))
    if args.expect_auc is not None:
        ideal = rows[0][2]
        ok = abs(ideal - args.expect_auc) <= args.tol
        print(f"ideal merged AUC {ideal:.4f} vs expected {args.expect_auc} "
              f"(tol {args.tol}): {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
