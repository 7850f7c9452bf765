"""Print the power/area/latency comparison and per-architecture breakdowns.

    python scripts/cost_report.py [--constants overrides.kv]

Rows marked ``*`` use back-solved calibration constants.
"""
import argparse

from tsisc import cost_model as cm


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--constants", default=None, help="key-value file overriding CostInputs")
    args = ap.parse_args(argv)
    inputs = cm.CostInputs.load(args.constants) if args.constants else cm.CostInputs()

    reports = [cm.evaluate(inputs, arch) for arch in cm.ARCHITECTURES]
    print(cm.format_table(reports))
    print()
    print(cm.format_ratios(cm.compare(inputs)))
    for arch in (cm.ISC_3D, cm.ISC_2D):
        print(f"\n{arch} shares")
        for metric, parts in cm.breakdown_report(inputs, arch).items():
            body = ", ".join(f"{k} {v * 100:.2f}%" for k, v in parts.items())
            print(f"  {metric:11s} {body}")
    print("\nback-solved constants")
    for key, value in cm.backsolve_calibration(inputs).items():
        print(f"  {key} = {value!r}")


if __name__ == "__main__":
    main()
