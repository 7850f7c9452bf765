"""``tsisc`` command-line entry point.

Every subcommand writes into a run directory (``--out``) and echoes its
effective configuration there as ``config.echo.kv``. A ``--config`` key-value
file supplies defaults for any flag (keys are the long flag names with
dashes or underscores); flags given on the command line win. The seed comes
from ``--seed``, then the config file, then ``TSISC_SEED``, then 0.
"""
from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import cost_model as cm
from .array_sim import AnalogArray, HalfSelectStats, replay_all
from .cell_model import DecayModel, VariabilitySpec, fit, load_preset, load_variability
from .digital_surface import SaeMap, write_tsf
from .errors import BoundsError, ClockError, ConfigError, FitError, StreamFormatError
from .events import PRESETS, SceneConfig, generate_synthetic, inject_noise, read_stream, \
    write_stream
from .frames import FrameSpec, export_frames
from .kvformat import read_kv, write_kv
from .stcf import StcfConfig, denoise_stream, roc_curve, state_factory_for, write_roc_csv

SEED_ENV = "TSISC_SEED"
PARAM_NAMES = ("a1", "tau1_us", "a2", "tau2_us", "b")
_UNITS = {"us": 1, "ms": 1_000, "s": 1_000_000}


def parse_duration_us(text) -> int:
    """``'10ms'``, ``'1.5s'``, ``'250us'``; a bare number is microseconds."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(us|ms|s)?\s*", str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r} (use e.g. 10ms, 1s, 500us)")
    value = float(m.group(1)) * _UNITS[m.group(2) or "us"]
    if value != round(value):
        raise argparse.ArgumentTypeError(f"duration {text!r} is not a whole number of µs")
    return int(round(value))


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# ------------------------------------------------------------------ parser

def _common(p, need_input=True):
    if need_input:
        p.add_argument("--in", dest="input", required=True, help="event stream (.evb or .csv)")
        p.add_argument("--allow-unsorted", action="store_true",
                       help="sort out-of-order input instead of rejecting it")
    p.add_argument("--out", default=None, help="run directory (default: run_<command>)")


def _model_args(p):
    p.add_argument("--cap", default="20fF", help="cell calibration: 20fF, 10fF, tg, or a .kv file")
    p.add_argument("--arch", default="3d", choices=("3d", "2d"))
    p.add_argument("--polarity", default="merged", choices=("merged", "split"))
    p.add_argument("--no-variability", action="store_true",
                   help="use identical nominal cells")
    p.add_argument("--pulse-ns", type=float, default=5.0, help="2D write pulse width")
    p.add_argument("--tau-on-ns", type=float, default=100.0, help="2D half-select discharge tau")
    p.add_argument("--coupling-v", type=float, default=0.0, help="2D bit-line coupling step")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsisc", description=__doc__.split("\n")[0])
    ap.add_argument("--config", help="key=value file with defaults for the subcommand's flags")
    ap.add_argument("--seed", type=int, default=None, help=f"global seed (fallback ${SEED_ENV})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic stream")
    _common(p, need_input=False)
    p.add_argument("--preset", default=None, choices=sorted(PRESETS))
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--duration", type=parse_duration_us, default=None)
    p.add_argument("--speed", type=float, default=None, help="edge speed, px/s")
    p.add_argument("--angle", type=float, default=None, help="motion direction, degrees")
    p.add_argument("--jitter", type=parse_duration_us, default=None)
    p.add_argument("--passes", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.0, help="background rate, Hz/pixel")
    p.add_argument("--format", default="bin", choices=("bin", "csv"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("simulate", help="replay a stream into the analog array")
    _common(p)
    _model_args(p)
    p.add_argument("--read-every", type=parse_duration_us, default=parse_duration_us("10ms"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("denoise", help="STCF denoising with optional ROC sweep")
    _common(p)
    _model_args(p)
    p.add_argument("--backend", default="timestamp", choices=("timestamp", "voltage"))
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--window", type=parse_duration_us, default=parse_duration_us("24ms"))
    p.add_argument("--th", type=int, default=1)
    p.add_argument("--v-tw", type=float, default=None, help="override the voltage threshold")
    p.add_argument("--sweep-th", action="store_true", help="ROC over every threshold")
    p.add_argument("--write-noise", type=_bool, default=True,
                   help="write events classified as noise into the state (default 1)")
    p.add_argument("--format", default="bin", choices=("bin", "csv"))
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("cost", help="power/area/latency report")
    _common(p, need_input=False)
    p.add_argument("--constants", default=None, help="key=value overrides of cost inputs")
    p.add_argument("--arch", default="all", choices=("all", "3d", "2d", "bose", "rios"))
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("fit", help="fit the decay model to a (dt_us, volts) trace")
    _common(p)
    p.add_argument("--label", default="custom")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("export", help="export time-surface frames")
    _common(p)
    _model_args(p)
    p.add_argument("--backend", default="analog", choices=("analog", "digital"))
    p.add_argument("--window", type=parse_duration_us, default=parse_duration_us("50ms"))
    p.add_argument("--timestamps", default=None,
                   help="file with one frame time (µs) per line; overrides --window")
    p.add_argument("--size", default=None, help="N or WxH (default 224, 256 with --timestamps)")
    p.add_argument("--quant", default="u8", choices=("u8", "float32"))
    p.add_argument("--tau", type=parse_duration_us, default=parse_duration_us("10ms"),
                   help="decay constant of the digital surface")
    p.add_argument("--emit-partial", action="store_true")
    p.set_defaults(func=cmd_export)
    return ap


def _subparser(ap, name):
    for action in ap._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def _preparse(argv):
    """Global options and the subcommand name, tolerating missing required flags."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--seed", type=int)
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    return known, command


def _apply_config(ap, argv, config_path, command):
    """Parse with the config file's values installed as flag defaults."""
    items = read_kv(config_path)
    try:
        sub = _subparser(ap, command)
    except KeyError:
        return ap.parse_args(argv)  # let argparse report the bad subcommand
    dests = {a.dest: a for a in sub._actions}
    defaults, seed = {}, None
    for key, raw in items.items():
        dest = key.replace("-", "_")
        if dest in ("seed",):
            seed = int(raw)
            continue
        if dest in ("command", "config", "func"):
            continue
        if dest == "in":
            dest = "input"
        action = dests.get(dest)
        if action is None or dest == "help":
            raise ConfigError(f"{config_path}: unknown key {key!r} for '{command}'", key)
        try:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                defaults[dest] = _bool(raw)
            elif raw in ("", "None"):
                defaults[dest] = None
            else:
                value = action.type(raw) if action.type else raw
                if action.choices and value not in action.choices:
                    raise argparse.ArgumentTypeError(f"{value!r} not in {list(action.choices)}")
                defaults[dest] = value
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"{config_path}: {key}: {exc}", key) from None
    sub.set_defaults(**defaults)
    for dest in defaults:
        dests[dest].required = False
    args = ap.parse_args(argv)
    if args.seed is None:
        args.seed = seed
    return args


def resolve_seed(args) -> tuple[int, bool]:
    """(seed, explicitly_given)."""
    if args.seed is not None:
        return int(args.seed), True
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env), True
        except ValueError:
            raise ConfigError(f"${SEED_ENV} must be an integer, got {env!r}", "seed") from None
    return 0, False


def _echo(args, out: Path):
    items = {k: v for k, v in sorted(vars(args).items())
             if k not in ("func", "config", "seed_explicit") and v is not None}
    write_kv(out / "config.echo.kv", items, header=f"effective configuration of 'tsisc {args.command}'")


def _run_dir(args) -> Path:
    out = Path(args.out or f"run_{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- helpers

def _load_model(cap) -> DecayModel:
    if str(cap).endswith(".kv"):
        return DecayModel.load(cap).validate()
    return load_preset(cap)


def _variability(args) -> VariabilitySpec:
    if args.no_variability:
        return VariabilitySpec()
    var = load_variability()
    if args.seed_explicit:
        var = VariabilitySpec(var.sigma_tau1, var.sigma_tau2, var.sigma_b, var.correlation,
                              args.seed)
    return var


def _array_kw(args):
    return dict(pulse_ns=args.pulse_ns, tau_on_ns=args.tau_on_ns, coupling_v=args.coupling_v)


def _read(args):
    return read_stream(args.input, allow_unsorted=args.allow_unsorted)


def _fmt(x):
    return "nan" if x is None else f"{x:.6f}"


# ---------------------------------------------------------------- commands

def cmd_gen(args, out: Path) -> int:
    base = PRESETS[args.preset] if args.preset else SceneConfig()
    overrides = {"width": args.width, "height": args.height, "duration_us": args.duration,
                 "speed_px_s": args.speed, "angle_deg": args.angle, "jitter_us": args.jitter,
                 "passes": args.passes}
    cfg = SceneConfig(**{**base.__dict__, **{k: v for k, v in overrides.items() if v is not None}})
    if not args.preset and args.seed_explicit:
        cfg.seed = args.seed
    header, events = generate_synthetic(cfg)
    header, events = inject_noise(events, header, args.noise, seed=args.seed)
    path = out / ("stream.evb" if args.format == "bin" else "stream.csv")
    write_stream(header, events, path)
    n_noise = int(np.sum(events["label"] == 0))
    write_kv(out / "summary.kv", {"events": events.size, "noise_events": n_noise,
                                  "width": header.width, "height": header.height,
                                  "duration_us": header.duration, "path": path.name})
    print(f"wrote {events.size} events ({n_noise} noise) to {path}")
    return 0


def cmd_simulate(args, out: Path) -> int:
    header, events = _read(args)
    model = _load_model(args.cap)
    array = AnalogArray(header.width, header.height, model, _variability(args), args.arch,
                        args.polarity, **_array_kw(args))
    if args.read_every <= 0:
        raise ConfigError("read interval must be > 0", "read_every")
    end = max(header.duration, int(events["t"][-1]) if events.size else 0)
    times = np.arange(args.read_every, end + 1, args.read_every, dtype=np.int64)
    surfaces, stats = replay_all(array, events, times, collect_stats=args.arch == "2d")
    rows = []
    for i, (t, surf) in enumerate(surfaces):
        planes = surf if surf.ndim == 3 else surf[None]
        for c, plane in enumerate(planes):
            name = f"surface_{i:05d}.tsf" if len(planes) == 1 else f"surface_{i:05d}_c{c}.tsf"
            write_tsf(out / name, plane)
            rows.append(f"{i},{t},{name}")
    (out / "surfaces.csv").write_text("frame_id,t_us,path\n" + "".join(r + "\n" for r in rows))
    summary = {"events": events.size, "surfaces": len(surfaces), "architecture": args.arch,
               "model": model.label}
    if args.arch == "2d":
        stats = stats or HalfSelectStats()
        stats.to_csv(out / "halfselect.csv")
        summary["half_selects"] = len(stats)
    write_kv(out / "summary.kv", summary)
    print(f"{len(surfaces)} surfaces written to {out}")
    return 0


def cmd_denoise(args, out: Path) -> int:
    header, events = _read(args)
    cfg = StcfConfig(radius=args.radius, window_us=args.window, threshold=args.th,
                     backend=args.backend, v_tw=args.v_tw, polarity_mode=args.polarity,
                     write_noise=args.write_noise)
    cfg.validate()
    model = _load_model(args.cap) if args.backend == "voltage" else None
    factory = state_factory_for(cfg, header.width, header.height, model,
                                _variability(args) if model else None, args.arch,
                                **(_array_kw(args) if model else {}))
    summary = {"events": events.size, "backend": args.backend}
    if args.sweep_th:
        outcome = roc_curve(events, cfg, factory)
        write_roc_csv(out / "roc.csv", outcome.roc)
        summary["auc"] = outcome.auc
    else:
        outcome, _ = denoise_stream(events, cfg, factory)
    kept = events[outcome.decision]
    write_stream(header, kept, out / ("filtered.evb" if args.format == "bin" else "filtered.csv"))
    summary["kept"] = kept.size
    if outcome.labels is not None:
        summary.update(tp=outcome.tp, fp=outcome.fp, tn=outcome.tn, fn=outcome.fn,
                       tpr=outcome.tpr, fpr=outcome.fpr)
    write_kv(out / "summary.kv", summary)
    msg = f"kept {kept.size}/{events.size} events"
    if outcome.auc is not None:
        msg += f"; AUC={outcome.auc:.4f}"
    print(msg)
    return 0


_COST_ARCH = {"3d": cm.ISC_3D, "2d": cm.ISC_2D, "bose": cm.SRAM_BOSE, "rios": cm.SRAM_RIOS}


def cmd_cost(args, out: Path) -> int:
    inputs = cm.CostInputs.load(args.constants) if args.constants else cm.CostInputs()
    archs = cm.ARCHITECTURES if args.arch == "all" else (_COST_ARCH[args.arch],)
    reports = [cm.evaluate(inputs, a) for a in archs]
    cm.write_report_csv(out / "cost.csv", reports)
    table = cm.format_table(reports)
    ratios = cm.compare(inputs)
    (out / "cost.txt").write_text(table + "\n\n" + cm.format_ratios(ratios) + "\n")
    write_kv(out / "ratios.kv", ratios)
    for a in archs:
        shares = cm.breakdown_report(inputs, a)
        with open(out / f"breakdown_{a}.csv", "w") as fh:
            fh.write("metric,component,share\n")
            for metric, parts in shares.items():
                fh.writelines(f"{metric},{name},{v!r}\n" for name, v in parts.items())
    print(table)
    print()
    print(cm.format_ratios(ratios))
    return 0


def _read_trace(path) -> np.ndarray:
    rows, first = [], True
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(";", ",").split(",")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except (ValueError, IndexError):
            if not first:  # only a leading column-name line may be non-numeric
                raise StreamFormatError("expected 'dt_us,volts'", f"line {lineno}") from None
        first = False
    return np.array(rows, dtype=np.float64).reshape(-1, 2)


def cmd_fit(args, out: Path) -> int:
    samples = _read_trace(args.input)
    rep = fit(samples, label=args.label)
    rep.model.save(out / "calibration.kv",
                   header=f"fit of {Path(args.input).name}: mse={rep.mse:.6e} V^2")
    write_kv(out / "summary.kv", {"mse": rep.mse, "iterations": rep.iterations,
                                  "degenerate": rep.degenerate, "converged": rep.converged,
                                  "samples": samples.shape[0]})
    print(f"MSE={rep.mse:.6e} V^2  " + " ".join(f"{k}={v:.6g}" for k, v in zip(PARAM_NAMES, rep.model.params)))
    if rep.degenerate:
        print("warning: fit is degenerate (an exponential term is negligible or "
              "the time constants coincide)", file=sys.stderr)
    return 0


def _parse_size(text):
    if text is None:
        return None
    m = re.fullmatch(r"(\d+)(?:[xX](\d+))?", str(text).strip())
    if not m:
        raise ConfigError(f"bad size {text!r}; use N or WxH", "size")
    return int(m.group(1)) if m.group(2) is None else (int(m.group(1)), int(m.group(2)))


def cmd_export(args, out: Path) -> int:
    header, events = _read(args)
    timestamps = None
    if args.timestamps:
        timestamps = tuple(int(float(s)) for s in Path(args.timestamps).read_text().split())
    spec = FrameSpec(window_us=args.window, timestamps=timestamps, size=_parse_size(args.size),
                     channels=2 if args.polarity == "split" else 1, quantization=args.quant,
                     emit_partial=args.emit_partial, digital_tau_us=args.tau)
    if args.backend == "analog":
        model = _load_model(args.cap)
        var = _variability(args)
        factory = lambda: AnalogArray(header.width, header.height, model, var, args.arch,
                                      args.polarity, **_array_kw(args))
    else:
        factory = lambda: SaeMap(header.width, header.height, args.polarity)
    duration = max(header.duration, int(events["t"][-1]) if events.size else 0)
    rows = export_frames(events, factory, spec, out, duration_us=duration)
    print(f"{len(rows)} frame files written to {out}")
    return 0


# -------------------------------------------------------------------- main

def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        known, command = _preparse(argv)
        if known.config:
            args = _apply_config(ap, argv, known.config, command)
        else:
            args = ap.parse_args(argv)
        args.seed, args.seed_explicit = resolve_seed(args)
        out = _run_dir(args)
        _echo(args, out)
        return args.func(args, out)
    except (ConfigError, StreamFormatError, BoundsError, ClockError, FitError, OSError) as exc:
        field = getattr(exc, "field", None)
        print(f"tsisc: error: {exc}" + (f" [field: {field}]" if field else ""), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
