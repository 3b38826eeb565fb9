"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 domain failure (band not
covered, calibration or fit infeasible, geometry invalid).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from .amplifier import gain_calibration
from .attacks import AttackKind, AttackSpec, ingest_command, run_attack, synth_command
from .coupling import (
    Arrangement,
    ArrayConfig,
    CalibrationTargets,
    array_transmission,
    calibrate,
)
from .designer import DesignProblem, cover_band
from .device import build_device, export_geometry, fit_channel, response_grid
from .errors import (
    ArgumentError,
    CalibrationError,
    FitError,
    GeometryError,
    InfeasibleDesignError,
    InputError,
    MetashieldError,
)
from .metrics import report
from .spectral import make_grid, write_columns, write_wav

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2
DEFAULT_WORDS = ("turn", "on", "the", "lights", "in", "the", "living", "room", "right", "now")
DEFAULT_CARRIERS = (18000.0, 25000.0, 40000.0)


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def trial_seed(root: int, index: int) -> int:
    """Seed of trial ``index`` derived from ``root`` by counter."""
    return int(np.random.SeedSequence([int(root), int(index)]).generate_state(1, dtype=np.uint32)[0])


def _band(text: str):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI in hertz, got {text!r}") from None
    return lo, hi


def _floats(text: str):
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


# --- commands ------------------------------------------------------------------


def cmd_design(args, cfg) -> int:
    spacings = tuple(s * 1e-3 for s in args.spacing_mm) if args.spacing_mm else (cfg.array.spacing,)
    problem = DesignProblem(
        band=args.band,
        tc_target=args.tc_target,
        max_units=args.max_units,
        r=cfg.unit_defaults.r,
        spacing_choices=spacings,
        arrangement=Arrangement(args.arrangement),
        coupling_enabled=args.coupling,
        q_factor=cfg.unit_defaults.q_factor,
        cavity_radius=cfg.unit_defaults.cavity_radius,
        grid_points=args.points,
    )
    result = cover_band(problem, cfg.coupling, cfg.air)
    config_mod.save(replace(cfg, array=result.config), args.out_config)
    model = cfg.coupling if args.coupling else cfg.coupling.uncoupled()
    grid = make_grid(args.band[0], args.band[1], args.points)
    t = array_transmission(result.config, model, cfg.air, grid)
    write_columns(args.out_csv, ("f_hz", "tc"), (grid, t.magnitude))
    heights = ", ".join(f"{u.h * 1e3:.1f}" for u in result.config.units)
    print(f"units: {result.units_used}  heights_mm: [{heights}]  max_tc: {result.achieved_max_tc:.4f}")
    if not result.target_met:
        print(f"target {args.tc_target} not reached within {args.max_units} units", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_simulate_filter(args, cfg) -> int:
    if args.preset:
        resp = build_device(cfg.preset(args.preset), cfg.array, cfg.coupling, cfg.coiled, args.f_max, cfg.air)
        grid = make_grid(args.f_min, args.f_max, args.points)
        values = np.abs(resp(grid))
    else:
        grid = make_grid(args.f_min, args.f_max, args.points)
        values = array_transmission(cfg.array, cfg.coupling, cfg.air, grid).magnitude
    write_columns(args.out, ("f_hz", "tc"), (grid, values))
    band = (grid >= 16000.0) & (grid <= 40000.0)
    if band.any():
        print(f"max |H| over 16-40 kHz: {values[band].max():.4f}")
    return EXIT_OK


def _command(args):
    if args.input:
        return ingest_command(args.input, args.spans)
    return synth_command(args.words.split(",") if args.words else DEFAULT_WORDS)


def _defense(cfg, name):
    if name in (None, "none"):
        return None
    return build_device(cfg.preset(name), cfg.array, cfg.coupling, cfg.coiled, 50000.0, cfg.air)


def _specs(args, count):
    if args.kind == "inaudible":
        carriers = args.carrier or DEFAULT_CARRIERS
        per = -(-count // len(carriers))
        return [AttackSpec.inaudible(carriers[i // per], args.mod_index) for i in range(count)]
    if args.kind == "adversarial":
        return [AttackSpec.adversarial(snr_db=args.snr)] * count
    return [AttackSpec.clean()] * count


def _run_trials(specs, cmd, defense, cfg, root_seed, offset=0):
    trials = []
    for i, spec in enumerate(specs):
        seed = trial_seed(root_seed, offset + i)
        trial = run_attack(spec, cmd, defense, cfg.microphone, seed)
        info = {"carrier_hz": spec.carrier} if spec.kind is AttackKind.INAUDIBLE else {}
        trials.append(replace(trial, info=info))
    return trials


def _dump(trials, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, t in enumerate(trials):
        cap, ref = f"trial_{i:03d}_captured.wav", f"trial_{i:03d}_reference.wav"
        write_wav(directory / cap, t.captured, fmt="float32")
        write_wav(directory / ref, t.reference.signal, fmt="float32")
        manifest.append({"index": i, "kind": t.kind.value, "seed": int(t.seed), "captured": cap, "reference": ref})
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_simulate_attack(args, cfg) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    root = cfg.root_seed if args.seed is None else args.seed
    cmd = _command(args)
    defense = _defense(cfg, args.defense)
    trials = _run_trials(_specs(args, args.trials), cmd, defense, cfg, root)
    meta = {"command": "simulate-attack", "kind": args.kind, "defense": args.defense or "none", "root_seed": root}
    rep = report(trials, {"defense": defense} if defense is not None else None, cfg.policy, meta)
    Path(args.out).write_text(rep.to_json())
    if args.csv:
        rep.write_csv(args.csv)
    if args.dump_dir:
        _dump(trials, args.dump_dir)
    summary = {k: v for k, v in rep.to_dict().items() if k in ("psr", "wir", "crr")}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    root = cfg.root_seed if args.seed is None else args.seed
    cmd = _command(args)
    defense = _defense(cfg, args.defense)
    responses = {"defense": defense} if defense is not None else None
    per = -(-args.trials // len(DEFAULT_CARRIERS))
    scenarios = {
        "inaudible": [AttackSpec.inaudible(DEFAULT_CARRIERS[i // per]) for i in range(args.trials)],
        "adversarial": [AttackSpec.adversarial()] * args.commands,
        "clean": [AttackSpec.clean()] * args.commands,
    }
    out = {"schema_version": 1, "defense": args.defense, "root_seed": root}
    offset = 0
    for name, specs in scenarios.items():
        trials = _run_trials(specs, cmd, defense, cfg, root, offset)
        offset += len(specs)
        out[name] = report(trials, responses, cfg.policy, {"scenario": name}).to_dict()
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n")
    print(
        json.dumps(
            {
                "psr": out["inaudible"]["psr"],
                "wir": out["adversarial"]["wir"],
                "crr": out["clean"]["crr"],
            }
        )
    )
    return EXIT_OK


def cmd_export_stl(args, cfg) -> int:
    spacing = None if args.spacing_mm is None else args.spacing_mm * 1e-3
    rec = export_geometry(cfg.preset(args.preset), cfg.array, cfg.coiled, args.out, spacing)
    print(json.dumps(rec))
    return EXIT_OK


def _targets(path, cfg):
    base = CalibrationTargets(
        unit_heights=tuple(u.h for u in cfg.array.units),
        neck_radius=cfg.unit_defaults.r,
        cavity_radius=cfg.unit_defaults.cavity_radius,
        neck_length=cfg.unit_defaults.neck_length,
        spacing=cfg.array.spacing,
        shift_gain=cfg.coupling.shift_gain,
    )
    if path is None:
        return base
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read targets {path}: {exc}") from exc
    keys = {
        "band_hz": ("band", 1.0),
        "band_tc_max": ("band_tc_max", 1.0),
        "unit_bandwidth_hz": ("unit_bandwidth", 1.0),
        "expansion_min": ("expansion_min", 1.0),
        "passband_hz": ("passband", 1.0),
        "passband_min": ("passband_min", 1.0),
    }
    if not isinstance(raw, dict) or set(raw) - set(keys):
        raise InputError(f"targets accept only: {', '.join(sorted(keys))}")
    changes = {}
    for k, v in raw.items():
        attr, _ = keys[k]
        changes[attr] = tuple(float(x) for x in v) if isinstance(v, list) else float(v)
    return replace(base, **changes)


def _residual_table(residuals) -> str:
    return "\n".join(f"  {k:<24s} {float(v): .6g}" for k, v in sorted(residuals.items()))


def cmd_calibrate(args, cfg) -> int:
    targets = _targets(args.targets, cfg)
    try:
        result = calibrate(targets, cfg.air)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}\nresiduals (positive = missed):\n{_residual_table(exc.residuals)}", file=sys.stderr)
        return EXIT_DOMAIN
    units = tuple(replace(u, q_factor=result.q_factor) for u in cfg.array.units)
    array = ArrayConfig(units, cfg.array.arrangement, cfg.array.spacing)
    kappa = gain_calibration(cfg.air)
    presets = {}
    for kind, p in cfg.presets.items():
        grid = response_grid(50000.0, p.amp_center_target)
        t = array_transmission(array, result.model, cfg.air, grid)
        try:
            presets[kind] = fit_channel(p, cfg.coiled, t, cfg.air)
        except FitError as exc:
            print(f"channel fit failed for {kind.value}: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
    new = replace(
        cfg,
        coupling=result.model,
        unit_defaults=replace(cfg.unit_defaults, q_factor=result.q_factor),
        array=array,
        presets=presets,
    )
    config_mod.save(new, args.out)
    print(f"q_factor: {result.q_factor}  alpha_m: {result.model.alpha:.9g}  z_ref: {result.model.z_ref:.6g}")
    print(f"amplifier gain calibration: {kappa:.9g}")
    print("residuals (negative = target met with margin):")
    print(_residual_table(result.residuals))
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metashield", description="Acoustic-metamaterial defense design and simulation.")
    p.add_argument("--config", help=f"toolkit config JSON (default: ${config_mod.ENV_VAR} or built-in)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("design", help="choose resonator depths covering a band")
    d.add_argument("--band", type=_band, default=(16000.0, 40000.0), help="LO:HI in Hz")
    d.add_argument("--tc-target", type=float, default=0.15)
    d.add_argument("--max-units", type=int, default=30)
    d.add_argument("--coupling", type=_on_off, default=True, help="on or off")
    d.add_argument("--arrangement", choices=[a.value for a in Arrangement], default="linear")
    d.add_argument("--spacing-mm", type=_floats, help="candidate gaps, comma-separated")
    d.add_argument("--points", type=int, default=2401)
    d.add_argument("--out-config", default="design.json")
    d.add_argument("--out-csv", default="design_tc.csv")
    d.set_defaults(func=cmd_design)

    f = sub.add_parser("simulate-filter", help="transmission spectrum of the configured array or device")
    f.add_argument("--preset", choices=["mobile", "speaker"], help="full device instead of the bare array")
    f.add_argument("--f-min", type=float, default=100.0)
    f.add_argument("--f-max", type=float, default=50000.0)
    f.add_argument("--points", type=int, default=4991)
    f.add_argument("--out", default="filter_tc.csv")
    f.set_defaults(func=cmd_simulate_filter)

    def command_source(sp):
        sp.add_argument("--words", help="comma-separated labels for the synthetic command")
        sp.add_argument("--input", help="command WAV instead of the synthetic one")
        sp.add_argument("--spans", help="word-span JSON for --input")
        sp.add_argument("--defense", choices=["none", "mobile", "speaker"], default="none")
        sp.add_argument("--seed", type=int, help="root seed (default: config seeds.root)")

    a = sub.add_parser("simulate-attack", help="seeded attack trials and a defense report")
    a.add_argument("--kind", choices=[k.value for k in AttackKind], required=True)
    a.add_argument("--carrier", type=_floats, help="carrier(s) in Hz for inaudible trials, cycled in blocks")
    a.add_argument("--mod-index", type=float, default=0.8)
    a.add_argument("--snr", type=float, default=20.0, help="perturbation SNR in dB for adversarial trials")
    a.add_argument("--trials", type=int, default=30)
    a.add_argument("--out", default="report.json")
    a.add_argument("--csv", help="also write a metric,value summary")
    a.add_argument("--dump-dir", help="write captured and reference WAVs plus a manifest")
    command_source(a)
    a.set_defaults(func=cmd_simulate_attack)

    e = sub.add_parser("evaluate", help="inaudible, adversarial and clean scenarios in one report")
    e.add_argument("--trials", type=int, default=30, help="inaudible trials across 18, 25 and 40 kHz")
    e.add_argument("--commands", type=int, default=10, help="adversarial and clean commands")
    e.add_argument("--out", default="evaluation.json")
    command_source(e)
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-stl", help="printable enclosure solid")
    x.add_argument("--preset", choices=["mobile", "speaker"], default="mobile")
    x.add_argument("--spacing-mm", type=float, help="override the array spacing")
    x.add_argument("--out", default="enclosure.stl")
    x.set_defaults(func=cmd_export_stl)

    c = sub.add_parser("calibrate", help="refit coupling constants, channel fits and amplifier gain")
    c.add_argument("--targets", help="JSON overriding calibration targets")
    c.add_argument("--out", default="calibrated.json")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_mod.resolve(args.config)
        return args.func(args, cfg)
    except (CalibrationError, FitError, GeometryError, InfeasibleDesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (UsageError, ArgumentError, InputError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MetashieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
