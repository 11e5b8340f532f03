"""Command-line front end.

    rabitomo synthesize --state 45,30 --axis x --channel both --out run/
    rabitomo fit run/trace_x_pc.csv run/trace_y_pc.csv --out run/
    rabitomo tomograph --state 15.37,235 --config lab.yaml
    rabitomo study batch --calibrate
    rabitomo study sweep

Exit codes: 0 ok, 2 configuration/validation error, 3 numerical or
degeneracy error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, _kernels
from .config import RunConfig, load_config
from .errors import NumericalError, ReconstructionError, ValidationError
from .fitting import fit_trace
from .qubit import PureState
from .rabi import RotationAxis
from .readout import Channel, read_trace_csv, rpqst_trace_pair, write_trace_csv
from .study import (alpha_perturbation_study, batch_tomography, calibrate_noise, run_channel,
                    write_panels)
from .tomography import RECON_HEADER, analyze_traces, measure_channel

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

FLAG_WARNINGS = {
    "x_degenerate": "x-axis Rabi degenerate",
    "y_degenerate": "y-axis Rabi degenerate",
    "inconsistent_cos_theta": "x/y cos(theta) estimates disagree",
    "near_pole": "state near a pole, phi poorly defined",
    "x_not_converged": "x-axis fit did not converge",
    "y_not_converged": "y-axis fit did not converge",
    "x_unreliable_phase": "x-axis Rabi phase unreliable (low amplitude)",
    "y_unreliable_phase": "y-axis Rabi phase unreliable (low amplitude)",
}


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


def _state(text):
    try:
        th, ph = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected theta_deg,phi_deg") from None
    return th, ph


def _channels(choice):
    return [Channel.PL, Channel.PC] if choice == "both" else [Channel.parse(choice)]


def _axes(choice):
    return list(RotationAxis) if choice == "both" else [RotationAxis.parse(choice)]


def _setup(args):
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if overrides:
        raw = dict(cfg.raw)
        raw.update(overrides)
        base = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
        cfg = RunConfig.from_dict(raw, base_dir=base)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _metadata(cfg, **extra):
    meta = {"seed": cfg.seed, "config_hash": cfg.hash(), "config": cfg.raw,
            "backend": _kernels.BACKEND, "version": __version__}
    meta.update(extra)
    return meta


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_recon(path, recons):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECON_HEADER)
        for r in recons:
            w.writerow(r.to_row())


def _report_flags(recon):
    for flag in sorted(recon.quality_flags):
        _warn(f"{FLAG_WARNINGS.get(flag, flag)} [{recon.channel.value}]")


def cmd_synthesize(args):
    cfg, out = _setup(args)
    target = PureState.from_degrees(*args.state)
    channels, axes = _channels(args.channel), _axes(args.axis)
    plans = {axis: cfg.protocol.plan(cfg.model, target, axis) for axis in RotationAxis}
    traces = rpqst_trace_pair(cfg.model, target, plans[RotationAxis.X], plans[RotationAxis.Y],
                              cfg.noise_pl.with_seed(cfg.seed), cfg.noise_pc.with_seed(cfg.seed),
                              cfg.errors)
    for axis in axes:
        for ch in channels:
            path = out / f"trace_{axis.value}_{ch.value}.csv"
            write_trace_csv(traces[(ch, axis)], path)
            print(path)
    return EXIT_OK


def cmd_fit(args):
    cfg, out = _setup(args)
    opts = cfg.protocol.fit
    traces = [(Path(p), read_trace_csv(p, cfg.model.rabi_hz)) for p in args.traces]
    groups = {}
    for path, tr in traces:
        groups.setdefault(tr.channel, {}).setdefault(tr.axis, []).append((path, tr))
    recons = []
    fitted = set()
    for ch, by_axis in groups.items():
        xs, ys = by_axis.get(RotationAxis.X, []), by_axis.get(RotationAxis.Y, [])
        if len(xs) == 1 and len(ys) == 1:
            (px, tx), (py, ty) = xs[0], ys[0]
            m = analyze_traces(tx, ty, opts=opts, seed=tx.seed)
            for path, axis in ((px, RotationAxis.X), (py, RotationAxis.Y)):
                fit = m.fits[axis]
                if fit is None:
                    _warn(f"{path.name}: degenerate trace, no phase")
                    continue
                _write_json(out / f"fit_{path.stem}.json", fit.to_record())
                fitted.add(path)
            _report_flags(m.reconstruction)
            recons.append(m.reconstruction)
            print(f"F[{ch.value}] = {m.reconstruction.fidelity:.6f}")
    for path, tr in traces:
        if path in fitted or _paired(groups, tr):
            continue
        fit = fit_trace(tr, opts)
        _write_json(out / f"fit_{path.stem}.json", fit.to_record())
        print(f"{path.name}: amplitude={fit.amplitude:.6g} phase_deg={math.degrees(fit.phase):.4f}"
              f" +/- {math.degrees(fit.phase_sigma):.4f}")
    if recons:
        _write_recon(out / "reconstruction.csv", recons)
    return EXIT_OK


def _paired(groups, tr):
    by_axis = groups[tr.channel]
    return len(by_axis.get(RotationAxis.X, [])) == 1 and len(by_axis.get(RotationAxis.Y, [])) == 1


def cmd_tomograph(args):
    cfg, out = _setup(args)
    prepared = PureState.from_degrees(*args.state)
    recons, fits = [], {}
    for ch in _channels(args.channel):
        m = measure_channel(cfg.model, prepared, cfg.protocol, cfg.noise(ch), cfg.seed, cfg.errors)
        r = m.reconstruction
        recons.append(r)
        fits[ch.value] = {axis.value: (None if f is None else f.to_record())
                          for axis, f in m.fits.items()}
        for axis, tr in m.traces.items():
            write_trace_csv(tr, out / f"trace_{axis.value}_{ch.value}.csv")
        _report_flags(r)
        th, ph = r.state_exp.degrees
        print(f"F[{ch.value}] = {r.fidelity:.6f}  (theta, phi) = ({th:.2f}, {ph:.2f}) deg")
    _write_recon(out / "reconstruction.csv", recons)
    _write_json(out / "fits.json", fits)
    _write_json(out / "metadata.json", _metadata(cfg, command="tomograph", state_deg=list(args.state)))
    return EXIT_OK


def _calibrate(cfg, channel):
    st = cfg.study
    suite = cfg.suite.scaled(int(st["calibration_replicates"]))
    noise, achieved = calibrate_noise(float(st["target_fidelity"]), suite, cfg.model, cfg.protocol,
                                      cfg.noise(channel), master_seed=int(st["calibration_seed"]),
                                      errors=cfg.errors, workers=int(st["workers"]))
    knob = ("pc_noise_rms", noise.pc_noise_rms) if channel is Channel.PC else \
        ("pl_count_rate", noise.pl_count_rate)
    print(f"calibrated {channel.value}: {knob[0]} = {knob[1]:.6g} (calibration mean F {achieved:.5f})")
    return noise, {"parameter": knob[0], "value": knob[1], "calibration_mean_fidelity": achieved}


def cmd_study(args):
    cfg, out = _setup(args)
    st = cfg.study
    if args.which == "sweep":
        res = alpha_perturbation_study(st["theta_grid_deg"], st["phi_policy"],
                                       float(st["error_fraction"]), int(st["trials"]), cfg.seed,
                                       st["perturb"], st["inversion"], int(st["workers"]))
        for path in write_panels(res, out):
            print(path)
        _write_json(out / "metadata.json", _metadata(cfg, command="study sweep",
                                                     error_model=res.descriptor))
        for t, m, _, _ in res.panel_rows("fidelity"):
            print(f"theta_T = {t:5.1f} deg  mean F = {m:.6f}")
        return EXIT_OK

    calibration = {}
    stats = {}
    for ch in _channels(args.channel):
        noise = cfg.noise(ch)
        if args.calibrate:
            noise, calibration[ch.value] = _calibrate(cfg, ch)
        stats[ch] = run_channel(cfg.suite, cfg.model, cfg.protocol, noise, cfg.seed, cfg.errors,
                                int(st["workers"]))
    recons = [r for s in stats.values() for r in s.records]
    _write_recon(out / "reconstructions.csv", recons)
    summary = {ch.value: s.summary() for ch, s in stats.items()}
    _write_json(out / "summary.json", summary)
    failures = {ch.value: s.failures for ch, s in stats.items() if s.failures}
    _write_json(out / "metadata.json", _metadata(
        cfg, command="study batch", suite_deg=cfg.suite.to_degrees(), calibration=calibration,
        pulse_errors=asdict(cfg.errors), failures=failures))
    for ch, s in stats.items():
        for msg in s.failures:
            _warn(msg)
        print(f"{ch.value}: F = {s.mean_fidelity:.5f} +/- {s.std_fidelity:.5f}  optimized "
              f"{s.optimized_mean_fidelity:.5f} +/- {s.optimized_std_fidelity:.5f}  (n={s.n})")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="rabitomo", description="Rabi-phase state tomography simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common], help="write simulated Rabi trace CSVs")
    s.add_argument("--state", type=_state, default=(15.37, 235.0), metavar="THETA_DEG,PHI_DEG")
    s.add_argument("--axis", choices=("x", "y", "both"), default="both")
    s.add_argument("--channel", choices=("pl", "pc", "both"), default="both")
    s.set_defaults(func=cmd_synthesize)

    f = sub.add_parser("fit", parents=[common],
                       help="fit trace CSVs; an x/y pair of one channel is also reconstructed")
    f.add_argument("traces", nargs="+")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("tomograph", parents=[common], help="full pipeline for one state")
    t.add_argument("--state", type=_state, default=(15.37, 235.0), metavar="THETA_DEG,PHI_DEG")
    t.add_argument("--channel", choices=("pl", "pc", "both"), default="both")
    t.set_defaults(func=cmd_tomograph)

    st = sub.add_parser("study", parents=[common], help="batch statistics or the alpha-error sweep")
    st.add_argument("which", choices=("batch", "sweep"))
    st.add_argument("--channel", choices=("pl", "pc", "both"), default="both")
    st.add_argument("--calibrate", action="store_true",
                    help="calibrate channel noise to study.target_fidelity before the batch")
    st.set_defaults(func=cmd_study)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReconstructionError as exc:
        print(f"error: reconstruction failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
