"""YAML run configuration.

Every section is optional and falls back to the library defaults. Unknown
keys are rejected, and all values are validated by building the library
objects (and a worst-case envelope plan) before anything runs.
"""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass

import yaml

from .errors import ConfigurationError, ValidationError
from .fitting import FitOptions
from .qubit import PureState
from .rabi import RabiModel, RotationAxis
from .readout import Channel, ChannelNoise, PulseErrors
from .study import StateSuite, config_hash, default_suite
from .tomography import ProtocolConfig

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "model": {"rabi_frequency_hz": 5.0e6, "contrast": 0.25, "decay_time_s": None},
    "protocol": {
        "envelope_duration_s": 0.5,
        "n_tau": 40,
        "periods": 2.0,
        "sweep_repeats": 1,
        "laser_init_s": 2e-6,
        "laser_readout_s": 3e-6,
        "dead_time_s": 1e-6,
    },
    "fit": {"max_iter": 200, "xtol": 1e-10, "gtol": 1e-10, "fit_frequency": True,
            "fit_decay": False, "grid_points": 2048, "reliability_ratio": 3.0},
    "pulse_errors": {"phase_deg": 0.0, "area": 0.0},
    "noise": {
        "pl": {"count_rate": 1e5, "enabled": True},
        "pc": {"mean_current_a": 1e-11, "noise_rms_a": 5e-13, "band_a": [1e-12, 1e-10],
               "enabled": True},
    },
    "suite": {"states": None, "file": None},
    "study": {
        "error_fraction": 0.10,
        "trials": 10000,
        "theta_grid_deg": [5, 15, 25, 35, 45, 55, 65, 75, 85, 90],
        "phi_policy": "average",
        "perturb": "alpha",
        "inversion": "quadrature",
        "target_fidelity": 0.995,
        "calibration_replicates": 5,
        "calibration_seed": 1000,
        "workers": 1,
    },
}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    if override is None:
        return out
    if not isinstance(override, dict):
        raise ConfigurationError(f"section '{path or '<root>'}' must be a mapping")
    for key, value in override.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigurationError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _field(path, fn, *args):
    try:
        return fn(*args)
    except (ValidationError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


@dataclass
class RunConfig:
    raw: dict
    model: RabiModel
    protocol: ProtocolConfig
    errors: PulseErrors
    noise_pl: ChannelNoise
    noise_pc: ChannelNoise
    suite: StateSuite
    seed: int
    out: str

    @property
    def study(self):
        return self.raw["study"]

    def noise(self, channel):
        return self.noise_pl if Channel.parse(channel) is Channel.PL else self.noise_pc

    def hash(self):
        # where results land does not change what is computed
        return config_hash({k: v for k, v in self.raw.items() if k != "out"})

    @classmethod
    def from_dict(cls, data=None, base_dir="."):
        raw = _merge(DEFAULTS, data or {})
        m, p, f = raw["model"], raw["protocol"], raw["fit"]
        decay = m["decay_time_s"]
        model = _field("model", lambda: RabiModel(
            rabi_frequency=2 * math.pi * float(m["rabi_frequency_hz"]),
            contrast=float(m["contrast"]),
            decay_time=math.inf if decay is None else float(decay),
        ))
        fit = _field("fit", lambda: FitOptions(
            max_iter=int(f["max_iter"]), xtol=float(f["xtol"]), gtol=float(f["gtol"]),
            fit_frequency=bool(f["fit_frequency"]), fit_decay=bool(f["fit_decay"]),
            grid_points=int(f["grid_points"]), reliability_ratio=float(f["reliability_ratio"]),
        ))
        protocol = _field("protocol", lambda: ProtocolConfig(
            envelope_duration=float(p["envelope_duration_s"]), n_tau=int(p["n_tau"]),
            periods=float(p["periods"]), sweep_repeats=int(p["sweep_repeats"]),
            laser_init_duration=float(p["laser_init_s"]),
            laser_readout_duration=float(p["laser_readout_s"]),
            dead_time=float(p["dead_time_s"]), fit=fit,
        ))
        pe = raw["pulse_errors"]
        errors = _field("pulse_errors", lambda: PulseErrors(math.radians(float(pe["phase_deg"])),
                                                            float(pe["area"])))
        seed = _field("seed", int, raw["seed"])
        if not 0 <= seed < 2**64:
            raise ConfigurationError("seed: must be an unsigned 64-bit integer")
        npl, npc = raw["noise"]["pl"], raw["noise"]["pc"]
        noise_pl = _field("noise.pl", lambda: ChannelNoise(
            Channel.PL, pl_count_rate=float(npl["count_rate"]), rng_seed=seed,
            enabled=bool(npl["enabled"])))
        noise_pc = _field("noise.pc", lambda: ChannelNoise(
            Channel.PC, pc_mean_current=float(npc["mean_current_a"]),
            pc_noise_rms=float(npc["noise_rms_a"]), pc_band=tuple(npc["band_a"]), rng_seed=seed,
            enabled=bool(npc["enabled"])))
        suite = _field("suite", _load_suite, raw["suite"], base_dir)
        cfg = cls(raw, model, protocol, errors, noise_pl, noise_pc, suite, seed, str(raw["out"]))
        cfg.check_plans()
        _field("study", _check_study, raw["study"])
        return cfg

    def check_plans(self):
        # the longest sequence: a pi preparation pulse and the largest tau
        for axis in RotationAxis:
            _field("protocol.envelope_duration_s", self.protocol.plan, self.model,
                   PureState(math.pi, 0.0), axis)


def _check_study(s):
    if not 0 <= float(s["error_fraction"]):
        raise ValidationError("error_fraction must be >= 0")
    if int(s["trials"]) < 100:
        raise ValidationError("trials must be >= 100")
    if s["perturb"] not in ("alpha", "both"):
        raise ValidationError("perturb must be 'alpha' or 'both'")
    if s["inversion"] not in ("quadrature", "tangent"):
        raise ValidationError("inversion must be 'quadrature' or 'tangent'")
    if not 0.9 < float(s["target_fidelity"]) <= 1.0:
        raise ValidationError("target_fidelity must lie in (0.9, 1]")
    if int(s["calibration_replicates"]) < 1 or int(s["workers"]) < 1:
        raise ValidationError("calibration_replicates and workers must be >= 1")


def _load_suite(section, base_dir):
    if section.get("states") is not None and section.get("file") is not None:
        raise ValidationError("give either suite.states or suite.file, not both")
    rows = section.get("states")
    if section.get("file") is not None:
        path = section["file"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        rows = loaded.get("states") if isinstance(loaded, dict) else loaded
    if rows is None:
        return default_suite()
    return StateSuite.from_degrees(rows)


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return RunConfig.from_dict(data or {}, base_dir=os.path.dirname(os.path.abspath(path)))
