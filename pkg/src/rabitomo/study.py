"""Batch statistics, alpha-error propagation and noise calibration."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .errors import CalibrationError, NumericalError, ValidationError
from .qubit import PureState, bloch_fidelity, state_fidelity, wrap_angle
from .rabi import RabiModel
from .readout import Channel, ChannelNoise, PulseErrors
from .tomography import ProtocolConfig, invert_quadratures, measure_channel

DEFAULT_PHI_POLICY_DEG = tuple(15.0 + 30.0 * k for k in range(12))
SWEEP_GRID_DEG = (5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 65.0, 75.0, 85.0, 90.0)
PANEL_HEADER = ("theta_T_deg", "mean", "std", "trials")


@dataclass(frozen=True)
class StateSuite:
    states: tuple
    repetitions: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "repetitions", tuple(int(r) for r in self.repetitions))
        if len(self.states) != len(self.repetitions) or not self.states:
            raise ValidationError("suite needs one repetition count per state")
        if min(self.repetitions) < 2:
            raise ValidationError("every suite state must be tomographed at least twice")

    @property
    def total(self):
        return sum(self.repetitions)

    def measurements(self):
        """Flat list of prepared states in acquisition order."""
        return [s for s, n in zip(self.states, self.repetitions) for _ in range(n)]

    def scaled(self, factor):
        return StateSuite(self.states, tuple(r * int(factor) for r in self.repetitions))

    @classmethod
    def from_degrees(cls, rows):
        """Build from ``(theta_deg, phi_deg, repetitions)`` rows."""
        rows = [tuple(r) for r in rows]
        return cls(tuple(PureState.from_degrees(t, p) for t, p, _ in rows),
                   tuple(int(n) for _, _, n in rows))

    def to_degrees(self):
        return [[*s.degrees, n] for s, n in zip(self.states, self.repetitions)]


def default_suite() -> StateSuite:
    """Ten states on a quarter-sphere grid, 21 measurements in total.

    Polar angles 15/35/55/75 deg with azimuths spread around the circle; the
    (15.37, 235) deg state is measured three times, the rest twice.
    """
    rows = [
        (15.37, 235.0, 3), (15.0, 55.0, 2),
        (35.0, 0.0, 2), (35.0, 120.0, 2), (35.0, 240.0, 2),
        (55.0, 60.0, 2), (55.0, 180.0, 2), (55.0, 300.0, 2),
        (75.0, 90.0, 2), (75.0, 270.0, 2),
    ]
    return StateSuite.from_degrees(rows)


def derive_seed(master_seed, *keys):
    """Deterministic 64-bit child seed of ``master_seed`` for the given index keys."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _map(fn, jobs, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return [fn(j) for j in jobs]


@dataclass
class ChannelStats:
    channel: Channel
    records: list
    failures: list
    mean_fidelity: float
    std_fidelity: float
    mean_dtheta: float
    std_dtheta: float
    mean_dphi: float
    std_dphi: float
    optimized_mean_fidelity: float
    optimized_std_fidelity: float
    optimized_fidelities: np.ndarray = field(repr=False, default=None)

    @property
    def n(self):
        return len(self.records)

    def summary(self):
        return {
            "channel": self.channel.value,
            "measurements": self.n,
            "failures": len(self.failures),
            "mean_fidelity": self.mean_fidelity,
            "std_fidelity": self.std_fidelity,
            "mean_delta_theta_deg": math.degrees(self.mean_dtheta),
            "std_delta_theta_deg": math.degrees(self.std_dtheta),
            "mean_delta_phi_deg": math.degrees(self.mean_dphi),
            "std_delta_phi_deg": math.degrees(self.std_dphi),
            "optimized_mean_fidelity": self.optimized_mean_fidelity,
            "optimized_std_fidelity": self.optimized_std_fidelity,
        }


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def summarize(channel, records, failures=()) -> ChannelStats:
    """Mean/std of F and the systematic / random split of the angle errors.

    The optimized fidelity re-evaluates every reconstruction after removing
    the batch-mean angle offsets. The dphi mean is the circular mean.
    """
    if not records:
        nan = math.nan
        return ChannelStats(Channel.parse(channel), [], list(failures), nan, nan, nan, nan, nan,
                            nan, nan, nan, np.array([]))
    F = np.array([r.fidelity for r in records])
    dth = np.array([r.delta_theta for r in records])
    dph = np.array([r.delta_phi for r in records])
    m_th = float(dth.mean())
    # dphi lives on a circle: a wrapped outlier near +-pi must not drag an arithmetic mean
    m_ph = math.atan2(float(np.mean(np.sin(dph))), float(np.mean(np.cos(dph))))
    opt = np.array([
        state_fidelity(r.prepared, PureState.from_angles(r.state_exp.theta - m_th,
                                                         r.state_exp.phi - m_ph))
        for r in records
    ])
    return ChannelStats(
        channel=Channel.parse(channel), records=list(records), failures=list(failures),
        mean_fidelity=float(F.mean()), std_fidelity=_std(F),
        mean_dtheta=m_th, std_dtheta=_std(dth), mean_dphi=m_ph,
        std_dphi=_std(wrap_angle(dph - m_ph)),
        optimized_mean_fidelity=float(opt.mean()), optimized_std_fidelity=_std(opt),
        optimized_fidelities=opt,
    )


def _measure_job(job, model, protocol, noise, errors):
    index, state, seed = job
    try:
        return index, measure_channel(model, state, protocol, noise, seed, errors).reconstruction, None
    except NumericalError as exc:
        return index, None, f"measurement {index} {state.degrees}: {exc}"


def run_channel(suite: StateSuite, model: RabiModel, protocol: ProtocolConfig, noise: ChannelNoise,
                master_seed: int, errors: PulseErrors | None = None, workers=1) -> ChannelStats:
    jobs = [(i, s, derive_seed(master_seed, i)) for i, s in enumerate(suite.measurements())]
    fn = partial(_measure_job, model=model, protocol=protocol, noise=noise, errors=errors)
    out = _map(fn, jobs, workers)
    records = [r for _, r, _ in sorted(out, key=lambda t: t[0]) if r is not None]
    failures = [msg for _, r, msg in out if r is None]
    return summarize(noise.channel, records, failures)


@dataclass
class BatchResult:
    channels: dict
    master_seed: int
    suite: StateSuite

    def __getitem__(self, channel):
        return self.channels[Channel.parse(channel)]

    def summary(self):
        return {c.value: s.summary() for c, s in self.channels.items()}


def batch_tomography(suite: StateSuite, model: RabiModel, protocol: ProtocolConfig,
                     noise_pl: ChannelNoise, noise_pc: ChannelNoise, master_seed: int,
                     errors: PulseErrors | None = None, workers=1) -> BatchResult:
    """Tomograph every suite measurement on both channels.

    Each channel is summarized from its own records only; measurement ``i``
    uses the seed derived from ``(master_seed, i)`` on both channels, as in a
    simultaneous readout.
    """
    return BatchResult(
        channels={
            Channel.PL: run_channel(suite, model, protocol, noise_pl, master_seed, errors, workers),
            Channel.PC: run_channel(suite, model, protocol, noise_pc, master_seed, errors, workers),
        },
        master_seed=int(master_seed),
        suite=suite,
    )


def _set_level(noise: ChannelNoise, level):
    if noise.channel is Channel.PC:
        return replace(noise, pc_noise_rms=float(level), enabled=True)
    return replace(noise, pl_count_rate=float(level), enabled=True)


def calibrate_noise(target_mean_fidelity, suite: StateSuite, model: RabiModel,
                    protocol: ProtocolConfig, noise: ChannelNoise, bounds=None, master_seed=0,
                    errors: PulseErrors | None = None, tol=0.002, steps=30, workers=1):
    """Tune one channel's noise knob so the batch mean fidelity hits the target.

    PC: bisection on ``pc_noise_rms`` within ``bounds`` (default 0 to 10 pA).
    PL: bisection on log(``pl_count_rate``) within ``bounds`` (default 10 to
    1e7 counts/s); more counts means less shot noise. The seed set is held
    fixed during the search. Returns ``(calibrated_noise, achieved_mean)``.
    """
    if not 0.9 < target_mean_fidelity <= 1.0:
        raise ValidationError("calibration target must lie in (0.9, 1]")
    pc = noise.channel is Channel.PC
    if bounds is None:
        bounds = (0.0, 1e-11) if pc else (10.0, 1e7)
    lo, hi = (float(b) for b in bounds)
    if pc and not 0 <= lo < hi:
        raise ValidationError("PC rms bounds must satisfy 0 <= lo < hi")
    if not pc and not 0 < lo < hi:
        raise ValidationError("PL rate bounds must satisfy 0 < lo < hi")

    # knob x in [0, 1]: 0 is the quiet end, 1 the noisy end
    def level(x):
        if pc:
            return lo + x * (hi - lo)
        return math.exp(math.log(hi) + x * (math.log(lo) - math.log(hi)))

    cache = {}

    def mean_f(x):
        if x not in cache:
            stats = run_channel(suite, model, protocol, _set_level(noise, level(x)), master_seed,
                                errors, workers)
            if not stats.records:
                cache[x] = 0.0
            else:
                # failed measurements count as zero fidelity so the response stays monotone
                cache[x] = stats.mean_fidelity * stats.n / (stats.n + len(stats.failures))
        return cache[x]

    f_quiet, f_noisy = mean_f(0.0), mean_f(1.0)
    report = {"bounds": [lo, hi], "mean_fidelity_at_bounds": [f_quiet, f_noisy],
              "target": target_mean_fidelity}
    if f_quiet < target_mean_fidelity - tol:
        raise CalibrationError(f"target {target_mean_fidelity} unreachable: quiet end gives "
                               f"{f_quiet:.5f}", bracket=report)
    if f_quiet <= target_mean_fidelity:
        return _set_level(noise, level(0.0)), f_quiet
    if f_noisy > target_mean_fidelity + tol:
        raise CalibrationError(f"target {target_mean_fidelity} unreachable: noisy end still gives "
                               f"{f_noisy:.5f}", bracket=report)
    a, b = 0.0, 1.0
    best = min((0.0, 1.0), key=lambda x: abs(mean_f(x) - target_mean_fidelity))
    for _ in range(int(steps)):
        mid = 0.5 * (a + b)
        fm = mean_f(mid)
        if abs(fm - target_mean_fidelity) < abs(mean_f(best) - target_mean_fidelity):
            best = mid
        if fm > target_mean_fidelity:
            a = mid
        else:
            b = mid
    achieved = mean_f(best)
    if abs(achieved - target_mean_fidelity) > tol:
        report["closest"] = [level(best), achieved]
        raise CalibrationError(f"bisection ended {achieved:.5f}, outside {tol} of target",
                               bracket=report)
    return _set_level(noise, level(best)), achieved


@dataclass
class StudyResult:
    theta_grid_deg: np.ndarray
    panels: dict  # name -> (mean array, std array)
    trials: int
    descriptor: dict
    raw: dict = field(repr=False, default_factory=dict)

    def panel_rows(self, name):
        mean, std = self.panels[name]
        return [(float(t), float(m), float(s), self.trials)
                for t, m, s in zip(self.theta_grid_deg, mean, std)]


def _phi_values(phi_policy):
    if phi_policy in (None, "average"):
        return np.radians(DEFAULT_PHI_POLICY_DEG), "average"
    if isinstance(phi_policy, (int, float)):
        return np.radians([float(phi_policy)]), f"fixed {float(phi_policy)} deg"
    vals = [float(v) for v in phi_policy]
    return np.radians(vals), "list " + ",".join(f"{v:g}" for v in vals)


def tangent_inversion(alpha, beta):
    """Reconstruction from tangent ratios alone (tan^2 theta = tan^2 alpha + tan^2 beta).

    Only valid on the upper hemisphere and ambiguous once alpha crosses 90 deg;
    kept for comparison with the quadrature inverse.
    """
    ta, tb = np.tan(alpha), np.tan(beta)
    return np.arctan(np.hypot(ta, tb)), np.mod(np.arctan2(ta, tb), 2 * math.pi)


def _perturbation_point(job, phis, error_fraction, trials, perturb, inversion):
    k, theta_t, seed = job
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    phi = phis[np.arange(trials) % phis.size]
    ct, st = math.cos(theta_t), math.sin(theta_t)
    y, x = st * np.sin(phi), st * np.cos(phi)
    alpha, beta = np.arctan2(y, ct), np.arctan2(x, ct)
    amp_x, amp_y = np.hypot(ct, y), np.hypot(ct, x)
    alpha_p = alpha * (1.0 + rng.normal(0.0, error_fraction, trials))
    beta_p = beta * (1.0 + rng.normal(0.0, error_fraction, trials)) if perturb == "both" else beta
    if inversion == "tangent":
        th, ph = tangent_inversion(alpha_p, beta_p)
    else:
        th, ph = invert_quadratures(amp_x * np.cos(alpha_p), amp_x * np.sin(alpha_p),
                                    amp_y * np.cos(beta_p), amp_y * np.sin(beta_p))
    v_true = np.stack([x, y, np.full(trials, ct)], axis=-1)
    v_exp = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    F = bloch_fidelity(v_true, v_exp)
    dth = np.abs(th - theta_t)
    dph = np.abs(wrap_angle(ph - phi))
    return k, F, dth, dph


def alpha_perturbation_study(theta_grid_deg=SWEEP_GRID_DEG, phi_policy="average", error_fraction=0.10,
                             trials=10000, seed=0, perturb="alpha", inversion="quadrature",
                             workers=1) -> StudyResult:
    """Propagate a multiplicative Gaussian error on the x-Rabi phase into F, |dtheta|, |dphi|.

    For each polar angle, trial ``j`` uses azimuth ``phis[j % len(phis)]``,
    alpha' = alpha (1 + eps) with eps ~ N(0, error_fraction), and beta exact
    unless ``perturb='both'``. Amplitudes are kept exact. ``inversion`` picks
    the quadrature inverse (default) or the tangent-ratio formulas.
    """
    grid = np.asarray(theta_grid_deg, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(grid > 90):
        raise ValidationError("theta grid must lie in (0, 90] deg")
    if int(trials) < 100:
        raise ValidationError("at least 100 trials per grid point are required")
    if perturb not in ("alpha", "both"):
        raise ValidationError("perturb must be 'alpha' or 'both'")
    if inversion not in ("quadrature", "tangent"):
        raise ValidationError("inversion must be 'quadrature' or 'tangent'")
    if error_fraction < 0:
        raise ValidationError("error_fraction must be non-negative")
    trials = int(trials)
    phis, policy = _phi_values(phi_policy)
    jobs = [(k, math.radians(t), derive_seed(seed, k)) for k, t in enumerate(grid)]
    fn = partial(_perturbation_point, phis=phis, error_fraction=float(error_fraction),
                 trials=trials, perturb=perturb, inversion=inversion)
    out = sorted(_map(fn, jobs, workers), key=lambda t: t[0])
    panels = {}
    raw = {}
    for name, idx in (("fidelity", 1), ("delta_theta", 2), ("delta_phi", 3)):
        arrs = [o[idx] for o in out]
        scale = 1.0 if name == "fidelity" else 180.0 / math.pi
        panels[name] = (np.array([a.mean() * scale for a in arrs]),
                        np.array([a.std(ddof=1) * scale for a in arrs]))
        raw[name] = arrs
    descriptor = {
        "error_model": "multiplicative gaussian",
        "perturbed": "alpha" if perturb == "alpha" else "alpha and beta",
        "error_fraction": float(error_fraction),
        "amplitudes": "exact",
        "inversion": inversion,
        "phi_policy": policy,
        "phi_values_deg": [float(v) for v in np.degrees(phis)],
        "angle_units": "deg (|dtheta|, |dphi| panels)",
        "seed": int(seed),
    }
    return StudyResult(grid, panels, trials, descriptor, raw)


def write_panels(result: StudyResult, out_dir):
    """One CSV per panel: fidelity.csv, delta_theta.csv, delta_phi.csv."""
    paths = []
    for name in ("fidelity", "delta_theta", "delta_phi"):
        path = f"{out_dir}/{name}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PANEL_HEADER)
            for t, m, s, n in result.panel_rows(name):
                w.writerow([format(t, ".17g"), format(m, ".17g"), format(s, ".17g"), n])
        paths.append(path)
    return paths


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
