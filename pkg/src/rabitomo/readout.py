"""Envelope-based pulse protocols and synthetic PL / PC Rabi traces.

A slow detector (photon counter gate or picoammeter) integrates over a fixed
envelope while one pulse-sequence variant repeats; one aggregate sample per
envelope is stored. Samples are kept raw (counts per envelope for PL, amperes
for PC) together with the per-envelope exposure, and ``RabiTrace.signal``
gives the exposure-normalized value that fitting and CSV export use.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, PlanningError, TraceFormatError, ValidationError
from .qubit import BlochVector, PureState, su2_rotate
from .rabi import RabiModel, RotationAxis, ideal_signal

ELEMENTARY_CHARGE = 1.602176634e-19  # C
CSV_HEADER = ("tau_s", "signal", "channel", "axis", "theta_deg", "phi_deg", "seed")


class Channel(enum.Enum):
    PL = "pl"
    PC = "pc"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"channel must be 'pl' or 'pc', got {value!r}") from None


_STREAM_KEY = {Channel.PL: 0, Channel.PC: 1, RotationAxis.X: 0, RotationAxis.Y: 1}


def photocurrent_amplitude(cycle_rate):
    """Mean photocurrent of a charge cycle running at ``cycle_rate`` (1/s).

    Each ionization/recovery cycle delivers one electron and one hole.
    """
    rate = np.asarray(cycle_rate, dtype=float)
    if np.any(rate < 0):
        raise ValidationError("charge-cycle rate must be non-negative")
    current = 2.0 * ELEMENTARY_CHARGE * rate
    return float(current) if current.ndim == 0 else current


@dataclass(frozen=True)
class PulseSequence:
    """One repetition: laser init, preparation pulse, probe pulse, laser readout, dead time."""

    prep_duration: float = 0.0
    prep_phase: float = 0.0
    probe_phase: float = 0.0
    probe_duration: float = 0.0
    laser_init_duration: float = 2e-6
    laser_readout_duration: float = 3e-6
    dead_time: float = 1e-6

    def __post_init__(self):
        for name in ("prep_duration", "probe_duration", "laser_init_duration",
                     "laser_readout_duration", "dead_time"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be a non-negative duration, got {v}")
        if self.duration <= 0:
            raise ValidationError("pulse sequence has zero total duration")

    @property
    def duration(self):
        return (self.laser_init_duration + self.prep_duration + self.probe_duration
                + self.laser_readout_duration + self.dead_time)

    def with_probe(self, tau):
        return replace(self, probe_duration=float(tau))


@dataclass(frozen=True)
class PulseErrors:
    """Systematic preparation-pulse imperfections.

    ``phase`` is a microwave phase offset (rad) of the preparation pulse and
    ``area`` a fractional error of its rotation angle.
    """

    phase: float = 0.0
    area: float = 0.0


def drive_axis(phase):
    return BlochVector(math.cos(phase), math.sin(phase), 0.0)


def rpqst_sequence(target: PureState, axis, model: RabiModel, tau=0.0, **timing) -> PulseSequence:
    """Two-pulse tomography sequence for ``target`` probed about ``axis``.

    The preparation pulse of length theta / Omega is driven a quarter period
    ahead of phi so it tips |0> towards azimuth phi; the probe pulse runs at
    the x or y drive phase.
    """
    axis = RotationAxis.parse(axis)
    return PulseSequence(
        prep_duration=target.theta / model.rabi_frequency,
        prep_phase=target.phi + math.pi / 2,
        probe_phase=axis.drive_phase,
        probe_duration=float(tau),
        **timing,
    )


def realize_state(seq: PulseSequence, model: RabiModel, errors: PulseErrors | None = None) -> PureState:
    """State actually produced by the preparation pulse acting on |0>."""
    errors = errors or PulseErrors()
    angle = model.rabi_frequency * seq.prep_duration * (1.0 + errors.area)
    return su2_rotate(PureState(0.0, 0.0), drive_axis(seq.prep_phase + errors.phase), angle)


@dataclass(frozen=True)
class EnvelopePlan:
    sequence: PulseSequence
    envelope_duration: float
    tau_values: tuple
    repetitions: tuple
    sweep_repeats: int = 1

    @property
    def n_envelopes(self):
        return len(self.tau_values)

    def visit_order(self):
        """Envelope indices in acquisition order: 0..n-1, repeated ``sweep_repeats`` times."""
        return [i for _ in range(self.sweep_repeats) for i in range(self.n_envelopes)]

    def tau_array(self):
        return np.array(self.tau_values, dtype=float)


def plan_envelopes(seq: PulseSequence, envelope_duration, tau_values, sweep_repeats=1) -> EnvelopePlan:
    taus = tuple(float(t) for t in tau_values)
    if len(taus) == 0:
        raise PlanningError("at least one tau value is required")
    if any(not math.isfinite(t) or t < 0 for t in taus):
        raise PlanningError("tau values must be finite and non-negative")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise PlanningError("tau values must be strictly increasing")
    if int(sweep_repeats) != sweep_repeats or sweep_repeats < 1:
        raise PlanningError(f"sweep_repeats must be a positive integer, got {sweep_repeats}")
    if not envelope_duration > 0:
        raise PlanningError(f"envelope_duration must be positive, got {envelope_duration}")
    reps = []
    for t in taus:
        dur = seq.with_probe(t).duration
        # guard against 0.5 / 1e-5 landing a hair under an integer
        n = math.floor(envelope_duration / dur * (1.0 + 1e-12))
        if n < 1:
            raise PlanningError(
                f"envelope_duration {envelope_duration} s is shorter than one sequence "
                f"({dur} s at tau={t} s)"
            )
        reps.append(n)
    return EnvelopePlan(seq, float(envelope_duration), taus, tuple(reps), int(sweep_repeats))


def default_tau_grid(model: RabiModel, n=40, periods=2.0):
    return np.linspace(0.0, periods * model.period, int(n))


@dataclass(frozen=True)
class ChannelNoise:
    """Readout scale and noise of one channel.

    PL: mean count rate during the readout window, Poisson statistics.
    PC: mean photocurrent with Gaussian noise of rms ``pc_noise_rms`` per
    envelope record. ``enabled=False`` replaces every draw by its mean.
    """

    channel: Channel = Channel.PC
    pl_count_rate: float = 1e5
    pc_mean_current: float = 1e-11
    pc_noise_rms: float = 0.5e-12
    rng_seed: int = 0
    pc_band: tuple = (1e-12, 1e-10)
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel.parse(self.channel))
        object.__setattr__(self, "pc_band", tuple(float(b) for b in self.pc_band))
        for name in ("pl_count_rate", "pc_mean_current", "pc_noise_rms"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise ConfigurationError("rng_seed must fit in an unsigned 64-bit integer")
        lo, hi = self.pc_band
        if self.channel is Channel.PC and not lo <= self.pc_mean_current <= hi:
            raise ConfigurationError(
                f"pc_mean_current {self.pc_mean_current} A outside plausibility band [{lo}, {hi}] A"
            )

    def with_seed(self, seed):
        return replace(self, rng_seed=int(seed))

    def snapshot(self):
        d = asdict(self)
        d["channel"] = self.channel.value
        d["pc_band"] = list(self.pc_band)
        return d


def stream(seed, channel, axis):
    """Independent generator for one (channel, axis) pair of a measurement seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(_STREAM_KEY[Channel.parse(channel)],
                                                      _STREAM_KEY[RotationAxis.parse(axis)]))
    return np.random.default_rng(ss)


@dataclass
class RabiTrace:
    axis: RotationAxis
    channel: Channel
    tau_values: np.ndarray
    samples: np.ndarray
    exposure: np.ndarray
    state: PureState
    seed: int = 0
    nominal_frequency: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = RotationAxis.parse(self.axis)
        self.channel = Channel.parse(self.channel)
        self.tau_values = np.asarray(self.tau_values, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        self.exposure = np.asarray(self.exposure, dtype=float)
        if not (self.tau_values.shape == self.samples.shape == self.exposure.shape):
            raise ValidationError("trace arrays must have equal length")
        if self.tau_values.size < 8:
            raise ValidationError("a trace needs at least 8 samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError("trace samples must be finite")
        if np.any(self.exposure <= 0):
            raise ValidationError("exposure must be positive")

    @property
    def signal(self):
        """Samples per unit exposure: counts per repetition (PL) or amperes (PC)."""
        return self.samples / self.exposure


def channel_baseline(noise: ChannelNoise, seq: PulseSequence):
    if noise.channel is Channel.PL:
        return noise.pl_count_rate * seq.laser_readout_duration
    return noise.pc_mean_current


def synthesize_trace(model: RabiModel, s: PureState, axis, plan: EnvelopePlan,
                     noise: ChannelNoise, target: PureState | None = None) -> RabiTrace:
    """Record one Rabi trace of state ``s`` as the slow detector would.

    ``target`` is the nominal prepared state stored in the trace metadata; it
    defaults to ``s``.
    """
    axis = RotationAxis.parse(axis)
    tau = plan.tau_array()
    reps = np.array(plan.repetitions, dtype=float)
    base = channel_baseline(noise, plan.sequence)
    mean_signal = np.asarray(ideal_signal(model.with_baseline(base), s, axis, tau))
    rng = stream(noise.rng_seed, noise.channel, axis)
    n = tau.size
    if noise.channel is Channel.PL:
        exposure = reps * plan.sweep_repeats
        total = np.zeros(n)
        for i in plan.visit_order():
            lam = mean_signal[i] * reps[i]
            total[i] += rng.poisson(lam) if noise.enabled else lam
        samples = total
    else:
        exposure = np.ones(n)
        total = np.zeros(n)
        rms = noise.pc_noise_rms if noise.enabled else 0.0
        for i in plan.visit_order():
            total[i] += mean_signal[i] + (rms * rng.standard_normal() if rms > 0 else 0.0)
        samples = total / plan.sweep_repeats
    target = target or s
    meta = {
        "model": {k: v for k, v in asdict(model).items()},
        "noise": noise.snapshot(),
        "envelope_duration": plan.envelope_duration,
        "sweep_repeats": plan.sweep_repeats,
        "realized_state": [s.theta, s.phi],
    }
    return RabiTrace(axis, noise.channel, tau, samples, exposure, target,
                     seed=int(noise.rng_seed), nominal_frequency=model.rabi_hz, metadata=meta)


def rpqst_trace_pair(model: RabiModel, s: PureState, plan_x: EnvelopePlan, plan_y: EnvelopePlan,
                     noise_pl: ChannelNoise, noise_pc: ChannelNoise,
                     errors: PulseErrors | None = None):
    """x/y traces on both channels for one prepared state.

    Returns ``{(channel, axis): RabiTrace}``. Both channels see the same
    realized state in every envelope; their noise comes from disjoint RNG
    streams keyed by (channel, axis).
    """
    if plan_x.tau_values != plan_y.tau_values:
        raise ValidationError("x and y plans must share the same tau grid")
    if Channel.parse(noise_pl.channel) is not Channel.PL or Channel.parse(noise_pc.channel) is not Channel.PC:
        raise ValidationError("noise_pl / noise_pc must be configured for the PL / PC channel")
    realized = realize_state(rpqst_sequence(s, RotationAxis.X, model), model, errors)
    out = {}
    for axis, plan in ((RotationAxis.X, plan_x), (RotationAxis.Y, plan_y)):
        for noise in (noise_pl, noise_pc):
            out[(noise.channel, axis)] = synthesize_trace(model, realized, axis, plan, noise, target=s)
    return out


def _fmt(x):
    return format(float(x), ".17g")


def trace_to_csv(trace: RabiTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    th, ph = trace.state.degrees
    for t, v in zip(trace.tau_values, trace.signal):
        w.writerow([_fmt(t), _fmt(v), trace.channel.value, trace.axis.value, _fmt(th), _fmt(ph),
                    str(int(trace.seed))])
    return buf.getvalue()


def write_trace_csv(trace: RabiTrace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_to_csv(trace))


def _cell(row, col, lineno, conv, name):
    try:
        return conv(row[col])
    except (ValueError, IndexError):
        raise TraceFormatError(f"bad {name} value {row[col] if col < len(row) else ''!r}",
                               line=lineno, column=col + 1) from None


def parse_trace_csv(text: str, nominal_frequency=None) -> RabiTrace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise TraceFormatError(f"header must be {','.join(CSV_HEADER)}", line=1)
    tau, sig = [], []
    first = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise TraceFormatError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=lineno)
        tau.append(_cell(row, 0, lineno, float, "tau_s"))
        sig.append(_cell(row, 1, lineno, float, "signal"))
        ch = _cell(row, 2, lineno, Channel.parse, "channel")
        ax = _cell(row, 3, lineno, RotationAxis.parse, "axis")
        th = _cell(row, 4, lineno, float, "theta_deg")
        ph = _cell(row, 5, lineno, float, "phi_deg")
        sd = _cell(row, 6, lineno, int, "seed")
        key = (ch, ax, th, ph, sd)
        if first is None:
            first = key
        elif key != first:
            raise TraceFormatError("channel/axis/state/seed columns must be constant", line=lineno)
        if not (math.isfinite(tau[-1]) and math.isfinite(sig[-1])):
            raise TraceFormatError("non-finite tau or signal", line=lineno)
    if first is None:
        raise TraceFormatError("no data rows", line=2)
    ch, ax, th, ph, sd = first
    try:
        state = PureState.from_degrees(th, ph)
        return RabiTrace(ax, ch, tau, sig, np.ones(len(tau)), state, seed=sd,
                         nominal_frequency=nominal_frequency)
    except ValidationError as exc:
        raise TraceFormatError(str(exc)) from None


def read_trace_csv(path, nominal_frequency=None) -> RabiTrace:
    with open(path, encoding="utf-8") as fh:
        return parse_trace_csv(fh.read(), nominal_frequency)
