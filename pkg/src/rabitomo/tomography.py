"""State reconstruction from fitted x/y Rabi phases and its evaluation.

Each fitted trace is turned into quadratures relative to its own offset,
p = a cos(alpha), q = a sin(alpha) with a = amplitude / offset. For the
x-trace these are (z, y) of the Bloch vector up to the channel contrast,
for the y-trace (z, x). Then

    theta = atan2(hypot(q_x, q_y), p_mean),   phi = atan2(q_x, q_y)

which is scale free, resolves all four quadrants and inverts
``rabi.forward_phases`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, NumericalError, ReconstructionError, ValidationError
from .fitting import FitOptions, SinusoidFit, fit_trace
from .qubit import (DensityMatrix, PureState, pure_to_density, state_fidelity,
                    wrap_angle)
from .rabi import DEGENERATE_AMPLITUDE, PhasePair, RabiModel, RotationAxis
from .readout import (Channel, ChannelNoise, PulseErrors, default_tau_grid, plan_envelopes,
                      realize_state, rpqst_sequence, synthesize_trace)

INCONSISTENCY_TOL = 0.05
NEAR_POLE = 0.02
# fitted amplitude below this many standard errors counts as a flat trace
AMPLITUDE_NSIGMA = 3.0

RECON_HEADER = ("channel", "theta_true_deg", "phi_true_deg", "theta_exp_deg", "phi_exp_deg",
                "fidelity", "delta_theta_deg", "delta_phi_deg", "flags", "seed")


def invert_quadratures(px, qx, py, qy, wx=None, wy=None):
    """Vectorized (theta, phi) from trace quadratures.

    ``wx``/``wy`` weight the two cos(theta) estimates; they default to the
    quadrature amplitudes. A zero weight drops that axis from the average.
    """
    px, qx, py, qy = (np.asarray(v, dtype=float) for v in (px, qx, py, qy))
    wx = np.hypot(px, qx) if wx is None else np.asarray(wx, dtype=float)
    wy = np.hypot(py, qy) if wy is None else np.asarray(wy, dtype=float)
    p_mean = (wx * px + wy * py) / (wx + wy)
    theta = np.arctan2(np.hypot(qx, qy), p_mean)
    phi = np.mod(np.arctan2(qx, qy), 2 * math.pi)
    return theta, phi


def fit_quadratures(fit: SinusoidFit, axis):
    """(p, q) of a fitted trace, normalized by the fitted offset."""
    if not fit.offset > 0:
        raise ReconstructionError(f"fitted offset {fit.offset} must be positive to normalize")
    a = fit.amplitude / fit.offset
    if RotationAxis.parse(axis) is RotationAxis.X:
        # x-trace ~ cos(w - alpha): fitted phase is -alpha
        return a * math.cos(fit.phase), -a * math.sin(fit.phase)
    return a * math.cos(fit.phase), a * math.sin(fit.phase)


def _solve(px, qx, py, qy, usable_x, usable_y):
    flags = set()
    ax, ay = math.hypot(px, qx), math.hypot(py, qy)
    if usable_x and usable_y:
        scale = math.sqrt(((ax * px + ay * py) / (ax + ay)) ** 2 + qx * qx + qy * qy)
    else:
        scale = max(ax if usable_x else 0.0, ay if usable_y else 0.0)
    if usable_x and ax < DEGENERATE_AMPLITUDE * scale:
        usable_x = False
    if usable_y and ay < DEGENERATE_AMPLITUDE * scale:
        usable_y = False
    if not usable_x:
        flags.add("x_degenerate")
    if not usable_y:
        flags.add("y_degenerate")
    if not (usable_x or usable_y):
        raise ReconstructionError("both x- and y-Rabi traces are degenerate")
    if not usable_x:
        px = qx = 0.0
    if not usable_y:
        py = qy = 0.0
    wx = math.hypot(px, qx) if usable_x else 0.0
    wy = math.hypot(py, qy) if usable_y else 0.0
    if usable_x and usable_y and abs(px - py) > INCONSISTENCY_TOL * scale:
        flags.add("inconsistent_cos_theta")
    theta, phi = invert_quadratures(px, qx, py, qy, wx, wy)
    theta, phi = float(theta), float(phi)
    if not (math.isfinite(theta) and math.isfinite(phi)):
        raise ReconstructionError("reconstruction produced non-finite angles")
    if math.sin(theta) < NEAR_POLE:
        flags.add("near_pole")
    phases = PhasePair(
        alpha=math.atan2(qx, px) if usable_x else 0.0,
        beta=math.atan2(qy, py) if usable_y else 0.0,
        amp_x=wx / scale if scale > 0 else 0.0,
        amp_y=wy / scale if scale > 0 else 0.0,
    )
    return PureState(theta, phi), flags, phases


def reconstruct_from_phases(phases: PhasePair):
    """Invert exact (alpha, beta, amp_x, amp_y); returns (state, flags)."""
    px, qx = phases.amp_x * math.cos(phases.alpha), phases.amp_x * math.sin(phases.alpha)
    py, qy = phases.amp_y * math.cos(phases.beta), phases.amp_y * math.sin(phases.beta)
    state, flags, _ = _solve(px, qx, py, qy, True, True)
    return state, flags


def amplitude_significant(fit: SinusoidFit, nsigma=AMPLITUDE_NSIGMA):
    """False when the fitted amplitude is statistically indistinguishable from zero."""
    sigma = fit.sigma("amplitude")
    return not (math.isfinite(sigma) and fit.amplitude < nsigma * sigma)


def amplitude_significance(trace, frequency):
    """Amplitude over its standard error for a sinusoid at a fixed ``frequency``.

    Linear least squares on (1, cos, sin). With the frequency pinned there is
    no search over noise peaks, so a flat trace rarely exceeds 3.
    """
    tau = np.asarray(trace.tau_values, dtype=float)
    y = np.asarray(trace.signal, dtype=float)
    w = 2 * math.pi * frequency * tau
    X = np.column_stack([np.ones_like(tau), np.cos(w), np.sin(w)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    a, b = coef[1], coef[2]
    amp = math.hypot(a, b)
    ssr = float(np.sum((y - X @ coef) ** 2))
    if amp == 0.0:
        return 0.0
    if ssr <= 1e-28 * float(np.sum(y * y)):
        return math.inf
    cov = ssr / (tau.size - 3) * np.linalg.inv(X.T @ X)
    g = np.array([a / amp, b / amp])
    var = float(g @ cov[1:, 1:] @ g)
    return amp / math.sqrt(var) if var > 0 else math.inf


def reconstruct_with_flags(fit_x: SinusoidFit | None, fit_y: SinusoidFit | None, usable=None):
    """Reconstruct from two fits; ``None`` marks a fit that failed as degenerate.

    ``usable`` optionally maps each axis to whether its amplitude is
    significant; by default the fit's own amplitude standard error decides.
    Returns ``(state, flags, phase_pair)``.
    """
    flags = set()
    given = usable or {}
    usable = {}
    quad = {}
    for axis, fit in ((RotationAxis.X, fit_x), (RotationAxis.Y, fit_y)):
        tag = axis.value
        if fit is None:
            usable[axis] = False
            quad[axis] = (0.0, 0.0)
            continue
        if not fit.converged:
            flags.add(f"{tag}_not_converged")
        if not fit.phase_reliable:
            flags.add(f"{tag}_unreliable_phase")
        usable[axis] = given.get(axis, amplitude_significant(fit))
        quad[axis] = fit_quadratures(fit, axis)
    (px, qx), (py, qy) = quad[RotationAxis.X], quad[RotationAxis.Y]
    state, more, phases = _solve(px, qx, py, qy, usable[RotationAxis.X], usable[RotationAxis.Y])
    return state, flags | more, phases


def reconstruct_state(fit_x: SinusoidFit, fit_y: SinusoidFit) -> PureState:
    return reconstruct_with_flags(fit_x, fit_y)[0]


@dataclass(frozen=True)
class Reconstruction:
    state_exp: PureState
    prepared: PureState
    rho_exp: DensityMatrix
    fidelity: float
    delta_theta: float
    delta_phi: float
    channel: Channel
    phase_inputs: PhasePair | None = None
    quality_flags: frozenset = frozenset()
    seed: int = 0

    @property
    def degenerate(self):
        return bool({"x_degenerate", "y_degenerate"} & self.quality_flags)

    def to_row(self):
        f = lambda x: format(float(x), ".17g")  # noqa: E731
        th_t, ph_t = self.prepared.degrees
        th_e, ph_e = self.state_exp.degrees
        return [self.channel.value, f(th_t), f(ph_t), f(th_e), f(ph_e), f(self.fidelity),
                f(math.degrees(self.delta_theta)), f(math.degrees(self.delta_phi)),
                "|".join(sorted(self.quality_flags)), str(int(self.seed))]


def evaluate(state_exp: PureState, prepared: PureState, channel=Channel.PC, flags=(),
             phase_inputs=None, seed=0) -> Reconstruction:
    return Reconstruction(
        state_exp=state_exp,
        prepared=prepared,
        rho_exp=pure_to_density(state_exp),
        fidelity=state_fidelity(prepared, state_exp),
        delta_theta=state_exp.theta - prepared.theta,
        delta_phi=wrap_angle(state_exp.phi - prepared.phi),
        channel=Channel.parse(channel),
        phase_inputs=phase_inputs,
        quality_flags=frozenset(flags),
        seed=int(seed),
    )


@dataclass(frozen=True)
class ProtocolConfig:
    """Acquisition and analysis settings shared by every measurement."""

    envelope_duration: float = 0.5
    n_tau: int = 40
    periods: float = 2.0
    sweep_repeats: int = 1
    laser_init_duration: float = 2e-6
    laser_readout_duration: float = 3e-6
    dead_time: float = 1e-6
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        if int(self.n_tau) < 8:
            raise ValidationError("n_tau must be at least 8")
        if not self.periods >= 1.0:
            raise ValidationError("the tau grid must span at least one Rabi period")

    @property
    def timing(self):
        return dict(laser_init_duration=self.laser_init_duration,
                    laser_readout_duration=self.laser_readout_duration,
                    dead_time=self.dead_time)

    def plan(self, model: RabiModel, target: PureState, axis):
        seq = rpqst_sequence(target, axis, model, **self.timing)
        taus = default_tau_grid(model, self.n_tau, self.periods)
        return plan_envelopes(seq, self.envelope_duration, taus, self.sweep_repeats)


@dataclass
class Measurement:
    """One channel's complete tomography record."""

    reconstruction: Reconstruction
    traces: dict
    fits: dict


def _stage(exc, stage):
    exc.args = (f"[{stage}] {exc.args[0] if exc.args else exc}",) + tuple(exc.args[1:])
    return exc


def analyze_traces(trace_x, trace_y, prepared: PureState | None = None, opts: FitOptions | None = None,
                   seed=0):
    """Fit two traces of one channel and reconstruct; returns a Measurement."""
    fits = {}
    for axis, tr in ((RotationAxis.X, trace_x), (RotationAxis.Y, trace_y)):
        try:
            fits[axis] = fit_trace(tr, opts)
        except DegenerateFitError:
            fits[axis] = None
        except NumericalError as exc:
            raise _stage(exc, f"fit {axis.value}/{tr.channel.value}")
    # both axes share one Rabi frequency: judge each amplitude at the better fit's frequency
    live = [f for f in fits.values() if f is not None]
    usable = None
    if live:
        ref = max(live, key=lambda f: f.amplitude / f.sigma("amplitude")
                  if f.sigma("amplitude") > 0 else math.inf)
        traces = {RotationAxis.X: trace_x, RotationAxis.Y: trace_y}
        usable = {axis: f is not None
                  and amplitude_significance(traces[axis], ref.frequency) >= AMPLITUDE_NSIGMA
                  for axis, f in fits.items()}
    try:
        state, flags, phases = reconstruct_with_flags(fits[RotationAxis.X], fits[RotationAxis.Y],
                                                      usable)
    except NumericalError as exc:
        raise _stage(exc, f"reconstruct {trace_x.channel.value}")
    prepared = prepared or trace_x.state
    recon = evaluate(state, prepared, trace_x.channel, flags, phases, seed)
    return Measurement(recon, {RotationAxis.X: trace_x, RotationAxis.Y: trace_y}, fits)


def measure_channel(model: RabiModel, prepared: PureState, protocol: ProtocolConfig,
                    noise: ChannelNoise, seed: int, errors: PulseErrors | None = None) -> Measurement:
    noise = noise.with_seed(seed)
    realized = realize_state(rpqst_sequence(prepared, RotationAxis.X, model), model, errors)
    traces = []
    for axis in (RotationAxis.X, RotationAxis.Y):
        plan = protocol.plan(model, prepared, axis)
        traces.append(synthesize_trace(model, realized, axis, plan, noise, target=prepared))
    return analyze_traces(traces[0], traces[1], prepared, protocol.fit, seed)


def tomograph_full(model, prepared, protocol, noise_pl, noise_pc, seed, errors=None):
    """Both channels of one PC/PL-RPQST run: ``{Channel: Measurement}``."""
    return {
        Channel.PL: measure_channel(model, prepared, protocol, noise_pl, seed, errors),
        Channel.PC: measure_channel(model, prepared, protocol, noise_pc, seed, errors),
    }


def tomograph(model: RabiModel, prepared: PureState, protocol: ProtocolConfig,
              noise_pl: ChannelNoise, noise_pc: ChannelNoise, seed: int,
              errors: PulseErrors | None = None):
    """End-to-end tomography; returns the (PL, PC) reconstructions."""
    res = tomograph_full(model, prepared, protocol, noise_pl, noise_pc, seed, errors)
    return res[Channel.PL].reconstruction, res[Channel.PC].reconstruction
