"""Sinusoid fitting of Rabi traces.

Model: offset + amplitude * exp(-tau / decay_time) * cos(2 pi frequency tau + phase).
The frequency is seeded from a floating-mean least-squares periodogram and
all parameters are then refined by Levenberg-Marquardt. Time and signal are
rescaled to O(1) before the kernel runs, so picoampere currents and
nanosecond pulses are handled the same way as normalized data.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateFitError, FlatTraceError, ValidationError
from .qubit import wrap_angle

MIN_SAMPLES = 8
PARAM_NAMES = ("offset", "amplitude", "frequency", "phase", "decay_rate")


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 200
    xtol: float = 1e-10
    gtol: float = 1e-10
    fit_frequency: bool = True
    fit_decay: bool = False
    grid_points: int = 2048
    # amplitude / residual_rms below this marks the phase unreliable
    reliability_ratio: float = 3.0


@dataclass(frozen=True)
class SinusoidFit:
    amplitude: float
    frequency: float
    phase: float
    offset: float
    decay_time: float = math.inf
    covariance: np.ndarray | None = field(default=None, compare=False)
    residual_rms: float = math.nan
    converged: bool = False
    iterations: int = 0
    phase_reliable: bool = True
    fit_decay: bool = False
    gradient_cosine: float = math.nan
    cost_history: tuple = field(default=(), compare=False)

    @property
    def param_names(self):
        return PARAM_NAMES if self.fit_decay else PARAM_NAMES[:4]

    @property
    def decay_rate(self):
        return 0.0 if math.isinf(self.decay_time) else 1.0 / self.decay_time

    @property
    def params(self):
        return np.array([self.offset, self.amplitude, self.frequency, self.phase, self.decay_rate])

    def sigma(self, name):
        if self.covariance is None:
            return math.nan
        i = self.param_names.index(name)
        return math.sqrt(max(self.covariance[i, i], 0.0))

    @property
    def phase_sigma(self):
        return self.sigma("phase")

    def evaluate(self, tau):
        return _kernels.model(self.params, np.asarray(tau, dtype=float))

    def to_record(self):
        cov = None if self.covariance is None else [list(map(float, row)) for row in self.covariance]
        return {
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
            "offset": self.offset,
            "decay_time": None if math.isinf(self.decay_time) else self.decay_time,
            "covariance": cov,
            "param_names": list(self.param_names),
            "residual_rms": self.residual_rms,
            "converged": self.converged,
            "iterations": self.iterations,
            "phase_reliable": self.phase_reliable,
            "gradient_cosine": self.gradient_cosine,
        }

    @classmethod
    def from_record(cls, rec):
        cov = rec.get("covariance")
        decay = rec.get("decay_time")
        return cls(
            amplitude=float(rec["amplitude"]),
            frequency=float(rec["frequency"]),
            phase=float(rec["phase"]),
            offset=float(rec["offset"]),
            decay_time=math.inf if decay is None else float(decay),
            covariance=None if cov is None else np.array(cov, dtype=float),
            residual_rms=float(rec.get("residual_rms", math.nan)),
            converged=bool(rec.get("converged", False)),
            iterations=int(rec.get("iterations", 0)),
            phase_reliable=bool(rec.get("phase_reliable", True)),
            fit_decay=len(rec.get("param_names", PARAM_NAMES[:4])) == 5,
            gradient_cosine=float(rec.get("gradient_cosine", math.nan)),
        )

    def to_json(self):
        return json.dumps(self.to_record(), indent=2, sort_keys=True)


def jacobian(params, tau_values):
    """Partial derivatives of the fit model at each tau.

    ``params`` is (offset, amplitude, frequency, phase) or the same plus a
    decay rate; the result has one column per given parameter.
    """
    p = np.zeros(5)
    given = np.asarray(params, dtype=float)
    if given.size not in (4, 5) or not np.all(np.isfinite(given)):
        raise ValidationError("jacobian needs 4 or 5 finite parameters")
    p[: given.size] = given
    return _kernels.jacobian(p, np.asarray(tau_values, dtype=float))[:, : given.size]


def _trace_arrays(trace):
    tau = np.asarray(trace.tau_values, dtype=float)
    y = np.asarray(trace.signal, dtype=float)
    if tau.shape != y.shape or tau.ndim != 1:
        raise ValidationError("trace tau_values and signal must be equal-length vectors")
    if tau.size < MIN_SAMPLES:
        raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {tau.size}")
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(y))):
        raise ValidationError("trace contains non-finite values")
    return tau, y


def _nominal(trace, tau):
    f0 = getattr(trace, "nominal_frequency", None)
    span = float(tau.max() - tau.min())
    if span <= 0:
        raise ValidationError("trace spans zero time")
    if f0 is None or not f0 > 0:
        # lab exports carry no drive metadata: assume about two periods on the grid
        f0 = 2.0 / span
    if f0 * span < 1.0 - 1e-9:
        raise ValidationError(
            f"trace spans {f0 * span:.3f} nominal Rabi periods; at least one is required"
        )
    return f0


def _check_flat(y):
    spread = float(np.max(y) - np.min(y))
    if spread <= 1e-10 * max(abs(float(np.mean(y))), 1e-300):
        raise FlatTraceError("trace is constant; Rabi phase is undefined")


def _quadrature_fit(tau, y, freq):
    w = 2 * math.pi * freq * tau
    X = np.column_stack([np.ones_like(tau), np.cos(w), np.sin(w)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    offset, a, b = coef
    return float(offset), float(math.hypot(a, b)), float(math.atan2(-b, a))


def initial_guess(trace, grid_points=2048) -> SinusoidFit:
    """Periodogram seed for the fitter.

    The frequency is the peak of a dense grid over [0.25, 4] times the nominal
    Rabi frequency (lowest frequency wins ties); amplitude and phase come from
    a linear least-squares projection at that frequency.
    """
    tau, y = _trace_arrays(trace)
    _check_flat(y)
    f0 = _nominal(trace, tau)
    ts = float(np.max(np.abs(tau)))
    grid = np.linspace(0.25 * f0, 4.0 * f0, int(grid_points))
    power = _kernels.periodogram(tau / ts, y, grid * ts)
    freq = float(grid[int(np.argmax(power))])
    offset, amp, phase = _quadrature_fit(tau, y, freq)
    return SinusoidFit(amplitude=amp, frequency=freq, phase=phase, offset=offset,
                       residual_rms=math.nan)


def _canonical(p, cov):
    """Flip signs so amplitude and frequency are non-negative and phase in (-pi, pi]."""
    p = p.copy()
    d = np.ones(5)
    if p[2] < 0:
        p[2] = -p[2]
        p[3] = -p[3]
        d[2] = d[3] = -1.0
    if p[1] < 0:
        p[1] = -p[1]
        p[3] += math.pi
        d[1] = -1.0
    p[3] = wrap_angle(p[3])
    return p, cov * np.outer(d, d)


def fit_sinusoid(trace, guess: SinusoidFit | None = None, opts: FitOptions | None = None) -> SinusoidFit:
    """Least-squares fit of a Rabi trace.

    Raises DegenerateFitError when the normal matrix is singular (e.g. a
    zero-amplitude trace). A trace whose fitted amplitude is small compared to
    its residual scatter is returned with ``phase_reliable=False``.
    """
    opts = opts or FitOptions()
    tau, y = _trace_arrays(trace)
    _check_flat(y)
    if guess is None:
        guess = initial_guess(trace, opts.grid_points)
    n = tau.size
    ts = float(np.max(np.abs(tau)))
    ym = float(np.mean(y))
    ys = float(np.std(y))
    t = tau / ts
    yy = (y - ym) / ys
    rate0 = guess.decay_rate if opts.fit_decay else 0.0
    p0 = np.array([
        (guess.offset - ym) / ys,
        guess.amplitude / ys,
        guess.frequency * ts,
        guess.phase,
        rate0 * ts,
    ])
    free = [0, 1, 3]
    if opts.fit_frequency:
        free.insert(2, 2)
    if opts.fit_decay:
        free.append(4)
    free = np.array(free, dtype=np.int64)

    p, cost, iters, status, history, gcos = _kernels.lm_fit(
        t, yy, p0, free, int(opts.max_iter), float(opts.xtol), float(opts.gtol)
    )
    if status == _kernels.STATUS_DEGENERATE:
        raise DegenerateFitError("normal matrix has a zero column; phase is unidentifiable")
    J = _kernels.jacobian(p, t)[:, free]
    A = J.T @ J
    eig = np.linalg.eigvalsh(A)
    if not eig[0] > 1e-12 * eig[-1]:
        raise DegenerateFitError("singular normal matrix near zero amplitude")
    k = free.size
    s2 = 2.0 * cost / (n - k) if n > k else 0.0
    cov_free = s2 * np.linalg.inv(A)
    cov_scaled = np.zeros((5, 5))
    cov_scaled[np.ix_(free, free)] = 0.5 * (cov_free + cov_free.T)
    scale = np.array([ys, ys, 1.0 / ts, 1.0, 1.0 / ts])
    phys = np.array([ym + ys * p[0], ys * p[1], p[2] / ts, p[3], p[4] / ts])
    cov = cov_scaled * np.outer(scale, scale)
    phys, cov = _canonical(phys, cov)
    dim = 5 if opts.fit_decay else 4
    cov = cov[:dim, :dim]

    residual_rms = ys * math.sqrt(2.0 * cost / n)
    converged = status in (1, 2, 3) or (status == _kernels.STATUS_STALLED and gcos <= 1e-6)
    reliable = residual_rms == 0.0 or phys[1] / residual_rms >= opts.reliability_ratio
    return SinusoidFit(
        amplitude=float(phys[1]),
        frequency=float(phys[2]),
        phase=float(phys[3]),
        offset=float(phys[0]),
        decay_time=math.inf if phys[4] == 0.0 else float(1.0 / phys[4]),
        covariance=cov,
        residual_rms=float(residual_rms),
        converged=bool(converged),
        iterations=int(iters),
        phase_reliable=bool(reliable),
        fit_decay=opts.fit_decay,
        gradient_cosine=float(gcos),
        cost_history=tuple(float(c) * ys * ys for c in history),
    )


def fit_trace(trace, opts: FitOptions | None = None) -> SinusoidFit:
    opts = opts or FitOptions()
    return fit_sinusoid(trace, initial_guess(trace, opts.grid_points), opts)
