"""Resonant Rabi dynamics of a prepared state and the map (theta, phi) -> (alpha, beta).

Driving about x by the angle w moves the Bloch z-component along

    z_x(w) = cos(theta) cos(w) + sin(theta) sin(phi) sin(w) = amp_x cos(w - alpha)

and driving about y gives

    z_y(w) = cos(theta) cos(w) - sin(theta) cos(phi) sin(w) = amp_y cos(w + beta)

so alpha = atan2(sin theta sin phi, cos theta) and
beta = atan2(sin theta cos phi, cos theta). In Bloch-vector terms the x-trace
quadratures are (z, y) and the y-trace quadratures are (z, x).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .qubit import X_AXIS, Y_AXIS, PureState, wrap_angle

# relative Rabi amplitude below which the phase is treated as unidentifiable
DEGENERATE_AMPLITUDE = 0.02


class RotationAxis(enum.Enum):
    X = "x"
    Y = "y"

    @property
    def vector(self):
        return X_AXIS if self is RotationAxis.X else Y_AXIS

    @property
    def drive_phase(self):
        """Microwave phase realizing this axis; y lags x by a quarter period."""
        return 0.0 if self is RotationAxis.X else math.pi / 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"rotation axis must be 'x' or 'y', got {value!r}") from None


@dataclass(frozen=True)
class PhasePair:
    alpha: float
    beta: float
    amp_x: float
    amp_y: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", wrap_angle(self.alpha))
        object.__setattr__(self, "beta", wrap_angle(self.beta))


@dataclass(frozen=True)
class RabiModel:
    """Noiseless Rabi signal parameters.

    ``rabi_frequency`` is the angular drive rate in rad/s; ``decay_time`` may be
    ``math.inf`` (the default) for an undamped oscillation.
    """

    rabi_frequency: float = 2 * math.pi * 5e6
    contrast: float = 0.25
    baseline: float = 1.0
    decay_time: float = math.inf

    def __post_init__(self):
        if not (self.rabi_frequency > 0 and math.isfinite(self.rabi_frequency)):
            raise ValidationError(f"rabi_frequency must be > 0, got {self.rabi_frequency}")
        if not (0 < self.contrast <= 1):
            raise ValidationError(f"contrast must lie in (0, 1], got {self.contrast}")
        if not self.decay_time > 0:
            raise ValidationError(f"decay_time must be > 0 or inf, got {self.decay_time}")
        if not math.isfinite(self.baseline):
            raise ValidationError("baseline must be finite")

    @property
    def rabi_hz(self):
        return self.rabi_frequency / (2 * math.pi)

    @property
    def period(self):
        return 2 * math.pi / self.rabi_frequency

    def with_baseline(self, baseline):
        return replace(self, baseline=baseline)


def z_projection(s: PureState, axis, angle):
    """Bloch z-component after rotating ``s`` about ``axis`` by ``angle`` (scalar or array)."""
    axis = RotationAxis.parse(axis)
    w = np.asarray(angle, dtype=float)
    ct, st = math.cos(s.theta), math.sin(s.theta)
    if axis is RotationAxis.X:
        z = ct * np.cos(w) + st * math.sin(s.phi) * np.sin(w)
    else:
        z = ct * np.cos(w) - st * math.cos(s.phi) * np.sin(w)
    return float(z) if z.ndim == 0 else z


def forward_phases(s: PureState) -> PhasePair:
    ct, st = math.cos(s.theta), math.sin(s.theta)
    y = st * math.sin(s.phi)
    x = st * math.cos(s.phi)
    return PhasePair(
        alpha=math.atan2(y, ct),
        beta=math.atan2(x, ct),
        amp_x=math.hypot(ct, y),
        amp_y=math.hypot(ct, x),
    )


def rabi_amplitude(s: PureState, axis) -> float:
    pp = forward_phases(s)
    return pp.amp_x if RotationAxis.parse(axis) is RotationAxis.X else pp.amp_y


def is_degenerate(s: PureState, axis, threshold=DEGENERATE_AMPLITUDE) -> bool:
    """True when the state sits (anti)parallel to the drive axis, so its trace is flat."""
    return rabi_amplitude(s, axis) < threshold


def ideal_signal(model: RabiModel, s: PureState, axis, tau):
    """Noiseless readout: baseline * (1 + contrast * decay(tau) * z), brightest for |0>."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("pulse durations must be non-negative")
    z = z_projection(s, axis, model.rabi_frequency * tau)
    envelope = np.exp(-tau / model.decay_time) if math.isfinite(model.decay_time) else 1.0
    out = model.baseline * (1.0 + model.contrast * envelope * np.asarray(z))
    return float(out) if out.ndim == 0 else out
