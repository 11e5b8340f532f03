"""Rabi-phase single-qubit state tomography with photoluminescence and photocurrent readout."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import (CalibrationError, ConfigurationError, DegenerateFitError, FlatTraceError,
                     NormViolationError, NumericalError, PlanningError, RabiTomoError,
                     ReconstructionError, TraceFormatError, ValidationError)
from .fitting import FitOptions, SinusoidFit, fit_sinusoid, fit_trace, initial_guess, jacobian
from .qubit import (BlochVector, DensityMatrix, PureState, bloch_to_pure, fidelity,
                    pure_to_bloch, pure_to_density, state_fidelity, su2_rotate)
from .rabi import PhasePair, RabiModel, RotationAxis, forward_phases, ideal_signal, z_projection
from .readout import (Channel, ChannelNoise, EnvelopePlan, PulseErrors, PulseSequence, RabiTrace,
                      photocurrent_amplitude, plan_envelopes, rpqst_sequence, rpqst_trace_pair,
                      synthesize_trace)
from .study import (StateSuite, StudyResult, alpha_perturbation_study, batch_tomography,
                    calibrate_noise, default_suite)
from .tomography import (ProtocolConfig, Reconstruction, evaluate, reconstruct_state,
                         reconstruct_with_flags, tomograph)

__all__ = [
    "BACKEND", "BlochVector", "CalibrationError", "Channel", "ChannelNoise", "ConfigurationError",
    "DegenerateFitError", "DensityMatrix", "EnvelopePlan", "FitOptions", "FlatTraceError",
    "NormViolationError", "NumericalError", "PhasePair", "PlanningError", "ProtocolConfig",
    "PulseErrors", "PulseSequence", "PureState", "RabiModel", "RabiTomoError", "RabiTrace",
    "Reconstruction", "ReconstructionError", "RotationAxis", "SinusoidFit", "StateSuite",
    "StudyResult", "TraceFormatError", "ValidationError", "alpha_perturbation_study",
    "batch_tomography", "bloch_to_pure", "calibrate_noise", "default_suite", "evaluate",
    "fidelity", "fit_sinusoid", "fit_trace", "forward_phases", "ideal_signal", "initial_guess",
    "jacobian", "photocurrent_amplitude", "plan_envelopes", "pure_to_bloch", "pure_to_density",
    "reconstruct_state", "reconstruct_with_flags", "rpqst_sequence", "rpqst_trace_pair",
    "state_fidelity", "su2_rotate", "synthesize_trace", "tomograph", "z_projection",
]
