"""Two-level emitter dynamics, Rabi/purity sweeps and the delay model."""
from .dynamics import (
    DEFAULT_GAMMA,
    DRIVE_SCALE,
    N_MAX,
    BlochResult,
    DriveProfile,
    EmissionOutcome,
    EmitterParams,
    bloch_integrate,
    g2_from_pn,
    g2_standard_error,
    mcwf_simulate,
    photon_number_distribution,
)
from .indistinguishability import IndistinguishabilityModel, indistinguishability
from .sweeps import PurityRow, RabiCurve, find_pi_scale, purity_vs_width, rabi_sweep

__all__ = [
    "DEFAULT_GAMMA", "DRIVE_SCALE", "N_MAX", "BlochResult", "DriveProfile", "EmissionOutcome",
    "EmitterParams", "IndistinguishabilityModel", "PurityRow", "RabiCurve", "bloch_integrate",
    "find_pi_scale", "g2_from_pn", "g2_standard_error", "indistinguishability", "mcwf_simulate",
    "photon_number_distribution", "purity_vs_width", "rabi_sweep",
]
