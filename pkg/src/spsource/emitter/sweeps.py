"""Rabi curves and purity versus excitation bandwidth."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .._validation import NumericalError, PreconditionError
from ..optics import ExcitationChain
from .dynamics import (
    DriveProfile,
    bloch_integrate,
    g2_from_pn,
    g2_standard_error,
    mcwf_simulate,
    photon_number_distribution,
)


@dataclass(frozen=True)
class RabiCurve:
    scales: np.ndarray
    areas: np.ndarray
    mean_photons: np.ndarray

    @property
    def sqrt_power(self):
        # power ~ scale**2, so sqrt(power) is the scale itself
        return self.scales

    def extrema(self):
        """Indices of interior local maxima and minima of the mean photon number."""
        m = self.mean_photons
        d = np.diff(m)
        maxima = np.flatnonzero((d[:-1] > 0) & (d[1:] <= 0)) + 1
        minima = np.flatnonzero((d[:-1] < 0) & (d[1:] >= 0)) + 1
        return maxima, minima


def rabi_sweep(base, amplitudes, e):
    """Mean photon number for each drive scale ``s`` applied to ``base``."""
    amplitudes = np.asarray(amplitudes, dtype=float)
    if np.any(amplitudes < 0) or np.any(np.diff(amplitudes) < 0):
        raise PreconditionError("amplitudes: must be non-negative and sorted")
    means = np.array([bloch_integrate(base.scaled(s), e).mean_photons for s in amplitudes])
    return RabiCurve(amplitudes, amplitudes * base.area(), means)


def find_pi_scale(base, e, start=None, grow=1.25, max_scale=200.0):
    """Drive scale of the first maximum of the Rabi curve.

    Steps outward from ``start`` (default: the scale giving area pi/4) until
    the mean photon number first decreases, then refines with a bounded
    scalar search between the bracketing samples.
    """
    area = base.area()
    if area <= 0:
        raise PreconditionError("base: drive has zero area")

    def mean(s):
        return bloch_integrate(base.scaled(s), e).mean_photons

    s_prev, s = 0.0, (np.pi / 4 / area if start is None else start)
    m = mean(s)
    while True:
        s_next = s * grow
        if s_next > max_scale:
            raise NumericalError("find_pi_scale: no Rabi maximum below max_scale")
        m_next = mean(s_next)
        if m_next < m:
            break
        s_prev, s, m = s, s_next, m_next
    res = minimize_scalar(lambda x: -mean(x), bounds=(s_prev, s_next), method="bounded",
                          options={"xatol": 1e-6 * s})
    return float(res.x), float(-res.fun)


@dataclass(frozen=True)
class PurityRow:
    width: float
    pi_scale: float
    g2: float
    g2_err: float
    pi_pulse_mean: float


def purity_vs_width(widths, e, chain=None, *, method="counting", n_traj=20000, seed=0):
    """g2 and mean photon number at the pi pulse for each spectral width.

    ``method="counting"`` takes P(n) from the photon-number resolved master
    equation (exact, ``g2_err`` = 0); ``method="mcwf"`` from quantum-jump
    trajectories, with a delta-method standard error.
    """
    chain = chain if chain is not None else ExcitationChain()
    rows = []
    for i, w in enumerate(widths):
        if not 20.0 <= w <= 200.0:
            raise PreconditionError(f"widths: {w} GHz outside [20, 200]")
        base = DriveProfile.from_pulse(chain.transform(w))
        scale, pi_mean = find_pi_scale(base, e)
        drive = base.scaled(scale)
        if method == "counting":
            g2, err = g2_from_pn(photon_number_distribution(drive, e)), 0.0
        elif method == "mcwf":
            out = mcwf_simulate(drive, e, n_traj, seed + i)
            g2, err = g2_from_pn(out), g2_standard_error(out.counts)
        else:
            raise PreconditionError(f"method: unknown method {method!r}")
        rows.append(PurityRow(float(w), scale, g2, err, pi_mean))
    return rows
