"""Excitation pulses, spectral filters and cavity-mode quantities.

Units: time in ps, frequency in GHz (so ``f * t`` carries a factor 1e-3),
wavelength in nm.  The frequency origin is the emitter transition; a
``PulseField`` carrier offset shifts its whole spectrum.

The spectral convention is numpy's: ``A(f) = sum a(t) exp(-2j pi f t) dt``,
so a sample sequence ``exp(+2j pi f0 t)`` sits at ``+f0``.
"""
from dataclasses import dataclass, field, replace
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.pipeline import make_pipeline

from ._validation import (
    PreconditionError,
    check_fraction,
    check_nonnegative,
    check_positive,
    check_power_of_two,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
GAUSSIAN_TBP = 2.0 * math.log(2.0) / math.pi  # intensity FWHM product, ~0.4413

# Documentation constants of the physical 4f line; not used in any model.
GRATING_GROOVES_PER_MM = 1200
LENS_FOCAL_LENGTH_MM = 1830


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid: ``n`` samples spaced ``dt`` ps starting at ``t0``.

    ``t0`` defaults to one third of the span before zero, leaving most of
    the window after the pulse peak for the emitter to decay.
    """

    n: int = 2**14
    dt: float = 0.02
    t0: float | None = None

    def __post_init__(self):
        check_power_of_two(self.n, "grid.n")
        if self.n < 64:
            raise PreconditionError(f"grid.n: need at least 64 samples, got {self.n}")
        check_positive(self.dt, "grid.dt")
        if self.t0 is None:
            object.__setattr__(self, "t0", -round(self.n / 3) * self.dt)

    @property
    def span(self):
        return self.n * self.dt


@dataclass(frozen=True)
class PulseField:
    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)
    f_center_offset: float = 0.0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.complex128)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 64:
            raise PreconditionError("samples: need a 1-d array of at least 64 points")
        check_positive(self.dt, "dt")

    def __len__(self):
        return self.samples.size

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def frequencies(self):
        """Absolute frequency (GHz) of each FFT bin, in numpy FFT order."""
        return np.fft.fftfreq(self.samples.size, self.dt) * 1e3 + self.f_center_offset

    def spectrum(self):
        """Spectral amplitude in FFT order (units of samples * ps)."""
        return np.fft.fft(self.samples) * self.dt

    def energy(self):
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def spectral_energy(self):
        df = 1e3 / (self.samples.size * self.dt)  # GHz
        return float(np.sum(np.abs(self.spectrum()) ** 2) * df * 1e-3)

    def area(self):
        """Time integral of the envelope magnitude (rad for unit drive scale)."""
        return float(np.sum(np.abs(self.samples)) * self.dt)

    def with_samples(self, samples):
        return replace(self, samples=samples)

    def temporal_fwhm(self):
        return fwhm(self.times, np.abs(self.samples) ** 2)

    def spectral_fwhm(self):
        f = np.fft.fftshift(self.frequencies)
        return fwhm(f, np.fft.fftshift(np.abs(self.spectrum()) ** 2))

    def to_csv(self, path):
        header = f"dt_ps={self.dt!r} t0_ps={self.t0!r} f_center_ghz={self.f_center_offset!r}"
        rows = np.column_stack([np.arange(len(self)), self.samples.real, self.samples.imag])
        with open(path, "w") as fh:
            fh.write(f"# {header}\nindex,re,im\n")
            np.savetxt(fh, rows, fmt=["%d", "%.17g", "%.17g"], delimiter=",")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# dt_ps=... ' header line")
        meta = dict(item.split("=", 1) for item in first[1:].split())
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
        order = np.argsort(data[:, 0])
        samples = data[order, 1] + 1j * data[order, 2]
        return cls(t0=float(meta["t0_ps"]), dt=float(meta["dt_ps"]), samples=samples,
                   f_center_offset=float(meta["f_center_ghz"]))


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    width: float
    center_offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("rectangular-slit", "lorentzian"):
            raise PreconditionError(f"kind: unknown filter kind {self.kind!r}")
        check_positive(self.width, "width")


@dataclass(frozen=True)
class CavityMode:
    polarization: str = "V"
    q_factor: float = 8400.0
    center_offset: float = 83.0
    eta_top: float = 0.939

    def __post_init__(self):
        if self.polarization not in ("H", "V"):
            raise PreconditionError(f"polarization: must be 'H' or 'V', got {self.polarization!r}")
        check_positive(self.q_factor, "q_factor")
        check_fraction(self.eta_top, "eta_top")


def fwhm(x, y):
    """Full width at half maximum of a sampled single-peaked curve.

    Uses the outermost half-maximum crossings with linear interpolation, so
    a flat-topped or rippled profile reports its full extent.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    peak = y.max()
    if not peak > 0:
        return 0.0
    above = np.flatnonzero(y >= peak / 2)
    i, j = above[0], above[-1]

    def crossing(a, b):
        if y[b] == y[a]:
            return x[a]
        return x[a] + (peak / 2 - y[a]) * (x[b] - x[a]) / (y[b] - y[a])

    left = crossing(i - 1, i) if i > 0 else x[i]
    right = crossing(j, j + 1) if j < y.size - 1 else x[j]
    return float(right - left)


def gaussian_pulse(fwhm_spectral, area, grid=None, f_center_offset=0.0):
    """Transform-limited Gaussian pulse peaked at t = 0.

    Parameters
    ----------
    fwhm_spectral : float
        Intensity FWHM of the spectrum in GHz.
    area : float
        Target value of ``sum(|a|) * dt`` (rad at unit drive scale).
    grid : GridSpec
        Must satisfy ``dt <= 1 / (10 fwhm)`` and span at least eight
        temporal FWHM.
    """
    grid = grid or GridSpec()
    check_positive(fwhm_spectral, "fwhm_spectral")
    check_nonnegative(area, "area")
    max_dt = 100.0 / fwhm_spectral  # 1 / (10 * fwhm), GHz -> ps
    if grid.dt > max_dt:
        raise PreconditionError(
            f"grid.dt: step {grid.dt} ps too coarse for a {fwhm_spectral} GHz spectrum; "
            f"the dt <= 1/(10 fwhm) rule needs dt <= {max_dt:.4g} ps")
    t_fwhm = GAUSSIAN_TBP / fwhm_spectral * 1e3
    if grid.span < 8 * t_fwhm:
        raise PreconditionError(
            f"grid.n: span {grid.span:.4g} ps shorter than 8x the {t_fwhm:.4g} ps pulse")
    t = grid.t0 + grid.dt * np.arange(grid.n)
    env = np.exp(-2.0 * math.log(2.0) * (t / t_fwhm) ** 2)
    if area > 0:
        env *= area / (env.sum() * grid.dt)
    else:
        env[:] = 0.0
    return PulseField(t0=grid.t0, dt=grid.dt, samples=env.astype(np.complex128),
                      f_center_offset=f_center_offset)


def _apply_response(p, response):
    return p.with_samples(np.fft.ifft(np.fft.fft(p.samples) * response))


def slit_filter(p, f):
    """Ideal slit in the Fourier plane: keeps bins within ``width / 2`` of center."""
    if f.kind != "rectangular-slit":
        raise PreconditionError(f"kind: slit_filter needs a rectangular-slit, got {f.kind!r}")
    mask = np.abs(p.frequencies - f.center_offset) <= f.width / 2
    return _apply_response(p, mask.astype(float))


def lorentzian_response(freqs, center, width):
    """Causal single-pole response with unity peak and intensity FWHM ``width``."""
    return 1.0 / (1.0 + 2j * (freqs - center) / width)


def cavity_mode_filter(p, m, wavelength):
    """Intra-cavity field of pulse ``p`` coupled through mode ``m``."""
    width = linewidth_from_q(m.q_factor, wavelength)
    if width == 0.0:
        on_center = np.isclose(p.frequencies, m.center_offset)
        return _apply_response(p, on_center.astype(float))
    return _apply_response(p, lorentzian_response(p.frequencies, m.center_offset, width))


def linewidth_from_q(q, wavelength):
    """Cavity linewidth (GHz) for quality factor ``q`` at ``wavelength`` nm."""
    check_positive(wavelength, "wavelength")
    if not q > 0:
        raise PreconditionError(f"q_factor: must be > 0, got {q!r}")
    nu = SPEED_OF_LIGHT / (wavelength * 1e-9) * 1e-9
    return nu / q


def purcell_vs_drift(f_max, drift, drift_halfwidth):
    """Purcell factor after a cavity-length drift, Lorentzian in length."""
    check_positive(f_max, "f_max")
    check_positive(drift_halfwidth, "drift_halfwidth")
    return f_max / (1.0 + (drift / drift_halfwidth) ** 2)


def drift_halfwidth_for(remaining_fraction, drift):
    """Half width that leaves ``remaining_fraction`` of the peak at ``drift``."""
    check_fraction(remaining_fraction, "remaining_fraction", open_low=True, open_high=True)
    return abs(drift) / math.sqrt(1.0 / remaining_fraction - 1.0)


class SlitFilter(TransformerMixin, BaseEstimator):
    """Fourier-plane slit as a stateless transformer on ``PulseField``."""

    def __init__(self, width=69.0, center_offset=0.0):
        self.width = width
        self.center_offset = center_offset

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        return slit_filter(X, FilterSpec("rectangular-slit", self.width, self.center_offset))

    def __sklearn_is_fitted__(self):
        return True


class CavityModeFilter(TransformerMixin, BaseEstimator):
    """Lorentzian cavity mode as a stateless transformer on ``PulseField``."""

    def __init__(self, q_factor=8400.0, center_offset=83.0, wavelength=884.5, polarization="V"):
        self.q_factor = q_factor
        self.center_offset = center_offset
        self.wavelength = wavelength
        self.polarization = polarization

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        mode = CavityMode(self.polarization, self.q_factor, self.center_offset)
        return cavity_mode_filter(X, mode, self.wavelength)

    def __sklearn_is_fitted__(self):
        return True


class ExcitationChain(BaseEstimator):
    """Laser pulse -> slit -> detuned cavity mode, parameterised by spectral width.

    With ``source_fwhm`` set, the laser is a fixed Gaussian of that width and
    a requested width below it sets the slit; a width at or above it leaves
    the pulse unmodified.  With ``source_fwhm=None`` the laser itself is a
    Gaussian of the requested width and no slit is used.  ``use_cavity``
    toggles the detuned-mode filter.
    """

    def __init__(self, source_fwhm=96.0, slit_center=0.0, q_factor=8400.0,
                 mode_offset=83.0, wavelength=884.5, use_cavity=True,
                 n=2**15, dt=0.02):
        self.source_fwhm = source_fwhm
        self.slit_center = slit_center
        self.q_factor = q_factor
        self.mode_offset = mode_offset
        self.wavelength = wavelength
        self.use_cavity = use_cavity
        self.n = n
        self.dt = dt

    def filters(self, width):
        steps = []
        if self.source_fwhm is not None and width < self.source_fwhm:
            steps.append(SlitFilter(width, self.slit_center))
        if self.use_cavity:
            steps.append(CavityModeFilter(self.q_factor, self.mode_offset, self.wavelength))
        return make_pipeline(*steps) if steps else None

    def source(self, width, area=math.pi):
        fw = width if self.source_fwhm is None else self.source_fwhm
        return gaussian_pulse(fw, area, GridSpec(self.n, self.dt))

    def transform(self, width, area=math.pi):
        """Shaped pulse for spectral ``width``; ``area`` is the incident area."""
        pulse = self.source(width, area)
        pipe = self.filters(width)
        return pulse if pipe is None else pipe.transform(pulse)
