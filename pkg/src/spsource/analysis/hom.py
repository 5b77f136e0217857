"""Two-photon interference: forward simulator, raw visibility and its correction.

Forward model, per pulse slot: each beamsplitter input carries a source
photon with probability ``eta`` and, independently, an extra noise photon
with probability ``q`` chosen so the per-port source shows the requested
g2.  The two source photons interfere with overlap ``m`` (parallel
polarisation) or not at all (cross); noise photons never interfere.  A
photon entering port a leaves towards detector c with probability ``r``,
one entering port b with probability ``t = 1 - r``.
"""
from dataclasses import asdict, dataclass
import math
import warnings

import numpy as np

from .. import _rng
from .._validation import PreconditionError, check_fraction, check_int, check_positive
from ..photonstream import TimestampStream
from .correlation import central_ratio


def noise_probability(g2, eta=1.0):
    """Extra-photon probability giving ``g2`` for a port with ``eta`` source photons."""
    check_fraction(g2, "g2", open_high=True)
    if g2 == 0:
        return 0.0
    if g2 > 0.5:
        raise PreconditionError("g2: the one-noise-photon model covers g2 <= 0.5")
    return eta * ((1.0 - g2) - math.sqrt(1.0 - 2.0 * g2)) / g2


def expected_visibility(m, g2, r, eta=1.0):
    """Closed-form raw visibility of the forward model (photon-pair counting)."""
    t = 1.0 - r
    q = noise_probability(g2, eta)
    cross = (eta**2 * (r * r + t * t) + 4 * eta * q * r * t
             + 2 * eta * q * (r * r + t * t) + q * q * (r * r + t * t))
    return 2 * r * t * m * eta**2 / cross


@dataclass(frozen=True)
class HomStreams:
    parallel: tuple
    cross: tuple


def _interferometer(m, r, eta, q, n_pulses, period, gamma, seed, stream):
    """Detector c/d timestamps for one polarisation configuration."""
    j = np.arange(n_pulses, dtype=np.int64)

    def u(name):
        return _rng.uniform(seed, _rng.salt(f"hom.{stream}.{name}"), j)

    t = 1.0 - r
    has_a = u("a") < eta
    has_b = u("b") < eta
    noise_a = u("xa") < q
    noise_b = u("xb") < q
    both = has_a & has_b
    split = u("split") < (r * r + t * t - 2 * r * t * m)
    to_c = u("side") < 0.5  # bunched pairs leave together through c or d

    photons = []  # (slot, goes_to_c, label)
    # interfering pair
    sel = both & split
    photons += [(j[sel], np.ones(sel.sum(), bool), "p1"), (j[sel], np.zeros(sel.sum(), bool), "p2")]
    sel = both & ~split
    photons += [(j[sel], to_c[sel], "p1"), (j[sel], to_c[sel], "p2")]
    # lone source photons and noise photons route independently
    for present, prob, label in ((has_a & ~has_b, r, "a"), (has_b & ~has_a, t, "b"),
                                 (noise_a, r, "xa"), (noise_b, t, "xb")):
        photons.append((j[present], u(f"route.{label}")[present] < prob, label))

    slots, dest, times = [], [], []
    for slot, goes_c, label in photons:
        off = _rng.exponential(seed, _rng.salt(f"hom.{stream}.t.{label}"), slot, gamma * 1e-3)
        slots.append(slot)
        dest.append(goes_c)
        times.append(np.rint(slot * period + off).astype(np.int64))
    dest = np.concatenate(dest)
    times = np.concatenate(times)
    c = TimestampStream.build(np.zeros(dest.sum(), np.uint8), times[dest], seed=seed)
    d = TimestampStream.build(np.ones((~dest).sum(), np.uint8), times[~dest], seed=seed)
    return c, d


def hom_simulate(m, g2, r, n_pulses, seed, *, eta=1.0, period=39_406.0, gamma=19.0):
    """Detector streams for parallel and cross polarisation (``period`` in ps)."""
    check_fraction(m, "m")
    check_fraction(r, "r")
    check_fraction(eta, "eta", open_low=True)
    n_pulses = check_int(n_pulses, "n_pulses", minimum=1)
    check_positive(period, "period")
    q = noise_probability(g2, eta)
    par = _interferometer(m, r, eta, q, n_pulses, period, gamma, seed, "par")
    cross = _interferometer(0.0, r, eta, q, n_pulses, period, gamma, seed, "cross")
    return HomStreams(par, cross)


def hom_visibility(h_par, h_cross, period, peak_halfwidth, *, return_stderr=False,
                   exclude_adjacent=True):
    """Raw visibility ``1 - A_par(0) / A_cross(0)`` with side-peak normalised areas."""
    if h_par.bin_width != h_cross.bin_width or h_par.origin != h_cross.origin:
        raise PreconditionError("h_par, h_cross: histograms must share binning")
    par = central_ratio(h_par, period, peak_halfwidth, exclude_adjacent)
    cross = central_ratio(h_cross, period, peak_halfwidth, exclude_adjacent)
    if cross.central == 0:
        raise PreconditionError("h_cross: zero central-peak area")
    ratio = par.value / cross.value
    v = 1.0 - ratio
    if not return_stderr:
        return v
    rel_p = par.stderr / par.value if par.value > 0 else 0.0
    err = ratio * math.hypot(rel_p, cross.stderr / cross.value)
    return v, err


@dataclass(frozen=True)
class HomReport:
    v_raw: float
    m_corrected: float
    r: float
    g2: float
    consistent: bool

    def to_dict(self):
        return asdict(self)


def correct_indistinguishability(v_raw, g2, r):
    """Single-photon indistinguishability from a raw visibility.

    ``m = (r^2 + t^2) / (2 r t) * (v + g2 (1 + v))``.  A value outside
    [0, 1] is reported as is, with ``consistent=False`` and a warning.
    """
    check_fraction(r, "r", open_low=True, open_high=True)
    check_fraction(g2, "g2", open_high=True)
    if not v_raw <= 1.0:
        raise PreconditionError(f"v_raw: must be <= 1, got {v_raw!r}")
    t = 1.0 - r
    m = (r * r + t * t) / (2.0 * r * t) * (v_raw + g2 * (1.0 + v_raw))
    ok = 0.0 <= m <= 1.0
    if not ok:
        warnings.warn(f"corrected indistinguishability {m:.4f} outside [0, 1]; inputs inconsistent")
    return HomReport(float(v_raw), float(m), float(r), float(g2), ok)
