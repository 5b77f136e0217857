"""Count statistics of detected photons: binned squeezing and run lengths."""
from dataclasses import asdict, dataclass
import math

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import PreconditionError, check_int, check_positive


def bin_counts(s, bin_us, n_bins=None, channel=None):
    """Records per time bin ``[i*bin, (i+1)*bin)``; ``bin_us`` in microseconds.

    ``n_bins`` defaults to the number of complete bins covered by the stream.
    """
    check_positive(bin_us, "bin")
    bin_ps = bin_us * 1e6
    t = s.times if channel is None else s.channel(channel)
    idx = np.floor_divide(t, bin_ps).astype(np.int64)
    if n_bins is None:
        n_bins = int(idx.max()) if idx.size else 0  # last bin is usually partial
    n_bins = check_int(n_bins, "n_bins", minimum=0)
    idx = idx[idx < n_bins]
    return np.bincount(idx, minlength=n_bins)


@dataclass(frozen=True)
class SqueezingReport:
    mean: float
    sigma: float
    sigma_shot: float
    ratio: float
    squeezing_db: float
    ratio_stderr: float
    rho_hat: float | None = None
    binomial_ratio: float | None = None
    n_bins: int = 0

    def to_dict(self):
        return asdict(self)


def squeezing_db(ratio):
    """Squeezing in dB of a standard-deviation ratio (amplitude convention)."""
    return -10.0 * math.log10(ratio)


def squeezing_report(counts, pulses_per_bin=None):
    """Sub-shot-noise summary of per-bin counts.

    The ratio compares the sample standard deviation with the shot-noise
    value ``sqrt(mean)``; the dB figure is ``-10 log10(ratio)``.  With
    ``pulses_per_bin`` the binomial expectation ``sqrt(1 - mean/N)`` is
    reported too.
    """
    c = np.asarray(counts, dtype=float)
    if c.size < 2:
        raise PreconditionError("counts: need at least two bins")
    mean = float(c.mean())
    if mean <= 0:
        raise PreconditionError("counts: zero mean count, ratio undefined")
    var = float(c.var(ddof=1))
    sigma = math.sqrt(var)
    shot = math.sqrt(mean)
    ratio = sigma / shot
    n = c.size
    m4 = float(np.mean((c - mean) ** 4))
    var_of_var = max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n
    rel = math.sqrt((var_of_var / (4 * var**2) if var > 0 else 0.0) + var / n / (4 * mean**2))
    rho_hat = binom = None
    if pulses_per_bin is not None:
        check_positive(pulses_per_bin, "pulses_per_bin")
        rho_hat = mean / pulses_per_bin
        binom = math.sqrt(1.0 - rho_hat) if rho_hat <= 1 else float("nan")
    db = squeezing_db(ratio) if ratio > 0 else float("inf")
    return SqueezingReport(mean, sigma, shot, ratio, db, ratio * rel, rho_hat, binom, n)


@numba.njit(cache=True)
def _runs(flags, carry, hist):
    # hist[L] += number of maximal streaks of length L closed inside this chunk
    run = carry
    for f in flags:
        if f:
            run += 1
        elif run > 0:
            if run >= hist.size:
                return run, -1
            hist[run] += 1
            run = 0
    return run, 0


@dataclass(frozen=True)
class RunLengthReport:
    counts_per_n: np.ndarray
    at_least_n: np.ndarray
    windows_n: np.ndarray
    n_pulses: int
    fitted_rho: float | None
    fit_ci: tuple | None
    fit_n: np.ndarray
    note: str = ""

    def to_dict(self):
        return {
            "n_pulses": self.n_pulses,
            "fitted_rho": self.fitted_rho,
            "fit_ci": None if self.fit_ci is None else list(self.fit_ci),
            "fit_n": self.fit_n.tolist(),
            "note": self.note,
        }


def _fit_log_linear(n, counts):
    # weighted least squares on log(count): var(log c) ~ 1/c
    w = counts.astype(float)
    y = np.log(counts)
    W = w.sum()
    nb = (w * n).sum() / W
    yb = (w * y).sum() / W
    sxx = (w * (n - nb) ** 2).sum()
    slope = (w * (n - nb) * (y - yb)).sum() / sxx
    resid = y - (yb + slope * (n - nb))
    dof = n.size - 2
    # scale by the reduced chi-square when the scatter exceeds Poisson
    chi2 = (w * resid**2).sum() / dof if dof > 0 else 1.0
    se = math.sqrt(max(chi2, 1.0) / sxx)
    return slope, se


def consecutive_runs(flags, min_events=10, max_run=4096):
    """Maximal runs of consecutive detections and the exponential fit of their counts.

    ``flags`` is a boolean array, or an iterable of boolean chunks processed
    in order (runs continue across chunk boundaries).  A run of five
    detections counts once as a 5-run.  The fit regresses log(count) on n
    over run lengths with at least ``min_events`` runs; fewer than three such
    lengths leaves the fit out and says so in ``note``.
    """
    chunks = [flags] if isinstance(flags, np.ndarray) else flags
    hist = np.zeros(max_run + 1, dtype=np.int64)
    carry = 0
    total = 0
    for chunk in chunks:
        chunk = np.asarray(chunk, dtype=np.bool_)
        total += chunk.size
        carry, status = _runs(chunk, carry, hist)
        if status < 0:
            raise PreconditionError(f"max_run: a run exceeded {max_run} pulses")
    if total < 1:
        raise PreconditionError("flags: need at least one pulse")
    if carry > 0:
        if carry >= hist.size:
            hist = np.concatenate([hist, np.zeros(carry + 1 - hist.size, np.int64)])
        hist[carry] += 1
    last = int(np.flatnonzero(hist).max(initial=0))
    counts = hist[: last + 1]
    at_least = np.cumsum(counts[::-1])[::-1]
    # windows of n consecutive detections: a run of L contains L - n + 1
    lengths = np.arange(counts.size)
    weighted = np.cumsum((counts * lengths)[::-1])[::-1]
    windows = weighted - (lengths - 1) * at_least
    windows[0] = total

    n = np.flatnonzero(counts >= min_events)
    n = n[n >= 1]
    if n.size < 3:
        return RunLengthReport(counts, at_least, windows, total, None, None, n,
                               f"fit refused: only {n.size} run lengths with >= {min_events} events")
    slope, se = _fit_log_linear(n.astype(float), counts[n])
    rho = math.exp(slope)
    ci = (math.exp(slope - 1.96 * se), math.exp(slope + 1.96 * se))
    return RunLengthReport(counts, at_least, windows, total, rho, ci, n)


def predicted_run_rate(rho, n, rep_rate_hz):
    """Rate of n consecutive detections, ``rho**n * R``."""
    return rho**n * rep_rate_hz


class RunLengthEstimator(BaseEstimator):
    """Estimator wrapper around :func:`consecutive_runs`.

    ``fit`` takes per-pulse flags; ``predict`` returns the expected rate of
    n-photon windows at the fitted efficiency for the given ``rep_rate_hz``.
    """

    def __init__(self, min_events=10, rep_rate_hz=25.38e6):
        self.min_events = min_events
        self.rep_rate_hz = rep_rate_hz

    def fit(self, X, y=None):
        self.report_ = consecutive_runs(X, self.min_events)
        if self.report_.fitted_rho is None:
            raise PreconditionError(self.report_.note)
        self.rho_ = self.report_.fitted_rho
        return self

    def predict(self, n):
        check_is_fitted(self, "rho_")
        return predicted_run_rate(self.rho_, np.asarray(n, dtype=float), self.rep_rate_hz)
