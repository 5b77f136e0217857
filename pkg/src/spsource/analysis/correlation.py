"""Start-stop coincidence histograms and peak-area ratios."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math

import numba
import numpy as np

from .._validation import PreconditionError, check_int, check_positive, check_sorted


@dataclass(frozen=True)
class Histogram:
    bin_width: float  # ps
    origin: float  # left edge of bin 0, ps
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive(self.bin_width, "bin_width")
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise PreconditionError("counts: need non-negative integers")
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self):
        return self.origin + self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def extent(self):
        """Largest |delay| fully covered on both sides, ps."""
        return min(-self.origin, self.origin + self.bin_width * self.counts.size)

    def peak_bins(self, halfwidth):
        """Bins on each side of a peak's nearest bin (same for every peak)."""
        return int(round(halfwidth / self.bin_width))

    def peak_area(self, center, halfwidth):
        """Counts in ``2 n + 1`` bins around the bin nearest ``center``.

        A fixed bin count keeps peaks comparable when the period is not a
        multiple of the bin width.
        """
        k0 = int(math.floor((center - self.origin) / self.bin_width))
        n = self.peak_bins(halfwidth)
        lo, hi = max(k0 - n, 0), min(k0 + n + 1, self.counts.size)
        return int(self.counts[lo:hi].sum()) if hi > lo else 0

    def to_csv(self, path, header=""):
        starts = self.origin + self.bin_width * np.arange(self.counts.size)
        with open(path, "w") as fh:
            if header:
                fh.write("".join(f"# {line}\n" for line in header.splitlines()))
            fh.write("bin_start_ps,count\n")
            np.savetxt(fh, np.column_stack([starts, self.counts]), fmt=["%.6f", "%d"], delimiter=",")


@numba.njit(cache=True, nogil=True)
def _two_pointer(a, b, window, origin, bw, nbins, lo_start):
    counts = np.zeros(nbins, dtype=np.int64)
    lo = lo_start
    nb = b.size
    for i in range(a.size):
        ta = a[i]
        while lo < nb and b[lo] < ta - window:
            lo += 1
        j = lo
        while j < nb and b[j] <= ta + window:
            k = int(math.floor((b[j] - ta - origin) / bw))
            if 0 <= k < nbins:
                counts[k] += 1
            j += 1
    return counts


def coincidence_histogram(a, b, bin, window, *, n_workers=1):
    """Histogram of ``t_b - t_a`` over all pairs with ``|t_b - t_a| <= window``.

    ``a`` and ``b`` are timestamp streams (or sorted integer ps arrays);
    ``bin`` is in ps and ``window`` in ns.  Bins are centred on integer
    multiples of ``bin``.  Splitting the start records across ``n_workers``
    threads gives the same integer counts as a single pass.
    """
    ta = np.ascontiguousarray(getattr(a, "times", a), dtype=np.int64)
    tb = np.ascontiguousarray(getattr(b, "times", b), dtype=np.int64)
    check_sorted(ta, "a")
    check_sorted(tb, "b")
    check_positive(bin, "bin")
    check_positive(window, "window")
    n_workers = check_int(n_workers, "n_workers", minimum=1)
    w = window * 1e3
    half = int(math.ceil(w / bin))
    origin = -(half + 0.5) * bin
    nbins = 2 * half + 1
    edges = np.linspace(0, ta.size, n_workers + 1).astype(np.int64)

    def part(i0, i1):
        lo = int(np.searchsorted(tb, ta[i0] - w, side="left")) if i1 > i0 else 0
        return _two_pointer(ta[i0:i1], tb, w, origin, float(bin), nbins, lo)

    if n_workers == 1:
        counts = part(0, ta.size)
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            counts = sum(pool.map(part, edges[:-1], edges[1:]))
    return Histogram(float(bin), origin, counts)


@dataclass(frozen=True)
class PeakRatio:
    value: float
    stderr: float
    central: int
    side_mean: float
    n_side: int


def side_peaks(h, period, peak_halfwidth, exclude_adjacent=True):
    """Areas of all side peaks that lie completely inside the histogram."""
    p = period * 1e3
    hw = peak_halfwidth * 1e3
    reach = (h.peak_bins(hw) + 1) * h.bin_width
    kmax = int(math.floor((h.extent - reach) / p))
    ks = [k for k in range(-kmax, kmax + 1) if k != 0 and not (exclude_adjacent and abs(k) == 1)]
    return kmax, np.array([h.peak_area(k * p, hw) for k in ks], dtype=float)


def central_ratio(h, period, peak_halfwidth, exclude_adjacent=True, min_side=6):
    check_positive(period, "period")
    check_positive(peak_halfwidth, "peak_halfwidth")
    if 2 * peak_halfwidth >= period:
        raise PreconditionError("peak_halfwidth: peaks would overlap")
    kmax, sides = side_peaks(h, period, peak_halfwidth, exclude_adjacent)
    if 2 * kmax < min_side:
        raise PreconditionError(
            f"window: only {2 * kmax} complete side peaks, need at least {min_side}")
    mean_side = float(sides.mean())
    if mean_side <= 0:
        raise PreconditionError("histogram: zero side-peak area")
    central = h.peak_area(0.0, peak_halfwidth * 1e3)
    value = central / mean_side
    # Poisson errors on the central and pooled side areas
    rel2 = 1.0 / max(central, 1) + 1.0 / sides.sum()
    return PeakRatio(value, value * math.sqrt(rel2) if central else 1.0 / mean_side,
                     central, mean_side, sides.size)


def g2_zero(h, period, peak_halfwidth, *, exclude_adjacent=True):
    """Zero-delay peak area over the mean side-peak area (``period``, widths in ns).

    Side peaks at +-1 period are skipped by default.
    """
    return central_ratio(h, period, peak_halfwidth, exclude_adjacent)
