"""Detector timestamp streams: emission, loss, beamsplitting and detection.

Timestamps are integer picoseconds.  Every random decision is drawn from the
counter-based generator in :mod:`spsource._rng`, keyed by the caller's seed,
an operation-specific stream id and the record (or pulse) index.
"""
from dataclasses import dataclass, field, replace
import hashlib
import math

import numba
import numpy as np

from . import _rng
from ._validation import (
    PreconditionError,
    check_fraction,
    check_int,
    check_nonnegative,
    check_positive,
)

MAGIC = b"PFTS"
_BINARY_DTYPE = np.dtype([("channel", "<u1"), ("t", "<u8")])  # packed, 9 bytes

# Repetition rates of the excitation laser before and after pulse picking.
LASER_REP_RATE_MHZ = 76.13
PICK_FACTOR = 3


@dataclass(frozen=True)
class PulseTrain:
    rep_rate: float = LASER_REP_RATE_MHZ  # MHz
    n_pulses: int = 1000
    pick_factor: int = 1

    def __post_init__(self):
        check_positive(self.rep_rate, "rep_rate")
        check_int(self.n_pulses, "n_pulses", minimum=0)
        check_int(self.pick_factor, "pick_factor", minimum=1)

    @property
    def effective_rate(self):
        """Pulse rate after picking, MHz."""
        return self.rep_rate / self.pick_factor

    @property
    def period_ps(self):
        return self.pick_factor / self.rep_rate * 1e6


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 1.0
    dead_time: float = 0.0  # ns
    jitter_sigma: float = 0.0  # ps

    def __post_init__(self):
        check_fraction(self.efficiency, "efficiency")
        check_nonnegative(self.dead_time, "dead_time")
        check_nonnegative(self.jitter_sigma, "jitter_sigma")


def _strict(times):
    """Separate equal timestamps by one tick so each channel increases strictly."""
    if times.size < 2:
        return times
    idx = np.arange(times.size, dtype=np.int64)
    return np.maximum.accumulate(times - idx) + idx


@dataclass(frozen=True)
class TimestampStream:
    channels: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    rep_rate_mhz: float | None = None
    pick_factor: int | None = None
    seed: int | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        t = np.asarray(self.times, dtype=np.int64)
        if ch.shape != t.shape or t.ndim != 1:
            raise PreconditionError("channels, times: need matching 1-d arrays")
        if t.size and t.min() < 0:
            raise PreconditionError("times: timestamps must be >= 0")
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise PreconditionError("times: records must be time ordered")
        for c in np.unique(ch):
            tc = t[ch == c]
            if tc.size > 1 and np.any(np.diff(tc) <= 0):
                raise PreconditionError(f"times: channel {c} is not strictly increasing")
        ch.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "times", t)

    @classmethod
    def build(cls, channels, times, **meta):
        """Sort arbitrary records and break same-channel ties."""
        channels = np.asarray(channels, dtype=np.uint8)
        times = np.asarray(times, dtype=np.int64)
        out_t = times.copy()
        for c in np.unique(channels):
            sel = np.flatnonzero(channels == c)
            sel = sel[np.argsort(times[sel], kind="stable")]
            out_t[sel] = _strict(times[sel])
        order = np.lexsort((channels, out_t))
        return cls(channels[order], out_t[order], **meta)

    @classmethod
    def empty(cls, **meta):
        return cls(np.zeros(0, np.uint8), np.zeros(0, np.int64), **meta)

    def __len__(self):
        return self.times.size

    def _meta(self):
        return dict(rep_rate_mhz=self.rep_rate_mhz, pick_factor=self.pick_factor, seed=self.seed)

    def subset(self, mask):
        return TimestampStream(self.channels[mask], self.times[mask], **self._meta())

    def channel(self, c):
        return self.times[self.channels == c]

    def with_channel(self, c):
        return replace(self, channels=np.full(len(self), c, dtype=np.uint8))

    def digest(self):
        """SHA-256 over the records (channels then times, little-endian)."""
        h = hashlib.sha256()
        h.update(self.channels.tobytes())
        h.update(self.times.astype("<i8").tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        header = f"rep_rate_mhz={self.rep_rate_mhz} pick_factor={self.pick_factor} seed={self.seed}"
        with open(path, "w") as fh:
            fh.write(f"# {header}\n")
            fh.write("channel,t_ps\n")
            np.savetxt(fh, np.column_stack([self.channels, self.times]), fmt="%d", delimiter=",")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline()
        meta = {}
        if first.startswith("#"):
            for item in first[1:].split():
                k, v = item.split("=", 1)
                meta[k] = None if v == "None" else v
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2 if meta else 1,
                          dtype=np.int64, ndmin=2)
        rep = meta.get("rep_rate_mhz")
        pick = meta.get("pick_factor")
        seed = meta.get("seed")
        return cls(data[:, 0], data[:, 1],
                   rep_rate_mhz=None if rep is None else float(rep),
                   pick_factor=None if pick is None else int(pick),
                   seed=None if seed is None else int(seed))

    def to_binary(self, path):
        rec = np.empty(len(self), dtype=_BINARY_DTYPE)
        rec["channel"] = self.channels
        rec["t"] = self.times
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(rec.tobytes())

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise ValueError(f"{path}: not a PFTS timestamp file")
            rec = np.frombuffer(fh.read(), dtype=_BINARY_DTYPE)
        return cls(rec["channel"].copy(), rec["t"].astype(np.int64))


def merge(*streams):
    """Union of streams, keeping each record's channel."""
    ch = np.concatenate([s.channels for s in streams])
    t = np.concatenate([s.times for s in streams])
    order = np.lexsort((ch, t))
    meta = streams[0]._meta() if streams else {}
    return TimestampStream(ch[order], t[order], **meta)


# -- per-pulse emission samplers ------------------------------------------------
#
# ``sample(seed, pulses, gamma)`` returns (pulse index, offset ps) per photon.


class BernoulliSampler:
    """Ideal source: at most one photon per pulse, with probability ``p``."""

    def __init__(self, p):
        self.p = check_fraction(p, "p")

    def sample(self, seed, pulses, gamma):
        hit = _rng.uniform(seed, _rng.salt("emit.n"), pulses) < self.p
        j = pulses[hit]
        return j, _rng.exponential(seed, _rng.salt("emit.offset"), j, gamma * 1e-3)


class PnSampler:
    """Photon number drawn from ``pn``; each photon decays independently."""

    def __init__(self, pn):
        pn = np.asarray(pn, dtype=float)
        if pn.ndim != 1 or np.any(pn < 0) or not math.isclose(pn.sum(), 1.0, abs_tol=1e-9):
            raise PreconditionError("pn: must be a probability vector")
        self.pn = pn

    def sample(self, seed, pulses, gamma):
        u = _rng.uniform(seed, _rng.salt("emit.n"), pulses)
        n = np.searchsorted(np.cumsum(self.pn)[:-1], u, side="right")
        j = np.repeat(pulses, n)
        k = np.arange(j.size) - np.repeat(np.cumsum(n) - n, n)  # photon rank within pulse
        off = np.empty(j.size)
        for rank in range(int(n.max(initial=0))):
            sel = k == rank
            off[sel] = _rng.exponential(seed, _rng.salt("emit.offset") + rank, j[sel], gamma * 1e-3)
        return j, off


class JumpRecordSampler:
    """Replays emitter trajectories: pulse ``j`` uses a trajectory picked at random.

    Offsets are emission times minus ``origin`` (ps); the default origin is
    the earliest recorded emission, so all offsets are non-negative.
    """

    def __init__(self, outcome, origin=None):
        self.records = outcome.jump_records
        if not self.records:
            raise PreconditionError("outcome: no jump records to replay")
        self.counts = np.array([len(r) for r in self.records])
        flat = np.concatenate(self.records) if self.counts.sum() else np.zeros(0)
        self.flat = flat
        self.starts = np.cumsum(self.counts) - self.counts
        self.origin = float(flat.min()) if origin is None and flat.size else float(origin or 0.0)

    def sample(self, seed, pulses, gamma):
        u = _rng.uniform(seed, _rng.salt("emit.traj"), pulses)
        traj = np.minimum((u * len(self.records)).astype(np.int64), len(self.records) - 1)
        n = self.counts[traj]
        j = np.repeat(pulses, n)
        k = np.arange(j.size) - np.repeat(np.cumsum(n) - n, n)
        return j, self.flat[np.repeat(self.starts[traj], n) + k] - self.origin


def emit_stream(source, train, gamma, seed, *, channel=0, duty_cycle=1.0, chunk=2_000_000):
    """Timestamps of all photons emitted by ``train.n_pulses`` picked pulses.

    ``source`` is a sampler (see above) or a float ``p`` for the ideal
    Bernoulli source.  ``duty_cycle`` < 1 switches the source off on a random
    fraction of pulses (a crude blinking stand-in; 1 disables it).
    """
    if not hasattr(source, "sample"):
        source = BernoulliSampler(source)
    check_positive(gamma, "gamma")
    check_fraction(duty_cycle, "duty_cycle")
    period = train.period_ps
    ts = []
    for lo in range(0, train.n_pulses, chunk):
        pulses = np.arange(lo, min(lo + chunk, train.n_pulses), dtype=np.int64)
        if duty_cycle < 1.0:
            pulses = pulses[_rng.uniform(seed, _rng.salt("emit.duty"), pulses) < duty_cycle]
        j, off = source.sample(seed, pulses, gamma)
        ts.append(np.rint(j * period + off).astype(np.int64))
    t = np.concatenate(ts) if ts else np.zeros(0, np.int64)
    return TimestampStream.build(np.full(t.size, channel, np.uint8), t,
                                 rep_rate_mhz=train.rep_rate, pick_factor=train.pick_factor, seed=seed)


def apply_loss(s, transmission, seed):
    """Keep each record independently with probability ``transmission``."""
    check_fraction(transmission, "transmission")
    keep = _rng.uniform_range(seed, _rng.salt("loss"), 0, len(s)) < transmission
    return s.subset(keep)


def beamsplit(s, r, seed):
    """Route each record to the first output with probability ``r``."""
    check_fraction(r, "r")
    first = _rng.uniform_range(seed, _rng.salt("beamsplit"), 0, len(s)) < r
    return s.subset(first), s.subset(~first)


@numba.njit(cache=True)
def _dead_time_mask(channels, times, dead):
    keep = np.zeros(times.size, dtype=np.bool_)
    last = np.full(256, -(2**62), dtype=np.int64)
    for i in range(times.size):
        c = channels[i]
        if times[i] - last[c] >= dead:
            keep[i] = True
            last[c] = times[i]
    return keep


def detect(s, d, seed):
    """Efficiency thinning, Gaussian jitter, then non-paralyzable dead time per channel."""
    n = len(s)
    keep = _rng.uniform_range(seed, _rng.salt("detect.eff"), 0, n) < d.efficiency
    ch = s.channels[keep]
    t = s.times[keep]
    if d.jitter_sigma > 0:
        idx = np.flatnonzero(keep).astype(np.uint64)
        jitter = _rng.normal(seed, _rng.salt("detect.jitter"), idx) * d.jitter_sigma
        t = np.maximum(np.rint(t + jitter).astype(np.int64), 0)
        order = np.lexsort((ch, t))
        ch, t = ch[order], t[order]
    if d.dead_time > 0:
        mask = _dead_time_mask(ch, t, np.int64(round(d.dead_time * 1e3)))
        ch, t = ch[mask], t[mask]
    return TimestampStream.build(ch, t, **s._meta())


def pulse_slot(t, train):
    """Pulse index of integer timestamps.

    Times are rounded to whole ps, so a photon of pulse ``j`` can sit up to
    half a tick before ``j * period``; the half-tick shift absorbs that.
    """
    return np.floor_divide(np.asarray(t) + 0.5, train.period_ps).astype(np.int64)


def detection_flags(s, train, channel=None):
    """Per-pulse booleans: did any record fall in pulse slot ``j``."""
    t = s.times if channel is None else s.channel(channel)
    slot = pulse_slot(t, train)
    slot = slot[(slot >= 0) & (slot < train.n_pulses)]
    flags = np.zeros(train.n_pulses, dtype=bool)
    flags[slot] = True
    return flags
