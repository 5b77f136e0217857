"""Driven two-level emitter: deterministic and quantum-jump integration.

Rates in ``EmitterParams`` are given in ns^-1 and detunings in GHz; the
integrators work in ps and rad/ps internally.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math

import numpy as np

from .. import _rng
from .._validation import (
    NumericalError,
    PreconditionError,
    check_int,
    check_nonnegative,
    check_positive,
)
from . import _kernels

N_MAX = 8
# Rabi frequency (rad/ps) per unit of pulse envelope.
DRIVE_SCALE = 1.0
# Emitter defaults: 1 ns bare lifetime, Purcell factor 18, F_p + 1 convention.
FREE_SPACE_RATE = 1.0
PURCELL_FACTOR = 18.0
DEFAULT_GAMMA = FREE_SPACE_RATE * (PURCELL_FACTOR + 1.0)


@dataclass(frozen=True)
class EmitterParams:
    gamma: float = DEFAULT_GAMMA
    gamma_dephase: float = 0.0
    gamma_sd: float = 0.0
    tau_c: float = 1.0
    detuning: float = 0.0

    def __post_init__(self):
        check_positive(self.gamma, "gamma")
        check_nonnegative(self.gamma_dephase, "gamma_dephase")
        check_nonnegative(self.gamma_sd, "gamma_sd")
        check_positive(self.tau_c, "tau_c")
        if not np.isfinite(self.detuning):
            raise PreconditionError(f"detuning: must be finite, got {self.detuning!r}")

    @property
    def gamma_ps(self):
        return self.gamma * 1e-3

    @property
    def dephase_ps(self):
        return self.gamma_dephase * 1e-3

    @property
    def detuning_rad_ps(self):
        return 2.0 * math.pi * self.detuning * 1e-3


@dataclass(frozen=True)
class DriveProfile:
    """Complex Rabi frequency (rad/ps) on a uniform grid starting at ``t0`` ps."""

    t0: float
    dt: float
    rabi: np.ndarray = field(repr=False)

    def __post_init__(self):
        rabi = np.array(self.rabi, dtype=np.complex128)
        rabi.setflags(write=False)
        object.__setattr__(self, "rabi", rabi)
        check_positive(self.dt, "dt")
        if rabi.ndim != 1 or rabi.size < 2:
            raise PreconditionError("rabi: need a 1-d array with at least two samples")
        if not np.all(np.isfinite(rabi)):
            raise PreconditionError("rabi: samples must be finite")

    @classmethod
    def from_pulse(cls, pulse, scale=1.0):
        """Drive from an optical envelope, carrier offset included."""
        t = pulse.times
        carrier = np.exp(2j * math.pi * pulse.f_center_offset * 1e-3 * t)
        return cls(pulse.t0, pulse.dt, scale * DRIVE_SCALE * pulse.samples * carrier)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.rabi.size)

    def scaled(self, s):
        return DriveProfile(self.t0, self.dt, s * self.rabi)

    def area(self):
        return float(np.sum(np.abs(self.rabi)) * self.dt)

    def max_step(self, e):
        """Largest step allowed by the Rabi-period and lifetime resolution rule."""
        wmax = float(np.max(np.abs(self.rabi)))
        limits = {"lifetime (0.02/gamma)": 0.02 / e.gamma_ps}
        if wmax > 0:
            limits["Rabi frequency (0.05/Omega_max)"] = 0.05 / wmax
        name = min(limits, key=limits.get)
        return limits[name], name


def check_step(d, e):
    limit, name = d.max_step(e)
    if d.dt > limit:
        raise PreconditionError(
            f"dt: step {d.dt:.4g} ps exceeds the {name} bound of {limit:.4g} ps")


@dataclass(frozen=True)
class BlochResult:
    mean_photons: float
    times: np.ndarray = field(repr=False)
    excited_pop: np.ndarray = field(repr=False)
    trace_error: float = 0.0


def bloch_integrate(d, e):
    """Integrate the driven, damped two-level density matrix.

    ``mean_photons`` is ``gamma * integral(rho_ee)`` over the window plus
    the excited population left at the end, which decays afterwards.
    """
    check_step(d, e)
    pop, integral, trace_err = _kernels.bloch_rk4(
        d.rabi, d.dt, e.detuning_rad_ps, e.gamma_ps, e.dephase_ps)
    if not np.isfinite(integral):
        raise NumericalError("bloch_integrate: non-finite result")
    mean = e.gamma_ps * integral + pop[-1]
    return BlochResult(float(mean), d.times, pop, float(trace_err))


def photon_number_distribution(d, e, n_max=N_MAX):
    """Exact P(n emissions) from the photon-number resolved master equation."""
    check_step(d, e)
    n_max = check_int(n_max, "n_max", minimum=1)
    p = _kernels.counting_rk4(d.rabi, d.dt, e.detuning_rad_ps, e.gamma_ps, e.dephase_ps, n_max)
    return np.clip(p, 0.0, None)


@dataclass(frozen=True)
class EmissionOutcome:
    """Per-pulse emission statistics from ``n_traj`` trajectories.

    ``jump_records[i]`` holds the emission times (ps) of trajectory ``i``.
    """

    pn: np.ndarray
    jump_records: list = field(repr=False)
    n_traj: int
    seed: int | None = None

    @property
    def counts(self):
        return np.array([len(r) for r in self.jump_records], dtype=np.int64)

    def mean(self):
        return float(np.dot(np.arange(self.pn.size), self.pn))

    def to_json(self, path=None, include_records=False):
        doc = {"pn": self.pn.tolist(), "n_traj": self.n_traj, "seed": self.seed}
        if include_records:
            doc["jump_records"] = [r.tolist() for r in self.jump_records]
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        records = [np.asarray(r, dtype=float) for r in doc.get("jump_records", [])]
        return cls(np.asarray(doc["pn"], dtype=float), records, int(doc["n_traj"]), doc.get("seed"))


def pn_from_counts(counts, n_max=N_MAX):
    counts = np.asarray(counts, dtype=np.int64)
    size = max(n_max, int(counts.max(initial=0))) + 1
    return np.bincount(counts, minlength=size) / counts.size


def mcwf_simulate(d, e, n_traj, seed, *, traj_start=0, n_workers=1, max_records=32):
    """Quantum-jump unravelling of the emitter under drive ``d``.

    After each emission the emitter restarts from the ground state and the
    remaining drive can excite it again.  Once the drive grid ends the
    remaining excited amplitude decays analytically, which is the same as
    running on until nothing is left.  Trajectory ``k`` uses only the
    counter stream ``(seed, traj_start + k)``, so the result does not depend
    on ``n_workers``.
    """
    check_step(d, e)
    n_traj = check_int(n_traj, "n_traj", minimum=1)
    n_workers = check_int(n_workers, "n_workers", minimum=1)
    props = _kernels.nojump_propagators(d.rabi, d.dt, e.detuning_rad_ps, e.gamma_ps, e.dephase_ps)
    key = _rng.seed_key(seed)

    def run(lo, hi):
        return _kernels.mcwf_run(props, d.t0, d.dt, e.gamma_ps, e.dephase_ps, key,
                                 np.uint64(traj_start + lo), hi - lo, max_records)

    bounds = np.linspace(0, n_traj, min(n_workers, n_traj) + 1).astype(int)
    if n_workers == 1:
        parts = [run(0, n_traj)]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(run, bounds[:-1], bounds[1:]))
    counts = np.concatenate([p[0] for p in parts])
    times = np.concatenate([p[1] for p in parts])
    overflow = np.concatenate([p[2] for p in parts])
    if overflow.any():
        raise NumericalError(f"mcwf_simulate: more than {max_records} emissions in one trajectory")
    records = [times[i, : counts[i]].copy() for i in range(n_traj)]
    return EmissionOutcome(pn_from_counts(counts), records, n_traj, seed)


def g2_from_pn(pn):
    """Zero-delay second-order correlation <n(n-1)> / <n>^2."""
    if isinstance(pn, EmissionOutcome):
        pn = pn.pn
    pn = np.asarray(pn, dtype=float)
    n = np.arange(pn.size)
    mean = float(np.dot(n, pn))
    if mean <= 0:
        raise PreconditionError("pn: mean photon number is zero, g2 undefined")
    return float(np.dot(n * (n - 1), pn) / mean**2)


def g2_standard_error(counts):
    """Delta-method standard error of g2 estimated from per-trajectory counts."""
    c = np.asarray(counts, dtype=float)
    m1 = c.mean()
    m2 = (c * (c - 1)).mean()
    cov = np.cov(np.vstack([c, c * (c - 1)]), ddof=1) / c.size
    grad = np.array([-2.0 * m2 / m1**3, 1.0 / m1**2])
    return float(np.sqrt(grad @ cov @ grad))
