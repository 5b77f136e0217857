"""Efficiency bookkeeping and quarter-wave mirror reflectance.

Budgets are ordered products of stage efficiencies.  Budget files are plain
text with one ``[stage]`` section per stage::

    [stage]
    name = detector
    value = 0.79
    uncertainty = 0.02
"""
from configparser import ConfigParser, Error as ConfigError
from dataclasses import asdict, dataclass, field
import json
import math
import re

import numpy as np

from ._validation import PreconditionError, check_fraction, check_nonnegative, check_positive

LOSS_TOLERANT_THRESHOLD = 2.0 / 3.0

# Refractive indices near 890 nm.
REFRACTIVE_INDEX = {
    "AlAs": 2.95,
    "GaAs": 3.54,
    "SiO2": 1.45,
    "Ta2O5": 2.10,
}


@dataclass(frozen=True)
class Stage:
    name: str
    value: float
    uncertainty: float = 0.0

    def __post_init__(self):
        check_fraction(self.value, f"stage '{self.name}' value", open_low=True)
        check_nonnegative(self.uncertainty, f"stage '{self.name}' uncertainty")


@dataclass(frozen=True)
class EfficiencyBudget:
    stages: tuple = ()

    def __post_init__(self):
        stages = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.stages)
        object.__setattr__(self, "stages", stages)

    @classmethod
    def from_dict(cls, mapping):
        return cls(tuple(Stage(k, v) for k, v in mapping.items()))

    def __len__(self):
        return len(self.stages)

    def select(self, names):
        keep = set(names)
        return EfficiencyBudget(tuple(s for s in self.stages if s.name in keep))


@dataclass(frozen=True)
class ChainReport:
    product: float
    uncertainty: float
    names: list
    values: list
    cumulative: list

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        width = max(len("stage"), *(len(n) for n in self.names))
        lines = [f"{'stage':<{width}}  {'value':>8}  {'cumulative':>10}"]
        for n, v, c in zip(self.names, self.values, self.cumulative):
            lines.append(f"{n:<{width}}  {v:>8.4f}  {c:>10.4f}")
        lines.append(f"{'total':<{width}}  {'':>8}  {self.product:>10.4f} +- {self.uncertainty:.4f}")
        return "\n".join(lines) + "\n"


def chain(b, names=None):
    """Product of the stage efficiencies, with the running product per stage.

    ``names`` restricts the product to the listed stages.  Relative
    uncertainties add in quadrature.
    """
    if names is not None:
        b = b.select(names)
    if len(b) == 0:
        raise PreconditionError("stages: budget is empty")
    values = np.array([s.value for s in b.stages])
    cumulative = np.cumprod(values)
    product = float(math.prod(values.tolist()))
    rel = math.sqrt(sum((s.uncertainty / s.value) ** 2 for s in b.stages))
    return ChainReport(product, product * rel, [s.name for s in b.stages],
                       values.tolist(), cumulative.tolist())


def parse_budget(text):
    """Read a budget file with repeated ``[stage]`` sections."""
    count = 0

    def number(match):
        nonlocal count
        count += 1
        return f"[stage.{count}]"

    numbered = re.sub(r"^\s*\[stage\]\s*$", number, text, flags=re.MULTILINE)
    cp = ConfigParser(interpolation=None)
    try:
        cp.read_string(numbered)
    except ConfigError as exc:
        raise PreconditionError(f"budget file: {exc}") from exc
    stages = []
    for sec in cp.sections():
        if not sec.startswith("stage."):
            raise PreconditionError(f"[{sec}]: only [stage] sections are allowed")
        items = dict(cp[sec])
        unknown = set(items) - {"name", "value", "uncertainty"}
        if unknown:
            raise PreconditionError(f"{sorted(unknown)[0]}: unknown key in [stage]")
        if "name" not in items or "value" not in items:
            raise PreconditionError("[stage]: needs 'name' and 'value'")
        try:
            value = float(items["value"])
            unc = float(items.get("uncertainty", 0.0))
        except ValueError as exc:
            raise PreconditionError(f"value: {exc}") from exc
        stages.append(Stage(items["name"], value, unc))
    return EfficiencyBudget(tuple(stages))


@dataclass(frozen=True)
class Estimate:
    value: float
    uncertainty: float
    unphysical: bool = False

    def to_dict(self):
        return asdict(self)


def system_efficiency(counts_per_s, rep_rate_hz, detector_eff, *,
                      counts_err=0.0, rep_rate_err=0.0, detector_err=0.0):
    """Source efficiency ``counts / (rep_rate * detector_eff)`` with first-order errors.

    Examples
    --------
    >>> round(system_efficiency(14.28e6, 25.38e6, 0.79).value, 3)
    0.712
    """
    check_positive(counts_per_s, "counts_per_s")
    check_positive(rep_rate_hz, "rep_rate_hz")
    check_fraction(detector_eff, "detector_eff", open_low=True)
    eta = counts_per_s / (rep_rate_hz * detector_eff)
    rel = math.sqrt((counts_err / counts_per_s) ** 2 + (rep_rate_err / rep_rate_hz) ** 2
                    + (detector_err / detector_eff) ** 2)
    return Estimate(eta, eta * rel, eta > 1.0)


@dataclass(frozen=True)
class ThresholdReport:
    threshold: float
    eta_source: float
    eta_detector: float
    product: float
    source_margin: float
    product_margin: float
    source_above: bool
    product_above: bool

    def to_dict(self):
        return asdict(self)


def threshold_check(eta_source, eta_detector, threshold=LOSS_TOLERANT_THRESHOLD):
    """Compare the source efficiency and the source-detector product with ``threshold``.

    A criterion counts as met only for a strictly positive margin.
    """
    check_fraction(eta_source, "eta_source", open_low=True)
    check_fraction(eta_detector, "eta_detector", open_low=True)
    product = eta_source * eta_detector
    sm = eta_source - threshold
    pm = product - threshold
    return ThresholdReport(threshold, eta_source, eta_detector, product, sm, pm, sm > 0, pm > 0)


@dataclass(frozen=True)
class RhoReport:
    rho: float | None
    rho_squeezing: float | None
    rho_squeezing_err: float | None
    rho_runs: float | None
    rho_runs_err: float | None
    consistent: bool | None
    source_efficiency: float | None
    note: str = ""

    def to_dict(self):
        return asdict(self)


def rho_from_runs_or_squeezing(sigma_ratio=None, fitted_rho=None, *, sigma_ratio_err=0.0,
                               fitted_rho_err=0.0, detector_eff=None):
    """Overall detection efficiency from a squeezing ratio and/or a run-length fit.

    The squeezing estimate is ``1 - ratio**2``.  With both inputs the two
    are compared at two combined standard errors; ``rho`` is the run-length
    value when present.  ``detector_eff`` adds ``rho / detector_eff``.
    """
    if sigma_ratio is None and fitted_rho is None:
        raise PreconditionError("sigma_ratio: give sigma_ratio or fitted_rho")
    notes = []
    rs = rs_err = rr = None
    if sigma_ratio is not None:
        check_positive(sigma_ratio, "sigma_ratio")
        if sigma_ratio > 1.0:
            if fitted_rho is None:
                raise PreconditionError(
                    f"sigma_ratio: {sigma_ratio} > 1 is super-Poissonian, no efficiency implied")
            notes.append("sigma_ratio > 1 is super-Poissonian; squeezing estimate skipped")
        else:
            rs = 1.0 - sigma_ratio**2
            rs_err = 2.0 * sigma_ratio * sigma_ratio_err
    if fitted_rho is not None:
        check_fraction(fitted_rho, "fitted_rho", open_low=True, open_high=True)
        rr = float(fitted_rho)
    rho = rr if rr is not None else rs
    consistent = None
    if rs is not None and rr is not None:
        tol = 2.0 * math.hypot(rs_err, fitted_rho_err)
        consistent = abs(rs - rr) <= tol
        notes.append(f"squeezing - runs = {rs - rr:+.4f} (tolerance {tol:.4f})")
    source = None
    if detector_eff is not None:
        check_fraction(detector_eff, "detector_eff", open_low=True)
        source = rho / detector_eff
    return RhoReport(rho, rs, rs_err, rr, fitted_rho_err if rr is not None else None,
                     consistent, source, "; ".join(notes))


# -- quarter-wave mirrors -----------------------------------------------------


@dataclass(frozen=True)
class DbrStack:
    """Alternating quarter-wave stack, high-index layer facing the ambient medium.

    ``pairs`` may be half-integer: 5.5 pairs is H L H ... L H (11 layers).
    """

    n_high: float = REFRACTIVE_INDEX["GaAs"]
    n_low: float = REFRACTIVE_INDEX["AlAs"]
    pairs: float = 30
    n_ambient: float = 1.0
    n_substrate: float = REFRACTIVE_INDEX["GaAs"]
    design_wavelength: float = 890.0  # nm
    layers_: tuple = field(init=False, repr=False, default=())

    def __post_init__(self):
        for key in ("n_high", "n_low", "n_substrate"):
            if not getattr(self, key) > 1.0:
                raise PreconditionError(f"{key}: refractive index must exceed 1")
        if not self.n_ambient >= 1.0:
            raise PreconditionError("n_ambient: refractive index must be >= 1")
        if not (self.pairs >= 0 and float(self.pairs * 2).is_integer()):
            raise PreconditionError(f"pairs: need a non-negative multiple of 0.5, got {self.pairs!r}")
        check_positive(self.design_wavelength, "design_wavelength")
        n_layers = int(round(2 * self.pairs))
        layers = tuple(self.n_high if k % 2 == 0 else self.n_low for k in range(n_layers))
        object.__setattr__(self, "layers_", layers)


def characteristic_matrix(n, thickness, wavelength):
    delta = 2.0 * math.pi * n * thickness / wavelength
    c, s = math.cos(delta), math.sin(delta)
    return np.array([[c, 1j * s / n], [1j * n * s, c]])


def dbr_reflectivity(s, wavelength=None):
    """Normal-incidence reflectance of the stack from the ambient side.

    Lossless layers of thickness ``design_wavelength / (4 n)``; the product
    of characteristic matrices gives the input admittance ``Y = C / B``.
    """
    wl = s.design_wavelength if wavelength is None else check_positive(wavelength, "wavelength")
    m = np.eye(2, dtype=complex)
    for n in s.layers_:
        m = m @ characteristic_matrix(n, s.design_wavelength / (4.0 * n), wl)
    b, c = m @ np.array([1.0, s.n_substrate])
    y = c / b
    r = (s.n_ambient - y) / (s.n_ambient + y)
    return float(abs(r) ** 2)


def quarter_wave_reflectance(s):
    """Closed-form reflectance at the design wavelength."""
    k = len(s.layers_)
    n_h_layers = (k + 1) // 2
    n_l_layers = k // 2
    if k % 2 == 0:
        y = (s.n_high / s.n_low) ** k * s.n_substrate
    else:
        y = s.n_high ** (2 * n_h_layers) / (s.n_low ** (2 * n_l_layers) * s.n_substrate)
    return ((s.n_ambient - y) / (s.n_ambient + y)) ** 2
