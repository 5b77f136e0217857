"""Scenario configuration: INI schema, parsing and validation.

A config file has one section per module.  Every key is typed and has a
default; unknown sections and keys are errors so that typos never pass
silently.  ``default_config_text()`` prints the full schema with defaults.
"""
from configparser import ConfigParser, Error as IniError
from dataclasses import dataclass
import hashlib
import json
import math
import re

from ._validation import PreconditionError

SCENARIOS = ("rabi", "purity-sweep", "squeezing", "consecutive", "hbt", "hom",
             "delay-hom", "budget", "dbr", "threshold")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """The config cannot be read: syntax, unknown key or unparsable value."""


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "scenario": (str, "rabi"),
        "seed": (_int, 0),
        "format": (str, "csv"),
    },
    "optics": {
        "source_fwhm": (_optional_float, 96.0),
        "slit_center": (float, 0.0),
        "q_factor": (float, 8400.0),
        "mode_offset": (float, 83.0),
        "wavelength": (float, 884.5),
        "use_cavity": (_bool, True),
        "grid_n": (_int, 2**15),
        "grid_dt": (float, 0.02),
    },
    "emitter": {
        "gamma": (float, 19.0),
        "gamma_dephase": (float, 0.0),
        "gamma_sd": (float, 0.0),
        "tau_c": (float, 1.0),
        "detuning": (float, 0.0),
    },
    "rabi": {
        "widths": (_floats, (46.0, 56.0, 69.0, 80.0, 96.0)),
        "max_area": (float, 3.0),
        "n_points": (_int, 61),
    },
    "purity": {
        "widths": (_floats, (46.0, 69.0, 96.0)),
        "method": (str, "counting"),
        "n_traj": (_int, 20000),
    },
    "train": {
        "rep_rate_mhz": (float, 76.13),
        "pick_factor": (_int, 3),
    },
    "detector": {
        "efficiency": (float, 0.79),
        "dead_time": (float, 30.0),
        "jitter_sigma": (float, 0.0),
    },
    "squeezing": {
        "rho": (float, 0.5652),
        "rep_rate_mhz": (float, 25.0),
        "bin_us": (float, 1.0),
        "n_bins": (_int, 10000),
        "first_lens_db": (float, 3.92),
    },
    "consecutive": {
        "rho": (float, 0.5652),
        "n_pulses": (_int, 10**8),
        "rep_rate_hz": (float, 25.38e6),
        "min_events": (_int, 10),
        "duty_cycle": (float, 1.0),
        "report_n": (_int, 40),
        "measured_rate_hz": (float, 1.67e-3),
    },
    "hbt": {
        "mean_photons": (float, 0.98),
        "g2": (float, 0.0205),
        "n_pulses": (_int, 10**7),
        "transmission": (float, 0.715),
        "splitter": (float, 0.5),
        "bin_ps": (float, 100.0),
        "window_periods": (float, 8.0),
        "peak_halfwidth": (float, 3.0),
        "exclude_adjacent": (_bool, True),
    },
    "hom": {
        "m": (float, 0.9856),
        "g2": (float, 0.0205),
        "r": (float, 0.45),
        "n_pulses": (_int, 4 * 10**6),
        "bin_ps": (float, 100.0),
        "window_periods": (float, 8.0),
        "peak_halfwidth": (float, 3.0),
        "exclude_adjacent": (_bool, True),
    },
    "delay_hom": {
        "loss": (str, "squared"),
    },
    "budget": {
        "file": (str, ""),
    },
    "dbr": {
        "n_high": (float, 3.54),
        "n_low": (float, 2.95),
        "pairs": (float, 30.0),
        "n_ambient": (float, 1.0),
        "n_substrate": (float, 3.54),
        "design_wavelength": (float, 890.0),
        "scan_min": (float, 800.0),
        "scan_max": (float, 980.0),
        "scan_points": (_int, 181),
    },
    "threshold": {
        "eta_source": (float, 0.712),
        "eta_detector": (float, 0.79),
        "threshold": (float, 2.0 / 3.0),
    },
}

# Sections each scenario reads, besides [run].
USES = {
    "rabi": ("optics", "emitter", "rabi"),
    "purity-sweep": ("optics", "emitter", "purity"),
    "squeezing": ("emitter", "squeezing"),
    "consecutive": ("consecutive",),
    "hbt": ("emitter", "train", "detector", "hbt"),
    "hom": ("emitter", "train", "hom"),
    "delay-hom": ("emitter", "delay_hom"),
    "budget": ("budget",),
    "dbr": ("dbr",),
    "threshold": ("threshold",),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved configuration: every schema key has a value."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    @property
    def scenario(self):
        return self.values["run"]["scenario"]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def replace(self, section, **kw):
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
        for key in kw:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
        values = {s: dict(v) for s, v in self.values.items()}
        values[section].update(kw)
        return ScenarioConfig(values)

    def canonical(self):
        """Deterministic text form used for the provenance digest."""
        return json.dumps(self.values, sort_keys=True, default=list)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def defaults():
    return ScenarioConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(f"{v:g}" for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    return str(value)


def default_config_text():
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {_format(d)}" for k, (_, d) in keys.items()]
        lines.append("")
    return "\n".join(lines)


def parse_config(text):
    """Parse INI text over the defaults; raises ``ConfigError`` naming the key."""
    cp = ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except IniError as exc:
        raise ConfigError(f"config: malformed file ({exc.__class__.__name__}: {exc})") from exc
    values = defaults().values
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in cp[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            parser = SCHEMA[section][key][0]
            try:
                values[section][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from exc
    return ScenarioConfig(values)


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from exc
    return parse_config(text)


# -- validation ---------------------------------------------------------------


def _collect(out, section, fn):
    """Run ``fn`` and record a PreconditionError as ``section.<message>``."""
    try:
        return fn()
    except PreconditionError as exc:
        out.append(f"{section}.{exc}")
        return None


def _run_checks(cfg, out):
    r = cfg["run"]
    if r["scenario"] not in SCENARIOS:
        out.append(f"run.scenario: unknown scenario {r['scenario']!r}")
    if r["format"] not in FORMATS:
        out.append(f"run.format: must be one of {', '.join(FORMATS)}")
    if not 0 <= r["seed"] < 2**64:
        out.append("run.seed: must be an unsigned 64-bit integer")


def _emitter(cfg, out):
    from .emitter import EmitterParams
    e = cfg["emitter"]
    return _collect(out, "emitter", lambda: EmitterParams(
        e["gamma"], e["gamma_dephase"], e["gamma_sd"], e["tau_c"], e["detuning"]))


def _chain(cfg, out):
    from .optics import ExcitationChain, GridSpec
    from ._validation import check_power_of_two, check_positive
    o = cfg["optics"]

    def build():
        check_power_of_two(o["grid_n"], "grid_n")
        if o["grid_n"] < 64:
            raise PreconditionError("grid_n: need at least 64 samples")
        check_positive(o["grid_dt"], "grid_dt")
        check_positive(o["q_factor"], "q_factor")
        check_positive(o["wavelength"], "wavelength")
        if o["source_fwhm"] is not None:
            check_positive(o["source_fwhm"], "source_fwhm")
        GridSpec(o["grid_n"], o["grid_dt"])
        return ExcitationChain(o["source_fwhm"], o["slit_center"], o["q_factor"], o["mode_offset"],
                               o["wavelength"], o["use_cavity"], o["grid_n"], o["grid_dt"])

    return _collect(out, "optics", build)


def _widths_checks(section, widths, out):
    if not widths:
        out.append(f"{section}.widths: need at least one width")
    for w in widths:
        if not 20.0 <= w <= 200.0:
            out.append(f"{section}.widths: {w:g} GHz outside [20, 200]")


def rabi_base(chain, width):
    """Drive for ``width`` normalised to unit area at the emitter, and its incident scale."""
    from .emitter import DriveProfile
    raw = DriveProfile.from_pulse(chain.transform(width, 1.0))
    area = raw.area()
    if area <= 0:
        raise PreconditionError(f"widths: no drive reaches the emitter at {width:g} GHz")
    return raw.scaled(1.0 / area), 1.0 / area


def _drive_checks(chain, e, widths, max_area, out):
    """Build every drive the scenario will integrate and apply the step-size rule.

    ``max_area`` None means the pi-pulse search is run, exactly as in the sweep.
    """
    from .emitter import DriveProfile, find_pi_scale
    from .emitter.dynamics import check_step

    seen = set()
    for w in widths:
        try:
            if max_area is None:
                base = DriveProfile.from_pulse(chain.transform(w))
            else:
                base, _ = rabi_base(chain, w)
        except PreconditionError as exc:
            # grid.dt / grid.n in optics are optics.grid_dt / optics.grid_n here
            msg = "optics." + re.sub(r"^grid\.", "grid_", str(exc))
            if msg not in seen:
                seen.add(msg)
                out.append(f"{msg} (width {w:g} GHz)")
            continue
        try:
            if max_area is None:
                find_pi_scale(base, e)
            else:
                check_step(base.scaled(max_area), e)
        except PreconditionError as exc:
            out.append(f"optics.grid_{exc} (width {w:g} GHz)")


def validate(cfg):
    """Violations that would stop ``run(cfg)``; an empty list means it would pass.

    Only the sections the configured scenario reads are checked.
    """
    out = []
    _run_checks(cfg, out)
    scenario = cfg.scenario
    if scenario not in SCENARIOS:
        return out
    s = cfg
    if scenario in ("rabi", "purity-sweep"):
        sec = "rabi" if scenario == "rabi" else "purity"
        e = _emitter(s, out)
        chain = _chain(s, out)
        widths = s[sec]["widths"]
        _widths_checks(sec, widths, out)
        if scenario == "rabi":
            if not s["rabi"]["max_area"] > 0:
                out.append("rabi.max_area: must be > 0")
            if s["rabi"]["n_points"] < 2:
                out.append("rabi.n_points: need at least 2 points")
            max_area = s["rabi"]["max_area"] * math.pi
        else:
            max_area = None
            if s["purity"]["method"] not in ("counting", "mcwf"):
                out.append("purity.method: must be 'counting' or 'mcwf'")
            if s["purity"]["n_traj"] < 1:
                out.append("purity.n_traj: must be >= 1")
        if e is not None and chain is not None and not out:
            _drive_checks(chain, e, widths, max_area, out)
    elif scenario == "squeezing":
        _emitter(s, out)
        q = s["squeezing"]
        _fraction(out, "squeezing.rho", q["rho"])
        for k in ("rep_rate_mhz", "bin_us", "first_lens_db"):
            _positive(out, f"squeezing.{k}", q[k])
        if q["n_bins"] < 2:
            out.append("squeezing.n_bins: need at least 2 bins")
        elif q["rep_rate_mhz"] > 0 and q["bin_us"] > 0 and q["rep_rate_mhz"] * q["bin_us"] < 1:
            out.append("squeezing.bin_us: a bin must hold at least one pulse")
    elif scenario == "consecutive":
        c = s["consecutive"]
        _fraction(out, "consecutive.rho", c["rho"])
        _fraction(out, "consecutive.duty_cycle", c["duty_cycle"])
        _positive(out, "consecutive.rep_rate_hz", c["rep_rate_hz"])
        _positive(out, "consecutive.measured_rate_hz", c["measured_rate_hz"])
        for k in ("n_pulses", "min_events", "report_n"):
            if c[k] < 1:
                out.append(f"consecutive.{k}: must be >= 1")
    elif scenario == "hbt":
        _emitter(s, out)
        _train(s, out)
        _detector(s, out)
        h = s["hbt"]
        _positive(out, "hbt.mean_photons", h["mean_photons"])
        _fraction(out, "hbt.g2", h["g2"])
        _fraction(out, "hbt.transmission", h["transmission"])
        _fraction(out, "hbt.splitter", h["splitter"])
        if h["n_pulses"] < 1:
            out.append("hbt.n_pulses: must be >= 1")
        if not out:
            _collect(out, "hbt", lambda: hbt_photon_numbers(h["mean_photons"], h["g2"]))
        _histogram_checks(out, "hbt", h, _period_ns(s, out))
    elif scenario == "hom":
        _emitter(s, out)
        _train(s, out)
        h = s["hom"]
        for k in ("m", "g2", "r"):
            _fraction(out, f"hom.{k}", h[k])
        if 0 < h["r"] < 1 and not 0 <= h["g2"] <= 0.5:
            out.append("hom.g2: the noise-photon model covers g2 <= 0.5")
        if h["n_pulses"] < 1:
            out.append("hom.n_pulses: must be >= 1")
        if h["r"] in (0.0, 1.0):
            out.append("hom.r: must lie in (0, 1) for the correction")
        _histogram_checks(out, "hom", h, _period_ns(s, out))
    elif scenario == "delay-hom":
        _emitter(s, out)
        if s["delay_hom"]["loss"] not in ("squared", "minimax"):
            out.append("delay_hom.loss: must be 'squared' or 'minimax'")
    elif scenario == "budget":
        path = s["budget"]["file"]
        if path:
            from .budget import parse_budget
            try:
                with open(path) as fh:
                    text = fh.read()
            except OSError:
                out.append(f"budget.file: cannot read {path}")
            else:
                b = _collect(out, "budget", lambda: parse_budget(text))
                if b is not None and len(b) == 0:
                    out.append("budget.file: no [stage] sections")
    elif scenario == "dbr":
        from .budget import DbrStack
        d = s["dbr"]
        _collect(out, "dbr", lambda: DbrStack(d["n_high"], d["n_low"], d["pairs"], d["n_ambient"],
                                             d["n_substrate"], d["design_wavelength"]))
        _positive(out, "dbr.scan_min", d["scan_min"])
        if not d["scan_max"] > d["scan_min"]:
            out.append("dbr.scan_max: must exceed scan_min")
        if d["scan_points"] < 2:
            out.append("dbr.scan_points: need at least 2 points")
    elif scenario == "threshold":
        t = s["threshold"]
        _fraction(out, "threshold.eta_source", t["eta_source"], open_low=True)
        _fraction(out, "threshold.eta_detector", t["eta_detector"], open_low=True)
        _fraction(out, "threshold.threshold", t["threshold"])
    return out


def _positive(out, key, v):
    if not (math.isfinite(v) and v > 0):
        out.append(f"{key}: must be a finite positive number, got {v!r}")


def _fraction(out, key, v, open_low=False):
    if not (math.isfinite(v) and 0 <= v <= 1) or (open_low and v == 0):
        out.append(f"{key}: must lie in {'(' if open_low else '['}0, 1], got {v!r}")


def _period_ns(cfg, out):
    t = cfg["train"]
    ok = t["rep_rate_mhz"] > 0 and t["pick_factor"] >= 1
    return t["pick_factor"] / t["rep_rate_mhz"] * 1e3 if ok and math.isfinite(t["rep_rate_mhz"]) else None


def _train(cfg, out):
    from .photonstream import PulseTrain
    t = cfg["train"]
    return _collect(out, "train", lambda: PulseTrain(t["rep_rate_mhz"], 1, t["pick_factor"]))


def _detector(cfg, out):
    from .photonstream import DetectorModel
    d = cfg["detector"]
    return _collect(out, "detector", lambda: DetectorModel(d["efficiency"], d["dead_time"],
                                                          d["jitter_sigma"]))


def _histogram_checks(out, section, h, period_ns):
    """Same arithmetic as ``coincidence_histogram`` and ``g2_zero``."""
    n = len(out)
    _positive(out, f"{section}.bin_ps", h["bin_ps"])
    _positive(out, f"{section}.peak_halfwidth", h["peak_halfwidth"])
    _positive(out, f"{section}.window_periods", h["window_periods"])
    if len(out) > n or period_ns is None:
        return
    if h["window_periods"] < 3:
        out.append(f"{section}.window_periods: window must span at least 3 pulse periods")
    if 2 * h["peak_halfwidth"] >= period_ns:
        out.append(f"{section}.peak_halfwidth: peaks would overlap")
        return
    window_ps = h["window_periods"] * period_ns * 1e3
    extent = (math.ceil(window_ps / h["bin_ps"]) + 0.5) * h["bin_ps"]
    reach = (round(h["peak_halfwidth"] * 1e3 / h["bin_ps"]) + 1) * h["bin_ps"]
    kmax = math.floor((extent - reach) / (period_ns * 1e3))
    if 2 * kmax < 6:
        out.append(f"{section}.window_periods: only {2 * kmax} complete side peaks, need 6")


def hbt_photon_numbers(mean, g2):
    """P(0), P(1), P(2) with the given mean and g2, at most two photons per pulse."""
    p2 = g2 * mean**2 / 2.0
    p1 = mean - 2.0 * p2
    p0 = 1.0 - p1 - p2
    if min(p0, p1, p2) < 0:
        raise PreconditionError(
            f"mean_photons: no distribution with n <= 2 has mean {mean} and g2 {g2}")
    return (p0, p1, p2)
