import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spsource._validation import PreconditionError
from spsource.budget import (
    LOSS_TOLERANT_THRESHOLD,
    REFRACTIVE_INDEX,
    DbrStack,
    EfficiencyBudget,
    Stage,
    chain,
    dbr_reflectivity,
    parse_budget,
    quarter_wave_reflectance,
    rho_from_runs_or_squeezing,
    system_efficiency,
    threshold_check,
)

values = st.floats(0.01, 1.0)


# -- system efficiency --------------------------------------------------------


def test_system_efficiency_example():
    est = system_efficiency(14.28e6, 25.38e6, 0.79, counts_err=0.01e6, detector_err=0.02)
    assert est.value == pytest.approx(0.712, abs=0.001)
    assert est.uncertainty / est.value >= 0.02 / 0.79
    assert est.uncertainty == pytest.approx(0.018, abs=0.001)
    assert not est.unphysical


def test_system_efficiency_identity_and_flag():
    assert system_efficiency(25e6, 25e6, 1.0).value == 1.0
    assert system_efficiency(30e6, 25e6, 1.0).unphysical


@pytest.mark.parametrize("args", [(0, 1e6, 0.5), (1e6, -1, 0.5), (1e6, 1e6, 0.0), (1e6, 1e6, 1.2)])
def test_system_efficiency_rejects(args):
    with pytest.raises(PreconditionError):
        system_efficiency(*args)


@pytest.mark.parametrize("eta", [0.3, 0.712, 0.95])
def test_system_efficiency_recovers_synthetic_eta(eta):
    rng = np.random.default_rng(int(eta * 1e3))
    rep, det, seconds = 25.38e6, 0.79, 0.01
    n = rng.binomial(int(rep * seconds), eta * det)
    est = system_efficiency(n / seconds, rep, det, counts_err=math.sqrt(n) / seconds)
    assert abs(est.value - eta) < 3 * est.uncertainty


# -- chains -------------------------------------------------------------------


def test_chain_examples():
    assert chain(EfficiencyBudget((Stage("x", 0.939),))).product == pytest.approx(0.939)
    rep = chain(EfficiencyBudget.from_dict({"source": 0.712, "detector": 0.79}))
    assert rep.product == pytest.approx(0.5625, abs=1e-4)
    assert rep.cumulative == pytest.approx([0.712, 0.5625], abs=1e-4)
    with pytest.raises(PreconditionError):
        chain(EfficiencyBudget.from_dict({"a": 0.5}), names=["b"])


@given(st.lists(values, min_size=1, max_size=8), st.randoms(use_true_random=False))
@settings(max_examples=80, deadline=None)
def test_chain_permutation_invariant(vals, rnd):
    b = EfficiencyBudget(tuple(Stage(f"s{i}", v) for i, v in enumerate(vals)))
    shuffled = list(b.stages)
    rnd.shuffle(shuffled)
    assert chain(EfficiencyBudget(tuple(shuffled))).product == pytest.approx(chain(b).product, rel=1e-12)


@given(st.lists(values, min_size=2, max_size=8), st.data())
@settings(max_examples=80, deadline=None)
def test_chain_associative(vals, data):
    cut = data.draw(st.integers(1, len(vals) - 1))
    b = EfficiencyBudget(tuple(Stage(f"s{i}", v) for i, v in enumerate(vals)))
    left = chain(b, [f"s{i}" for i in range(cut)]).product
    right = chain(b, [f"s{i}" for i in range(cut, len(vals))]).product
    assert left * right == pytest.approx(chain(b).product, rel=1e-12)


def test_chain_uncertainty_quadrature():
    b = EfficiencyBudget((Stage("a", 0.5, 0.05), Stage("b", 0.8, 0.08)))
    rep = chain(b)
    assert rep.uncertainty == pytest.approx(0.4 * math.sqrt(2) * 0.1)


@pytest.mark.parametrize("value", [0.0, 1.01, -0.2])
def test_stage_rejects_bad_values(value):
    with pytest.raises(PreconditionError):
        Stage("x", value)


def test_report_formats():
    rep = chain(EfficiencyBudget((Stage("source", 0.712, 0.018), Stage("detector", 0.79, 0.02))))
    assert json.loads(rep.to_json())["names"] == ["source", "detector"]
    lines = rep.to_text().splitlines()
    assert lines[0].split() == ["stage", "value", "cumulative"]
    assert len({line.index(line.split()[1]) + len(line.split()[1]) for line in lines[1:3]}) == 1
    assert "0.5625" in lines[-1]


def test_parse_budget():
    text = "[stage]\nname = source\nvalue = 0.712\nuncertainty = 0.018\n\n[stage]\nname = detector\nvalue = 0.79\n"
    b = parse_budget(text)
    assert [s.name for s in b.stages] == ["source", "detector"]
    assert b.stages[1].uncertainty == 0.0


@pytest.mark.parametrize("text, key", [
    ("[stage]\nname = a\nvalue = 0.5\ncolour = red\n", "colour"),
    ("[other]\nname = a\n", "other"),
    ("[stage]\nvalue = 0.5\n", "name"),
    ("[stage]\nname = a\nvalue = high\n", "value"),
    ("[stage]\nname = a\nvalue = 1.5\n", "value"),
    ("name = a\n", "budget file"),
])
def test_parse_budget_errors(text, key):
    with pytest.raises(PreconditionError, match=key):
        parse_budget(text)


# -- threshold ----------------------------------------------------------------


def test_threshold_example():
    r = threshold_check(0.712, 0.79)
    assert r.source_margin == pytest.approx(0.0453, abs=1e-4)
    assert r.product == pytest.approx(0.5625, abs=1e-4)
    assert r.product_margin == pytest.approx(-0.1042, abs=1e-4)
    assert r.source_above and not r.product_above


def test_threshold_boundaries():
    r = threshold_check(2 / 3, 1.0)
    assert r.source_margin == 0.0 and not r.source_above
    assert threshold_check(1.0, 1.0).product_above
    eps = 1e-12
    assert threshold_check(LOSS_TOLERANT_THRESHOLD + eps, 1.0).source_above
    assert not threshold_check(LOSS_TOLERANT_THRESHOLD - eps, 1.0).source_above
    assert threshold_check(1.0, LOSS_TOLERANT_THRESHOLD + eps).product_above
    assert not threshold_check(1.0, LOSS_TOLERANT_THRESHOLD - eps).product_above


# -- efficiency from squeezing or runs ------------------------------------------


def test_rho_examples():
    assert rho_from_runs_or_squeezing(1.0).rho == 0.0
    r = rho_from_runs_or_squeezing(0.65, 0.5652, sigma_ratio_err=0.02, detector_eff=0.79)
    assert r.rho_squeezing == pytest.approx(0.5775)
    assert r.consistent
    assert r.source_efficiency == pytest.approx(0.715, abs=5e-4)


def test_rho_super_poissonian():
    with pytest.raises(PreconditionError, match="super-Poissonian"):
        rho_from_runs_or_squeezing(1.1)
    r = rho_from_runs_or_squeezing(1.1, 0.5)
    assert r.rho == 0.5 and r.rho_squeezing is None and "super-Poissonian" in r.note


def test_rho_inconsistent_estimates():
    r = rho_from_runs_or_squeezing(0.5, 0.5652, sigma_ratio_err=0.01, fitted_rho_err=0.001)
    assert r.consistent is False


def test_rho_needs_input():
    with pytest.raises(PreconditionError):
        rho_from_runs_or_squeezing()


# -- mirrors ------------------------------------------------------------------


@pytest.mark.parametrize("n", [1.45, 2.1, 3.54])
def test_bare_interface_fresnel(n):
    s = DbrStack(pairs=0, n_substrate=n)
    assert dbr_reflectivity(s) == pytest.approx(((1 - n) / (1 + n)) ** 2, abs=1e-14)


def test_bottom_mirror():
    assert dbr_reflectivity(DbrStack(pairs=30)) >= 0.999


def test_monotone_in_pairs():
    r = [dbr_reflectivity(DbrStack(pairs=p)) for p in range(0, 41)]
    assert np.all(np.diff(r) >= -1e-15)
    assert r[-1] > 1 - 1e-5


@pytest.mark.parametrize("pairs", [0.5, 1, 5.5, 12, 30])
@pytest.mark.parametrize("hi, lo, sub", [("GaAs", "AlAs", "GaAs"), ("Ta2O5", "SiO2", "GaAs")])
def test_matrix_matches_closed_form(pairs, hi, lo, sub):
    s = DbrStack(REFRACTIVE_INDEX[hi], REFRACTIVE_INDEX[lo], pairs, 1.0, REFRACTIVE_INDEX[sub])
    assert abs(dbr_reflectivity(s) - quarter_wave_reflectance(s)) < 1e-10


def test_off_design_wavelength_lower():
    s = DbrStack(pairs=30)
    assert dbr_reflectivity(s, 800.0) < dbr_reflectivity(s)
    assert 0.0 <= dbr_reflectivity(s, 980.0) <= 1.0


@pytest.mark.parametrize("kw", [dict(n_high=1.0), dict(n_ambient=0.9), dict(pairs=2.3), dict(pairs=-1)])
def test_stack_validation(kw):
    with pytest.raises(PreconditionError):
        DbrStack(**kw)
