import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zicount.dataset import ObservationTable
from zicount.diagnostics import (
    quantile_residuals,
    residuals_from_bounds,
    simulate,
    term_effects,
    worm_from_values,
    worm_series,
    write_residuals,
    write_term_effects,
    write_worm,
)
from zicount.fitting import FitOptions, ModelSpec, fit
from zicount.specfun import std_normal_pdf


def test_midpoint_example():
    rs = residuals_from_bounds([0.2], [0.6], mode="midpoint")
    assert rs.u[0] == 0.4
    assert rs.z[0] == pytest.approx(-0.2533471031357997, abs=1e-12)


def test_continuous_limit_median():
    rs = residuals_from_bounds([0.5 - 1e-13], [0.5], seed=1)
    assert abs(rs.z[0]) < 1e-11


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=50),
       st.integers(0, 2**31))
@settings(max_examples=100)
def test_u_within_bounds(pairs, seed):
    lo = np.array([min(a, b) for a, b in pairs])
    hi = np.array([max(a, b) for a, b in pairs])
    rs = residuals_from_bounds(lo, hi, seed=seed)
    ok = rs.valid
    assert np.all(rs.u[ok] >= lo[ok]) and np.all(rs.u[ok] <= hi[ok])
    assert np.all((rs.u[ok] > 0) & (rs.u[ok] < 1))
    assert np.all(np.isnan(rs.z[~ok]))
    assert np.all(np.isfinite(rs.z[ok]))


def test_impossible_observation_flagged(trajan_data):
    fm = fit(ModelSpec.build("PO"), trajan_data, FitOptions(n_starts=1))
    fm.coefficients["mu"] = np.array([700.0])  # exp(700): every finite count has F(y) = F(y-1) = 0
    rs = quantile_residuals(fm, trajan_data, mode="midpoint")
    assert not rs.valid.any()
    assert np.isnan(rs.z).all()


def test_residuals_reproducible_and_seed_dependent(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    a = quantile_residuals(fm, trajan_data, seed=7)
    b = quantile_residuals(fm, trajan_data, seed=7)
    c = quantile_residuals(fm, trajan_data, seed=8)
    assert np.array_equal(a.z, b.z)
    assert not np.array_equal(a.z, c.z)
    assert np.array_equal(a.lower, c.lower) and np.array_equal(a.upper, c.upper)
    assert np.all((c.u >= c.lower) & (c.u <= c.upper))


def test_midpoint_mode_deterministic(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    a = quantile_residuals(fm, trajan_data, seed=1, mode="midpoint")
    b = quantile_residuals(fm, trajan_data, seed=2, mode="midpoint")
    assert np.array_equal(a.z, b.z)
    assert np.array_equal(a.u, 0.5 * (a.lower + a.upper))


def test_unknown_mode():
    with pytest.raises(ValueError):
        residuals_from_bounds([0.1], [0.2], mode="deviance")


def test_band_formula_at_median():
    m = 270
    band = 1.96 * math.sqrt(0.25 / m) / std_normal_pdf(0.0)
    assert band == pytest.approx(0.1495, abs=5e-5)
    # odd m puts a plotting position exactly at p = 1/2
    ws = worm_from_values(np.zeros(271))
    mid = 135
    assert ws.p[mid] == 0.5 and ws.q[mid] == pytest.approx(0.0, abs=1e-15)
    assert ws.band[mid] == pytest.approx(1.96 * math.sqrt(0.25 / 271) / std_normal_pdf(0.0), rel=1e-14)


def test_worm_shape_invariants():
    z = np.random.default_rng(0).normal(size=140)
    ws = worm_from_values(z)
    assert ws.m == 140
    assert np.all(np.diff(ws.q) > 0)
    assert np.all(ws.band > 0)
    mid = ws.m // 2
    assert np.all(np.diff(ws.band[:mid]) < 0) and np.all(np.diff(ws.band[mid:]) > 0)
    assert np.allclose(ws.p, (np.arange(1, 141) - 0.375) / 140.25)


def test_perfect_fit_zero_deviation():
    q = worm_from_values(np.zeros(50)).q
    ws = worm_from_values(q[::-1])
    assert np.allclose(ws.deviation, 0.0, atol=1e-15)


def test_small_group_rejected():
    with pytest.raises(ValueError):
        worm_from_values(np.zeros(7))


def test_iid_normal_coverage():
    rng = np.random.default_rng(123)
    fr = [worm_from_values(rng.normal(size=270)).fraction_inside() for _ in range(500)]
    assert np.mean(fr) >= 0.93


def test_group_worms_trajan(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    rs = quantile_residuals(fm, trajan_data, seed=0)
    groups = worm_series(rs, trajan_data, "photoperiod")
    assert [w.label for w in groups] == ["photoperiod=8", "photoperiod=16"]
    assert [w.m for w in groups] == [140, 130]
    with pytest.raises(ValueError):
        worm_series(rs, trajan_data, "colour")


def test_group_worms_inside_bands_on_average(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    fr = np.array([[w.fraction_inside() for w in
                    worm_series(quantile_residuals(fm, trajan_data, seed=s), trajan_data, "photoperiod")]
                   for s in range(40)])
    assert np.all(fr.mean(axis=0) >= 0.95)


def test_term_effects_zinb(published_fits):
    fm = published_fits["ZINB"]
    eff = {(e.param, e.label): e for e in term_effects(fm)}
    assert [e.estimate for e in term_effects(fm)] == list(fm.theta)
    for e in eff.values():
        assert e.lower <= e.estimate <= e.upper
        assert e.upper - e.lower == pytest.approx(2 * 1.96 * e.se, rel=1e-12)
    m8, m16 = eff[("mu", "photo8")], eff[("mu", "photo16")]
    assert m8.lower > 0 and m16.lower > 0
    assert m16.upper < m8.lower or m8.upper < m16.lower
    n16 = eff[("nu", "photo16")]
    assert n16.lower < 0 < n16.upper


def test_term_effect_intercept_only(trajan_data):
    fm = fit(ModelSpec.build("PO"), trajan_data, FitOptions(n_starts=1))
    (e,) = term_effects(fm)
    assert e.label == "(Intercept)"
    assert e.estimate == pytest.approx(math.log(trajan_data.response.mean()), abs=1e-7)


def test_term_effects_without_vcov(published_fits):
    import copy
    fm = copy.copy(published_fits["ZIP"])
    fm.vcov = None
    eff = term_effects(fm)
    assert all(not e.has_interval and e.lower is None for e in eff)


def test_intervals_shrink_with_n(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    rng = np.random.default_rng(5)
    idx = np.resize(np.arange(270), 2700)
    big = trajan_data.subset(idx)
    widths = []
    for d in (trajan_data, big):
        sim = simulate(fm, d, rng)
        f2 = fit(fm.spec, sim, FitOptions(n_starts=2))
        widths.append(np.array([e.upper - e.lower for e in term_effects(f2)]))
    assert np.all(widths[1] < widths[0])


def test_simulate_reproducible(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    a = simulate(fm, trajan_data, np.random.default_rng(1))
    b = simulate(fm, trajan_data, np.random.default_rng(1))
    assert np.array_equal(a.response, b.response)
    assert a.n == 270 and np.array_equal(a.factors["photoperiod"], trajan_data.factors["photoperiod"])


def test_writers(published_fits, trajan_data, tmp_path):
    fm = published_fits["ZINB"]
    rs = quantile_residuals(fm, trajan_data, seed=3)
    write_residuals(rs, tmp_path / "r.csv", trajan_data)
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 270 and rows[0]["photoperiod"] == "8"
    assert float(rows[5]["z"]) == pytest.approx(rs.z[5], rel=1e-11)
    ws = worm_series(rs)[0]
    write_worm(ws, tmp_path / "w.csv")
    assert len(list(csv.DictReader(open(tmp_path / "w.csv")))) == 270
    write_term_effects(term_effects(fm), tmp_path / "t.csv")
    t = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [r["term"] for r in t][:2] == ["photo8", "photo16"]


def test_simulated_fit_residual_moments(published_fits, trajan_data):
    fm = published_fits["ZINB"]
    sim = simulate(fm, trajan_data.subset(np.resize(np.arange(270), 2000)), np.random.default_rng(9))
    f2 = fit(fm.spec, sim, FitOptions(n_starts=2))
    z = quantile_residuals(f2, sim, seed=0).z
    assert abs(z.mean()) < 0.08 and 0.93 < z.std(ddof=1) < 1.07
    assert isinstance(sim, ObservationTable)
