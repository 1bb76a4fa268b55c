import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoperim import experiments as E
from isoperim.generators import sharpness_profile


# ----------------------------------------------------------------------------
# Exponent table
# ----------------------------------------------------------------------------


def test_exponents_n2_p4():
    t = E.ExponentTable(2, 4.0).to_dict()
    assert t["beta"] == 1 / 8
    assert t["hausdorff_exp"] == 0.5
    assert t["lipschitz_exp"] == pytest.approx(1 / 3, abs=1e-15)
    assert t["curvature_exp"] == 3 / 16
    assert t["cardinal_exp"] == 1 / 8
    assert t["isodiametric"] == pytest.approx(math.sqrt(3 * math.pi) / 4, abs=1e-15)
    assert (t["bonnesen_hausdorff"], t["bonnesen_area"]) == (16 * math.pi, 4 * math.pi)


@given(n=st.integers(1, 8), p=st.integers(1, 40))
def test_exponents_match_rational_closed_forms(n, p):
    F = Fraction
    assert E.beta(n) == pytest.approx(float(min(F(1, 4 * n), F(1, 8))), abs=1e-15)
    if p > n:
        assert E.hausdorff_exp(n, p) == pytest.approx(float(F(2 * p - n, 2 * p - 2 * n + n * p)), abs=1e-15)
        assert E.lipschitz_exp(n, p) == pytest.approx(float(F(2 * (p - n), p * (n + 2) - 2 * n)), abs=1e-15)
    assert E.curvature_exp(n, p) == pytest.approx(float(F(p - n + 1, 4 * p)), abs=1e-15)
    assert E.cardinal_exp(n, p) == pytest.approx(float(F(p - n, 4 * p)), abs=1e-15)


# ----------------------------------------------------------------------------
# fit_exponent
# ----------------------------------------------------------------------------


def test_fit_exact_power_law():
    x = np.geomspace(1e-4, 1e-1, 7)
    s, b, se = E.fit_exponent(x, 3 * x ** 0.7)
    assert s == pytest.approx(0.7, abs=1e-12)
    assert b == pytest.approx(math.log(3), abs=1e-12)
    assert se < 1e-12


def test_fit_log_corrected():
    x = np.geomspace(1e-6, 1e-2, 6)
    r = E.fit_exponent(x, x ** 0.5 * np.sqrt(-np.log(x)), "sqrt_neg_log")
    assert r.slope == pytest.approx(0.5, abs=1e-10)


def test_fit_noisy_ci_contains_truth():
    rng = np.random.default_rng(0)
    x = np.geomspace(1e-3, 1, 12)
    r = E.fit_exponent(x, x ** 2 * (1 + 0.01 * rng.uniform(-1, 1, len(x))))
    lo, hi = r.ci()
    assert lo <= 2 <= hi
    assert r.stderr > 0


@given(sx=st.floats(1e-3, 1e3), sy=st.floats(1e-3, 1e3))
def test_fit_slope_rescaling_invariant(sx, sy):
    x = np.array([0.01, 0.03, 0.1, 0.2, 0.5])
    y = np.array([1.0, 2.5, 3.1, 7.0, 9.0])
    assert E.fit_exponent(sx * x, sy * y).slope == pytest.approx(E.fit_exponent(x, y).slope, abs=1e-12)


@pytest.mark.parametrize("xs,ys,corr", [
    ([1, 2, 3], [1, 2, 3], "none"),
    ([1, 2, 3, 0], [1, 2, 3, 4], "none"),
    ([1, 2, 3, 4], [1, -2, 3, 4], "none"),
    ([0.1, 0.2, 0.3, 2.0], [1, 2, 3, 4], "sqrt_neg_log"),
    ([1, 2, 3, 4], [1, 2, 3, 4], "bogus"),
])
def test_fit_rejects_bad_input(xs, ys, corr):
    with pytest.raises(ValueError):
        E.fit_exponent(xs, ys, corr)


# ----------------------------------------------------------------------------
# Check catalog and verdict semantics
# ----------------------------------------------------------------------------


def test_catalog():
    cat = E.registered_checks()
    assert len(cat) >= 10
    assert len({c.id for c in cat}) == len(cat)
    assert all(c.theorem for c in cat)
    assert isinstance(cat, tuple)
    with pytest.raises(Exception):
        cat[0].q = 1.0


def _records(xs, ys, key="y"):
    return [{"param": i, "status": "ok", "deficit": float(x), key: float(y)}
            for i, (x, y) in enumerate(zip(xs, ys))]


def _fitted(q=0.5):
    return E.Check("T", "test", "test", "fitted", y="y", q=q)


def test_fitted_check_holds_for_power_law():
    x = np.geomspace(1e-5, 1e-1, 9)
    v = E.evaluate_check(_fitted(), _records(x, 2 * x ** 0.5))
    assert v.status == "holds"
    assert v.C_fit == pytest.approx(2.0, rel=1e-12)
    assert v.growth == pytest.approx(1.0, rel=1e-9)


def test_fitted_check_violated_for_slower_decay():
    x = np.geomspace(1e-6, 1e-1, 9)
    v = E.evaluate_check(_fitted(), _records(x, x ** 0.1))
    assert v.status == "violated"
    assert v.growth > 10
    assert v.witness["param"] == 0


def test_fitted_check_ignores_vanishing_ranges():
    x = np.geomspace(1e-5, 1e-1, 5)
    y = np.array([0.0, 0.0, 1e-3, 2e-3, 3e-2])
    v = E.evaluate_check(_fitted(), _records(x, y))
    assert math.isfinite(v.growth)


def test_fitted_check_needs_two_ranges():
    v = E.evaluate_check(_fitted(), _records([0.1, 0.11], [1.0, 1.0]))
    assert v.status == "inconclusive"


def test_deficit_cutoff():
    x = np.array([1e-3, 1e-2, 0.9])
    y = np.array([1e-3, 1e-2, 100.0])
    assert E.evaluate_check(_fitted(), _records(x, y)).n_samples == 2
    wide = E.evaluate_check(_fitted(), _records(x, y), max_deficit=1.0)
    assert wide.n_samples == 3
    assert wide.C_fit == pytest.approx(100 / math.sqrt(0.9))


def test_c1_exact_square():
    res = E.run_sweep({"family": "square", "grid": [1.0, 2.0], "measurements": ["bonnesen"],
                       "checks": ["C1", "C2"]})
    r = res.records[0]
    assert r["bonnesen_rhs"] == pytest.approx(16 - 4 * math.pi, abs=1e-12)
    assert r["d_H_circle"] == pytest.approx((math.sqrt(2) / 2 - 0.5) / 2, abs=1e-8)
    assert res.verdicts["C1"].status == "holds"
    assert res.verdicts["C2"].status == "holds"


# ----------------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------------


def test_empty_measurements_records_only():
    res = E.run_sweep({"family": "icosphere", "grid": [0, 1]})
    assert [set(r) for r in res.records] == [{"param", "status"}] * 2
    assert res.verdicts == {} and res.fits == []


def test_unknown_names_rejected():
    with pytest.raises(ValueError):
        E.run_sweep({"family": "nope", "grid": [1]})
    with pytest.raises(ValueError):
        E.run_sweep({"family": "icosphere", "grid": [1], "measurements": ["nope"]})


def test_sample_failures_recorded():
    cfg = {"family": "harmonic", "grid": [0.05, 0.1, 5.0], "params": {"level": 2},
           "measurements": ["deficit"]}
    res = E.run_sweep(cfg)
    assert [r["status"] for r in res.records] == ["ok", "ok", "failed"]
    assert "GeneratorError" in res.records[2]["error"]
    cfg["grid"] = [0.05, 5.0, 6.0]
    with pytest.raises(E.SweepError) as info:
        E.run_sweep(cfg)
    assert len(info.value.records) == 3


def test_columns_follow_config_order():
    res = E.run_sweep({"family": "icosphere", "grid": [1], "measurements": ["deficit"],
                       "columns": ["radius", "deficit"]})
    assert res.columns()[:4] == ["param", "status", "radius", "deficit"]
    assert res.columns()[-1] == "error"


def test_threads_do_not_change_records():
    cfg = {"family": "harmonic", "grid": [0.025, 0.05, 0.1], "params": {"level": 3},
           "measurements": ["deficit", "asymmetry", "z"], "seed": 4,
           "options": {"sampler": {"samples": 4096}}}
    assert E.run_sweep(cfg, threads=1).records == E.run_sweep(cfg, threads=3).records


def test_verdicts_reproducible_from_records():
    cfg = {"family": "harmonic", "grid": [0.0125, 0.025, 0.05, 0.1], "params": {"level": 3},
           "measurements": ["deficit", "z", "du"], "checks": ["C6", "C11"]}
    res = E.run_sweep(cfg)
    for cid, v in res.verdicts.items():
        assert E.evaluate_check(cid, res.records).to_dict() == v.to_dict()
    assert res.verdicts["C11"].status == "holds"


def test_sharpness_sweep_reports_hausdorff_slope():
    grid = [1e-5, 1e-4, 1e-3, 1e-2]
    res = E.run_sweep({"family": "sharpness", "grid": grid,
                       "measurements": ["deficit", "deficit_excess", "hausdorff_to_model"],
                       "fits": [{"x": "deficit_excess", "y": "d_H", "log_correction": "sqrt_neg_log"}]})
    f = res.fits[0]
    assert f["n_points"] == 4 and math.isfinite(f["slope"]) and f["stderr"] > 0
    d = res.series("d_H")
    assert np.all(np.diff(d) > 0)
    # the graph height is the profile's peak, up to the mesh's chord floor
    for t, dh in zip(grid, d):
        assert dh >= sharpness_profile(0.0, t) - 1e-3


def test_provenance_tags():
    assert E.provenance("asymmetry", 3) == "sampled"
    assert E.provenance("asymmetry", 2) == "exact"
    assert E.provenance("asymmetry_se", 3) == "error"
    assert E.provenance("deficit", 3) == "exact"
