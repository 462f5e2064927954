import warnings

import numpy as np
import pytest

from omnisense.calibration import (CenteredSeries, bin_average, calibrate, center_signals, estimate_offset,
                                   fit_curve, fit_param_curves, fit_pv_at_distance, pool_series)
from omnisense.datasets import LightPath, SweepDataset, synthesize_sweep
from omnisense.errors import InputError
from omnisense.grid import SweepSpec
from omnisense.response import (DESIGN_FAMILIES, PARAM_NAMES, CurveFamily, NoiseSpec, ParamCurve, PVParams,
                                _pv_delta, peak_height)


def pv_profile(p: PVParams, n_per_bin=9):
    theta = (np.arange(40 * n_per_bin) + 0.5) * 360.0 / (40 * n_per_bin)
    s = _pv_delta(theta - 180.0, p.y0, p.A, p.m_u, p.w)
    return bin_average(CenteredSeries(100.0, theta, s))


# Binning

def test_bin_constant():
    th = np.random.default_rng(0).uniform(0, 360, 500)
    prof = bin_average(CenteredSeries(100.0, th, np.full(500, 3.25)))
    assert np.all(prof.means[prof.nonempty] == 3.25)
    assert prof.n_bins == 40


def test_bin_boundaries_and_mean():
    prof = bin_average(CenteredSeries(100.0, np.array([0.0, 1.0, 2.0]), np.array([7.0, 5.0, 15.0])))
    assert prof.counts[0] == 3 and prof.means[0] == pytest.approx(9.0)
    prof = bin_average(CenteredSeries(100.0, np.array([3.0, 4.0]), np.array([5.0, 15.0])))
    assert prof.means[0] == 10.0
    assert np.isnan(prof.means[1]) and prof.counts[1] == 0


def test_bin_permutation_invariant(rng):
    th = rng.uniform(0, 360, 1000)
    s = rng.normal(10, 3, 1000)
    ref = bin_average(CenteredSeries(1.0, th, s))
    perm = rng.permutation(1000)
    again = bin_average(CenteredSeries(1.0, th[perm], s[perm]))
    assert np.array_equal(ref.means, again.means, equal_nan=True)


def test_bin_count_check():
    with pytest.raises(InputError):
        bin_average(CenteredSeries(1.0, np.zeros(3), np.zeros(3)), n_bins=3)


# Per-distance fits

def test_pv_recovery():
    true = PVParams(12.0, 4000.0, 0.35, 60.0)
    params, fit = fit_pv_at_distance(pv_profile(true))
    assert np.allclose(params.as_array(), true.as_array(), rtol=1e-4)
    assert fit.converged


@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_pv_limits(mu):
    params, _ = fit_pv_at_distance(pv_profile(PVParams(5.0, 3000.0, mu, 50.0)))
    assert params.m_u == pytest.approx(mu, abs=0.02)


def test_pv_needs_bins():
    th = np.array([1.0, 10.0, 20.0])
    with pytest.raises(InputError):
        fit_pv_at_distance(bin_average(CenteredSeries(1.0, th, np.ones(3))))


# Parameter curves

@pytest.mark.parametrize("family,coeffs", [
    (CurveFamily.LOGISTIC, (60.0, 8.0, 180.0, 2.5)),
    (CurveFamily.EXP_DECAY2, (2000.0, 80000.0, 60.0, 30000.0, 250.0)),
    (CurveFamily.LORENTZ, (80.0, 20000.0, 400.0, 150.0)),
    (CurveFamily.LOG_NORMAL, (6.0, 4000.0, 150.0, 0.6)),
    (CurveFamily.EXP_DECAY1, (5000.0, 20000.0, 150.0)),
    (CurveFamily.CHAPMAN, (0.6, 0.01, 1.5)),
    (CurveFamily.RATIONAL, (0.001, 40.0, 0.02)),
])
def test_curve_recovery(family, coeffs):
    d = np.arange(70.0, 451.0, 10.0)
    y = ParamCurve(family, coeffs)(d)
    curve, fit = fit_curve(family, d, y)
    assert np.allclose(curve.coefficients, coeffs, rtol=1e-3)


def test_param_curves_from_model(model):
    d = np.arange(70.0, 451.0, 10.0)
    series = [(x, model.params_at(x)) for x in d]
    fitted, fits = fit_param_curves(series, model.design)
    for name in PARAM_NAMES:
        assert getattr(fitted, name).family is DESIGN_FAMILIES[model.design][name]
        assert np.allclose(getattr(fitted, name).coefficients, getattr(model, name).coefficients, rtol=1e-3)


def test_param_curves_with_noise(model):
    rng = np.random.default_rng(2)
    d = np.arange(70.0, 451.0, 10.0)
    series = []
    for x in d:
        p = model.params_at(x).as_array()
        series.append((x, PVParams(*(p * (1 + rng.normal(0, 0.01, 4))))))
    fitted, _ = fit_param_curves(series, model.design)
    dd = np.linspace(70, 450, 40)[:, None]
    tt = np.linspace(0, 360, 40)[None, :]
    for i in range(8):
        truth = model.pd_response(dd, tt, i)
        peak = model.pd_response(dd, 45.0 * i, i)
        assert np.max(np.abs(fitted.pd_response(dd, tt, i) - truth) / peak) <= 0.05


def test_param_curves_need_six_distances(model):
    series = [(x, model.params_at(x)) for x in (70.0, 80.0, 90.0, 100.0, 110.0)]
    with pytest.raises(InputError):
        fit_param_curves(series, model.design)


# Offset and centring

def test_offset_centred(noiseless_sweeps, model):
    free, _ = noiseless_sweeps[model.design]
    assert abs(estimate_offset(free)) <= 1e-3


@pytest.mark.parametrize("rot", [7.0, -7.0, 15.0])
def test_offset_rotated(model, rot):
    ds = synthesize_sweep(model, SweepSpec(d_step=20.0), rotation=rot)
    assert estimate_offset(ds) == pytest.approx(rot, abs=0.5)


def test_centred_peaks_at_180(noiseless_sweeps, model):
    free, _ = noiseless_sweeps[model.design]
    for d, s in center_signals(free, estimate_offset(free)).items():
        step = np.degrees(10.0 / d)
        for i in range(8):
            block = slice(i, None, 8)
            assert abs(s.theta[block][np.argmax(s.signal[block])] - 180.0) <= step


def test_rotation_by_45_same_pool(noiseless_sweeps, model):
    free, _ = noiseless_sweeps[model.design]
    rotated = free.rotated(45.0)
    off = estimate_offset(free)
    assert estimate_offset(rotated) == pytest.approx(off + 45.0, abs=1e-6)
    # Exactly 45 apart, so samples on bin edges fall the same way in both.
    a = center_signals(free, off)
    b = center_signals(rotated, off + 45.0)
    for d in a:
        pa, pb = bin_average(a[d]), bin_average(b[d])
        assert np.allclose(pa.means, pb.means, rtol=1e-9, equal_nan=True)


def test_post_pooling_without_shadow(noiseless_sweeps, model):
    free, post = noiseless_sweeps[model.design]
    single = center_signals(free, 0.0)
    both = pool_series(single, center_signals(post, 0.0))
    for d in single:
        assert np.allclose(bin_average(single[d]).means, bin_average(both[d]).means, equal_nan=True)
    assert pool_series(single).keys() == single.keys()


# End to end

def test_calibrate_round_trip(calibrated, model):
    fitted, report = calibrated[model.design]
    assert report.warnings == []
    dd = np.linspace(70, 450, 50)[:, None]
    tt = np.linspace(0, 360, 50, endpoint=False)[None, :]
    for i in range(8):
        truth = model.pd_response(dd, tt, i)
        assert np.max(np.abs(fitted.pd_response(dd, tt, i) - truth) / truth) <= 1e-3


def test_calibrate_free_only(model):
    spec = SweepSpec(d_step=20.0)
    fitted, report = calibrate(synthesize_sweep(model, spec))
    assert any("post path missing" in w for w in report.warnings)
    assert fitted.design is model.design
    assert report.to_json().startswith("{")


def test_calibrate_rejects_mismatch(vmodel, fmodel):
    spec = SweepSpec(d_step=20.0)
    with pytest.raises(InputError):
        calibrate(synthesize_sweep(vmodel, spec), synthesize_sweep(fmodel, spec, path=LightPath.POST))
    with pytest.raises(InputError):
        calibrate(synthesize_sweep(vmodel, spec),
                  synthesize_sweep(vmodel, SweepSpec(d_step=40.0), path=LightPath.POST))
