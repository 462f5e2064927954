import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omnisense.errors import ExtrapolationWarning, InputError, InvalidParams
from omnisense.response import (N_PD, CurveFamily, Design, NoiseSpec, ParamCurve, PVParams, Readout, ResponseModel,
                                SensorLayout, accumulated_signal, eval_param_curve, load_model, pd_response,
                                peak_height, pseudo_voigt, save_model, synthesize_readout, synthesize_signals,
                                wrap_delta)

FOUR_LN2 = 4 * math.log(2)


def lorentzian(x, x0, A, w):
    return 2 * A * w / (math.pi * (4 * (x - x0) ** 2 + w ** 2))


def gaussian(x, x0, A, w):
    return A * math.sqrt(FOUR_LN2 / (math.pi * w ** 2)) * math.exp(-FOUR_LN2 * (x - x0) ** 2 / w ** 2)


def test_layout():
    lay = SensorLayout(Design.VERTICAL)
    assert lay.pd_angles == tuple(45.0 * i for i in range(8))
    assert lay.n_pd == 8 and lay.theta0 == 180.0
    with pytest.raises(InputError):
        SensorLayout(Design.FLOWER, n_pd=6)


# Pseudo-Voigt

def test_pure_lorentzian_peak():
    p = PVParams(0.0, 50.0, 1.0, 30.0)
    assert pseudo_voigt(180.0, 180.0, p) == pytest.approx(2 * 50 / (math.pi * 30), rel=1e-14)


def test_pure_gaussian_half_width():
    p = PVParams(0.0, 50.0, 0.0, 30.0)
    peak = pseudo_voigt(180.0, 180.0, p)
    assert pseudo_voigt(195.0, 180.0, p) == pytest.approx(peak / 2, rel=1e-12)
    assert pseudo_voigt(165.0, 180.0, p) == pytest.approx(peak / 2, rel=1e-12)


def test_hand_value():
    p = PVParams(1.0, 100.0, 0.5, 40.0)
    expected = 1 + 100 * (0.5 * 2 / (math.pi * 40) + 0.5 * math.sqrt(FOUR_LN2 / (math.pi * 1600)))
    assert pseudo_voigt(180.0, 180.0, p) == pytest.approx(expected, rel=1e-14)
    # 2/(40 pi) = 0.0159155, sqrt(4 ln2 / (1600 pi)) = 0.0234859
    assert expected == pytest.approx(1 + 100 * 0.5 * (0.0159155 + 0.0234859), abs=1e-5)
    assert peak_height(p) == pytest.approx(expected - 1, rel=1e-14)


@given(st.floats(0, 359.999), st.floats(1, 200), st.floats(0.5, 150))
def test_limits_match_standalone(theta, A, w):
    # Compare on the wrapped axis the model uses.
    x = 180.0 + float(wrap_delta(theta - 180.0))
    assert pseudo_voigt(theta, 180.0, PVParams(0, A, 1.0, w)) == pytest.approx(lorentzian(x, 180, A, w), rel=1e-12, abs=1e-300)
    assert pseudo_voigt(theta, 180.0, PVParams(0, A, 0.0, w)) == pytest.approx(gaussian(x, 180, A, w), rel=1e-12, abs=1e-300)


@given(st.floats(0, 180), st.floats(0, 360), st.floats(0, 1))
def test_even_about_center(delta, theta0, mu):
    p = PVParams(2.0, 80.0, mu, 35.0)
    a = pseudo_voigt(theta0 + delta, theta0, p)
    b = pseudo_voigt(theta0 - delta, theta0, p)
    assert a == pytest.approx(b, rel=1e-12)


def test_peak_monotone_in_A():
    heights = [peak_height(PVParams(1.0, A, 0.4, 30.0)) for A in (1, 2, 5, 10, 100)]
    assert all(b > a for a, b in zip(heights, heights[1:]))


def test_wrap_seam():
    assert float(wrap_delta(180.0)) == 180.0
    assert float(wrap_delta(-180.0)) == 180.0
    assert float(wrap_delta(190.0)) == pytest.approx(-170.0)
    p = PVParams(0, 10, 0.5, 20)
    assert pseudo_voigt(359.0, 1.0, p) == pytest.approx(pseudo_voigt(3.0, 1.0, p), rel=1e-12)


def test_pv_errors_and_warnings():
    with pytest.raises(InvalidParams):
        pseudo_voigt(0.0, 0.0, PVParams(0, 1, 0.5, 0.0))
    with pytest.warns(RuntimeWarning):
        pseudo_voigt(0.0, 0.0, PVParams(0, 1, 1.2, 10.0))


# Parameter curves

def test_exp_decay1_constant():
    c = ParamCurve(CurveFamily.EXP_DECAY1, (7.0, 0.0, 50.0))
    assert np.all(eval_param_curve(c, np.linspace(70, 450, 20)) == 7.0)


def test_chapman_saturates():
    c = ParamCurve(CurveFamily.CHAPMAN, (1.0, 1e3, 2.5), (1.0, 450.0))
    assert eval_param_curve(c, np.array([1.0, 10.0, 400.0])) == pytest.approx(1.0, abs=1e-12)


def test_rational_line():
    c = ParamCurve(CurveFamily.RATIONAL, (0.0, 3.0, 0.25))
    d = np.linspace(70, 450, 9)
    assert np.allclose(eval_param_curve(c, d), 3.0 + 0.25 * d, rtol=0, atol=1e-12)


@pytest.mark.parametrize("family,coeffs,expected", [
    (CurveFamily.LOGISTIC, (10.0, 2.0, 100.0, 2.0), 2.0 + 8.0 / 2.0),
    (CurveFamily.EXP_DECAY2, (1.0, 2.0, 100.0, 3.0, 50.0), 1 + 2 * math.exp(-1) + 3 * math.exp(-2)),
    (CurveFamily.LORENTZ, (1.0, 10.0, 20.0, 100.0), 1 + 2 * 10 * 20 / (math.pi * 400)),
    (CurveFamily.LOG_NORMAL, (1.0, 10.0, 100.0, 0.5), 1 + 10 / (math.sqrt(2 * math.pi) * 0.5 * 100)),
])
def test_family_formulas_at_100(family, coeffs, expected):
    assert eval_param_curve(ParamCurve(family, coeffs), 100.0) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("family,coeffs", [
    (CurveFamily.EXP_DECAY1, (1.0, 1.0, 0.0)),
    (CurveFamily.EXP_DECAY2, (1.0, 1.0, 10.0, 1.0, -5.0)),
    (CurveFamily.LORENTZ, (1.0, 1.0, -1.0, 100.0)),
    (CurveFamily.LOG_NORMAL, (1.0, 1.0, 0.0, 0.5)),
    (CurveFamily.LOGISTIC, (1.0, 1.0, 2.0)),
])
def test_invalid_coefficients(family, coeffs):
    with pytest.raises(InvalidParams):
        ParamCurve(family, coeffs)


def test_extrapolation_warns():
    c = ParamCurve(CurveFamily.EXP_DECAY1, (1.0, 1.0, 10.0))
    with pytest.warns(ExtrapolationWarning):
        c(500.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        c(450.0)


def test_design_binding_enforced(vmodel, fmodel):
    with pytest.raises(InvalidParams):
        ResponseModel(SensorLayout(Design.VERTICAL), fmodel.y0, vmodel.A, vmodel.m_u, vmodel.w)
    short = ParamCurve(CurveFamily.LORENTZ, vmodel.w.coefficients, (70.0, 400.0))
    with pytest.raises(InvalidParams):
        ResponseModel(SensorLayout(Design.VERTICAL), vmodel.y0, vmodel.A, vmodel.m_u, short)


# Model

def test_peak_localisation(model):
    p = model.params_at(200.0)
    at_peak = model.pd_response(200.0, 90.0, 2)
    opposite = model.pd_response(200.0, 90.0, 6)
    assert at_peak == pytest.approx(p.y0 + peak_height(p), rel=1e-12)
    others = [model.pd_response(200.0, 90.0, i) for i in range(8)]
    assert at_peak == max(others)
    assert opposite == min(others)
    assert opposite < p.y0 + 0.5 * peak_height(p)


@given(st.floats(70, 450), st.floats(0, 360), st.integers(0, 7))
def test_rotational_symmetry(d, theta, i):
    from omnisense.reference import flower_model, vertical_model
    for m in (vertical_model(), flower_model()):
        a = m.pd_response(d, theta + 45.0, (i + 1) % 8)
        b = m.pd_response(d, theta, i)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
        assert m.pd_response(d, theta + 360.0, i) == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_pd_response_bad_index(vmodel):
    with pytest.raises(InputError):
        pd_response(vmodel, 100.0, 0.0, 8)


def test_model_json_round_trip(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    assert doc["design"] == model.design.value and set(doc["curves"]) == {"y0", "A", "m_u", "w"}
    again = load_model(path)
    assert again == model
    assert np.array_equal(again.readout(123.0, 45.6), model.readout(123.0, 45.6))


def test_load_model_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InputError):
        load_model(bad)
    with pytest.raises(InputError):
        load_model(tmp_path / "missing.json")
    bad.write_text(json.dumps({"format": "something-else"}))
    with pytest.raises(InputError):
        load_model(bad)


# Readouts

def test_noiseless_readout_exact(model):
    r = synthesize_readout(model, 150.0, 77.0)
    assert np.array_equal(r.signals, model.readout(150.0, 77.0))
    assert r.truth == (150.0, 77.0)


def test_seeded_noise_deterministic(model):
    a = synthesize_readout(model, 150.0, 77.0, NoiseSpec(0.02, seed=9))
    b = synthesize_readout(model, 150.0, 77.0, NoiseSpec(0.02, seed=9))
    assert a == b


def test_noise_mean(model):
    sigma = 0.01
    d, theta = 120.0, 10.0
    clean = model.readout(d, theta)
    s = synthesize_signals(model, np.full(10_000, d), np.full(10_000, theta), NoiseSpec(sigma),
                           np.random.default_rng(4))
    abs_sigma = sigma * model.global_peak
    # Clamping at zero biases channels that sit near zero; check the unclamped ones.
    ok = clean > 5 * abs_sigma
    assert ok.any()
    assert np.all(np.abs(s.mean(axis=0) - clean)[ok] <= 3 * abs_sigma / 100)
    assert np.all(s >= 0)


def test_readout_validation():
    with pytest.raises(InputError):
        Readout(np.ones(7))
    with pytest.raises(InputError):
        Readout(np.array([1, 1, 1, 1, 1, 1, 1, -1.0]))
    with pytest.raises(InputError):
        Readout(np.array([1, 1, 1, 1, 1, 1, 1, np.nan]))
    with pytest.raises(InputError):
        NoiseSpec(-0.1)


def test_accumulated_signal():
    assert accumulated_signal(Readout(np.zeros(8))) == 0.0
    assert accumulated_signal(Readout(np.ones(8))) == 8.0


def test_vertical_accumulated_more_uniform(vmodel, fmodel):
    theta = np.linspace(0, 360, 721)
    for d in (70.0, 200.0, 400.0):
        ratios = []
        for m in (vmodel, fmodel):
            acc = synthesize_signals(m, np.full(theta.size, d), theta).sum(axis=1)
            ratios.append((acc.max() - acc.min()) / acc.mean())
        assert ratios[0] < ratios[1]


def test_shifted_readout():
    r = Readout(np.arange(8.0), truth=(100.0, 350.0))
    s = r.shifted(1)
    assert s.signals[1] == 0.0 and s.signals[0] == 7.0
    assert s.truth == (100.0, 35.0)
    assert N_PD == 8
