"""Hand-chosen response models used as ground truth for synthetic experiments.

No fitted coefficients for the real sensors are published, so these are
illustrative only. They follow the qualitative regimes of the two designs:
the vertical design has broad, strongly distance-dependent peaks (an
almost uniform accumulated signal), the flower design narrow peaks whose
height changes less with distance.
"""

from __future__ import annotations

from .response import CurveFamily, Design, ParamCurve, ResponseModel, SensorLayout

DOMAIN = (70.0, 450.0)


def vertical_model(domain=DOMAIN) -> ResponseModel:
    return ResponseModel(
        SensorLayout(Design.VERTICAL),
        y0=ParamCurve(CurveFamily.LOGISTIC, (600.0, 50.0, 180.0, 2.5), domain),
        A=ParamCurve(CurveFamily.EXP_DECAY2, (2000.0, 80000.0, 60.0, 30000.0, 250.0), domain),
        m_u=ParamCurve(CurveFamily.LORENTZ, (0.25, 60.0, 300.0, 200.0), domain),
        w=ParamCurve(CurveFamily.LORENTZ, (140.0, 20000.0, 400.0, 150.0), domain),
    )


def flower_model(domain=DOMAIN) -> ResponseModel:
    return ResponseModel(
        SensorLayout(Design.FLOWER),
        y0=ParamCurve(CurveFamily.LOG_NORMAL, (20.0, 3000.0, 150.0, 0.6), domain),
        A=ParamCurve(CurveFamily.EXP_DECAY1, (5500.0, 8000.0, 250.0), domain),
        m_u=ParamCurve(CurveFamily.CHAPMAN, (0.95, 0.03, 1.5), domain),
        w=ParamCurve(CurveFamily.RATIONAL, (0.0010256, 160.769, 0.0), domain),
    )


REFERENCE_MODELS = {Design.VERTICAL: vertical_model, Design.FLOWER: flower_model}
