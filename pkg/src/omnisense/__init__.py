"""Forward model, calibration and localization for 8-photodiode catadioptric IR range-and-bearing sensors."""

from .calibration import CalibrationReport, calibrate
from .datasets import LightPath, SweepDataset, read_sweep_csv, synthesize_sweep, write_sweep_csv
from .errors import (DegenerateInput, DimensionMismatch, DomainError, EmptyGrid, ExtrapolationWarning, FitFailed,
                     GridMismatch, InputError, InsufficientHits, InvalidParams, MissingTruth, NumericalError,
                     OmnisenseError, SingularJacobian)
from .evaluation import ComparisonSummary, MAEReport, angular_error, closed_loop_eval, compare_designs, mae_over_sweep
from .geometry import (FLOWER, VERTICAL_STAGE1, VERTICAL_STAGE2, ConeEstimate, CubicSegment, FanReport,
                       MirrorProfile, Ray2D, ScreenMeasurement, cone_from_screens, eval_profile, load_profile,
                       reflect_ray, trace_emission_fan)
from .grid import SweepSpec
from .localization import PoseEstimate, chi_sq, coarse_sweep, fine_sweep, localize
from .nlls import FitResult, nlls_fit
from .response import (CurveFamily, Design, NoiseSpec, ParamCurve, PVParams, Readout, ResponseModel, SensorLayout,
                       accumulated_signal, eval_param_curve, load_model, pd_response, pseudo_voigt, save_model,
                       synthesize_readout)

__version__ = "0.1.0"
