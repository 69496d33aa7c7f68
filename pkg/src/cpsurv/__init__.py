"""Counting-process survival analysis: estimators, tests, Cox regression and a Monte Carlo lab."""

from .cox import CoxFit, breslow_baseline, fit, martingale_residuals, partial_loglik, risk_set_data, score_process
from .errors import InputError, NumericalError, SurvivalError
from .event_data import (
    CENSORED,
    CountingPanel,
    EventRecord,
    RecordSet,
    build_panel,
    read_records_csv,
    survival_records,
    validate_records,
)
from .ksample import k_sample_test, two_sample_test, weight_table
from .multistate import aalen_johansen, aj_covariance, aj_endpoint, cumulative_intensity_matrix
from .stepfun import StepFunction
from .univariate import confidence_interval, kaplan_meier, nelson_aalen, product_integral

__version__ = "0.1.0"

__all__ = [
    "CENSORED", "CountingPanel", "CoxFit", "EventRecord", "InputError", "NumericalError", "RecordSet",
    "StepFunction", "SurvivalError", "aalen_johansen", "aj_covariance", "aj_endpoint", "breslow_baseline", "build_panel",
    "confidence_interval", "cumulative_intensity_matrix", "fit", "k_sample_test", "kaplan_meier",
    "martingale_residuals", "nelson_aalen", "partial_loglik", "product_integral", "read_records_csv",
    "risk_set_data", "score_process", "survival_records", "two_sample_test", "validate_records", "weight_table",
]
