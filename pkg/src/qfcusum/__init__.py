"""Change-point testing for high-dimensional linear regression with a
randomized quadratic-form CUSUM scan."""

from .calibration import (CriticalValueTable, NuisanceEstimates, TestOutcome, cached_table,
                          estimate_nuisance, run_test, simulate_critical_values)
from .data import Dataset, Interval, load_csv, sample_covariance, write_csv
from .datagen import ChangePattern, GeneratedSample, ScenarioSpec, build_beta, build_sigma, generate
from .errors import (DataError, DegeneratePathError, DegenerateVarianceError, DomainError,
                     InsufficientDataError, NumericError, ParseError, QFCusumError,
                     UnsupportedDiagnosticError)
from .lasso import (IntervalLassoFit, LassoConfig, cross_validate_lambda, fit_interval_lasso,
                    kkt_residual, lambda_max, lambda_path, soft_threshold)
from .scan import (ScanConfig, ScanResult, alternative_diagnostics, bias_corrected_qf,
                   goodness_of_fit, localize, randomized_statistic, scan, scan_fixed)

__version__ = "0.1.0"
