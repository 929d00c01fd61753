"""Highly adaptive lasso estimators with a sectional-variation budget."""
__version__ = "0.1.0"

from .basis import (BasisFunction, BasisSet, DomainTransform, HalModel, build_basis, design_matrix,
                    evaluate, gram_matrix, l2_distance, svn, svn_bruteforce)
from .data import DensityDataset, RegressionDataset, SurvivalDataset
from .density import DensityModel, build_density_basis, conditional_cdf, density_eval, fit_density
from .errors import (ConsistencyError, DomainError, HalkitError, NumericalError, ShapeError, SizeError,
                     UnsupportedError)
from .losses import (DensityOracle, LeastSquaresOracle, PoissonHazardOracle, density_risk, expand_person_period,
                     pl_risk, pl_risk_poisson)
from .model_select import CvReport, cv_folds, cv_select_M
from .regression import erm_basis_count, fit_regression, hal_basis_count
from .serialize import load_model, save_model
from .sieve import l2_error, project_L2, sieve_element, sup_error
from .solver import SolveReport, fw_gap, minimize_l1ball, project_l1
from .stepfn import PiecewiseConstantFn
from .survival import (HazardModel, fit_hazard, hazard_to_density, improve_risk_counterexample,
                       step_hazard_distances, survival_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
