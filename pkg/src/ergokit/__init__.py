"""Numerical toolkit for statistical properties of expanding and solenoidal maps.

Transfer operators applied through exact branch inverses, Ulam discretization
with sparse fixed-vector solvers, Lasota-Yorke constant computation and
verification, mixing-rate and CLT diagnostics, quantitative stability and
linear response, and disintegrated measures for contracted-fiber skew
products.
"""

__version__ = "0.1.0"

from .density import (CIRCLE, INTERVAL, GridDensity, NormReport, bv_variation,
                      constant, from_function, from_trig, l1_norm, lip_norm,
                      make_step, norm_report, sup_norm, w11_norm,
                      zero_average_project)
from .lyverify import (LyConstants, compute_bv_constants, compute_lip_constants,
                       compute_w11_constants, verify_ly)
from .maps import (AffineFiber, KellerParams, PerturbationFamily,
                   PiecewiseExpandingMap, SmoothCircleMap, SolenoidMap,
                   keller_map, map_from_config, wrap01)
from .response import (keller_experiment, linear_response, lipschitz_stability,
                       derivative_operator, resolvent_apply, stability_curve)
from .solenoid import (DiscreteLeafMeasure, SolenoidMeasure, apply_solenoid_transfer,
                       one_norm, push_leaf, solenoid_equilibrium, uniform_atoms,
                       w10_norm)
from .stats import (CltResult, DecaySeries, birkhoff_average, clt_check,
                    correlation_integrals, equilibrium_decay, fit_geometric)
from .transfer import (TransferContext, apply_transfer, apply_transfer_derivative,
                       duality_residual, transfer_fixed_point)
from .trig import TrigPoly, cos_mode, default_direction, sin_mode
from .ulam import (CellVector, UlamOperator, build_ulam, invariant_vector,
                   project_to_cells, ulam_defect, ulam_ly_check)
