"""Vakonomic mechanics on Lie affgebroids."""
from .affgebroid import (AffgebroidSpec, anchor_morphism_residual, constant_affgebroid,
                         eval_anchor, jacobi_residual, skew_defect, validate_skew)
from .engine import (ConstraintMap, Tolerances, VakonomicState, VakonomicSystem,
                     controls_from_momenta, euler_lagrange_rhs, momenta_free,
                     multiplier_form_residual, pontryagin_hamiltonian, regularity_check,
                     regularity_matrix, restricted_lagrangian, vakonomic_rhs, w1_residual,
                     w1prime_y0)
from .errors import NoConvergence, OriginSingularity, SingularRegularity, StepUnderflow
from .fields import ScalarField

__version__ = "0.1.0"
