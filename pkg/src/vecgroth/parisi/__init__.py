"""Parisi-type functionals for the vector-spin Lagrangian."""

from .types import (FINITE, PROBABILITY, DiscreteMeasure, ParisiParams, Path,
                    QuadratureSpec, multiplier_matrix, multiplier_pairing, n_pairs)
from .terminal import (ComparisonReport, certified_radius, compare_terminals,
                       cube_mean, curvature_constant, objective, sup_norm_radius,
                       terminal_beta, terminal_beta_batch, terminal_inf,
                       terminal_inf_ascent, terminal_inf_batch, terminal_inf_grad,
                       unit_ball_integral)
from .functional import (MinimizeResult, evaluate, gaussian_rule, integral_term,
                         minimize_parisi, parisi_beta, parisi_inf, recursion, unpack)
from .control import (MomentReport, PdeReport, SimulationResult, ac_simulate,
                      moment_diagnostic, moment_exponent, pde_residual, smoothed,
                      terminal_spline)
