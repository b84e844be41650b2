"""Spectral solvers for linear and semi-linear Beltrami equations on the plane.

The package works on a periodic square window whose central half holds
all compactly supported data. Fields carry an exact polynomial trend
next to their periodic samples, so the Cauchy transform and the
logarithmic potential keep their free-space behaviour on the window.
"""
from .anisotropic import (MatrixField, WeakTestSet, A_from_mu, a_conjugate, harmonic_source_solve,
                          matrix_preset, mu_from_A, preset_Q, sigma_from_source,
                          solve_poisson_semilinear, verify_change_of_variables, weak_residual)
from .beltrami import (BeltramiCoefficient, LinearSolveConfig, QCMap, SolveReport,
                       holder_quotient, invert_map, principal_map, residual_beltrami,
                       solve_inhomogeneous)
from .errors import (BlowupError, CertificationError, ConfigurationError, ConvergenceError,
                     EllipticityError, NondegeneracyError, OutOfRangeError, SupportError)
from .generators import bump_field, disk_indicator, radial_bump, tensor_bump
from .grid import (ComplexField, Grid, Polynomial, RealField, d_x, d_y, d_z, d_zbar, laplacian,
                   make_grid, norm_p, sample, sample_real)
from .semilinear import (ContinuationConfig, FactorizationResult, Nonlinearity,
                         compose_solution, factorize, q_star, solve_semilinear,
                         solve_semilinear_operator, vekua_residual)
from .transforms import (beurling_stats, beurling_transform, cauchy_transform, log_potential,
                         potential_dbar)

__version__ = "0.1.0"
