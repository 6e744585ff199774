"""Hybrid LSMR for general-form regularization of discrete ill-posed problems."""
from .bidiag import BidiagFactorization, bidiag_extend, bidiag_init, projected_normal_matrix
from .hybrid import (
    HybridRun,
    deflated_operator,
    hyb_lsmr,
    hybrid_step,
    select_best_k,
    select_k_discrepancy,
)
from .krylov import LsqrOptions, LsqrReport, lsmr_iterate, lsqr_solve
from .operators import (
    LinearOperator,
    SparseBandedMatrix,
    dense_operator,
    first_derivative_operator,
    identity_operator,
    kron_stack_operator,
)
from .problems import ProblemInstance, add_noise, generate, generate_blur2d, make_problem, relative_error

__version__ = "0.1.0"
