from .fd import fd_gradient, fd_jacobian
from .kkt import KktResiduals, kkt_residuals
from .qp import QpProblem, SolveReport, solve_kkt, solve_qp
from .sqp import NlpProblem, solve_nlp

__all__ = [
    "KktResiduals",
    "NlpProblem",
    "QpProblem",
    "SolveReport",
    "fd_gradient",
    "fd_jacobian",
    "kkt_residuals",
    "solve_kkt",
    "solve_nlp",
    "solve_qp",
]
