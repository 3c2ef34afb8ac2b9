"""PF-ODE sampling, likelihood and adjoint solvers."""

from .solvers import Trajectory, pf_ode_solve
from .likelihood import NLLResult, nll_solve
from .adjoint import AdjointState, adjoint_solve, guided_sample

__all__ = [
    'Trajectory',
    'pf_ode_solve',
    'NLLResult',
    'nll_solve',
    'AdjointState',
    'adjoint_solve',
    'guided_sample'
]
