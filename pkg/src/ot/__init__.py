"""Numerical optimal-transport verification of the PF-ODE map."""

from .fundamental import FundamentalMatrix, asymmetry_rate, b_matrix, fundamental_solve, spd_check
from .experiment import OTConfig, OTReport, ot_experiment

__all__ = [
    'FundamentalMatrix',
    'b_matrix',
    'fundamental_solve',
    'asymmetry_rate',
    'spd_check',
    'OTConfig',
    'OTReport',
    'ot_experiment'
]
