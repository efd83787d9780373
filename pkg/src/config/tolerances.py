"""Every numeric tolerance the package compares against, in one place."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    orthonormal: float = 1e-12        # Q^T Q = I after orthonormalize
    rank: float = 1e-12               # column norm left after projection
    symmetry: float = 1e-10           # relative asymmetry accepted as symmetric
    reconstruction: float = 1e-8      # L L^T = S, S X = B
    eigen: float = 1e-10              # S v = lambda v
    eigen_tie: float = 1e-14          # relative eigenvalue gap treated as a tie
    chi2_probability: float = 1e-12   # |CDF(x) - p| at which inversion stops
    basis: float = 1e-10              # P^T P = I for a ProjectionBasis
    coincident_angle: float = 1e-9    # principal angle treated as zero
    mcd_log_det: float = 1e-12        # C-step convergence on log-determinant
    mcd_monotone: float = 1e-10       # slack allowed when checking C-step decrease
    mcd_ridge: float = 1e-8           # ridge added to a singular subset covariance


TOLERANCES = Tolerances()
