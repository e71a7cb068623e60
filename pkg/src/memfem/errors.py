"""Exception types shared across the package.

The command line tool maps these onto its exit-code contract:
configuration problems exit with 2, solver/estimator/oracle failures
with 3, and time-step stability gate violations with 4.
"""


class MemfemError(Exception):
    """Base class for package errors."""


class ConfigError(MemfemError):
    """Invalid configuration, incompatible spaces, or bad driver setup."""


class SaddleSolverError(MemfemError):
    """Factorization or solve of a saddle-point system failed."""


class EstimatorError(MemfemError):
    """A spectral estimator (inf-sup, ellipticity, norm) did not converge."""


class OracleError(MemfemError):
    """A reference-solution oracle could not reach its accuracy gate."""


class StabilityGateError(MemfemError):
    """The time step violates the kernel stability gate |w_nn k(t,t)| < 1."""
