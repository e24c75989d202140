"""Monte Carlo estimators and a finite-difference oracle for scattering
amplitudes written as Feynman-Kac path expectations.

The package is organized as:

- ``core_math``: Bessel-ratio drift, smooth cutoffs, free Green function
- ``potentials``: potential library with truncation and tail metadata
- ``sde_engine``: reproducible path sampling and path functionals
- ``amplitudes``: amplitude estimators and identity checks
- ``pde_oracle``: independent finite-difference boundary-value solver
- ``scenarios`` / ``cli``: config-driven runs and the ``fk`` entry point
"""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, FkError, SolverError

__all__ = [
    "ConfigError",
    "DomainError",
    "FkError",
    "SolverError",
    "__version__",
]
