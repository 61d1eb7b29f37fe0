"""kpent: numerical verification toolkit for the entropic Kneser-Poulsen program.

Rényi entropies of gridded densities, rearrangements and majorization, contraction
pushforwards, ball-union and ball-intersection volumes, Gaussian entropy-power
algebra and diversity functionals, each theorem packaged as a seedable,
tolerance-aware check.
"""

from .ballgeom import MCEstimate, MCParams, PointConfiguration
from .contract import ContractionSpec
from .convolve import convolve, convolve_direct
from .errors import (ConfigError, DomainError, HypothesisError, KpentError, PreconditionError)
from .families import Distribution
from .gauss_epi import GaussianLaw
from .grid import DensityGrid, GridSpec, covariance, entropy_power, make_grid, renyi_entropy
from .harness import Config, falsify, selftest, sweep, verify
from .rearrange import MajorizationVerdict, majorizes, rearrange
from .report import CheckReport

__version__ = "0.1.0"

__all__ = [
    "CheckReport", "Config", "ConfigError", "ContractionSpec", "DensityGrid", "Distribution",
    "DomainError", "GaussianLaw", "GridSpec", "HypothesisError", "KpentError", "MCEstimate",
    "MCParams", "MajorizationVerdict", "PointConfiguration", "PreconditionError", "convolve",
    "convolve_direct", "covariance", "entropy_power", "falsify", "majorizes", "make_grid",
    "rearrange", "renyi_entropy", "selftest", "sweep", "verify",
]
