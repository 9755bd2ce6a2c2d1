"""Robust two-view relative pose estimation.

The core is a weighted linear six-point solver (``lirp_solve``) built on
bearing vectors.  ``gnc_irls`` and ``gnc_ransac`` wrap it for data with
outliers, ``refine_ligt`` polishes a pose locally, and ``simlab`` provides
synthetic scenes for Monte Carlo evaluation.
"""

__version__ = "0.1.0"

from .errors import LirposeError
from .geometry import BearingPair, PairSet, RelativePose, rotation_angular_error
from .lirp import lirp_solve
from .residuals import ResidualKind, residual_vector
from .robust import GncConfig, RansacConfig, gnc_irls, gnc_ransac, refine_ligt

__all__ = [
    "BearingPair",
    "GncConfig",
    "LirposeError",
    "PairSet",
    "RansacConfig",
    "RelativePose",
    "ResidualKind",
    "gnc_irls",
    "gnc_ransac",
    "lirp_solve",
    "refine_ligt",
    "residual_vector",
    "rotation_angular_error",
]
