"""Level-3 rough-path integration.

Modules
-------
increments   grids, paths, 2-/3-increments, the coboundary and the sewing map
lift         level-3 lifts, delayed area/volume families and their audit
fbm          exact fractional Brownian motion sampling and Monte-Carlo checks
controlled   controlled paths, composition and germ integration
sde          third-order march and Picard solver for ``dy = sigma(y) dx``
dde          four-family march for delay equations
cli          command-line experiment driver
"""

from .errors import (
    ConfigError,
    DelayNotOnGrid,
    DimensionMismatch,
    EmbeddingFailed,
    HistoryGap,
    InadmissiblePair,
    MissingLiftFamily,
    NoConvergence,
    NonFinite,
    NotClosed,
    NumericalFailure,
    OutOfRange,
    RoughIntError,
)
from .increments import Grid, Inc2, Inc3, Path1, delta1, delta2, lambda_grid, sew
from .lift import DelayedLift, RoughLift3, lift_linear, verify_hypotheses
from .fbm import FbmSpec, sample_fbm, sample_fbm_path
from .controlled import ControlledPath, compose, integrate
from .sde import picard_solve, solve_sde
from .dde import DelaySpec, InitialSegment, solve_dde

__version__ = "0.1.0"
