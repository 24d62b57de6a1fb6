"""Level-set distance free boundary problems for the p-Laplacian on convex rings."""

from .errors import (
    BernoulliError,
    ConfigError,
    DegenerateGeometry,
    EmptyAnnulus,
    GridTooCoarse,
    LambdaTooLarge,
    LevelNotPresent,
    NonConvergence,
    OutOfRange,
)

__version__ = "0.1.0"

__all__ = [
    "BernoulliError",
    "ConfigError",
    "DegenerateGeometry",
    "EmptyAnnulus",
    "GridTooCoarse",
    "LambdaTooLarge",
    "LevelNotPresent",
    "NonConvergence",
    "OutOfRange",
    "__version__",
]
