"""Numerics for the CUE characteristic-polynomial field and its Gaussian analogue.

Subpackages:

* `geometry` - hyperbolic metric, disk automorphisms, geodesic rays.
* `gaussian_field` - the log-correlated Gaussian field: covariance calculus,
  exponential tilts, exact samplers.
* `cue` - CUE sampling (QR oracle and Verblunsky fast path) and field grids.
* `toeplitz` - exact Toeplitz determinant identities for rational symbols and
  the tilted-moment subset expansion.
* `barrier` - ballot/barrier probability Monte Carlo and comparison checks.
* `experiments` / `cli` - seeded, parallel experiment harness with CSV output.
"""

from . import barrier, cue, gaussian_field, geometry, toeplitz
from .gaussian_field import BiasSpec

__all__ = [
    "barrier",
    "cue",
    "gaussian_field",
    "geometry",
    "toeplitz",
    "BiasSpec",
]

__version__ = "0.1.0"
