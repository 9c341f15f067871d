"""Numerical and symbolic toolkit for tangential Cauchy-Riemann homotopy
operators on embedded quadric CR models.

Subpackage map:

- ``geometry``   quadric models, Levi eigenvalue data, concavity certification,
                 frames
- ``barrier``    phase sections, positivity and expansion audits
- ``cf_forms``   antisymmetric coefficient tensors and the determinant form
- ``sections``   normalized section jets (euclidean, barrier, combined),
                 closedness checks
- ``fields``     differential form fields on the model, extension, tangential
                 projection and tangential d-bar
- ``quadrature`` level-set grids and oriented surface integration
- ``homotopy``   solution / obstruction operators and partition-of-unity gluing
- ``indexcalc``  symbolic kernel index bookkeeping and decision procedures
- ``norms``      frame flows, anisotropic Holder estimators
- ``cli``        batch audit entry point
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = (
    "geometry", "barrier", "cf_forms", "sections", "fields", "quadrature",
    "homotopy", "indexcalc", "norms", "cli",
)

__all__ = list(_SUBMODULES)


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
