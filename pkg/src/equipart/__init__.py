"""Numerical and symbolic checks for equilibrium partitions of Riemannian manifolds."""

__version__ = "0.1.0"

from .expr import Expression, differentiate, evaluate, parse, simplify  # noqa: E402
from .geometry import Manifold, ScalarField, VectorField  # noqa: E402
from .reports import CheckReport, Verdict  # noqa: E402
from .equilibrium import (SamplePlan, check_equilibrium, detect_regions,  # noqa: E402
                          extract_profiles)
from .symmetry import KillingAlgebra, check_killing_induced_equilibrium  # noqa: E402
from .polar import PolarPlan, half_r2_check, separability_check  # noqa: E402
from .stability import (WarpedPlane, first_variation_check, ritore_criterion,  # noqa: E402
                        second_variation_mode)
from .manifest import Manifest, load_manifest  # noqa: E402

__all__ = [
    "__version__", "Expression", "parse", "differentiate", "simplify", "evaluate",
    "Manifold", "ScalarField", "VectorField", "CheckReport", "Verdict", "SamplePlan",
    "check_equilibrium", "detect_regions", "extract_profiles", "KillingAlgebra",
    "check_killing_induced_equilibrium", "PolarPlan", "separability_check", "half_r2_check",
    "WarpedPlane", "ritore_criterion", "second_variation_mode", "first_variation_check",
    "Manifest", "load_manifest",
]
