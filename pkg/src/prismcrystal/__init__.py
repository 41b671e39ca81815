"""Exact computations for truncated prismatic de Rham crystals.

Connections over K[eps]/eps^m, their stratifications on truncated divided
power rings, de Rham and enhanced cohomology, and the explicit semilinear
action.
"""

from .cohomology import DegreeWindow, dr_cohomology, enhanced_cohomology, sen_solve, verify_sen_exactness
from .connections import (
    CrystalSpec,
    GradedElement,
    apply_nabla,
    certify_a_small,
    check_enhanced_relation,
    check_integrability,
    check_nilpotence,
)
from .cosimplicial import Flavor, FlavorKind, check_simplicial_identities, degeneracy, face
from .pdalgebra import PDElement, PDMatrix, PDRing, pd_ring, verify_formal_identities
from .realization import GroupElementData, realize
from .rings import SeriesMatrix, TruncatedSeries, ValuationConfig
from .stratification import (
    StratificationTable,
    build_stratification,
    evaluate,
    extract_connection,
    verify_cocycle,
)

__all__ = [
    "CrystalSpec",
    "DegreeWindow",
    "Flavor",
    "FlavorKind",
    "GradedElement",
    "GroupElementData",
    "PDElement",
    "PDMatrix",
    "PDRing",
    "SeriesMatrix",
    "StratificationTable",
    "TruncatedSeries",
    "ValuationConfig",
    "apply_nabla",
    "build_stratification",
    "certify_a_small",
    "check_enhanced_relation",
    "check_integrability",
    "check_nilpotence",
    "check_simplicial_identities",
    "degeneracy",
    "dr_cohomology",
    "enhanced_cohomology",
    "evaluate",
    "extract_connection",
    "face",
    "pd_ring",
    "realize",
    "sen_solve",
    "verify_cocycle",
    "verify_formal_identities",
    "verify_sen_exactness",
]
