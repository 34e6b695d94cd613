"""Grid-free positive image super-resolution.

Recovers nonnegative point sources from tensor-product blurred images by a
convex feasibility program, measures errors in the generalized Wasserstein
metric, and constructs the dual certificates that govern stability.
"""

from .measures import (
    AtomicMeasure,
    Neighborhood,
    approximate_sparse,
    sep,
    tv_norm,
)
from .imaging import (
    ImageObservation,
    Window,
    add_noise,
    design_matrix,
    forward,
    lipschitz_constant,
)
from .transport import TransportPlan, gen_wasserstein, gw_bruteforce, wasserstein
from .solver import Grid, RecoveryResult, choose_deltap, extract_support, nnls, recover
from .certificates import (
    Certificate,
    CertificateError,
    assemble_exact,
    assemble_robust,
    assemble_signed,
    dominating_poly,
    error_bounds_check,
    error_constants,
    vanishing_poly,
)
from .chebyshev import check_tstar, check_tsystem, make_admissible

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure",
    "Neighborhood",
    "approximate_sparse",
    "sep",
    "tv_norm",
    "ImageObservation",
    "Window",
    "add_noise",
    "design_matrix",
    "forward",
    "lipschitz_constant",
    "TransportPlan",
    "gen_wasserstein",
    "gw_bruteforce",
    "wasserstein",
    "Grid",
    "RecoveryResult",
    "choose_deltap",
    "extract_support",
    "nnls",
    "recover",
    "Certificate",
    "CertificateError",
    "assemble_exact",
    "assemble_robust",
    "assemble_signed",
    "dominating_poly",
    "error_bounds_check",
    "error_constants",
    "vanishing_poly",
    "check_tstar",
    "check_tsystem",
    "make_admissible",
    "__version__",
]
