"""Higher-order spectral shift functions for Callias-type operators, at desk scale.

Finite-dimensional multiple operator integrals, the spectral shift
densities they induce, the fractional transform linking the potential-side
and operator-side shifts, a periodic lattice model of the Callias operator
and the massless Dirac-Schroedinger example.
"""
import os

if os.environ.get("SPECTRALSHIFT_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["SPECTRALSHIFT_THREADS"])

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .clifford import CliffordRep, build_clifford, clifford_word_trace, identity_residuals, radial_split  # noqa: E402
from .density import SpectralShiftDensity  # noqa: E402
from .divdiff import (  # noqa: E402
    ScalarFunctionFamily,
    divided_difference,
    genochi_hermite,
    simplex_integrate,
    simplex_rule,
)
from .moi import HermitianOperator, moi_apply, taylor_remainder, taylor_term, trace_cycle_check  # noqa: E402
from .ssf import eta_callias, krein_ssf, ssf_density, weighted_tuples  # noqa: E402
from .transform import (  # noqa: E402
    FunctionalEquationConstants,
    fredholm_index,
    heat_limit,
    lebesgue_point_right,
    pushnitski_d1_check,
    witten_index,
    xi_dminus1_from_eta,
    xi_from_eta,
    xi_k_from_eta,
)
from .lattice import LatticeModel, PotentialFamily, SmoothCutoff, assemble, heat_trace_diff, rhs_trace_formula  # noqa: E402
