"""Linear response of a phase-modulated multimode cavity coupled to a Bose gas.

Frequencies are in units of the recoil energy E_r. The main entry points are
:func:`find_poles`, :func:`spectral_function`, :func:`critical_coupling` and
the :class:`FloquetPolaritonSpectrum` estimator.
"""
__version__ = "0.1.0"

from .specfun import assoc_laguerre, bessel_j, bessel_j_orders, hyp2f1_terminating, ln_factorial
from .geometry import (
    OverlapMatrix,
    QuadratureError,
    TrapGeometry,
    build_overlap_matrix,
    lg_mode,
    overlap_closed_form,
    overlap_quadrature_oracle,
)
from .medium import (
    AmbiguousSidebandError,
    CutoffWarning,
    DriveSpec,
    SidebandAssignment,
    SystemSpec,
    assign_sidebands,
    density_response,
    polarizability,
    renormalized_coupling,
)
from .response import (
    AmbiguousModeError,
    NumericalFailure,
    PoleSet,
    SingularResponseError,
    SpectralGrid,
    UnstableSpectrumWarning,
    find_poles,
    greens,
    intensity_profile,
    inverse_greens,
    minimal_eigenvector,
    mode_weights,
    spectral_function,
    spectral_grid,
)
from .analysis import (
    CrossingReport,
    InstabilityKind,
    InstabilityReport,
    NoCrossingFound,
    PeaksUnresolved,
    TwoModeModel,
    critical_coupling,
    critical_coupling_single_mode,
    detect_peaks,
    extract_effective_coupling,
    lambda_c_curve,
    phase_diagram,
)
from .estimator import FloquetPolaritonSpectrum
