"""Berry phases and quantum critical points for parametrized Hamiltonians."""

__version__ = "0.1.0"

from .errors import (
    BerryQPTError,
    BisectionError,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    NoEquatorialModeError,
    NonHermitianError,
    TooFewPointsError,
    UndefinedAngleError,
    UnwrapError,
)
from .families import (
    load_expression_file,
    make_family,
    random_family,
    spin_half,
    two_level_real,
    xy_qubit,
)
from .numerics import (
    BerryPhaseResult,
    CurvatureSample,
    DegeneracyVector,
    EigenSystem,
    HamiltonianFamily,
    LoopPath,
    curvature_bound,
    curvature_plaquette,
    curvature_sum_over_states,
    degeneracy_vector,
    eigensystem,
    gap_at,
    projector_derivative_norm,
    sphere_flux,
    wilson_loop_phase,
    wrap_phase,
)
from .xy import (
    ModeGrid,
    ModeSpectrum,
    QubitState,
    Region,
    XYPoint,
    classify_region,
    critical_regions,
    dispersion,
    equatorial_mode,
    excitation_gap,
    ground_state,
    mode_berry_phase,
    relative_phase_equatorial,
    total_berry_phase,
)
