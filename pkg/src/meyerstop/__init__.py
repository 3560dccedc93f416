"""Exact finite-lattice engine for optimal stopping under Meyer information structures."""

from .lattice import (
    AT,
    INT,
    TERMINAL,
    DividedQuadruple,
    FilteredLattice,
    Instant,
    Kind,
    LatticeError,
    LatticeProcess,
    MeyerStructure,
    PathRecord,
    RandomInstant,
    ValidationReport,
    conditional_expectation,
    divided_value,
    field_at_time,
    from_divided_quadruple,
    is_lambda_stopping_time,
    is_measurable,
    restrict_time,
    section_witness,
    sigma_field_at,
    to_divided_quadruple,
    validate_divided,
    validate_lattice,
)
from .enumeration import (
    DEFAULT_GUARD,
    EnumerationGuardError,
    count_stopping_times,
    enumerate_stopping_times,
)
from .projection import (
    Mode,
    Side,
    approximating_witness,
    check_projection_fatou,
    check_usc_sequence_equivalence,
    envelope,
    is_left_usc_in_expectation,
    is_right_usc_in_expectation,
    project,
)
from .snell import (
    BruteForceResult,
    DeltaStop,
    MertensDecomposition,
    OptimalityCertificate,
    PreconditionError,
    SigmaStop,
    SmallestLargest,
    check_optimality,
    delta_stop,
    enumerate_divided_stops,
    expected_value,
    is_lambda_martingale,
    is_lambda_supermartingale,
    lambda_entry_time,
    mertens_decompose,
    sigma_stop,
    smallest_largest_optimal,
    snell_brute_force,
    snell_envelope,
    stopped_process,
)

from .representation import (
    AFFINE,
    MONOTONE,
    GFamily,
    LevelPassage,
    RandomMeasure,
    RepresentationError,
    RepresentationProblem,
    SignalReport,
    forward_evaluate,
    g_root,
    level_passage,
    solve_representation,
    stopping_value,
    universal_signal_check,
    validate_g,
)
from .scenario import (
    OPTIONAL_EXTREME,
    PREDICTABLE_EXTREME,
    RANDOM_BETWEEN,
    RandomInstanceParams,
    Scenario,
    ScenarioError,
    generate_instance,
    parse_scenario,
    render_scenario,
)

__version__ = "0.1.0"
