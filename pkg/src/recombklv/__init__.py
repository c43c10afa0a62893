"""Moment-preserving recombination of particle measures and recombining cubature on Wiener space."""

from recombklv.cubature import (
    BVPath,
    TruncatedSignature,
    WienerCubature,
    bm_expected_iterated_integrals,
    degree3_formula,
    load_formula,
    rescale,
    signature,
    verify_cubature,
)
from recombklv.driver import (
    RunConfig,
    convergence_study,
    cost_model,
    delta_for_error,
    make_partition,
    radius_schedule_example1,
    radius_schedule_example2,
    run_recombining_klv,
    run_vanilla_klv,
)
from recombklv.errors import (
    ConfigError,
    DegreeCheckFailed,
    NumericalDegeneracy,
    OdeDivergence,
    ParseError,
    RecombError,
    TreeTooLarge,
    UnsupportedDepth,
)
from recombklv.localize import cover_support, reduce_localized
from recombklv.measure import ParticleMeasure, center_of_mass, merge_duplicates, total_mass
from recombklv.polybasis import MonomialBasis, basis_size, build_basis
from recombklv.recombine import (
    ReductionReport,
    caratheodory_step,
    null_vector,
    procedure_A,
    reduce_algorithm1,
    reduce_algorithm2,
    reduce_measure,
    wendel_probability,
)
from recombklv.sde import klv_transition, make_model, make_payoff, solve_along_path, transport

__version__ = "0.1.0"
