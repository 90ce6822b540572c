"""Rate regions and simulation for a guessing wiretapper of a Shannon cipher system."""

from .core_types import (
    Alphabet,
    AlphabetMismatchError,
    ConditionalDistribution,
    DistortionMeasure,
    Distribution,
    binary_entropy,
    divergence,
    entropy,
    expected_distortion,
    mutual_information,
    vector_distortion,
)
from .rate_distortion import (
    ConvergenceError,
    RdQuery,
    RdSolution,
    binary_hamming_closed_form,
    delta_max,
    rate_distortion,
    rd_oracle_grid,
)
from .reliability import (
    RegionDescription,
    RegionQuery,
    corollary3_region,
    guessing_exponent,
    region,
    rrd_function,
)
from .types_method import (
    CoveringCode,
    TypeClass,
    build_covering,
    enumerate_types,
    type_class_probability,
    type_class_size,
    type_probability_bounds,
    verify_covering,
)
from .cipher_sim import (
    CipherSystem,
    SimReport,
    brute_optimal_guesser,
    build_combined_strategy,
    build_key_search_strategy,
    build_type_ordered_strategy,
    exact_expected_guesses,
    guess_count,
    simulate,
)
from .instance import Instance, InstanceError, load_instance

__version__ = "0.1.0"
