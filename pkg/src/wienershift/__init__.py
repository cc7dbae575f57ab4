"""Adapted perturbations of identity on discretized Wiener space.

Simulate ``U = I + u`` for causal drifts ``u``, invert it, and compare the
energy of ``u`` with the entropy of the image measure.
"""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    DensityPath,
    InvalidArgument,
    NumericError,
    SampleBatch,
    TimeGrid,
    WienerPath,
    cm_norm_sq,
    ito_sum,
    sample_paths,
    sup_distance,
)
from .drift import (  # noqa: E402
    AdaptedDrift,
    StoppedDrift,
    StoppingTime,
    causality_check,
    constant_time,
    deterministic_drift,
    drift_path,
    first_hitting,
    linear_drift,
    linear_inverse_drift,
    parse_drift,
    parse_stopping,
    stopped_drift,
    stopping_causality_check,
    stopping_index,
    tsirelson_drift,
    zero_drift,
)
from .estimate import Estimate, mc_estimate  # noqa: E402
from .girsanov import density_identity_residual, log_rho_minus, log_rho_plus, novikov_check  # noqa: E402
from .solver import (  # noqa: E402
    alpha_identity_residual,
    apply_shift,
    empirical_order,
    inverse_residuals,
    picard_inverse,
    solve_inverse_sde,
    stopped_candidate_inverse,
    stopped_inverse,
)
from .innovation import (  # noqa: E402
    FilteredDrift,
    FilterInverseDrift,
    brownianity_report,
    conditional_girsanov,
    gaussian_filter,
    innovation_path,
    make_filter,
    measure_preservation_test,
    regression_filter,
)
from .entropy import GapReport, certify, energy, entropy_via_filter, entropy_via_inverse, training_seed  # noqa: E402
