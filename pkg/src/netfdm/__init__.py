"""netfdm: network SAR simulation and functional-dependence diagnostics."""

from .errors import (
    CapabilityError,
    ConvergenceError,
    DataError,
    ExperimentError,
    NetfdmError,
    ParameterError,
    ParseError,
)
from .fdm import (
    DeltaMatrix,
    MomentBook,
    delta_aggregate,
    delta_linear_exact,
    delta_monte_carlo,
    delta_sar_bound,
    fdm_indicator,
    fdm_lipschitz,
    fdm_poly_lipschitz_holder,
    fdm_poly_lipschitz_moment,
    fdm_product_holder,
    fdm_product_moment,
    fdm_sum,
)
from .limits import (
    ConditionReport,
    TailBoundParams,
    clt_conditions_delta,
    clt_conditions_sar,
    concentration_params,
    moment_inequality_check,
    ordered_decay_diagnostic,
    verify_splus_euclidean_decay,
    verify_splus_geodesic_bound,
)
from .mc import (
    ExperimentPlan,
    run_clt,
    run_clt_multivariate,
    run_condition_table,
    run_lln,
    run_tail,
)
from .networks import (
    DistanceMatrix,
    Graph,
    LatticeConfig,
    WeightsMatrix,
    gen_er,
    gen_lattice,
    gen_sbm,
    gen_triangle,
    geodesic_distances,
    ingest_edgelist,
    row_normalize,
    shell_sizes,
)
from .sar import (
    IDENTITY,
    TOBIT,
    LinkFunction,
    NoiseModel,
    SarSpec,
    SPlusMatrix,
    compute_splus,
    simulate_replications,
    solve_sar,
)

__version__ = "0.1.0"
