"""Non-negative sparse regression: solvers, recovery conditions and an exhaustive oracle."""

from .bench import (
    ConfusionMatrix,
    DistortionSpec,
    Instance,
    InstanceSpec,
    evaluate_batch,
    gamma_sweep,
    generate,
    make_specs,
)
from .conditions import (
    ConditionReport,
    GroundTruth,
    check_apmrc,
    check_apmrc_nnls,
    check_base,
    check_erc_mrc,
    check_perc_amax,
    check_perc_max,
    erc,
    evaluate_conditions,
    gamma_interval,
    perc,
    psc,
    psc_per_atom,
)
from .core import SubdictionaryCache, build_cache
from .errors import (
    CombinatorialGuardError,
    GenerationError,
    InvalidSupportError,
    NNSparseError,
    NumericFailure,
    PreconditionError,
    RankDeficientError,
)
from .oracle import cardinality_nnls, enumerate_global, feasible_direction_probe
from .solvers import (
    KKTCertificate,
    Problem,
    Solution,
    SolverOptions,
    kkt_certificate,
    restricted_closed_form,
    solve_nlasso,
    solve_nnls,
    solve_restricted,
)

__version__ = "0.1.0"
