"""Partial-identification bounds and moment-inequality inference for
censored duration data with a linear index.

The package has three layers: population-scale computation of the identified
sets implied by the rank property (population), finite-sample testing of
candidate index directions and transformation values through instrumented
U-statistic moment inequalities (kernels, ustats, instruments, inference,
confidence), and reproducible experiment drivers with a CLI (runs, cli).
"""

__version__ = "0.1.0"

from .data import (
    Beta,
    CsvSchema,
    IngestionError,
    NormalizationError,
    NormalizationSpec,
    Observation,
    Sample,
    SingularCovarianceError,
    TransformedSample,
    fit_gaussian_standardization,
    load_csv,
    save_csv,
    transform_continuous,
    validate_beta,
)
from .instruments import (
    InstrumentFamily,
    InstrumentIndex,
    cell_membership_matrix,
    enumerate_instruments,
    family_for_sample,
    instrument_coordinates,
    instrument_indicator,
)
from .kernels import (
    KernelWorkspace,
    exceedance_kernel_matrix,
    m_kernel,
    mdagger_kernel,
    rank_kernel_matrix,
)
from .ustats import MomentStats, h2hat, mbar, sigma_bar2
from .inference import (
    CapacityError,
    NumericalError,
    TestEngine,
    TestOutcome,
    TuningParams,
    default_tuning,
    gms_shift,
    joint_point_test,
    joint_test_statistic,
    point_test,
    simulate_critical_value,
    test_statistic,
)
from .confidence import (
    ConfidenceSet,
    ParamGrid,
    Projection,
    beta_confidence_set,
    joint_confidence_set,
    project,
)
from .population import (
    BoundResult,
    DgpSpec,
    PopulationTable,
    Y_TILDE_BASELINE,
    compute_BI,
    compute_TBI,
    default_bi_tolerance,
    dgp_spec,
    normalized_log_transform,
    population_table,
    simulate_dgp,
)
from .runs import ConfigError, ResultBundle, RunConfig, execute
