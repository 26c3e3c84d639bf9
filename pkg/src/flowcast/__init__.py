"""Spatio-temporal forecasting and imputation of intersection traffic counts.

Sparse GMRF priors over a site graph and a seasonal time axis, a Gaussian
approximation at the joint posterior mode, empirical-Bayes selection of the
block precisions, and percentage-error evaluation against a history-mean
baseline.
"""

from .chol import CholeskyFactor, cholesky, cholesky_matrix, solve
from .frames import CountFrame, read_count_csv
from .graphs import SiteGraph, read_graph, write_graph, write_presence_grid
from .inference import (
    GAUSSIAN_IDENTITY,
    POISSON_LOG_LINK,
    GaussianApprox,
    LatentGaussianProblem,
    eb_optimize,
    gamma_precision_hyperprior,
    gaussian_approximation,
    log_hyper_posterior,
    log_joint_and_gradient,
    predictor_variances,
)
from .ingest import (
    RawDetectorRow,
    aggregate_hourly,
    clean,
    missingness_report,
    read_keep_detectors,
    read_raw_csv,
    split_weekpart,
)
from .laplace import (
    LaplaceFit,
    ScalarTarget,
    gamma_laplace,
    laplace_interval_integral,
    scalar_laplace,
)
from .metrics import (
    ComparisonTable,
    MpeReport,
    compare,
    grouped_mpe,
    mpe,
    prior_mean_baseline,
)
from .model import (
    FitResult,
    LatentLayout,
    ModelSpec,
    ObservationKey,
    assemble,
    fit,
    interaction_structure,
    predict,
)
from .simulate import GroundTruth, SimConfig, sample_counts, sample_graph
from .structures import (
    PrecisionStructure,
    build_icar_structure,
    build_iid_structure,
    build_rw_structure,
    build_seasonal_structure,
    kronecker,
    numeric_rank,
)

__version__ = "0.1.0"
