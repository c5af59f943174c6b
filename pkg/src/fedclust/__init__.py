"""Differentially private federated clustering with random cluster rebalancing.

The package simulates client-level DP federated clustering at desk scale:
loss- and distance-based cluster assignment, noisy identifier release, a
random rebalancing step that guarantees a minimum number of updates per
cluster (shrinking the effective privacy noise), an exact Renyi-DP
accountant for the whole pipeline, and calculators for the analytic
misassignment/contraction bounds.
"""

from .bounds import AnalysisParams, ContractionBound, contraction_params, rounds_to_accuracy, tau_bound
from .datasets import (
    ClientDataset,
    SyntheticSpec,
    gen_synthetic,
    gen_synthetic_classification,
    load_csv,
    train_val_split,
    write_csv,
)
from .engine import (
    Move,
    RoundAssignment,
    aggregate_cluster,
    assign_by_distance,
    assign_by_loss,
    decode_identifiers,
    one_hot,
    privatize_identifier,
    rebalance,
    server_update,
)
from .errors import CalibrationError, ConfigError, InsufficientNoiseError, ParseError
from .estimator import FederatedClustering
from .metrics import clustering_accuracy, detect_collapse, eval_model
from .privacy import (
    DEFAULT_ALPHA_GRID,
    AccountResult,
    PrivacyConfig,
    RdpCurve,
    account,
    amplify_subsample,
    calibrate,
    compose_rounds,
    per_round_curve,
    rdp_gaussian,
    rdp_to_dp,
)
from .simulation import (
    EvalRow,
    FederationState,
    Method,
    MetricsHistory,
    RoundRecord,
    TrainConfig,
    init_state,
    local_train,
    run_experiment,
    run_round,
    sample_clients,
)
from .streams import RngStream, derive_stream
from .vectors import add_gaussian, clip, l2_norm

__version__ = "0.1.0"
