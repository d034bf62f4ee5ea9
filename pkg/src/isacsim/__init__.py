"""
Link-level simulator for a joint sensing/communication MIMO receiver.

Two receiver chains are implemented and compared on identical random draws:
decode-cancel-estimate (whitening + MRC + ML detection + linear MMSE on the
cancelled residual) and the constellation-aware posterior-mean estimator
that marginalizes the unknown uplink symbol instead of subtracting a hard
decision.
"""

from .model import (
    CONSTELLATIONS,
    Constellation,
    Observation,
    ReceiverOutput,
    Scene,
    SystemConfig,
    composite_sensing_channel,
    generate_observation,
    qpsk,
    sample_scene,
    single_symbol,
    steering_vector,
    trial_rng,
)
from .sic import (
    WhiteningContext,
    build_whitening_context,
    interference_covariance,
    linear_mmse_alpha,
    ml_detect,
    mrc_combine,
    run_sic_chain,
    sic_subtract,
    whitening_matrix,
)
from .mmse import (
    GridSpec,
    GridTooCoarseError,
    PosteriorWorkspace,
    brute_force_posterior_mean,
    conditional_log_likelihood,
    posterior_mmse_alpha,
    posterior_workspace,
    run_mmse_chain,
)
from .metrics import (
    AggregateMetrics,
    RunningStat,
    TrialRecord,
    empirical_ber,
    empirical_mse,
    q_function,
    theoretical_ber_qpsk,
)
from .experiments import (
    SweepResult,
    SweepRow,
    SweepSpec,
    beta_sweep_spec,
    default_grid,
    gamma_sweep_spec,
    run_cell,
    run_sweep,
    run_trial,
)

__version__ = "0.1.0"
