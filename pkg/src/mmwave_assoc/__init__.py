"""mmWave MIMO network simulator with load-balancing user-association solvers."""

__version__ = "0.1.0"

from .association import (
    ActivationVector,
    AssignmentPolicy,
    SolveReport,
    exhaustive_solve,
    fractional_from_activation,
    is_feasible,
    max_sinr_assign,
    random_feasible,
    wcs_solve,
    worst_connection,
)
from .channel import ChannelSet, LargeScaleRecord, LinkState, generate_channel_set
from .harness import (
    ExperimentResult,
    ExperimentSpec,
    Scheme,
    export_results,
    rate_cdf,
    run_experiment,
    run_schemes,
    scaling_study,
)
from .mimo import (
    BeamformerPair,
    BeamformerSet,
    RateReport,
    UtilityKind,
    compute_beamformers,
    network_rates,
    svd_beamformers,
    utility,
)
from .topology import (
    BsNode,
    CsiMode,
    InterferenceMode,
    Scenario,
    ScenarioError,
    UeNode,
    hetnet_scenario,
    homogeneous_scenario,
    load_scenario,
    place_uniform,
    mobility_step,
    validate_scenario,
)

__all__ = [name for name in dir() if not name.startswith("_")]
