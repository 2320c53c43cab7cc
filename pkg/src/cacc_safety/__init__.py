"""Monte Carlo collision-safety evaluation of CACC and CACC+ platoons under emergency braking."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceededError,
    CaccSafetyError,
    ConfigError,
    DistributionError,
    DivergedRunError,
    InfeasibleGainsError,
)
from .gains import (
    GainSet,
    PlantParams,
    ScaledGains,
    TransferFunction,
    headway_lower_bound,
    hinf_check,
    region_boundary,
    region_check,
    scale_gains,
    transfer_function,
    unscale_gains,
)
from .stochastic import (
    DecelDistribution,
    DecelMatrix,
    generate_matrix,
    inverse_cdf,
    no_coord_avoidance_prob,
    standin_distribution,
    uniform_distribution,
    validate,
)
from .dynamics import (
    IterationOutcome,
    PlatoonState,
    ScenarioConfig,
    VehicleState,
    control_input,
    detect_and_freeze,
    initial_platoon,
    leader_input,
    rk4_step,
    saturate,
    simulate_batch,
    simulate_run,
)
from .montecarlo import (
    CampaignConfig,
    SafetyMetrics,
    compare_topologies,
    hoeffding_epsilon,
    hoeffding_min_samples,
    run_campaign,
)
from .oracle import ExactMetrics, OracleReport, enumerate_exact, mc_vs_oracle
