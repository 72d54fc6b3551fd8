"""Ring-road mixed-autonomy simulator with piecewise-constant driving advisories."""

__version__ = "0.1.0"

from .ring import (  # noqa: F401
    DEFAULT_IDM,
    EGO_ID,
    ConfigError,
    DegenerateGapError,
    IdmParams,
    JamDensityError,
    PerturbationError,
    RingConfig,
    SimState,
    SpawnMode,
    VehicleState,
    equilibrium_speed,
    idm_accel,
    ring_gap,
    spawn_ring,
    step,
)
from .advisory import (  # noqa: F401
    Advice,
    AdviceMode,
    AdviceSettings,
    ConstantSpeedPolicy,
    EquilibriumHeuristicPolicy,
    LinearPolicy,
    MissingAdviceError,
    MlpPolicy,
    Observation,
    ObservationScaling,
    Policy,
    PolicyFileError,
    accel_to_speed_advice,
    advise,
    episode_reward,
    in_range,
    load_policy,
    observe,
    policy_from_doc,
    policy_to_doc,
    save_policy,
)
from .drivers import (  # noqa: F401
    ComplianceEvent,
    DriverKind,
    DriverParams,
    compliance_latency,
    drive,
)
from .metrics import (  # noqa: F401
    LogFormatError,
    ReplayResult,
    RunSummary,
    TickRecord,
    make_header,
    read_log,
    replay,
    summarize,
    write_log,
    write_summary_csv,
)
from .episode import (  # noqa: F401
    EpisodeResult,
    TickPipeline,
    default_advice_settings,
    run_episode,
    wave_threshold,
)
from .scenario import (  # noqa: F401
    Scenario,
    ScenarioError,
    apply_overrides,
    load_scenario,
    run_scenario,
    scenario_from_doc,
)
from .training import (  # noqa: F401
    CemConfig,
    TrainResult,
    make_scenario_reward,
    train_cem,
)
from .session import (  # noqa: F401
    PROTOCOL_VERSION,
    PedalMap,
    SessionConfig,
    SessionConfigError,
    load_session_config,
    run_session,
    session_config_from_doc,
)
from .units import MPS_PER_MPH, mph_to_mps, mps_to_mph  # noqa: F401
