"""bellsim: Monte Carlo simulator and analysis pipeline for a long-distance
Bell experiment with space-like separated setting choices.

Modules map onto the pipeline stages: ``spacetime`` (causal geometry and
loophole verdicts), ``quantum`` (states, CHSH, entanglement metrics),
``randomness`` (setting sources), ``photonsim`` (time-tag generation),
``coincidence`` (offset discovery, matching, Bell estimation),
``tomography`` (state reconstruction), ``config`` and ``cli``.
"""

from .coincidence import (
    AnalysisResult,
    BellEstimate,
    CoincidenceSet,
    accidental_rate,
    analyze_streams,
    compensate_drift,
    estimate,
    find_offset,
    match,
)
from .config import load_config, load_preset
from .photonsim import (
    Channel,
    ChannelConfig,
    GatingConfig,
    HiddenVariableMode,
    LhvStrategy,
    RunResult,
    ScenarioConfig,
    TagStream,
    TimeTag,
    run_experiment,
)
from .quantum import (
    chsh,
    concurrence,
    correlation,
    fully_entangled_fraction,
    horodecki_optimal_chsh,
    linear_entropy,
    outcome_probabilities,
    singlet,
    tangle,
    visibility_to_s,
    werner,
)
from .randomness import (
    Periodic,
    Predetermined,
    QuantumToggle,
    SettingSource,
    SettingStream,
    autocorrelation,
    autocorrelation_time,
    sample_settings,
    toggle_process,
)
from .spacetime import (
    C_M_PER_S,
    IntervalClass,
    IntervalKind,
    LoopholeVerdict,
    ScenarioGeometry,
    SpacetimeEvent,
    boost,
    build_scenario_events,
    gamma,
    interval_class,
    make_event,
    simultaneity_frame,
    verdicts,
)
from .tomography import (
    TomographyData,
    TomographyReport,
    linear_reconstruct,
    measurement_set,
    mle_reconstruct,
    report,
    simulate_counts,
)

__version__ = "0.1.0"
