"""Discrete-event simulator and experiment harness for third-state
approximate-majority population protocols with catalytic inputs, fault
injection, and exact small-instance analysis."""

from .engine import (AgentState, ByzMode, Configuration, EngineError,
                     FaultSpec, LeakModel, LeakPool, ProtocolKind,
                     ProtocolSpec, RunResult, SampleValue, StepClass,
                     StopMode, TerminalClass, auto_margin, init_configuration,
                     make_protocol, run, sample_error, sample_output)
from .experiments import (AggregateRecord, ExperimentConfig, TrialRecord,
                          run_campaign, run_trial, wilson_interval)
from .metrics import PhaseParams, PhaseTag, Regime, classify_phase, snapshot
from .oracle import (absorption_probabilities, binomial_tail_exact,
                     finite_horizon_distribution, min_samples,
                     step_distribution, tail_lower_bound)

__version__ = "0.1.0"

__all__ = [
    "AgentState", "ByzMode", "Configuration", "EngineError", "FaultSpec",
    "LeakModel", "LeakPool", "ProtocolKind", "ProtocolSpec", "RunResult",
    "SampleValue", "StepClass", "StopMode", "TerminalClass", "auto_margin",
    "init_configuration", "make_protocol", "run", "sample_error",
    "sample_output", "AggregateRecord", "ExperimentConfig", "TrialRecord",
    "run_campaign", "run_trial", "wilson_interval", "PhaseParams", "PhaseTag",
    "Regime", "classify_phase", "snapshot", "absorption_probabilities",
    "binomial_tail_exact", "finite_horizon_distribution", "min_samples",
    "step_distribution", "tail_lower_bound", "__version__",
]
