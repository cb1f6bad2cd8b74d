"""Quantum-trajectory simulation and first-passage statistics of a decaying two-level emitter."""

from .emitter_models import (
    DetectionKind,
    DetectionScheme,
    PopulationPhaseState,
    PureState,
    simulate,
)
from .first_passage import (
    Interval01,
    Scheme1D,
    excitation_prob,
    hit_prob_b_before_a,
    mean_excitation_time,
    mean_exit_time,
    mean_first_passage_below,
    mean_occupation_time,
    r_measure,
    scale_S,
)
from .montecarlo import (
    EnsembleConfig,
    EnsembleStats,
    estimate_excitation_curve,
    run_ensemble,
    standard_validation,
    validate_analytics,
)
from .paths import MeasurementRecord, PopulationPath
from .sde_core import NoiseStream, Scheme, StepConfig

__all__ = [
    "DetectionKind", "DetectionScheme", "PopulationPhaseState", "PureState", "simulate",
    "Interval01", "Scheme1D", "excitation_prob", "hit_prob_b_before_a", "mean_excitation_time",
    "mean_exit_time", "mean_first_passage_below", "mean_occupation_time", "r_measure", "scale_S",
    "EnsembleConfig", "EnsembleStats", "estimate_excitation_curve", "run_ensemble",
    "standard_validation", "validate_analytics",
    "MeasurementRecord", "PopulationPath", "NoiseStream", "Scheme", "StepConfig",
]
