"""Relay energy harvesting (SWIPT) with random-access BPSK nodes and a
splitting factor chosen per symbol from predicted activity states."""

from .channel import ChannelParams, ChannelSet, NoiseParams, draw_channel, path_loss_gain
from .constellation import (
    LabeledConstellation,
    LabeledPoint,
    StateSpaceTooLarge,
    baseline_constellation,
    min_distance,
    min_distance_imperfect_csi,
    points_for_state,
    union_constellation,
)
from .predictor import (
    DecisionEngine,
    PredictionContext,
    PredictorPolicy,
    baseline_psf,
    bbp_predict,
    genie_psf,
    sbp_predict,
    select_relevant_states,
)
from .psf import NonlinearHarvestParams, PsfDecision, ReliabilityConfig, psf_from_distance, snr_mod
from .sim import ScenarioConfig, average_active_nodes, run_experiment, run_scenario, sweep
from .traffic import NodeHistory, NodeProfile, generate_trace, transition_probability

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "ChannelSet",
    "NoiseParams",
    "draw_channel",
    "path_loss_gain",
    "LabeledConstellation",
    "LabeledPoint",
    "StateSpaceTooLarge",
    "baseline_constellation",
    "min_distance",
    "min_distance_imperfect_csi",
    "points_for_state",
    "union_constellation",
    "DecisionEngine",
    "PredictionContext",
    "PredictorPolicy",
    "baseline_psf",
    "bbp_predict",
    "genie_psf",
    "sbp_predict",
    "select_relevant_states",
    "NonlinearHarvestParams",
    "PsfDecision",
    "ReliabilityConfig",
    "psf_from_distance",
    "snr_mod",
    "ScenarioConfig",
    "average_active_nodes",
    "run_experiment",
    "run_scenario",
    "sweep",
    "NodeHistory",
    "NodeProfile",
    "generate_trace",
    "transition_probability",
]
