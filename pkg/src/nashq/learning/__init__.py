"""Tabular learners, schedules, opponent inference and the seeded run loops."""
from .agents import OpponentModelAgent, PartialInfoAgent, RandomAgent, partial_info_update
from .inference import (EMOpponentEstimator, FrequencyOpponentEstimator, OpponentModel,
                        em_estimate, em_iterate, em_posterior, empirical_frequency)
from .runners import (Checkpoint, RunResult, evaluate_greedy, run_agents, run_episodic,
                      run_full_info, run_inference_learner, run_partial_info)
from .schedules import ExplorationSchedule, LearningRateSchedule, VisitCounter
from .trace import TRACE_COLUMNS, Trace

__all__ = [
    "Checkpoint", "EMOpponentEstimator", "ExplorationSchedule", "FrequencyOpponentEstimator",
    "LearningRateSchedule", "OpponentModel", "OpponentModelAgent", "PartialInfoAgent",
    "RandomAgent", "RunResult", "TRACE_COLUMNS", "Trace", "VisitCounter", "em_estimate",
    "em_iterate", "em_posterior", "empirical_frequency", "evaluate_greedy", "partial_info_update",
    "run_agents", "run_episodic", "run_full_info", "run_inference_learner", "run_partial_info",
]
