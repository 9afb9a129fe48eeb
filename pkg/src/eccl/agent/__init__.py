from .agent import (
    AgentConfig,
    CycleReport,
    DQNAgent,
    beta_schedule,
    double_q_targets,
    epsilon_schedule,
    select_action,
)
from .network import QModel, build_q_model, dueling_combine, init_model_params
from .replay import Experience, ReplayBank, SampleBatch, SumTree

__all__ = [
    "AgentConfig", "CycleReport", "DQNAgent", "Experience", "QModel",
    "ReplayBank", "SampleBatch", "SumTree", "beta_schedule", "build_q_model",
    "double_q_targets", "dueling_combine", "epsilon_schedule",
    "init_model_params", "select_action",
]
