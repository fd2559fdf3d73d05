"""Downlink resource-block scheduling simulator with spectrum-sharing metrics.

Subpackages:
    channel     -- fading, SINR, CQI link adaptation
    traffic     -- Poisson request generation
    environment -- the scheduling MDP (buffer, continuity, rewards)
    agent       -- numpy DQN plus greedy baseline policies
    metrics     -- spectral efficiency, ratios, latency accounting
    harness     -- experiment configuration and orchestration
"""

from rbshare.channel import ChannelParams, CqiTable, default_cqi_table
from rbshare.environment import SchedulingEnv
from rbshare.harness import ExperimentConfig, load_config, run

__all__ = [
    "ChannelParams",
    "CqiTable",
    "default_cqi_table",
    "SchedulingEnv",
    "ExperimentConfig",
    "load_config",
    "run",
]
