"""Cooperative heterogeneous reinforcement learning at desk scale.

Three agents -- an off-policy soft actor-critic, an on-policy clipped
policy-gradient learner, and a cross-entropy-method population -- share a
common mean-action network for policy transfer and a dual (local/global)
replay memory, and are driven round-robin by a single experiment runner.
"""

from cooprl.config import RunConfig
from cooprl.runner import run_experiment

__all__ = ["RunConfig", "run_experiment"]

__version__ = "0.1.0"
