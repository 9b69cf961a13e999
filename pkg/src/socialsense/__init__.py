"""Bayesian social learning, herding, incest-free reputation fusion,
social-learning quickest detection and regret matching."""

from socialsense.belief import (
    ModelParams,
    action_likelihood,
    hmm_filter,
    myopic_action,
    social_learning_filter,
)
from socialsense.errors import SocialSenseError

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "SocialSenseError",
    "action_likelihood",
    "hmm_filter",
    "myopic_action",
    "social_learning_filter",
]
