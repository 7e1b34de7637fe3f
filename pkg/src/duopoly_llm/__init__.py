"""Simulation lab for duopoly pricing delegated to one shared, periodically retrained LLM."""

__version__ = "0.1.0"

from .market import (  # noqa: E402
    Action,
    GameParams,
    JointProbs,
    LlmParams,
    Regime,
    RegimeKind,
    classify_regime,
    delta,
    joint_probs,
    marginal_p_high,
    payoffs,
    rho_critical,
    s_statistic,
    theta_bounds,
)
from .dynamics import LearnConfig, LimitClass, Trajectory  # noqa: E402
from .learner import PricingDynamics  # noqa: E402
