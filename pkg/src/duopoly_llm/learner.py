"""scikit-learn style front end for the propensity learning dynamics.

``PricingDynamics`` treats initial propensities as samples: ``fit`` resolves
the game's analytic structure, ``transform`` maps each starting theta to the
theta the learner ends at, ``predict`` to the equilibrium it settles on and
``predict_proba`` to Monte Carlo selection probabilities. Because it is a
``BaseEstimator`` it supports ``get_params``/``set_params``/``clone`` and grid
utilities out of the box.
"""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array, check_scalar
from sklearn.utils.validation import check_is_fitted

from .dynamics import LearnConfig, LimitClass, simulate_deterministic, simulate_stochastic
from .estimator import EstimatorConfig
from .experiments import run_replications, summarize_limits
from .market import GameParams, RegimeKind
from .rng import RngStream, stream_id_for


class PricingDynamics(TransformerMixin, BaseEstimator):
    """Long-run behaviour of a shared pricing LLM retrained on seller feedback.

    Parameters
    ----------
    r : float, default=1.5
        Relative profitability of the high price, in (1, 2).
    rho : float, default=0.85
        Output fidelity, in (1/2, 1].
    batch_size : int or None, default=None
        Rounds per retraining step. ``None`` runs the infinite-batch
        (deterministic) recursion.
    alpha, eta : float
        Step sizes ``eta / (n + 1) ** alpha``.
    n_steps : int, default=100_000
        Retraining horizon.
    epsilon_clip : float, default=1e-3
        Floor on the inverse-probability denominators.
    z_cap : float, default=30.0
        Absorbing barrier in log-odds.
    tol : float, default=0.05
        Distance to an equilibrium that counts as having settled.
    n_reps : int, default=200
        Replications per row in ``predict_proba``.
    random_state : int, default=0
        Seed of every random stream.
    n_jobs : int or None
        Worker threads for replications.
    """

    def __init__(self, r=1.5, rho=0.85, batch_size=None, alpha=2.0 / 3.0, eta=1.0,
                 n_steps=100_000, epsilon_clip=1e-3, z_cap=30.0, tol=0.05, n_reps=200,
                 random_state=0, n_jobs=None):
        self.r = r
        self.rho = rho
        self.batch_size = batch_size
        self.alpha = alpha
        self.eta = eta
        self.n_steps = n_steps
        self.epsilon_clip = epsilon_clip
        self.z_cap = z_cap
        self.tol = tol
        self.n_reps = n_reps
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _validate_params(self):
        check_scalar(self.r, "r", numbers.Real, min_val=1.0, max_val=2.0, include_boundaries="neither")
        check_scalar(self.rho, "rho", numbers.Real, min_val=0.5, max_val=1.0, include_boundaries="right")
        if self.batch_size is not None:
            check_scalar(self.batch_size, "batch_size", numbers.Integral, min_val=1)
        check_scalar(self.alpha, "alpha", numbers.Real, min_val=0.5, max_val=1.0, include_boundaries="right")
        check_scalar(self.eta, "eta", numbers.Real, min_val=0.0, max_val=1.0, include_boundaries="right")
        check_scalar(self.n_steps, "n_steps", numbers.Integral, min_val=1)
        check_scalar(self.epsilon_clip, "epsilon_clip", numbers.Real, min_val=0.0, max_val=0.25)
        check_scalar(self.z_cap, "z_cap", numbers.Real, min_val=20.0)
        check_scalar(self.tol, "tol", numbers.Real, min_val=0.0, include_boundaries="neither")
        check_scalar(self.n_reps, "n_reps", numbers.Integral, min_val=1)

    def fit(self, X=None, y=None):
        """Resolve the regime and the analytic equilibria. ``X`` is ignored."""
        self._validate_params()
        self.config_ = LearnConfig(
            game=GameParams(self.r), rho=float(self.rho), batch_size=self.batch_size or 1,
            alpha=float(self.alpha), eta=float(self.eta), horizon=int(self.n_steps),
            estimator=EstimatorConfig(float(self.epsilon_clip)), z_cap=float(self.z_cap),
            limit_tol=float(self.tol),
        )
        self.regime_ = self.config_.regime()
        self.rho_c_ = self.regime_.rho_c
        self.s_ = self.regime_.s
        self.theta_minus_ = self.regime_.theta_minus
        self.theta_plus_ = self.regime_.theta_plus
        self.classes_ = np.array([c.value for c in LimitClass])
        return self

    def _theta0(self, X):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        theta0 = X.reshape(-1)
        if X.ndim == 2 and X.shape[1] != 1:
            raise ValueError(f"expected a single column of initial propensities, got shape {X.shape}")
        if np.any((theta0 <= 0) | (theta0 >= 1)):
            raise ValueError("initial propensities must lie strictly inside (0, 1)")
        return theta0

    def simulate(self, theta0, replication=0):
        """One trajectory from ``theta0``; replication ``k`` owns its own stream."""
        check_is_fitted(self, "config_")
        if self.batch_size is None:
            return simulate_deterministic(theta0, self.config_)
        stream = stream_id_for("PricingDynamics", repr(float(theta0)), int(replication))
        return simulate_stochastic(theta0, self.config_, RngStream(self.random_state, stream))

    def transform(self, X):
        """Final propensity reached from each starting value, shape ``(n, 1)``."""
        theta0 = self._theta0(X)
        return np.array([[self.simulate(t).theta_final] for t in theta0])

    def predict(self, X):
        """Label of the equilibrium each start settles on."""
        theta0 = self._theta0(X)
        return np.array([self.simulate(t).limit.value for t in theta0])

    def predict_proba(self, X):
        """``[P(competitive), P(collusive)]`` per row.

        Deterministic runs give indicator rows. Stochastic runs estimate the
        collusion probability over ``n_reps`` replications, leaving
        undetermined runs out of the denominator.
        """
        check_is_fitted(self, "config_")
        if self.regime_.kind is not RegimeKind.HIGH_FIDELITY:
            raise ValueError("collusion probabilities need the high-fidelity regime")
        theta0 = self._theta0(X)
        out = np.empty((len(theta0), 2))
        for i, t in enumerate(theta0):
            if self.batch_size is None:
                p = float(self.simulate(t).limit is LimitClass.COLLUSIVE_PLUS)
            else:
                trajs = run_replications(t, self.config_, self.n_reps, self.random_state,
                                         ("PricingDynamics.proba", repr(float(t))), self.n_jobs)
                p = summarize_limits([tr.limit for tr in trajs]).p_plus_hat
            out[i] = (1.0 - p, p)
        return out
