"""Travel-time estimation: bilinear state-dependent model + Kalman filter.

One TravelTimeSeries per (robot, arc) pair.  The model window covers the
last r travel costs and the last r innovations (r is the regression
number); see mrsim.kernels for the state layout and the normative
transition-matrix rendering.  Observations enter through ``update`` (a
measurement step followed by the window advance); planning queries get the
one-step-ahead prediction of the newest cost, floored at a minimum
positive value so path search never sees a nonpositive weight.

Innovations are sampled from the observation history: the current
innovation estimate is the most recent first difference of incorporated
travel costs, the model's projection of how the cost is changing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mrsim import kernels

MIN_ESTIMATE = 1e-3

_INIT_VAR_X = 1.0
_INIT_VAR_XI = 0.5
_FIT_RIDGE = 1e-3
_FIT_STABILITY_CAP = 0.98


@dataclass
class EstimatorConfig:
    """Model constants; defaults are a random-walk prior (phi_1 = -1)."""

    regression_no: int = 4
    phi: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    process_noise_var: float = 0.04
    obs_noise_var: float = 0.09
    fit_phi: bool = False

    def __post_init__(self) -> None:
        r = self.regression_no
        if r < 1:
            raise ValueError(f"regression number must be >= 1, got {r}")
        if self.process_noise_var < 0 or self.obs_noise_var < 0:
            raise ValueError("noise variances must be nonnegative")
        if self.phi is None:
            self.phi = np.zeros(r)
            self.phi[0] = -1.0
        self.phi = np.asarray(self.phi, dtype=float)
        self.b = np.zeros(r) if self.b is None else np.asarray(self.b, dtype=float)
        self.c = np.zeros((r, r)) if self.c is None else np.asarray(self.c, dtype=float)
        if self.phi.shape != (r,) or self.b.shape != (r,) or self.c.shape != (r, r):
            raise ValueError(
                f"coefficient shapes must be ({r},), ({r},), ({r},{r}); got "
                f"{self.phi.shape}, {self.b.shape}, {self.c.shape}"
            )

    @property
    def dim(self) -> int:
        return 2 * self.regression_no + 1

    @classmethod
    def from_dict(cls, raw: dict) -> "EstimatorConfig":
        known = {"regression_no", "phi", "b", "c", "process_noise_var", "obs_noise_var", "fit_phi"}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown estimator config keys {sorted(unknown)}")
        kwargs = dict(raw)
        for key in ("phi", "b", "c"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = np.asarray(kwargs[key], dtype=float)
        return cls(**kwargs)


@dataclass
class EstimatorState:
    """Filter state: s (2r+1), covariance P, running mean mu, instance count k."""

    s: np.ndarray
    P: np.ndarray
    mu: float
    k: int

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.s.copy(), self.P.copy(), self.mu, self.k)


def sample_innovation(history: Sequence[float]) -> float:
    """Most recent first difference of the observed costs; 0 when fewer
    than two observations exist."""
    if len(history) < 2:
        return 0.0
    return float(history[-1]) - float(history[-2])


def psi_terms(config: EstimatorConfig, state: EstimatorState) -> np.ndarray:
    return kernels.psi_terms(config.b, config.c, state.s)


def build_F(config: EstimatorConfig, state: EstimatorState) -> np.ndarray:
    """The transition matrix F(s); see mrsim.kernels for the layout."""
    return kernels.build_f_matrix(config.phi, config.b, config.c, state.mu, state.s)


def predict(
    config: EstimatorConfig, state: EstimatorState, xi_hat: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """One-step prediction (s-, P-) without committing anything."""
    return kernels.predict_step(
        config.phi, config.b, config.c, state.mu, config.process_noise_var,
        state.s, state.P, xi_hat,
    )


def update(
    config: EstimatorConfig, state: EstimatorState, y: float, xi_hat: float = 0.0
) -> EstimatorState:
    """Incorporate an observed travel time: measurement step on the current
    window (innovation y - (H s + xi_hat), Joseph-form covariance), then the
    window advance through F with the same sampled innovation; the running
    mean includes y and the instance count moves forward."""
    if not y > 0.0:
        raise ValueError(f"travel-time observation must be positive, got {y}")
    s1, P1 = kernels.measurement_step(state.s, state.P, config.obs_noise_var, y, xi_hat)
    mu = (state.mu * state.k + y) / (state.k + 1)
    s2, P2 = kernels.predict_step(
        config.phi, config.b, config.c, mu, config.process_noise_var, s1, P1, xi_hat
    )
    return EstimatorState(s=s2, P=P2, mu=mu, k=state.k + 1)


def fit_ar_coefficients(values: Sequence[float], r: int) -> Optional[np.ndarray]:
    """Ridge least-squares fit of the autoregression on mean deviations;
    returns phi (with the model's sign convention) or None if degenerate.
    The result is scaled into the stability region when needed."""
    v = np.asarray(values, dtype=float)
    if len(v) < r + 2:
        return None
    mu = v.mean()
    dev = v - mu
    rows = len(v) - r
    X = np.empty((rows, r))
    for i in range(rows):
        X[i] = dev[i + r - 1 :: -1][:r]
    y = dev[r:]
    gram = X.T @ X + _FIT_RIDGE * np.eye(r)
    try:
        beta = np.linalg.solve(gram, X.T @ y)
    except np.linalg.LinAlgError:
        return None
    total = np.abs(beta).sum()
    if total > _FIT_STABILITY_CAP:
        beta *= _FIT_STABILITY_CAP / total
    return -beta


class TravelTimeSeries:
    """Filtered travel-time series for one (robot, arc) pair.

    Owned by a single robot's planner; all transitions are pure
    state-to-state moves so distinct series can run in parallel.
    ``prior_cost`` (arc length x base pace) answers queries before any
    observation exists anywhere.
    """

    def __init__(self, config: EstimatorConfig, prior_cost: float):
        self.config = config
        self.prior_cost = prior_cost
        self.state: Optional[EstimatorState] = None
        self.values: list[float] = []
        self.last_instance = -1
        self.own_last_instance = -1
        self.fitted_phi: Optional[np.ndarray] = None
        self.revision = 0
        self._cached: tuple[int, float] = (-1, 0.0)
        self._fitted_config: Optional[EstimatorConfig] = None

    # -- observation intake ------------------------------------------------

    def incorporate(self, instance: int, value: float, own: bool) -> bool:
        """Feed one observation; re-offers of instances already seen are
        no-ops, so a shared record can be offered every planning call."""
        if instance <= self.last_instance:
            return False
        cfg = self._effective_config()
        if self.state is None:
            self.state = self._initial_state(value)
        else:
            xi_hat = sample_innovation(self.values)
            self.state = update(cfg, self.state, value, xi_hat)
        self.values.append(value)
        self.last_instance = instance
        if own:
            self.own_last_instance = instance
        self._pad_short_windows()
        self._maybe_fit()
        self.revision += 1
        return True

    def _initial_state(self, value: float) -> EstimatorState:
        r = self.config.regression_no
        n = 2 * r + 1
        s = np.zeros(n)
        s[0] = 1.0
        s[r + 1 :] = value
        P = np.zeros((n, n))
        for i in range(1, r + 1):
            P[i, i] = _INIT_VAR_XI
            P[r + i, r + i] = _INIT_VAR_X + self.config.obs_noise_var
        return EstimatorState(s=s, P=P, mu=value, k=1)

    def _pad_short_windows(self) -> None:
        """While history is shorter than the window, the unfilled older
        slots hold the running mean (costs) and zero (innovations)."""
        assert self.state is not None
        r = self.config.regression_no
        n_obs = len(self.values)
        if n_obs >= r:
            return
        self.state.s[r + 1 : r + 1 + (r - n_obs)] = self.state.mu
        n_diffs = n_obs - 1
        if n_diffs < r:
            self.state.s[1 : 1 + (r - n_diffs)] = 0.0

    def _maybe_fit(self) -> None:
        cfg = self.config
        if not cfg.fit_phi or self.fitted_phi is not None:
            return
        if len(self.values) < 2 * cfg.regression_no + 2:
            return
        fitted = fit_ar_coefficients(self.values, cfg.regression_no)
        if fitted is not None:
            self.fitted_phi = fitted
            self._fitted_config = EstimatorConfig(
                regression_no=cfg.regression_no,
                phi=fitted,
                b=cfg.b,
                c=cfg.c,
                process_noise_var=cfg.process_noise_var,
                obs_noise_var=cfg.obs_noise_var,
                fit_phi=False,
            )

    def _effective_config(self) -> EstimatorConfig:
        return self._fitted_config if self._fitted_config is not None else self.config

    # -- queries -------------------------------------------------------------

    @property
    def is_empty(self) -> bool:
        return self.state is None

    def estimate(self, k: int) -> tuple[float, bool]:
        """Estimated travel cost at instance k (one-step-ahead prediction of
        the newest-cost slot, floored).  Returns (value, prior_only).
        """
        if k <= self.last_instance:
            raise ValueError(
                f"estimate target {k} not ahead of last incorporated instance {self.last_instance}"
            )
        if self.state is None:
            return max(MIN_ESTIMATE, self.prior_cost), True
        if self._cached[0] == self.revision:
            return self._cached[1], False
        cfg = self._effective_config()
        xi_hat = sample_innovation(self.values)
        est = kernels.predict_scalar(cfg.phi, cfg.b, cfg.c, self.state.mu, self.state.s, xi_hat)
        est = max(MIN_ESTIMATE, est)
        self._cached = (self.revision, est)
        return est, False


def estimate_travel_time(
    series: TravelTimeSeries,
    k: int,
    fallback_obs=None,
) -> tuple[float, bool]:
    """Estimate at instance k, first feeding ``fallback_obs`` (an observation
    gathered from another robot) into the filter when it is new to this
    series.  Returns (estimate, prior_only)."""
    if fallback_obs is not None:
        series.incorporate(fallback_obs.instance, fallback_obs.travel_time, own=False)
    return series.estimate(k)
