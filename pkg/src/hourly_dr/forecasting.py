"""Seasonal Ornstein-Uhlenbeck model of the non-flexible load.

L_t = P_{h(t)} exp(X_t), where h(t) = t mod 168 is the hour of the week and X
is an OU process dX = -m X dt + sigma dW sampled hourly.

The point forecast made at hour t for hour t' >= t is the conditional mean

    P_{t'} (L_t / P_t)^{exp(-m (t' - t))} exp(sigma^2 / (4 m) (1 - exp(-2 m (t' - t))))

which equals the observation at t' = t.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HOURS_PER_WEEK = 168

# Values reported for a residential pool, hourly data.
REFERENCE_MEAN_REVERSION = 0.198
REFERENCE_VOLATILITY = 0.117


@dataclass(frozen=True)
class ForecastModel:
    seasonality: np.ndarray
    mean_reversion: float
    sigma: float

    def __post_init__(self):
        P = np.array(self.seasonality, dtype=float)
        if P.shape != (HOURS_PER_WEEK,):
            raise ValueError(f"seasonality needs {HOURS_PER_WEEK} hourly factors, got shape {P.shape}")
        if np.any(P <= 0):
            raise ValueError("seasonality factors must be positive")
        if not self.mean_reversion > 0:
            raise ValueError("mean reversion must be positive")
        if self.sigma < 0:
            raise ValueError("volatility must be non-negative")
        P.setflags(write=False)
        object.__setattr__(self, "seasonality", P)
        object.__setattr__(self, "mean_reversion", float(self.mean_reversion))
        object.__setattr__(self, "sigma", float(self.sigma))

    def __eq__(self, other):
        return (isinstance(other, ForecastModel)
                and np.array_equal(self.seasonality, other.seasonality)
                and self.mean_reversion == other.mean_reversion and self.sigma == other.sigma)

    def season(self, hours) -> np.ndarray:
        return self.seasonality[np.asarray(hours) % HOURS_PER_WEEK]

    @property
    def stationary_variance(self) -> float:
        return self.sigma ** 2 / (2 * self.mean_reversion)

    def to_dict(self) -> dict:
        return {"P": self.seasonality.tolist(), "m": self.mean_reversion, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d) -> "ForecastModel":
        missing = [k for k in ("P", "m", "sigma") if k not in d]
        if missing:
            raise ValueError(f"forecast model is missing field(s): {', '.join(missing)}")
        return cls(d["P"], d["m"], d["sigma"])

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def forecast(model: ForecastModel, t: int, observed: float, t_prime):
    """Forecast of the load at hour(s) ``t_prime`` given ``observed`` at hour ``t``."""
    if not observed > 0:
        raise ValueError("observed load must be positive")
    t_prime = np.asarray(t_prime)
    lag = t_prime - t
    if np.any(lag < 0):
        raise ValueError("cannot forecast the past (t_prime < t)")
    m, sigma = model.mean_reversion, model.sigma
    decay = np.exp(-m * lag)
    drift = np.exp(sigma ** 2 / (4 * m) * (1 - decay * decay))
    out = model.season(t_prime) * (observed / model.season(t)) ** decay * drift
    out = np.where(lag == 0, observed, out)
    return float(out) if out.ndim == 0 else out


def simulate_latent(model: ForecastModel, horizon: int, rng=None, x0=None) -> np.ndarray:
    """Exact hourly discretisation of the OU log-deviation.

    X_{k+1} = X_k e^{-m} + eps_k with eps_k ~ N(0, sigma^2 (1 - e^{-2m}) / (2m));
    X_0 is drawn from the stationary law unless given.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least one hour")
    rng = np.random.default_rng(rng)
    m, sigma = model.mean_reversion, model.sigma
    rho = np.exp(-m)
    innov_sd = sigma * np.sqrt((1 - rho * rho) / (2 * m))
    x = np.empty(horizon)
    x[0] = rng.normal(0.0, np.sqrt(model.stationary_variance)) if x0 is None else x0
    shocks = rng.normal(0.0, 1.0, horizon - 1) * innov_sd
    for k in range(1, horizon):
        x[k] = x[k - 1] * rho + shocks[k - 1]
    return x


def simulate_path(model: ForecastModel, horizon: int, rng=None, start_hour: int = 0, x0=None) -> np.ndarray:
    """Load path P_t exp(X_t) for ``horizon`` hours starting at ``start_hour`` (hour of week)."""
    x = simulate_latent(model, horizon, rng, x0)
    return model.season(start_hour + np.arange(horizon)) * np.exp(x)


def fit(hours, loads) -> ForecastModel:
    """Fit seasonality, mean reversion and volatility to an hourly history.

    ``hours`` are hour-of-week indices of consecutive hourly observations.
    Seasonality is the per-slot geometric mean; the log-deviations are
    regressed on their lag (AR(1) by least squares) giving m = -log(slope),
    and the innovation variance is mapped back to sigma.
    """
    hours = np.asarray(hours, dtype=int) % HOURS_PER_WEEK
    loads = np.asarray(loads, dtype=float)
    if hours.shape != loads.shape or loads.ndim != 1:
        raise ValueError("hours and loads must be 1-D arrays of equal length")
    if np.any(loads <= 0):
        i = int(np.argmax(loads <= 0))
        raise ValueError(f"non-positive load at observation {i}")
    counts = np.bincount(hours, minlength=HOURS_PER_WEEK)
    if counts.min() < 2:
        short = np.flatnonzero(counts < 2)
        raise ValueError(f"insufficient coverage: {short.size} hour-of-week slot(s) observed "
                         f"fewer than twice (first: {short[0]})")
    logs = np.log(loads)
    log_season = np.bincount(hours, weights=logs, minlength=HOURS_PER_WEEK) / counts
    x = logs - log_season[hours]
    prev, nxt = x[:-1], x[1:]
    design = np.column_stack([np.ones_like(prev), prev])
    (intercept, slope), *_ = np.linalg.lstsq(design, nxt, rcond=None)
    resid = nxt - intercept - slope * prev
    var = float(resid @ resid) / max(resid.size - 2, 1)
    seasonality = np.exp(log_season)
    if var <= 1e-20 or not 0 < slope < 1:
        # degenerate history (e.g. constant load): no measurable dynamics
        m = -np.log(slope) if 0 < slope < 1 else REFERENCE_MEAN_REVERSION
        return ForecastModel(seasonality, m, 0.0)
    m = -np.log(slope)
    sigma = np.sqrt(2 * m * var / (1 - np.exp(-2 * m)))
    return ForecastModel(seasonality, m, sigma)
