"""Receding-horizon demand response and the scenario comparison harness.

A day runs over T hourly periods starting at noon.  The online procedure
re-derives prices from updated non-flexible load forecasts at every period,
re-solves the equilibrium on the remaining horizon, realises the first period
and decrements each consumer's remaining energy demand.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from hourly_dr.feasible import TOL_FEAS, project_rows
from hourly_dr.forecasting import (REFERENCE_MEAN_REVERSION, REFERENCE_VOLATILITY, ForecastModel,
                                   forecast, simulate_path)
from hourly_dr.game import ConsumerSpec, GameInstance, ProviderCost, derive_prices, scaled_cost, social_cost
from hourly_dr.solvers import SolverConfig, solve, solve_optimal

log = logging.getLogger(__name__)

NOON = 12
CHARGER_RATINGS_KW = (3.3, 6.6, 7.2)


class ScenarioKind(str, Enum):
    UNCOORDINATED = "uncoordinated"
    OFFLINE = "offline"
    ONLINE = "online"
    PERFECT = "perfect"
    OPTIMAL = "optimal"


ALL_SCENARIOS = tuple(ScenarioKind)


class DriftError(RuntimeError):
    """Residual demands drifted out of their feasible range during an online run."""


@dataclass
class DayRun:
    day: int
    kind: ScenarioKind
    profile: np.ndarray
    nonflexible: np.ndarray
    social_cost: float
    plans: list = field(default_factory=list)

    @property
    def energy(self) -> float:
        return float(self.profile.sum())

    @property
    def avg_price(self) -> float:
        return self.social_cost / self.energy if self.energy > 0 else float("nan")


# -- synthetic data -----------------------------------------------------------

def synthetic_seasonality(n_homes: int, per_home_kw: float = 1.5) -> np.ndarray:
    """Hour-of-week profile of a residential pool's non-flexible load (kW).

    Night trough, a morning bump and an evening peak around 19h; weekends
    (days 5 and 6) are flatter with a higher midday level.
    """
    hours = np.arange(168)
    hod = hours % 24
    dow = hours // 24
    shape = (0.75
             + 0.35 * np.exp(-0.5 * ((hod - 7.5) / 1.5) ** 2)
             + 0.95 * np.exp(-0.5 * ((hod - 19.0) / 2.2) ** 2)
             + 0.15 * np.exp(-0.5 * ((hod - 13.0) / 3.0) ** 2))
    weekend = dow >= 5
    shape[weekend] = 0.85 * shape[weekend] + 0.2 * np.exp(-0.5 * ((hod[weekend] - 12.0) / 4.0) ** 2)
    return n_homes * per_home_kw * shape / shape.mean()


def synthetic_consumers(n: int, T: int = 24, rng=None, energy_range=(0.15, 0.6)) -> list:
    """EV owners with one contiguous charging window each.

    Arrival falls in the evening part of the horizon (a quarter to half way
    in, i.e. 18h-24h for a noon start with T=24) and the window lasts between
    a quarter and the rest of the horizon.  Each consumer has one charger
    rating for all available periods and a demand drawn uniformly in
    ``energy_range`` times the window capacity.
    """
    rng = np.random.default_rng(rng)
    out = []
    for _ in range(n):
        start = int(rng.integers(T // 4, max(T // 2, T // 4 + 1)))
        min_len = max(1, T // 4)
        length = int(rng.integers(min_len, T - start + 1)) if T - start > min_len else T - start
        rating = float(rng.choice(CHARGER_RATINGS_KW))
        upper = np.zeros(T)
        upper[start:start + length] = rating
        energy = rng.uniform(*energy_range) * upper.sum()
        out.append(ConsumerSpec(round(energy, 6), np.zeros(T), upper))
    return out


def plug_and_charge(consumers: Sequence[ConsumerSpec]) -> np.ndarray:
    """Uncoordinated profile: charge at full power from the first available period."""
    rows = []
    for c in consumers:
        remaining = c.energy - c.lower.sum()
        row = c.lower.copy()
        for t in range(row.size):
            take = min(c.upper[t] - c.lower[t], remaining)
            row[t] += take
            remaining -= take
            if remaining <= 0:
                break
        rows.append(row)
    return np.array(rows)


# -- the online procedure -----------------------------------------------------

def _forecast_window(model, realized, start_hour, step):
    """Forecast made at ``step`` for steps step..T-1 (exact at ``step``)."""
    T = len(realized)
    if model is None:
        return np.asarray(realized[step:], dtype=float)
    hours = start_hour + np.arange(step, T)
    return np.atleast_1d(forecast(model, start_hour + step, realized[step], hours))


def _subgame(consumers, cost, nonflexible, step, remaining):
    lower = np.array([c.lower[step:] for c in consumers])
    upper = np.array([c.upper[step:] for c in consumers])
    energy = np.clip(remaining, lower.sum(axis=1), upper.sum(axis=1))
    drift = np.max(np.abs(energy - remaining))
    if drift > 10 * TOL_FEAS:
        raise DriftError(f"residual demand left its feasible range by {drift:.3g} at period {step}")
    specs = [ConsumerSpec(e, lo, hi) for e, lo, hi in zip(energy, lower, upper)]
    return GameInstance(derive_prices(cost, nonflexible), specs, nonflexible)


def run_online(consumers: Sequence[ConsumerSpec], cost: ProviderCost, model: Optional[ForecastModel],
               realized_nf, start_hour: int = NOON, cfg: Optional[SolverConfig] = None,
               algorithm: str = "cbrd", day: int = 0) -> DayRun:
    """Receding-horizon equilibrium scheduling over one day.

    ``model=None`` means perfect forecasts.  Each re-solve is warm-started
    from the previous plan restricted to the remaining periods.
    """
    cfg = cfg or SolverConfig()
    T = consumers[0].lower.size
    realized_nf = np.asarray(realized_nf, dtype=float)[:T]
    if realized_nf.size < T:
        raise ValueError(f"realised path has {realized_nf.size} periods, need {T}")
    remaining = np.array([c.energy for c in consumers], dtype=float)
    realized = np.zeros((len(consumers), T))
    plans, plan = [], None
    for step in range(T):
        nf_hat = _forecast_window(model, realized_nf, start_hour, step)
        game = _subgame(consumers, cost, nf_hat, step, remaining)
        x0 = None
        if plan is not None:
            x0 = project_rows(plan[:, 1:], game.lower, game.upper, game.energy)
        report = solve(game, x0, cfg, algorithm)
        plan = report.profile
        plans.append(plan)
        realized[:, step] = plan[:, 0]
        remaining = remaining - plan[:, 0]
    final_game = GameInstance(derive_prices(cost, realized_nf), consumers, realized_nf)
    return DayRun(day, ScenarioKind.ONLINE, realized, realized_nf, social_cost(final_game, realized), plans)


def run_scenario(kind, consumers, cost, model, realized_nf, uncoordinated=None, start_hour: int = NOON,
                 cfg: Optional[SolverConfig] = None, algorithm: str = "cbrd", day: int = 0,
                 optimal_eps: float = 1e-9) -> DayRun:
    """One consumption scenario, scored at prices from the realised non-flexible load."""
    kind = ScenarioKind(kind)
    cfg = cfg or SolverConfig()
    T = consumers[0].lower.size
    realized_nf = np.asarray(realized_nf, dtype=float)[:T]
    true_game = GameInstance(derive_prices(cost, realized_nf), consumers, realized_nf)

    if kind is ScenarioKind.UNCOORDINATED:
        if uncoordinated is None:
            raise ValueError("the uncoordinated scenario needs a supplied profile")
        profile = np.asarray(uncoordinated, dtype=float)
        if not true_game.is_feasible(profile, tol=1e-6):
            raise ValueError("supplied uncoordinated profile is not feasible")
    elif kind is ScenarioKind.OFFLINE:
        nf_hat = _forecast_window(model, realized_nf, start_hour, 0)
        profile = solve(true_game.with_prices(derive_prices(cost, nf_hat), nf_hat), None, cfg, algorithm).profile
    elif kind is ScenarioKind.PERFECT:
        profile = solve(true_game, None, cfg, algorithm).profile
    elif kind is ScenarioKind.OPTIMAL:
        opt_cfg = SolverConfig(eps_stop=optimal_eps, k_max=200_000)
        report = solve_optimal(true_game, opt_cfg)
        if not report.converged:
            log.warning("day %d: optimum not certified (residual %.3g)", day, report.final_residual)
        profile = report.profile
    else:
        return run_online(consumers, cost, model, realized_nf, start_hour, cfg, algorithm, day)
    return DayRun(day, kind, profile, realized_nf, social_cost(true_game, profile))


# -- campaigns ----------------------------------------------------------------

@dataclass
class CampaignConfig:
    N: int = 30
    T: int = 24
    days: int = 31
    seed: int = 0
    mean_reversion: float = REFERENCE_MEAN_REVERSION
    sigma: float = REFERENCE_VOLATILITY
    cost: Optional[ProviderCost] = None
    scenarios: tuple = ALL_SCENARIOS
    eps_stop: float = 1e-3
    k_max: int = 10_000
    algorithm: str = "cbrd"
    start_hour: int = NOON
    per_home_kw: float = 1.5
    perfect_forecasts: bool = False

    def __post_init__(self):
        if self.N < 1 or self.T < 1 or self.days < 1:
            raise ValueError("N, T and days must be positive")
        self.scenarios = tuple(ScenarioKind(s) for s in self.scenarios)
        if self.cost is None:
            self.cost = scaled_cost(self.N)

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known - {"forecast", "cost"}
        if unknown:
            raise ValueError(f"unknown campaign field(s): {', '.join(sorted(unknown))}")
        kw = {k: v for k, v in d.items() if k in known and k != "cost"}
        if "forecast" in d:
            kw["mean_reversion"] = d["forecast"].get("m", REFERENCE_MEAN_REVERSION)
            kw["sigma"] = d["forecast"].get("sigma", REFERENCE_VOLATILITY)
        if d.get("cost") is not None:
            c = d["cost"]
            try:
                kw["cost"] = ProviderCost(float(c["c0"]), float(c["c1"]), float(c["c2"]))
            except KeyError as exc:
                raise ValueError(f"cost is missing field {exc.args[0]}") from None
        if "scenarios" in kw:
            try:
                kw["scenarios"] = tuple(ScenarioKind(s) for s in kw["scenarios"])
            except ValueError as exc:
                raise ValueError(f"scenarios: {exc}") from None
        return cls(**kw)


@dataclass
class CampaignResult:
    config: CampaignConfig
    runs: list
    seconds: float = 0.0

    def costs(self, kind) -> np.ndarray:
        kind = ScenarioKind(kind)
        return np.array([r.social_cost for r in self.runs if r.kind is kind])

    def summary(self) -> list:
        """Rows of (scenario, mean social cost, total cost, average price, gain vs uncoordinated)."""
        base = None
        if ScenarioKind.UNCOORDINATED in self.config.scenarios:
            base = self.costs(ScenarioKind.UNCOORDINATED).sum()
        rows = []
        for kind in self.config.scenarios:
            runs = [r for r in self.runs if r.kind is kind]
            total = sum(r.social_cost for r in runs)
            energy = sum(r.energy for r in runs)
            gain = 100.0 * (base - total) / base if base else float("nan")
            rows.append({"scenario": kind.value, "mean_social_cost": total / len(runs),
                         "total_social_cost": total,
                         "avg_price": total / energy if energy > 0 else float("nan"), "gain_pct": gain})
        return rows

    def paired_pvalue(self, better, worse) -> float:
        """One-sided paired t-test p-value for mean SC(better) < mean SC(worse)."""
        from scipy import stats
        diff = self.costs(worse) - self.costs(better)
        if np.allclose(diff, 0):
            return float("nan")
        return float(stats.ttest_1samp(diff, 0.0, alternative="greater").pvalue)

    def days_csv(self) -> str:
        base = {r.day: r.social_cost for r in self.runs if r.kind is ScenarioKind.UNCOORDINATED}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "day", "social_cost", "avg_price", "gain_pct"])
        for r in self.runs:
            gain = 100.0 * (base[r.day] - r.social_cost) / base[r.day] if r.day in base else float("nan")
            w.writerow([r.kind.value, r.day, f"{r.social_cost:.6g}", f"{r.avg_price:.6g}", f"{gain:.6g}"])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "mean_social_cost", "total_social_cost", "avg_price", "gain_pct"])
        for row in self.summary():
            w.writerow([row["scenario"]] + [f"{row[k]:.6g}" for k in
                                            ("mean_social_cost", "total_social_cost", "avg_price", "gain_pct")])
        return buf.getvalue()

    def profiles_csv(self) -> str:
        """Hourly aggregate flexible load per scenario and day, with the realised non-flexible load."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "day", "t", "flexible_kw", "nonflexible_kw"])
        for r in self.runs:
            agg = r.profile.sum(axis=0)
            for t in range(agg.size):
                w.writerow([r.kind.value, r.day, t, f"{agg[t]:.6g}", f"{r.nonflexible[t]:.6g}"])
        return buf.getvalue()


def campaign_inputs(config: CampaignConfig):
    """Deterministic (model, [(consumers, realised path)] per day) for a campaign."""
    rng = np.random.default_rng(config.seed)
    model = ForecastModel(synthetic_seasonality(config.N, config.per_home_kw), config.mean_reversion,
                          config.sigma)
    total_hours = 24 * (config.days - 1) + config.T
    path = simulate_path(model, total_hours, rng, start_hour=config.start_hour)
    days = []
    for d in range(config.days):
        consumers = synthetic_consumers(config.N, config.T, rng)
        days.append((consumers, path[24 * d: 24 * d + config.T]))
    return model, days


def run_campaign(config: CampaignConfig, progress=None) -> CampaignResult:
    started = time.perf_counter()
    model, days = campaign_inputs(config)
    forecaster = None if config.perfect_forecasts else model
    cfg = SolverConfig(eps_stop=config.eps_stop, k_max=config.k_max)
    runs = []
    for d, (consumers, nf) in enumerate(days):
        start_hour = config.start_hour + 24 * d
        for kind in config.scenarios:
            runs.append(run_scenario(kind, consumers, config.cost, forecaster, nf,
                                     uncoordinated=plug_and_charge(consumers), start_hour=start_hour,
                                     cfg=cfg, algorithm=config.algorithm, day=d))
        if progress is not None:
            progress(d)
    return CampaignResult(config, runs, time.perf_counter() - started)
