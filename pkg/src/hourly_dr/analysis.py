"""Efficiency and stability analytics.

Price of Anarchy bound for affine prices c_t(L) = alpha_t + beta_t L with
aggregate capacity Lbar_t = sum_n upper_{n,t}.  Writing r_t = alpha_t / (beta_t Lbar_t)
and phi_t = (1 + r_t)^2, with t0 the period of smallest r_t:

    tight bound   1/2 (1 + sqrt(1 + 1/phi_t0) + 1/(2 sqrt(phi_t0)))
    coarse bound  1 + 3/4 sup_t 1/(1 + r_t)

valid when phi_t <= phi_t0 + 2 + sqrt(1 + phi_t0) for every t.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from hourly_dr.feasible import project_rows
from hourly_dr.game import GameInstance, social_cost


class PoaBoundUndefined(ValueError):
    pass


@dataclass
class PoaBoundReport:
    ratios: np.ndarray
    phi: np.ndarray
    t0: int
    condition_holds: bool
    bound_tight: float
    bound_simplified: float
    mu_star: float
    lambda_star: float
    empirical_poa: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = self.ratios.tolist()
        d["phi"] = self.phi.tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def tight_bound(phi0: float) -> float:
    return 0.5 * (1.0 + np.sqrt(1.0 + 1.0 / phi0) + 0.5 / np.sqrt(phi0))


def coarse_bound(ratios) -> float:
    return float(1.0 + 0.75 * np.max(1.0 / (1.0 + np.asarray(ratios, dtype=float))))


def optimal_mu(phi: float) -> float:
    """Smoothness parameter mu* = (-1 + sqrt(1 + phi)) / phi minimising lambda*(mu)/(1 - mu)."""
    return (-1.0 + np.sqrt(1.0 + phi)) / phi


def smoothness_lambda(ratio: float, mu: float) -> float:
    """lambda*(mu) = ((1 + r mu)^2 + mu) / (4 mu (1 + r)), in units where Lbar = 1."""
    return ((1.0 + ratio * mu) ** 2 + mu) / (4.0 * mu * (1.0 + ratio))


def condition_threshold(phi0: float) -> float:
    return phi0 + 2.0 + np.sqrt(1.0 + phi0)


def poa_bound(game: GameInstance) -> PoaBoundReport:
    if not game.prices.is_affine:
        raise TypeError("the PoA bound is only available for affine prices")
    alpha, beta = game.prices.alpha, game.prices.beta
    lbar = game.upper.sum(axis=0)
    for t in range(game.T):
        if lbar[t] <= 0:
            raise PoaBoundUndefined(f"bound undefined for period {t}: aggregate capacity is zero")
        if beta[t] <= 0:
            raise PoaBoundUndefined(f"bound undefined for period {t}: beta is not positive")
    ratios = alpha / (beta * lbar)
    phi = (1.0 + ratios) ** 2
    t0 = int(np.argmin(ratios))
    mu = optimal_mu(phi[t0])
    return PoaBoundReport(
        ratios=ratios,
        phi=phi,
        t0=t0,
        condition_holds=bool(np.all(phi <= condition_threshold(phi[t0]))),
        bound_tight=float(tight_bound(phi[t0])),
        bound_simplified=coarse_bound(ratios),
        mu_star=float(mu),
        lambda_star=float(smoothness_lambda(ratios[t0], mu)),
    )


def empirical_poa(game: GameInstance, ne, opt) -> float:
    """SC(ne) / SC(opt)."""
    denominator = social_cost(game, opt)
    if denominator <= 0:
        raise ValueError("social cost of the optimum must be positive")
    return social_cost(game, ne) / denominator


class StabilityCheck(NamedTuple):
    passed: bool
    worst_lhs: float


def stability_lhs(game: GameInstance, profile) -> np.ndarray:
    """Per-period 2 c'(L_t) (1 - (c''(L_t) / (2 c'(L_t)))^2 ||x_t||^2)."""
    x = np.asarray(profile, dtype=float)
    L = x.sum(axis=0)
    c1 = game.prices.slope(L)
    c2 = game.prices.curvature(L)
    return 2 * c1 * (1.0 - (c2 / (2 * c1)) ** 2 * (x * x).sum(axis=0))


def sample_profiles(game: GameInstance, samples: int, rng=None) -> np.ndarray:
    """Random feasible profiles: uniform draws on [0, max upper] projected per player."""
    rng = np.random.default_rng(rng)
    scale = max(float(game.upper.max()), 1e-12)
    raw = rng.random((samples, game.N, game.T)) * scale
    flat = raw.reshape(-1, game.T)
    lower = np.tile(game.lower, (samples, 1))
    upper = np.tile(game.upper, (samples, 1))
    energy = np.tile(game.energy, samples)
    return project_rows(flat, lower, upper, energy).reshape(samples, game.N, game.T)


def check_strong_stability(game: GameInstance, a: float, samples: int = 1000, rng=None) -> StabilityCheck:
    """Falsifier search for the strong-stability inequality at level ``a``.

    The inequality is an infimum over all feasible profiles; sampling can
    only refute it, so ``passed`` means "no counterexample found".
    """
    worst = np.inf
    for x in sample_profiles(game, samples, rng):
        worst = min(worst, float(np.min(stability_lhs(game, x))))
    return StabilityCheck(worst >= a, worst)


def monotonicity_ratio(game: GameInstance, x, y) -> float:
    """(y - x).(F(y) - F(x)) / ||y - x||^2 for the stacked bill gradients F."""
    from hourly_dr.game import marginal_costs
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    norm2 = float((d * d).sum())
    if norm2 == 0.0:
        raise ValueError("profiles coincide")
    dF = marginal_costs(game, y) - marginal_costs(game, x)
    return float((d * dF).sum() / norm2)
