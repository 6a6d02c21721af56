"""Equilibrium and social-optimum solvers.

* ``best_response``: a player's bill-minimising schedule against the others' aggregate.
* ``solve_cbrd``: cycling best-response dynamics (players updated one after another).
* ``solve_sird``: simultaneous projected-gradient steps from a common snapshot.
* ``solve_optimal``: centralised minimisation of the social cost.
* ``ne_residual``: fixed-point residual certifying an equilibrium.

There is deliberately no "simultaneous best response" solver: letting every
player jump to its best response at once can cycle forever.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from hourly_dr.feasible import project_rows, solve_multiplier
from hourly_dr.game import GameInstance, aggregate, potential, social_cost, stability_constants

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    eps_stop: float = 1e-3
    k_max: int = 10_000
    gamma: Union[float, str] = "auto"
    record_history: bool = False
    br_tol: Optional[float] = None

    def __post_init__(self):
        if not self.eps_stop > 0:
            raise ValueError("eps_stop must be positive")
        if int(self.k_max) < 1:
            raise ValueError("k_max must be at least 1")
        if self.gamma != "auto" and not float(self.gamma) > 0:
            raise ValueError("gamma must be positive or 'auto'")

    @property
    def inner_tol(self) -> float:
        return self.br_tol if self.br_tol is not None else self.eps_stop / 100


@dataclass
class SolveReport:
    profile: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    algorithm: str = ""
    gamma: Optional[float] = None
    history: list = field(default_factory=list)
    step_potentials: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "gamma": self.gamma,
            "profile": self.profile.tolist(),
            "history": self.history,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "residual", "social_cost", "potential"])
        for row in self.history:
            pot = row.get("potential")
            writer.writerow([row["iteration"], f"{row['residual']:.6g}", f"{row['social_cost']:.6g}",
                             "" if pot is None else f"{pot:.6g}"])
        return buf.getvalue()


def default_start(game: GameInstance) -> np.ndarray:
    """Spread each residual demand over the periods in proportion to headroom."""
    lower, upper, energy = game.lower, game.upper, game.energy
    room = upper - lower
    total_room = room.sum(axis=1, keepdims=True)
    share = np.divide(room, total_room, out=np.zeros_like(room), where=total_room > 0)
    x0 = lower + (energy - lower.sum(axis=1))[:, None] * share
    return project_rows(x0, lower, upper, energy)


def random_start(game: GameInstance, rng) -> np.ndarray:
    """A random feasible profile: uniform draw in the bound box, then projected."""
    rng = np.random.default_rng(rng)
    x = game.lower + rng.random((game.N, game.T)) * (game.upper - game.lower)
    return project_rows(x, game.lower, game.upper, game.energy)


def own_lipschitz(game: GameInstance, samples: int = 64) -> float:
    """Bound on the curvature of a player's bill in its own schedule.

    Affine prices give 2 max_t beta_t.  Otherwise 2 c_t' + xbar c_t'' is
    maximised over a grid of aggregate loads in [0, Lbar_t].
    """
    if game.prices.is_affine:
        return stability_constants(game)[1]
    lbar = game.upper.sum(axis=0)
    ubar = game.upper.max(axis=0)
    best = 0.0
    for t, price in enumerate(game.prices.per_period):
        grid = np.linspace(0.0, lbar[t], samples)
        h = 2 * price.derivative(grid) + ubar[t] * np.asarray(price.second_derivative(grid))
        best = max(best, float(np.max(h)))
    return best


def _check_start(game, x0):
    x0 = np.array(x0, dtype=float)
    if x0.shape != (game.N, game.T):
        raise ValueError(f"start profile has shape {x0.shape}, expected {(game.N, game.T)}")
    if not game.is_feasible(x0, tol=1e-6):
        raise ValueError("start profile is not feasible")
    # remove rounding drift so every iterate is feasible to working precision
    return project_rows(x0, game.lower, game.upper, game.energy)


def _convex_best_response(game, n, s, tol, start=None, max_iter=10_000):
    """Scaled projected gradient on the separable objective sum_t x_t c_t(s_t + x_t).

    Each step minimises the linearisation plus a per-period quadratic with
    curvature bound ``h_t``; the step is therefore a weighted projection,
    solved by the same multiplier search as the Euclidean one.
    """
    prices = game.prices
    lo, hi, energy = game.lower[n], game.upper[n], game.energy[n]
    x = project_rows(default_start(game)[n] if start is None else start, lo, hi, energy)

    def objective(v):
        return float(v @ prices.value(s + v))

    probe = np.stack([lo, 0.5 * (lo + hi), hi])
    h = np.max([2 * prices.slope(s + p) + p * prices.curvature(s + p) for p in probe], axis=0)
    h = np.maximum(h, 1e-12)
    f = objective(x)
    for _ in range(max_iter):
        g = prices.value(s + x) + x * prices.slope(s + x)
        while True:
            x_new = solve_multiplier(g - h * x, h, lo, hi, energy)
            f_new = objective(x_new)
            d = x_new - x
            if f_new <= f + g @ d + 0.5 * (h * d) @ d + 1e-15 * abs(f):
                break
            h = 2 * h
        x, f = x_new, f_new
        if np.linalg.norm(d) < tol:
            break
    return x


def best_response(game: GameInstance, n: int, s, tol: Optional[float] = None, start=None) -> np.ndarray:
    """Player n's bill-minimising schedule given the others' aggregate ``s``.

    Affine prices: the objective sum_t x_t (alpha_t + beta_t s_t) + beta_t x_t^2
    is a separable QP solved exactly by the multiplier search.  Other convex
    prices use an inner projected-gradient loop to ``tol``.
    """
    if not 0 <= n < game.N:
        raise IndexError(f"player index {n} out of range for {game.N} players")
    s = np.asarray(s, dtype=float)
    if game.prices.is_affine:
        alpha, beta = game.prices.alpha, game.prices.beta
        if np.any(beta <= 0):
            raise ValueError("best response needs strictly increasing prices (beta > 0)")
        return solve_multiplier(alpha + beta * s, 2 * beta, game.lower[n], game.upper[n], game.energy[n])
    return _convex_best_response(game, n, s, 1e-8 if tol is None else tol, start)


def _history_row(game, k, residual, x):
    row = {"iteration": k, "residual": float(residual), "social_cost": social_cost(game, x)}
    row["potential"] = potential(game, x) if game.prices.is_affine else None
    return row


def solve_cbrd(game: GameInstance, x0=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Cycling best-response dynamics in the fixed player order 0..N-1.

    Stops once a full sweep moves the profile by less than ``eps_stop``
    (Euclidean norm over all players and periods) or after ``k_max`` sweeps.
    """
    cfg = cfg or SolverConfig()
    x = _check_start(game, default_start(game) if x0 is None else x0)
    L = x.sum(axis=0)
    affine = game.prices.is_affine
    report = SolveReport(x, 0, np.inf, False, algorithm="cbrd")
    if cfg.record_history:
        report.history.append(_history_row(game, 0, np.nan, x))
        if affine:
            report.step_potentials.append(potential(game, x))
    for k in range(1, int(cfg.k_max) + 1):
        previous = x.copy()
        for n in range(game.N):
            s = L - x[n]
            x[n] = best_response(game, n, s, tol=cfg.inner_tol, start=x[n])
            L = s + x[n]
            if cfg.record_history and affine:
                report.step_potentials.append(potential(game, x))
        # refresh the running aggregate to stop drift
        L = x.sum(axis=0)
        residual = float(np.linalg.norm(x - previous))
        report.iterations, report.final_residual = k, residual
        if cfg.record_history:
            report.history.append(_history_row(game, k, residual, x))
        if residual < cfg.eps_stop:
            report.converged = True
            break
    else:
        log.info("CBRD stopped at k_max=%d with residual %.3g", cfg.k_max, report.final_residual)
    report.profile = x
    return report


def sird_step(game: GameInstance, cfg: Optional[SolverConfig] = None) -> float:
    """Step size for SIRD: the explicit ``cfg.gamma`` or a / (N M^2)."""
    if cfg is not None and cfg.gamma != "auto":
        return float(cfg.gamma)
    if game.prices.is_affine:
        a, M = stability_constants(game)
    else:
        from hourly_dr.analysis import check_strong_stability
        check = check_strong_stability(game, 0.0, samples=200, rng=0)
        a, M = check.worst_lhs, own_lipschitz(game)
        if not a > 0:
            raise ValueError("no positive strong-stability constant found; pass an explicit gamma")
    return a / (game.N * M * M)


def sird_map(game: GameInstance, x, gamma: float) -> np.ndarray:
    """One simultaneous projected-gradient step for all players."""
    grad = marginal_costs_matrix(game, x)
    return project_rows(x - gamma * grad, game.lower, game.upper, game.energy)


def marginal_costs_matrix(game, x):
    L = x.sum(axis=0)
    return game.prices.value(L)[None, :] + x * game.prices.slope(L)[None, :]


def solve_sird(game: GameInstance, x0=None, cfg: Optional[SolverConfig] = None) -> SolveReport:
    """Simultaneous improving-response dynamics.

    Every player takes x_n <- Proj_n(x_n - gamma grad_n b_n(x)) from the same
    snapshot, so the per-player steps are independent of each other.
    """
    cfg = cfg or SolverConfig()
    gamma = sird_step(game, cfg)
    x = _check_start(game, default_start(game) if x0 is None else x0)
    report = SolveReport(x, 0, np.inf, False, algorithm="sird", gamma=gamma)
    if cfg.record_history:
        report.history.append(_history_row(game, 0, np.nan, x))
    for k in range(1, int(cfg.k_max) + 1):
        x_new = sird_map(game, x, gamma)
        residual = float(np.linalg.norm(x_new - x))
        x = x_new
        report.iterations, report.final_residual = k, residual
        if cfg.record_history:
            report.history.append(_history_row(game, k, residual, x))
        if residual < cfg.eps_stop:
            report.converged = True
            break
    report.profile = x
    return report


def solve(game: GameInstance, x0=None, cfg: Optional[SolverConfig] = None, algorithm: str = "cbrd") -> SolveReport:
    if algorithm == "cbrd":
        return solve_cbrd(game, x0, cfg)
    if algorithm == "sird":
        return solve_sird(game, x0, cfg)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def ne_residual(game: GameInstance, profile) -> float:
    """max_n || x_n - Proj_n(x_n - grad_n b_n(x) / M) ||.

    M is the own-curvature bound of ``own_lipschitz``, which puts the residual
    in load units; it is zero exactly at the equilibrium.
    """
    x = np.asarray(profile, dtype=float)
    step = 1.0 / own_lipschitz(game)
    moved = project_rows(x - step * marginal_costs_matrix(game, x), game.lower, game.upper, game.energy)
    return float(np.max(np.linalg.norm(x - moved, axis=1)))


def _sc_gradient(prices, L):
    return prices.value(L) + L * prices.slope(L)


def optimality_residual(game: GameInstance, profile) -> float:
    """Projected-gradient residual of the social cost, in the same units as ``ne_residual``."""
    x = np.asarray(profile, dtype=float)
    g = _sc_gradient(game.prices, x.sum(axis=0))
    step = 1.0 / own_lipschitz(game)
    moved = project_rows(x - step * g[None, :], game.lower, game.upper, game.energy)
    return float(np.linalg.norm(x - moved))


def solve_optimal(game: GameInstance, cfg: Optional[SolverConfig] = None, x0=None) -> SolveReport:
    """Minimise sum_t L_t c_t(L_t) over the product of the players' feasible sets.

    Accelerated projected gradient with backtracking on the Lipschitz estimate
    and a function-value restart; terminates when ``optimality_residual``
    drops below ``eps_stop``.
    """
    cfg = cfg or SolverConfig()
    prices, N = game.prices, game.N
    lbar = game.upper.sum(axis=0)
    grid = np.linspace(0.0, 1.0, 16)[:, None] * lbar[None, :]
    curv = max(float(np.max(2 * prices.slope(g) + g * prices.curvature(g))) for g in grid)
    lip = max(N * curv, 1e-12)

    def sc(v):
        L = v.sum(axis=0)
        return float(L @ prices.value(L))

    x = _check_start(game, default_start(game) if x0 is None else x0)
    y, theta, fx = x.copy(), 1.0, sc(x)
    report = SolveReport(x, 0, np.inf, False, algorithm="optimal")
    for k in range(1, int(cfg.k_max) + 1):
        g = _sc_gradient(prices, y.sum(axis=0))
        fy = sc(y)
        while True:
            x_new = project_rows(y - g[None, :] / lip, game.lower, game.upper, game.energy)
            d = x_new - y
            if sc(x_new) <= fy + (g * d.sum(axis=0)).sum() + 0.5 * lip * (d * d).sum() + 1e-14 * abs(fy):
                break
            lip *= 2
        f_new = sc(x_new)
        if f_new > fx and theta > 1.0:
            # restart momentum from the last accepted point; a plain step from x
            # is always accepted since any increase there is rounding
            y, theta = x.copy(), 1.0
            continue
        theta_next = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
        y = x_new + ((theta - 1) / theta_next) * (x_new - x)
        x, fx, theta = x_new, f_new, theta_next
        report.iterations = k
        if k % 10 == 0 or k == cfg.k_max:
            residual = optimality_residual(game, x)
            report.final_residual = residual
            if cfg.record_history:
                report.history.append({"iteration": k, "residual": residual, "social_cost": fx,
                                       "potential": None})
            if residual < cfg.eps_stop:
                report.converged = True
                break
    report.final_residual = optimality_residual(game, x)
    report.converged = report.final_residual < cfg.eps_stop
    report.profile = x
    return report
