"""The hourly-billing consumption game.

Each of N consumers schedules a flexible load profile x_n over T periods.
Period t has a unit price c_t(L_t) depending on the aggregate flexible load
L_t = sum_n x_{n,t}; consumer n pays b_n = sum_t x_{n,t} c_t(L_t).

Units: loads in kW per period, money in $.  The energy constraint
sum_t x_{n,t} = E_n is expressed in kW-periods; ``TimeGrid.period_hours``
is only a label.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from hourly_dr.feasible import CappedSimplex, InfeasibleSetError, TOL_FEAS, check_capped_simplex


class AssumptionWarning(UserWarning):
    """A price function violates the monotonicity/convexity assumptions."""


@dataclass(frozen=True)
class TimeGrid:
    T: int
    period_hours: float = 1.0

    def __post_init__(self):
        if int(self.T) < 1:
            raise ValueError("a time grid needs at least one period")


@dataclass(frozen=True)
class AffinePrice:
    """c(x) = alpha + beta * x."""

    alpha: float
    beta: float

    def __call__(self, x):
        return self.alpha + self.beta * np.asarray(x, dtype=float)

    def derivative(self, x):
        return np.full(np.shape(x), float(self.beta))

    def second_derivative(self, x):
        return np.zeros(np.shape(x))

    def violations(self):
        out = []
        if not self.alpha > 0:
            out.append(f"alpha={self.alpha:g} is not positive")
        if not self.beta > 0:
            out.append(f"beta={self.beta:g} is not positive")
        return out


@dataclass(frozen=True)
class ConvexPrice:
    """A user-supplied twice differentiable price function.

    Validity (c' > 0, c'' >= 0) is checked by sampling ``[0, domain_upper]``.
    """

    evaluator: Callable
    first_derivative: Callable
    second_derivative: Callable
    domain_upper: float

    def __call__(self, x):
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    def derivative(self, x):
        return np.asarray(self.first_derivative(np.asarray(x, dtype=float)), dtype=float)

    def violations(self, samples: int = 256):
        grid = np.linspace(0.0, self.domain_upper, samples)
        out = []
        if np.any(self.derivative(grid) <= 0):
            out.append("first derivative not positive on the sample grid")
        if np.any(np.asarray(self.second_derivative(grid)) < 0):
            out.append("second derivative negative on the sample grid")
        return out


Price = Union[AffinePrice, ConvexPrice]


class PriceModel:
    """One price function per period, with vectorised evaluation."""

    def __init__(self, per_period: Sequence[Price]):
        self.per_period = tuple(per_period)
        if not self.per_period:
            raise ValueError("price model needs at least one period")
        self.is_affine = all(isinstance(p, AffinePrice) for p in self.per_period)
        if self.is_affine:
            self.alpha = np.array([p.alpha for p in self.per_period], dtype=float)
            self.beta = np.array([p.beta for p in self.per_period], dtype=float)
            self.alpha.setflags(write=False)
            self.beta.setflags(write=False)

    @classmethod
    def affine(cls, alpha, beta) -> "PriceModel":
        alpha, beta = np.broadcast_arrays(np.atleast_1d(np.asarray(alpha, dtype=float)),
                                          np.atleast_1d(np.asarray(beta, dtype=float)))
        return cls([AffinePrice(float(a), float(b)) for a, b in zip(alpha, beta)])

    @property
    def T(self) -> int:
        return len(self.per_period)

    def __len__(self):
        return self.T

    def __eq__(self, other):
        return isinstance(other, PriceModel) and self.per_period == other.per_period

    def __repr__(self):
        if self.is_affine:
            return f"PriceModel(alpha={self.alpha.tolist()}, beta={self.beta.tolist()})"
        return f"PriceModel(T={self.T}, general convex)"

    def value(self, L):
        L = np.asarray(L, dtype=float)
        if self.is_affine:
            return self.alpha + self.beta * L
        return np.array([p(x) for p, x in zip(self.per_period, L)], dtype=float)

    def slope(self, L):
        L = np.asarray(L, dtype=float)
        if self.is_affine:
            return np.array(self.beta, dtype=float)
        return np.array([p.derivative(x) for p, x in zip(self.per_period, L)], dtype=float)

    def curvature(self, L):
        L = np.asarray(L, dtype=float)
        if self.is_affine:
            return np.zeros(self.T)
        return np.array([p.second_derivative(x) for p, x in zip(self.per_period, L)], dtype=float)

    def restrict(self, start: int) -> "PriceModel":
        return PriceModel(self.per_period[start:])

    def violations(self, samples: int = 256):
        """List of (period, message) pairs for assumption violations."""
        out = []
        for t, p in enumerate(self.per_period):
            msgs = p.violations() if isinstance(p, AffinePrice) else p.violations(samples)
            out.extend((t, m) for m in msgs)
        return out


@dataclass(frozen=True)
class ProviderCost:
    """Quadratic provider cost C(D) = c0 + c1 D + c2 D^2 in $ for a total load D in kW."""

    c0: float
    c1: float
    c2: float

    def __call__(self, D):
        D = np.asarray(D, dtype=float)
        return self.c0 + self.c1 * D + self.c2 * D * D


# Provider cost fitted to a 30-home pool; see ``scaled_cost`` for other pool sizes.
REFERENCE_COST = ProviderCost(0.711, -0.0417, 0.00295)
REFERENCE_POOL_SIZE = 30


def scaled_cost(n_homes: int, base: ProviderCost = REFERENCE_COST,
                base_homes: int = REFERENCE_POOL_SIZE) -> ProviderCost:
    """Rescale a pool cost so that per-home loads see the same unit prices.

    With loads proportional to the pool size, c1 + 2 c2 L_NF and c2 L keep
    their reference values when c2 is scaled by base_homes / n_homes.
    """
    if n_homes < 1:
        raise ValueError("pool size must be at least one home")
    return ProviderCost(base.c0, base.c1, base.c2 * base_homes / n_homes)


def derive_prices(cost: ProviderCost, nonflexible) -> PriceModel:
    """Unit price of the flexible load induced by the provider cost.

    c_t(L) = [C(L_NF,t + L) - C(L_NF,t)] / L, which for a quadratic C is the
    affine function (c1 + 2 c2 L_NF,t) + c2 L (removable singularity at 0).
    """
    nonflexible = np.asarray(nonflexible, dtype=float)
    if np.any(nonflexible < 0):
        raise ValueError("non-flexible loads must be non-negative")
    alpha = cost.c1 + 2.0 * cost.c2 * nonflexible
    model = PriceModel.affine(alpha, np.full(nonflexible.shape, float(cost.c2)))
    problems = model.violations()
    if problems:
        t, msg = problems[0]
        warnings.warn(f"derived prices violate the affine increasing assumption "
                      f"({len(problems)} issue(s), first at period {t}: {msg})", AssumptionWarning,
                      stacklevel=2)
    return model


@dataclass(frozen=True)
class ConsumerSpec:
    energy: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float)
        upper = np.array(self.upper, dtype=float)
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "energy", float(self.energy))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if np.any(lower < 0):
            raise ValueError("lower bounds must be non-negative")
        check_capped_simplex(self.energy, lower, upper)

    def __eq__(self, other):
        return (isinstance(other, ConsumerSpec) and self.energy == other.energy
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    @property
    def feasible_set(self) -> CappedSimplex:
        return CappedSimplex(self.energy, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class GameInstance:
    """The game (players, feasible sets, bills) on a fixed time grid."""

    prices: PriceModel
    consumers: tuple
    nonflexible: np.ndarray = None
    grid: TimeGrid = None
    energy: np.ndarray = field(init=False, repr=False)
    lower: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        consumers = tuple(self.consumers)
        object.__setattr__(self, "consumers", consumers)
        T = self.prices.T
        if self.grid is None:
            object.__setattr__(self, "grid", TimeGrid(T))
        elif self.grid.T != T:
            raise ValueError(f"grid has {self.grid.T} periods but prices have {T}")
        if not consumers:
            raise ValueError("no players")
        for n, c in enumerate(consumers):
            if c.lower.size != T:
                raise ValueError(f"consumer {n}: bounds have length {c.lower.size}, expected {T}")
        if self.nonflexible is not None:
            nf = np.array(self.nonflexible, dtype=float)
            if nf.shape != (T,):
                raise ValueError(f"nonflexible has shape {nf.shape}, expected ({T},)")
            nf.setflags(write=False)
            object.__setattr__(self, "nonflexible", nf)
        for name, values in (("energy", [c.energy for c in consumers]),
                             ("lower", [c.lower for c in consumers]),
                             ("upper", [c.upper for c in consumers])):
            arr = np.array(values, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return len(self.consumers)

    @property
    def T(self) -> int:
        return self.prices.T

    def __eq__(self, other):
        if not isinstance(other, GameInstance):
            return NotImplemented
        nf_equal = (self.nonflexible is None and other.nonflexible is None) or (
            self.nonflexible is not None and other.nonflexible is not None
            and np.array_equal(self.nonflexible, other.nonflexible))
        return (self.prices == other.prices and self.consumers == other.consumers
                and nf_equal and self.grid == other.grid)

    def with_prices(self, prices: PriceModel, nonflexible=None) -> "GameInstance":
        return GameInstance(prices, self.consumers, nonflexible, TimeGrid(prices.T, self.grid.period_hours))

    def is_feasible(self, profile, tol: float = TOL_FEAS) -> bool:
        from hourly_dr.feasible import rows_feasible
        profile = np.asarray(profile, dtype=float)
        return profile.shape == (self.N, self.T) and rows_feasible(
            profile, self.lower, self.upper, self.energy, tol)


def make_game(alpha, beta, energy, lower, upper, nonflexible=None) -> GameInstance:
    """Convenience constructor from arrays (affine prices)."""
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    consumers = [ConsumerSpec(e, lo, hi) for e, lo, hi in zip(np.atleast_1d(energy), lower, upper)]
    return GameInstance(PriceModel.affine(alpha, beta), consumers, nonflexible)


def game_from_cost(cost: ProviderCost, nonflexible, consumers) -> GameInstance:
    nonflexible = np.asarray(nonflexible, dtype=float)
    return GameInstance(derive_prices(cost, nonflexible), consumers, nonflexible)


def aggregate(profile) -> np.ndarray:
    """L_t = sum_n x_{n,t}."""
    return np.asarray(profile, dtype=float).sum(axis=0)


def _check_profile(game, profile):
    profile = np.asarray(profile, dtype=float)
    if profile.shape != (game.N, game.T):
        raise ValueError(f"profile has shape {profile.shape}, expected {(game.N, game.T)}")
    return profile


def bills(game: GameInstance, profile) -> np.ndarray:
    profile = _check_profile(game, profile)
    return profile @ game.prices.value(aggregate(profile))


def bill(game: GameInstance, profile, n: int) -> float:
    if not 0 <= n < game.N:
        raise IndexError(f"player index {n} out of range for {game.N} players")
    profile = _check_profile(game, profile)
    return float(profile[n] @ game.prices.value(aggregate(profile)))


def social_cost(game: GameInstance, profile) -> float:
    """Total system cost sum_t L_t c_t(L_t) (equal to the sum of all bills)."""
    L = aggregate(_check_profile(game, profile))
    return float(L @ game.prices.value(L))


def marginal_costs(game: GameInstance, profile) -> np.ndarray:
    """Matrix of c_t(L_t) + x_{n,t} c_t'(L_t), i.e. the stacked gradients of the bills."""
    profile = _check_profile(game, profile)
    L = aggregate(profile)
    return game.prices.value(L)[None, :] + profile * game.prices.slope(L)[None, :]


def marginal_cost(game: GameInstance, profile, n: int, t: int) -> float:
    return float(marginal_costs(game, profile)[n, t])


def _require_affine(game, what):
    if not game.prices.is_affine:
        raise TypeError(f"{what} is only defined for affine prices")


def potential(game: GameInstance, profile) -> float:
    """Exact potential sum_t alpha_t L_t + beta_t/2 (L_t^2 + sum_n x_{n,t}^2)."""
    _require_affine(game, "the potential")
    profile = _check_profile(game, profile)
    L = aggregate(profile)
    p = game.prices
    return float(p.alpha @ L + 0.5 * p.beta @ (L * L + (profile * profile).sum(axis=0)))


def stability_constants(game: GameInstance):
    """(a, M) = (2 min_t beta_t, 2 max_t beta_t)."""
    _require_affine(game, "closed-form stability constants")
    return 2.0 * float(game.prices.beta.min()), 2.0 * float(game.prices.beta.max())


__all__ = [
    "AffinePrice", "AssumptionWarning", "ConsumerSpec", "ConvexPrice", "GameInstance",
    "InfeasibleSetError", "PriceModel", "ProviderCost", "REFERENCE_COST", "TimeGrid",
    "aggregate", "bill", "bills", "derive_prices", "game_from_cost", "make_game",
    "marginal_cost", "marginal_costs", "potential", "scaled_cost", "social_cost",
    "stability_constants",
]
