import numpy as np
import pytest

from hourly_dr.game import ConsumerSpec, GameInstance, PriceModel


def random_affine_game(rng, N, T, window=False, tight=False):
    """Random affine game with positive prices and a non-empty feasible set per player."""
    alpha = rng.uniform(0.2, 2.0, T)
    beta = rng.uniform(0.05, 1.0, T)
    consumers = []
    for _ in range(N):
        upper = rng.uniform(0.5, 4.0, T)
        if window:
            start = rng.integers(0, T)
            length = rng.integers(1, T - start + 1)
            mask = np.zeros(T, bool)
            mask[start:start + length] = True
            upper = np.where(mask, upper, 0.0)
        lower = np.where(rng.random(T) < 0.25, rng.uniform(0, 0.5, T) * upper, 0.0)
        lo_frac = 0.9 if tight else 0.1
        energy = lower.sum() + rng.uniform(lo_frac, 0.95) * (upper - lower).sum()
        consumers.append(ConsumerSpec(energy, lower, upper))
    return GameInstance(PriceModel.affine(alpha, beta), consumers)


def random_cost_game(rng, N, T):
    """Game whose prices come from a random quadratic provider cost, so beta is uniform over periods."""
    from hourly_dr.game import ProviderCost, game_from_cost
    c2 = rng.uniform(0.001, 0.01)
    nf = rng.uniform(10, 100, T)
    c1 = rng.uniform(-1.5, 0.5) * c2 * nf.min()
    base = random_affine_game(rng, N, T)
    return game_from_cost(ProviderCost(rng.uniform(0, 1), c1, c2), nf, base.consumers)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
