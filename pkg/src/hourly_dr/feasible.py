"""Euclidean projection onto capped simplices {x : sum(x) = E, lower <= x <= upper}.

Both the projection and the affine best response reduce to the same scalar
problem: find a multiplier ``lam`` such that

    sum_t clip((lam - a_t) / w_t, lower_t, upper_t) = E

with ``w_t > 0``.  The left-hand side is a nondecreasing piecewise-linear
function of ``lam`` whose knots are ``a_t + w_t * lower_t`` and
``a_t + w_t * upper_t``; sorting the knots and accumulating slopes gives the
exact root in O(T log T).  Everything here works on batches of rows so that
all players of a game can be handled in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_PROJ = 1e-10
TOL_FEAS = 1e-8
_BISECTION_ITERS = 100


class InfeasibleSetError(ValueError):
    pass


@dataclass(frozen=True)
class CappedSimplex:
    total: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float)
        upper = np.array(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise InfeasibleSetError("lower and upper must be 1-D vectors of equal length")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "total", float(self.total))
        check_capped_simplex(self.total, lower, upper)

    @property
    def size(self) -> int:
        return self.lower.size


def check_capped_simplex(total, lower, upper, tol=TOL_FEAS):
    """Raise InfeasibleSetError if the set {sum x = total, lower <= x <= upper} is empty."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise InfeasibleSetError("bounds must be finite")
    if np.any(lower > upper + tol):
        t = int(np.argmax(lower - upper))
        raise InfeasibleSetError(f"lower bound exceeds upper bound at period {t}")
    if total < lower.sum() - tol or total > upper.sum() + tol:
        raise InfeasibleSetError(
            f"total {total:g} outside [{lower.sum():g}, {upper.sum():g}]")


def _bisect_multiplier(a, w, lower, upper, total):
    lo = np.min(a + w * lower)
    hi = np.max(a + w * upper)
    for _ in range(_BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        if np.clip((mid - a) / w, lower, upper).sum() < total:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_multiplier(a, w, lower, upper, total, tol=TOL_PROJ):
    """Return x = clip((lam - a) / w, lower, upper) with sum(x) = total, row-wise.

    ``a``, ``w``, ``lower``, ``upper`` have shape (B, T) (or (T,)); ``total``
    has shape (B,) (or is a scalar).  Coordinates with ``lower == upper`` are
    pinned before the search.  A bisection on ``lam`` is used for any row
    whose breakpoint solution misses ``total`` by more than ``tol``.
    """
    single = np.ndim(a) == 1
    a, w, lower, upper = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (a, w, lower, upper))
    total = np.atleast_1d(np.asarray(total, dtype=float))
    if np.any(w <= 0):
        raise ValueError("multiplier search needs strictly positive scales")

    pinned = upper <= lower
    inv_w = np.where(pinned, 0.0, 1.0 / w)
    knots = np.concatenate([a + w * lower, a + w * upper], axis=1)
    dslope = np.concatenate([inv_w, -inv_w], axis=1)
    order = np.argsort(knots, axis=1, kind="stable")
    knots = np.take_along_axis(knots, order, axis=1)
    dslope = np.take_along_axis(dslope, order, axis=1)
    slope = np.cumsum(dslope, axis=1)
    # value of the sum at each knot, starting from "everything at its lower bound"
    steps = slope[:, :-1] * np.diff(knots, axis=1)
    values = lower.sum(axis=1)[:, None] + np.concatenate(
        [np.zeros((knots.shape[0], 1)), np.cumsum(steps, axis=1)], axis=1)

    rows = np.arange(knots.shape[0])
    k = np.array([np.searchsorted(values[i], total[i], side="left") for i in rows])
    k = np.clip(k, 0, knots.shape[1] - 1)
    lam = knots[rows, k].copy()
    interior = k > 0
    if np.any(interior):
        ki = k[interior] - 1
        ri = rows[interior]
        s = slope[ri, ki]
        gap = total[interior] - values[ri, ki]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(s > 0, gap / s, 0.0)
        lam[interior] = knots[ri, ki] + step

    x = np.clip((lam[:, None] - a) / w, lower, upper)
    x[pinned] = lower[pinned]
    bad = np.abs(x.sum(axis=1) - total) > tol
    for i in np.flatnonzero(bad):
        lam_i = _bisect_multiplier(a[i], w[i], lower[i], upper[i], total[i])
        x[i] = np.clip((lam_i - a[i]) / w[i], lower[i], upper[i])
        x[i, pinned[i]] = lower[i, pinned[i]]
    return x[0] if single else x


def project_rows(points, lower, upper, totals):
    """Project each row of ``points`` onto its own capped simplex."""
    points = np.asarray(points, dtype=float)
    # x_t = clip(p_t - nu): multiplier lam = -nu, centre a = -p, unit scale
    return solve_multiplier(-points, np.ones_like(points), lower, upper, totals)


def project(cset: CappedSimplex, point) -> np.ndarray:
    """Closest point of ``cset`` to ``point`` in the Euclidean norm."""
    point = np.asarray(point, dtype=float)
    if point.shape != cset.lower.shape:
        raise ValueError(f"point has shape {point.shape}, expected {cset.lower.shape}")
    return project_rows(point, cset.lower, cset.upper, cset.total)


def is_feasible(cset: CappedSimplex, point, tol: float = TOL_FEAS) -> bool:
    point = np.asarray(point, dtype=float)
    if point.shape != cset.lower.shape or not np.all(np.isfinite(point)):
        return False
    return bool(abs(point.sum() - cset.total) <= tol
                and np.all(point >= cset.lower - tol)
                and np.all(point <= cset.upper + tol))


def rows_feasible(profile, lower, upper, totals, tol=TOL_FEAS) -> bool:
    profile = np.asarray(profile, dtype=float)
    return bool(np.all(np.isfinite(profile))
                and np.all(np.abs(profile.sum(axis=1) - totals) <= tol)
                and np.all(profile >= lower - tol)
                and np.all(profile <= upper + tol))
