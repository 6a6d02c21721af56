"""JSON and CSV formats for games, consumer data and profiles.

Game file::

    {"N": 2, "T": 3,
     "prices": [{"alpha": 1.0, "beta": 0.5}, ...],      # or "cost": {"c0", "c1", "c2"}
     "consumers": [{"E": 4.0, "lower": [...], "upper": [...]}, ...],
     "nonflexible": [...]}                               # optional unless "cost" is given
"""
from __future__ import annotations

import csv
import io
import json
from collections import OrderedDict
from pathlib import Path

import numpy as np

from hourly_dr.game import ConsumerSpec, GameInstance, PriceModel, ProviderCost, derive_prices


class InputError(ValueError):
    """Malformed input; the message names the offending field or row."""


def _vector(value, field, length=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{field}: expected a list of numbers") from None
    if arr.ndim != 1:
        raise InputError(f"{field}: expected a list of numbers")
    if length is not None and arr.size != length:
        raise InputError(f"{field}: expected {length} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{field}: values must be finite")
    return arr


def _number(d, key, field):
    if key not in d:
        raise InputError(f"{field}.{key}: missing")
    try:
        value = float(d[key])
    except (TypeError, ValueError):
        raise InputError(f"{field}.{key}: expected a number, got {d[key]!r}") from None
    if not np.isfinite(value):
        raise InputError(f"{field}.{key}: must be finite")
    return value


def game_from_dict(d: dict) -> GameInstance:
    if not isinstance(d, dict):
        raise InputError("game: expected a JSON object")
    consumers_raw = d.get("consumers")
    if consumers_raw is None:
        raise InputError("consumers: missing")
    if not isinstance(consumers_raw, list):
        raise InputError("consumers: expected a list")
    if not consumers_raw:
        raise InputError("consumers: no players")

    if "prices" in d:
        if not isinstance(d["prices"], list) or not d["prices"]:
            raise InputError("prices: expected a non-empty list")
        T = len(d["prices"])
    elif "cost" in d:
        if d.get("nonflexible") is None:
            raise InputError("nonflexible: required when prices come from 'cost'")
        T = len(d["nonflexible"])
    else:
        raise InputError("prices: missing (give 'prices' or 'cost')")
    if "T" in d and int(d["T"]) != T:
        raise InputError(f"T: declared {d['T']} but the price data has {T} periods")
    if "N" in d and int(d["N"]) != len(consumers_raw):
        raise InputError(f"N: declared {d['N']} but {len(consumers_raw)} consumers are listed")

    nf = None
    if d.get("nonflexible") is not None:
        nf = _vector(d["nonflexible"], "nonflexible", T)

    if "prices" in d:
        alpha, beta = [], []
        for t, p in enumerate(d["prices"]):
            if not isinstance(p, dict):
                raise InputError(f"prices[{t}]: expected an object with alpha and beta")
            alpha.append(_number(p, "alpha", f"prices[{t}]"))
            beta.append(_number(p, "beta", f"prices[{t}]"))
        prices = PriceModel.affine(alpha, beta)
    else:
        c = d["cost"]
        if not isinstance(c, dict):
            raise InputError("cost: expected an object with c0, c1, c2")
        cost = ProviderCost(*(_number(c, k, "cost") for k in ("c0", "c1", "c2")))
        try:
            prices = derive_prices(cost, nf)
        except ValueError as exc:
            raise InputError(f"nonflexible: {exc}") from None

    consumers = []
    for n, c in enumerate(consumers_raw):
        field = f"consumers[{n}]"
        if not isinstance(c, dict):
            raise InputError(f"{field}: expected an object")
        energy = _number(c, "E", field)
        upper = _vector(c.get("upper"), f"{field}.upper", T) if "upper" in c else None
        if upper is None:
            raise InputError(f"{field}.upper: missing")
        lower = _vector(c["lower"], f"{field}.lower", T) if "lower" in c else np.zeros(T)
        try:
            consumers.append(ConsumerSpec(energy, lower, upper))
        except ValueError as exc:
            raise InputError(f"{field}: {exc}") from None
    try:
        return GameInstance(prices, consumers, nf)
    except ValueError as exc:
        raise InputError(f"game: {exc}") from None


def game_to_dict(game: GameInstance) -> dict:
    if not game.prices.is_affine:
        raise TypeError("only affine prices can be serialised")
    return {
        "N": game.N,
        "T": game.T,
        "prices": [{"alpha": float(a), "beta": float(b)} for a, b in zip(game.prices.alpha, game.prices.beta)],
        "consumers": [{"E": c.energy, "lower": c.lower.tolist(), "upper": c.upper.tolist()}
                      for c in game.consumers],
        "nonflexible": None if game.nonflexible is None else game.nonflexible.tolist(),
    }


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def load_game(path) -> GameInstance:
    return game_from_dict(load_json(path))


def save_game(game: GameInstance, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=2) + "\n")


def profile_csv(profile) -> str:
    """Long-format ``player,t,load`` with 6 significant digits."""
    x = np.asarray(profile, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["player", "t", "load"])
    for n in range(x.shape[0]):
        for t in range(x.shape[1]):
            w.writerow([n, t, f"{x[n, t]:.6g}"])
    return buf.getvalue()


def read_profile_csv(text: str, N: int, T: int) -> np.ndarray:
    out = np.full((N, T), np.nan)
    for row in csv.DictReader(io.StringIO(text)):
        out[int(row["player"]), int(row["t"])] = float(row["load"])
    if np.isnan(out).any():
        raise InputError("profile: missing (player, t) entries")
    return out


def ingest_consumers(path, hours_per_day: int = 24):
    """Consumers from metered charging data, one per (consumer_id, day).

    Expects columns consumer_id, day, hour, kw with one row per hour of each
    day.  The upper bound is the consumer-day's maximum observed power in the
    hours where it charged and 0 elsewhere; the demand is the metered energy;
    lower bounds are zero.  Returns ``(keys, consumers)`` in order of first
    appearance.
    """
    required = ("consumer_id", "day", "hour", "kw")
    groups = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        for row_no, row in enumerate(reader, start=2):
            try:
                hour = int(row["hour"])
                kw = float(row["kw"])
            except (TypeError, ValueError):
                raise InputError(f"row {row_no}: hour and kw must be numeric") from None
            if not np.isfinite(kw) or kw < 0:
                raise InputError(f"row {row_no}: negative or invalid kw {row['kw']!r}")
            if not 0 <= hour < hours_per_day:
                raise InputError(f"row {row_no}: hour {hour} outside 0..{hours_per_day - 1}")
            key = (row["consumer_id"], row["day"])
            first_row, loads = groups.setdefault(key, (row_no, {}))
            if hour in loads:
                raise InputError(f"row {row_no}: duplicate hour {hour} for consumer {key[0]} day {key[1]}")
            loads[hour] = kw

    keys, consumers = [], []
    for key, (first_row, loads) in groups.items():
        absent = sorted(set(range(hours_per_day)) - set(loads))
        if absent:
            raise InputError(f"row {first_row}: consumer {key[0]} day {key[1]} is missing hour(s) "
                             f"{', '.join(map(str, absent))}")
        kw = np.array([loads[h] for h in range(hours_per_day)])
        upper = np.where(kw > 0, kw.max(), 0.0)
        consumers.append(ConsumerSpec(kw.sum(), np.zeros(hours_per_day), upper))
        keys.append(key)
    return keys, consumers
