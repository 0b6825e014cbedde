"""Angle filter with strike tracking, blacklisting and random enterprise selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError

KEEP = "keep"
FLAG = "flag"


@dataclass(frozen=True)
class FilterThresholds:
    phi_low: float = -0.7
    phi_high: float = 0.7
    strike_limit: int = 5

    def __post_init__(self):
        if not -1.0 <= self.phi_low < self.phi_high <= 1.0:
            raise ContractError("thresholds must satisfy -1 <= phi_low < phi_high <= 1")
        if self.strike_limit < 1:
            raise ContractError("strike_limit must be >= 1")


@dataclass(frozen=True)
class EnterpriseStatus:
    consecutive_strikes: int = 0
    blacklisted: bool = False


def zone(cs: float, th: FilterThresholds) -> str:
    """Colour band of a cosine score: green is kept, yellow/blue are flagged."""
    if cs > th.phi_high:
        return "yellow"
    if cs < th.phi_low:
        return "blue"
    return "green"


def angle_filter(cs: float, th: FilterThresholds = FilterThresholds()) -> str:
    if not -1.0 <= cs <= 1.0:
        raise ContractError(f"cosine score {cs} outside [-1, 1]")
    return KEEP if zone(cs, th) == "green" else FLAG


def strike_update(status: EnterpriseStatus, flagged: bool,
                  th: FilterThresholds = FilterThresholds()) -> EnterpriseStatus:
    """Advance the consecutive-strike counter; a kept round resets it."""
    if status.blacklisted:
        raise ContractError("blacklisted enterprises do not participate")
    if not flagged:
        return replace(status, consecutive_strikes=0)
    strikes = status.consecutive_strikes + 1
    return EnterpriseStatus(strikes, strikes >= th.strike_limit)


def selection_size(fraction: float, population: int) -> int:
    return min(population, math.ceil(fraction * population - 1e-9))


def select_enterprises(population, fraction: float, round_no: int, seed: int) -> list[int]:
    """Uniform sample without replacement of ``ceil(fraction * |population|)`` ids.

    The generator is derived from ``(seed, round_no)`` so every round draws a
    fresh sample while whole runs stay reproducible.
    """
    if not 0 < fraction <= 1:
        raise ContractError("fraction must be in (0, 1]")
    pool = sorted(int(p) for p in population)
    if not pool:
        raise ContractError("no eligible enterprises to select from")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5E1EC7, int(round_no)]))
    k = selection_size(fraction, len(pool))
    picked = rng.choice(len(pool), size=k, replace=False)
    return sorted(pool[i] for i in picked)
