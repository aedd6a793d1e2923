"""Discrepancy principle and the multilevel averaging search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .quadrature_svd import build_collocation, residual_tails
from .sampling import NoisySample, average, level_ladder
from .spectral_deriv2 import deriv2_spectral

ERR_SYS_VARIANTS = ("gprime", "gpp")


@dataclass(frozen=True)
class DiscrepancyConfig:
    """Threshold tau * sqrt(err_sys^2(m_o) + (m_o/o) delta^2)."""

    delta: float
    tau: float = 1.5
    err_sys_variant: str = "gprime"
    g_prime_norm: float | None = None
    g_pp_inf: float | None = None

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError("tau must exceed 1")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.err_sys_variant == "gprime":
            if self.g_prime_norm is None or not self.g_prime_norm > 0:
                raise ValueError("the gprime variant needs a positive g_prime_norm")
        elif self.err_sys_variant == "gpp":
            if self.g_pp_inf is None or not self.g_pp_inf > 0:
                raise ValueError("the gpp variant needs a positive g_pp_inf")
        else:
            raise ValueError(f"unknown err_sys variant {self.err_sys_variant!r}")

    def err_sys2(self, m_o: int) -> float:
        if self.err_sys_variant == "gprime":
            return self.g_prime_norm**2 / m_o
        return self.g_pp_inf**2 / (9 * 64 * m_o**3)

    def threshold(self, m_o: int, o: int) -> float:
        return self.tau * math.sqrt(self.err_sys2(m_o) + (m_o / o) * self.delta**2)


def k_from_tails(tails: np.ndarray, threshold: float, cap: int | None = None) -> int:
    """Smallest k with tails[k] <= threshold, optionally capped."""
    hits = np.flatnonzero(tails <= threshold)
    k = int(hits[0]) if len(hits) else len(tails) - 1
    return min(k, cap) if cap is not None else k


def k_discrepancy(sys_or_spectral, sample: NoisySample, cfg: DiscrepancyConfig) -> int:
    """Discrepancy-principle cut-off for an (averaged) sample.

    Works with :class:`Deriv2Spectral` and :class:`CollocationSystem`, both
    of which expose ``projections`` onto an orthonormal data-space basis.
    """
    tails = residual_tails(sys_or_spectral.projections(sample.noisy))
    return k_from_tails(tails, cfg.threshold(sample.grid.m, sample.o), cap=sys_or_spectral.rank)


@dataclass(frozen=True)
class LadderConfig:
    a: int = 4
    n: int = 6
    n0: int = 2

    def __post_init__(self):
        if self.a < 2:
            raise ValueError("ladder base must be at least 2")
        if not self.n0 < self.n:
            raise ValueError("n0 must be smaller than n")
        if self.a**self.n0 < 2:
            raise ValueError("coarsest level must have at least 2 points")

    @property
    def m(self) -> int:
        return self.a**self.n

    @property
    def levels(self) -> tuple[int, ...]:
        return level_ladder(self.m, self.a, self.n0)


@dataclass(frozen=True)
class AdaptiveResult:
    chosen_level: int
    chosen_k: int
    trajectory: tuple[tuple[int, int], ...]


def choose_level(levels: Sequence[int], k_values: Sequence[int]) -> tuple[int, int, int]:
    """Apply the stopping rule to a precomputed k_dp sequence (coarse to fine).

    Returns (index, level, k) of the level before the first strict decrease,
    or the finest level if none occurs.
    """
    i = 0
    while i + 1 < len(levels) and k_values[i + 1] >= k_values[i]:
        i += 1
    return i, levels[i], k_values[i]


def algorithm1(
    data: NoisySample,
    cfg: DiscrepancyConfig,
    ladder: LadderConfig,
    path: str,
    kernel=None,
    systems: Mapping[int, object] | None = None,
    coarse_exact: Mapping[int, np.ndarray] | None = None,
) -> AdaptiveResult:
    """Refine from the coarsest level while k_dp does not decrease.

    ``systems`` may supply prebuilt spectral or collocation systems per
    level; ``coarse_exact`` may supply exact coarse data to skip its
    recomputation.  Levels are evaluated lazily and never revisited.
    """
    if data.o != 1 or data.grid.m != ladder.m:
        raise ValueError(f"data must be unaveraged with m={ladder.m}")
    if path not in ("deriv2", "quadrature"):
        raise ValueError(f"unknown path {path!r}")
    if path == "quadrature" and kernel is None and systems is None:
        raise ValueError("the quadrature path needs a kernel")
    systems = dict(systems or {})

    def system(level):
        if level not in systems:
            systems[level] = deriv2_spectral(level) if path == "deriv2" else build_collocation(kernel, level)
        return systems[level]

    def kdp(level):
        exact = coarse_exact.get(level) if coarse_exact else None
        if exact is None:
            exact = np.zeros(level)  # exact values are not used by the rule
        sample = average(data, ladder.m // level, exact=exact) if level != ladder.m else data
        return k_discrepancy(system(level), sample, cfg)

    levels = ladder.levels
    traj = [(levels[0], kdp(levels[0]))]
    i = 0
    while i + 1 < len(levels):
        k_next = kdp(levels[i + 1])
        traj.append((levels[i + 1], k_next))
        if k_next >= traj[i][1]:
            i += 1
        else:
            break
    return AdaptiveResult(chosen_level=levels[i], chosen_k=traj[i][1], trajectory=tuple(traj))
