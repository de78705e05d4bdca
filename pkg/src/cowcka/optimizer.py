"""Maximize the conference key rate over (t, mu) and sweep it over distance.

The genetic algorithm is the production optimizer; ``grid_oracle`` is an
exhaustive search used to check it.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .keyrate import conference_key_rate, eta_lim_bound, repeaterless_bound
from .model import ExperimentParams, FreeParams, RateBreakdown

log = logging.getLogger(__name__)

Objective = Callable[[FreeParams, ExperimentParams], float]


@dataclass(frozen=True)
class OptimizerConfig:
    t_range: tuple[float, float] = (1e-3, 0.999)
    mu_range: tuple[float, float] = (1e-3, 1.0)
    population: int = 40
    generations: int = 80
    seed: int = 20210601
    grid_resolution: int = 200
    mutation_scale: float = 0.2
    mutation_decay: float = 0.93

    def __post_init__(self) -> None:
        t_lo, t_hi = self.t_range
        mu_lo, mu_hi = self.mu_range
        if not 0.0 < t_lo < t_hi < 1.0:
            raise ValueError(f"t_range must satisfy 0 < lo < hi < 1, got {self.t_range!r}")
        if not 0.0 < mu_lo < mu_hi < np.inf:
            raise ValueError(f"mu_range must satisfy 0 < lo < hi < inf, got {self.mu_range!r}")
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


class Optimum(NamedTuple):
    params: FreeParams
    breakdown: RateBreakdown

    @property
    def is_zero_rate(self) -> bool:
        return self.breakdown.rate == 0.0


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    best_t: float
    best_mu: float
    rate: float
    rate_unclamped: float
    eta_lim: float
    repeaterless: float


def _default_objective(fp: FreeParams, ep: ExperimentParams) -> float:
    return conference_key_rate(fp, ep).rate_unclamped


def _rng(seed: int, generation: int, index: int) -> np.random.Generator:
    # one stream per (generation, candidate) keeps results schedule-independent
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(generation, index)))


def _finish(best: np.ndarray, ep: ExperimentParams) -> Optimum:
    fp = FreeParams(float(best[0]), float(best[1]))
    result = Optimum(fp, conference_key_rate(fp, ep))
    if result.is_zero_rate:
        log.info("no positive key rate at %.6g km; returning best-effort parameters", ep.total_distance_km)
    return result


def optimize(ep: ExperimentParams, cfg: OptimizerConfig = OptimizerConfig(), objective: Objective | None = None) -> Optimum:
    """Real-coded genetic algorithm over (t, mu).

    Tournament selection of size 2, blend crossover with a fresh weight per
    gene, Gaussian mutation whose scale decays geometrically, and an elite of
    one. Fitness is the unclamped rate so the search stays informative past
    the distance cutoff; the result is zero-rate when nothing positive exists.
    """
    objective = objective or _default_objective
    lo = np.array([cfg.t_range[0], cfg.mu_range[0]])
    hi = np.array([cfg.t_range[1], cfg.mu_range[1]])
    width = hi - lo

    def fitness(x: np.ndarray) -> float:
        return objective(FreeParams(float(x[0]), float(x[1])), ep)

    pop = np.array([lo + _rng(cfg.seed, 0, i).random(2) * width for i in range(cfg.population)])
    fit = np.array([fitness(x) for x in pop])

    for g in range(1, cfg.generations + 1):
        elite = int(np.argmax(fit))
        scale = cfg.mutation_scale * width * cfg.mutation_decay ** (g - 1)
        children = [pop[elite]]
        child_fit = [fit[elite]]
        for i in range(1, cfg.population):
            rng = _rng(cfg.seed, g, i)
            a, b = rng.integers(cfg.population, size=2)
            p1 = pop[a] if fit[a] >= fit[b] else pop[b]
            a, b = rng.integers(cfg.population, size=2)
            p2 = pop[a] if fit[a] >= fit[b] else pop[b]
            w = rng.random(2)
            child = w * p1 + (1.0 - w) * p2 + rng.normal(0.0, 1.0, 2) * scale
            child = np.clip(child, lo, hi)
            children.append(child)
            child_fit.append(fitness(child))
        pop = np.array(children)
        fit = np.array(child_fit)

    return _finish(pop[int(np.argmax(fit))], ep)


def grid_oracle(ep: ExperimentParams, cfg: OptimizerConfig = OptimizerConfig(), objective: Objective | None = None) -> Optimum:
    """Exhaustive argmax over a resolution x resolution grid of (t, mu).

    Ties go to the smaller t, then the smaller mu.
    """
    objective = objective or _default_objective
    n = cfg.grid_resolution
    ts = np.linspace(cfg.t_range[0], cfg.t_range[1], n)
    mus = np.linspace(cfg.mu_range[0], cfg.mu_range[1], n)
    best_val, best = -np.inf, None
    for t in ts:
        for mu in mus:
            val = objective(FreeParams(float(t), float(mu)), ep)
            if val > best_val:
                best_val, best = val, (t, mu)
    return _finish(np.array(best), ep)


def _sweep_row(args: tuple[ExperimentParams, float, OptimizerConfig]) -> SweepRow:
    template, distance, cfg = args
    ep = template.at_distance(distance)
    fp, rb = optimize(ep, cfg)
    return SweepRow(
        distance_km=distance,
        best_t=fp.send_probability,
        best_mu=fp.intensity,
        rate=rb.rate,
        rate_unclamped=rb.rate_unclamped,
        eta_lim=eta_lim_bound(ep),
        repeaterless=repeaterless_bound(ep),
    )


def sweep(
    template: ExperimentParams,
    distances: Sequence[float],
    cfg: OptimizerConfig = OptimizerConfig(),
    workers: int | None = None,
) -> list[SweepRow]:
    """Re-optimize independently at each distance; rows come back in input order."""
    distances = [float(d) for d in distances]
    if not distances:
        raise ValueError("distance list is empty")
    if any(b <= a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be strictly increasing")
    if any(d < 0 for d in distances):
        raise ValueError("distances must be nonnegative")
    jobs = [(template, d, cfg) for d in distances]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(jobs) == 1:
        return [_sweep_row(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_sweep_row, jobs))
