"""Average discounted return and approximate exploitability."""

from __future__ import annotations

import copy
from typing import NamedTuple

import numpy as np


class MetricsRow(NamedTuple):
    k: int
    mean_return: float
    std_return: float  # population std across agents (divides by N)
    exploitability: float | None
    seconds: float


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """Per-agent ``sum_t gamma^t r_t`` for an ``(N, T)`` reward array."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 2:
        raise ValueError(f"expected (N, T) rewards, got shape {rewards.shape}")
    return rewards @ (gamma ** np.arange(rewards.shape[1]))


def average_discounted_return(rewards, gamma: float) -> tuple[float, float]:
    """Mean and population std over agents of each agent's discounted return."""
    try:
        arr = np.asarray(rewards, dtype=np.float64)
    except ValueError:
        raise ValueError("reward sequences have different lengths") from None
    returns = discounted_returns(arr, gamma)
    return float(returns.mean()), float(returns.std())


def approximate_exploitability(population, improve_iters: int | None = None,
                               eval_loops: int | None = None, deviator: int = 0) -> float:
    """Gain of a single learning deviator against the frozen rest of the population.

    Works on a deep copy, so ``population`` (including its RNG streams and
    environment clock) is left untouched. The deviator runs ``improve_iters``
    collect-and-train loops while every other agent keeps its policy, then
    ``eval_loops`` further loops each followed by ``E`` evaluation steps. The
    result is the deviator's best evaluation return minus the mean return of
    the other agents over the same steps, and can be negative.
    """
    from .learner import collect_phase, rollout_rewards, train_phase

    sim = copy.deepcopy(population)
    cfg = sim.config
    improve_iters = cfg.exploit_improve_iters if improve_iters is None else improve_iters
    eval_loops = cfg.exploit_eval_loops if eval_loops is None else eval_loops
    if eval_loops < 1:
        raise ValueError("eval_loops must be >= 1")
    dev = sim.learners[deviator]
    others = np.arange(len(sim.learners)) != deviator

    def improve():
        dev.buffer.clear()
        collect_phase(sim, cfg.M, store=[deviator])
        train_phase(dev, cfg.L, cfg.batch_size, cfg.target_period, cfg.tau_q, cfg.cl,
                    cfg.gamma, sim.train_rngs[deviator])

    for _ in range(improve_iters):
        improve()
    best, other_means = [], []
    for _ in range(eval_loops):
        improve()
        returns = discounted_returns(rollout_rewards(sim, cfg.E).T, cfg.gamma)
        best.append(returns[deviator])
        other_means.append(returns[others].mean())
    return float(max(best) - np.mean(other_means))
