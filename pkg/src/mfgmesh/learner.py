"""The online learning loop: collection, Munchausen training, evaluation and policy adoption.

A :class:`Population` owns the environment, every agent's learner and all
random streams for one trial. One outer iteration is

1. empty buffers and collect ``M`` synchronous system steps,
2. ``L`` Adam updates per learning agent on batches drawn from its buffer,
3. ``E`` evaluation steps giving each agent its return estimate ``sigma``,
4. architecture-specific sharing: ``C_p`` softmax adoption rounds over the
   communication graph (networked), pushing agent 0's parameters to everyone
   (centralised), or nothing (independent).

The environment is never reset; every phase advances the same clock.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import env as E
from .config import ArchitectureKind, ExperimentConfig
from .env import EnvState, GridConfig, ObservationMode
from .graphs import (AgentGraph, StateVisGraph, build_radius_agent_graph,
                     build_visibility_graph, neighbors)
from .metrics import MetricsRow, approximate_exploitability, average_discounted_return
from .mfest import estimate_all
from .nn import (AdamState, Batch, MlpParams, adam_step, forward_stacked, init_params,
                 munchausen_targets, policy_from_q, regression_loss_and_gradients, sync_target)

# Below this adoption temperature the softmax is replaced by an exact argmax
# (lowest index on ties); exp() would otherwise split ties at random.
ARGMAX_TAU = 1e-6

RewardFn = Callable[[EnvState, np.ndarray, np.ndarray, GridConfig], np.ndarray]


class ReplayBuffer:
    """Fixed-capacity transition store, emptied at the start of every iteration."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.size = 0

    def __len__(self):
        return self.size

    def clear(self):
        self.size = 0

    def add(self, obs, action, reward, next_obs):
        if self.size >= self.capacity:
            raise OverflowError(f"buffer full ({self.capacity} transitions)")
        k = self.size
        self.obs[k] = obs
        self.actions[k] = action
        self.rewards[k] = reward
        self.next_obs[k] = next_obs
        self.size += 1

    def contents(self) -> Batch:
        n = self.size
        return Batch(self.obs[:n], self.actions[:n], self.rewards[:n], self.next_obs[:n])


@dataclass
class AgentLearner:
    params: MlpParams
    target: MlpParams
    adam: AdamState
    buffer: ReplayBuffer
    sigma: float = 0.0


class Population:
    """Environment, learners and seeded random streams for one trial."""

    def __init__(self, config: ExperimentConfig, seed: int | None = None,
                 reward_fn: RewardFn | None = None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.grid = config.grid()
        self.reward_fn = reward_fn or E.compute_rewards
        n = config.n_agents
        root = np.random.SeedSequence(self.seed)
        (start_ss, param_ss, train_ss, act_ss, entity_ss, adopt_ss) = root.spawn(6)
        self.rng_act = np.random.default_rng(act_ss)
        self.rng_entity = np.random.default_rng(entity_ss)
        self.rng_adopt = np.random.default_rng(adopt_ss)
        self.train_rngs = [np.random.default_rng(s) for s in train_ss.spawn(n)]
        self.env = E.random_env_state(self.grid, np.random.default_rng(start_ss))
        self.obs_dim = E.observation_size(self.grid, config.obs_mode)

        self.learners = []
        for s in param_ss.spawn(n):
            params = init_params(self.obs_dim, np.random.default_rng(s))
            self.learners.append(AgentLearner(params, sync_target(params),
                                              AdamState.for_params(params, config.adam_lr),
                                              ReplayBuffer(config.M, self.obs_dim)))
        if self.architecture is ArchitectureKind.CENTRALISED:
            push_params(self.learners, 0)

        if self.architecture is ArchitectureKind.INDEPENDENT:
            self.vis_graph = StateVisGraph.self_only(self.grid.n_states)
        else:
            self.vis_graph = build_visibility_graph(self.grid, config.vis_radius_fraction)
        self.refresh_observation()

    @property
    def architecture(self) -> ArchitectureKind:
        return self.config.architecture

    @property
    def n_agents(self) -> int:
        return len(self.learners)

    def params(self) -> list[MlpParams]:
        return [lrn.params for lrn in self.learners]

    # -- graphs and observations ---------------------------------------------

    def comm_graph(self) -> AgentGraph:
        if self.architecture is ArchitectureKind.INDEPENDENT:
            return AgentGraph.empty(self.n_agents)
        return build_radius_agent_graph(self.env.positions, self.config.comm_radius_fraction, self.grid)

    def mean_field_estimates(self) -> np.ndarray:
        cfg = self.config
        states = E.flat_indices(self.env.positions, self.grid)
        comm = self.comm_graph()
        if cfg.estimator == "general":
            if self.architecture is ArchitectureKind.INDEPENDENT:
                obs = AgentGraph.empty(self.n_agents)
            else:
                obs = build_radius_agent_graph(self.env.positions, cfg.vis_radius_fraction, self.grid)
            return estimate_all(states, np.arange(self.n_agents), comm, obs, cfg.C_e,
                                "general", self.grid.n_states)
        return estimate_all(states, None, comm, self.vis_graph, cfg.C_e, "visibility")

    def refresh_observation(self) -> None:
        """Recompute the cached observations after the environment was replaced."""
        self._obs = self.observe()

    def observe(self) -> np.ndarray:
        mode = self.config.obs_mode
        if not mode.population_dependent:
            return E.encode_observations(self.env, None, self.grid, mode)
        if mode is ObservationMode.GLOBAL_MEAN_FIELD or self.architecture is ArchitectureKind.CENTRALISED:
            mf = E.empirical_distribution(self.env.positions, self.grid)
        else:
            mf = self.mean_field_estimates()
        return E.encode_observations(self.env, mf, self.grid, mode)

    # -- acting ----------------------------------------------------------------

    def stacked_params(self):
        weights = [np.stack(ws) for ws in zip(*(p.weights for p in self.params()))]
        biases = [np.stack(bs) for bs in zip(*(p.biases for p in self.params()))]
        return weights, biases

    def sample_actions(self, obs: np.ndarray, stacked) -> np.ndarray:
        q = forward_stacked(*stacked, obs)
        probs = policy_from_q(q, self.config.tau_q)
        u = self.rng_act.random(len(obs))
        actions = (np.cumsum(probs, axis=1) <= u[:, None]).sum(axis=1)
        return np.minimum(actions, E.N_ACTIONS - 1)

    def step(self, stacked=None):
        """One synchronous system step; returns ``(obs, actions, rewards, next_obs)``."""
        stacked = stacked or self.stacked_params()
        obs = self._obs
        actions = self.sample_actions(obs, stacked)
        mu = E.empirical_distribution(self.env.positions, self.grid)
        rewards = self.reward_fn(self.env, actions, mu, self.grid)
        if self.grid.task.has_entity:
            self.env.entity = E.advance_entity(self.grid.task, self.env, mu,
                                               self.rng_entity, self.grid)
        self.env.positions = E.step_agents(self.env.positions, actions, self.grid)
        self.env.time += 1
        self._obs = self.observe()
        return obs, actions, rewards, self._obs


def push_params(learners: list[AgentLearner], source: int) -> None:
    for i, lrn in enumerate(learners):
        if i != source:
            lrn.params = learners[source].params
            lrn.target = learners[source].target


def rollout_rewards(pop: Population, steps: int) -> np.ndarray:
    """Advance ``steps`` system steps with fixed policies; returns ``(steps, N)`` rewards."""
    stacked = pop.stacked_params()
    out = np.zeros((steps, pop.n_agents))
    for t in range(steps):
        out[t] = pop.step(stacked)[2]
    return out


def collect_phase(pop: Population, m_steps: int, store=None) -> np.ndarray:
    """Run ``m_steps`` system steps, adding each transition to the listed agents' buffers.

    ``store`` defaults to every agent. Returns the ``(m_steps, N)`` rewards.
    """
    store = range(pop.n_agents) if store is None else store
    stacked = pop.stacked_params()
    out = np.zeros((m_steps, pop.n_agents))
    for t in range(m_steps):
        obs, actions, rewards, next_obs = pop.step(stacked)
        for i in store:
            pop.learners[i].buffer.add(obs[i], actions[i], rewards[i], next_obs[i])
        out[t] = rewards
    return out


def train_phase(learner: AgentLearner, l_steps: int, batch_size: int, nu: int,
                tau_q: float, cl: float, gamma: float, rng: np.random.Generator) -> list[float]:
    """``l_steps`` Adam updates on batches sampled with replacement; returns the losses.

    The target network is the parameter set at the start of the phase, and is
    refreshed after update ``l`` whenever ``l > 0`` and ``l % nu == 0``.
    """
    if len(learner.buffer) == 0:
        raise ValueError("cannot train on an empty buffer")
    data = learner.buffer.contents()
    learner.target = sync_target(learner.params)
    targets = munchausen_targets(learner.target, data, tau_q, cl, gamma)
    losses = []
    for l in range(l_steps):
        idx = rng.integers(0, len(data.actions), size=batch_size)
        loss, grads = regression_loss_and_gradients(learner.params, data.obs[idx],
                                                    data.actions[idx], targets[idx])
        learner.params, learner.adam = adam_step(learner.params, grads, learner.adam)
        losses.append(loss)
        if l > 0 and l % nu == 0:
            learner.target = sync_target(learner.params)
            targets = munchausen_targets(learner.target, data, tau_q, cl, gamma)
    return losses


def evaluate_sigma(pop: Population, e_steps: int, gamma: float) -> np.ndarray:
    """Each agent's ``E``-step discounted return under its current policy."""
    rewards = rollout_rewards(pop, e_steps)
    sigma = rewards.T @ (gamma ** np.arange(e_steps))
    for lrn, s in zip(pop.learners, sigma):
        lrn.sigma = float(s)
    return sigma


def adoption_probabilities(sigmas, tau_comm: float) -> np.ndarray:
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if tau_comm <= 0:
        raise ValueError("tau_comm must be positive")
    if tau_comm < ARGMAX_TAU:
        p = np.zeros(len(sigmas))
        p[int(np.argmax(sigmas))] = 1.0
        return p
    z = (sigmas - sigmas.max()) / tau_comm
    e = np.exp(z)
    return e / e.sum()


def adoption_round(learners: list[AgentLearner], comm: AgentGraph, tau_comm: float,
                   rng: np.random.Generator) -> list[int]:
    """Every agent samples whose (sigma, parameters) to keep among itself and its neighbours.

    All choices read the round-start snapshot. Returns the adopted index per agent.
    """
    snapshot = [(lrn.sigma, lrn.params) for lrn in learners]
    sigmas = np.array([s for s, _ in snapshot])
    u = rng.random(len(learners))
    chosen = []
    for i, lrn in enumerate(learners):
        cands = sorted([i] + neighbors(comm, i))
        p = adoption_probabilities(sigmas[cands], tau_comm)
        k = min(int(np.searchsorted(np.cumsum(p), u[i], side="right")), len(cands) - 1)
        j = cands[k]
        lrn.sigma, lrn.params = snapshot[j]
        chosen.append(j)
    return chosen


def run_iteration(pop: Population, k: int) -> MetricsRow:
    cfg = pop.config
    start = time.perf_counter()
    for lrn in pop.learners:
        lrn.buffer.clear()
    rewards = collect_phase(pop, cfg.M)
    trainers = [0] if pop.architecture is ArchitectureKind.CENTRALISED else range(pop.n_agents)
    for i in trainers:
        train_phase(pop.learners[i], cfg.L, cfg.batch_size, cfg.target_period,
                    cfg.tau_q, cfg.cl, cfg.gamma, pop.train_rngs[i])
    if pop.architecture is ArchitectureKind.CENTRALISED:
        push_params(pop.learners, 0)
    evaluate_sigma(pop, cfg.E, cfg.gamma)
    if pop.architecture is ArchitectureKind.NETWORKED:
        tau = cfg.tau_comm(k)
        for _ in range(cfg.C_p):
            adoption_round(pop.learners, pop.comm_graph(), tau, pop.rng_adopt)
            pop.step()
    mean, std = average_discounted_return(rewards.T, cfg.gamma)
    return MetricsRow(k, mean, std, None, time.perf_counter() - start)


def run_training(config: ExperimentConfig, seed: int | None = None,
                 reward_fn: RewardFn | None = None,
                 population: Population | None = None) -> tuple[Population, list[MetricsRow]]:
    """``K`` iterations from fresh random policies, with exploitability on its cadence."""
    pop = population or Population(config, seed, reward_fn)
    rows = []
    period = config.exploit_period
    for k in range(config.K):
        row = run_iteration(pop, k)
        if period and k % period == 0:
            start = time.perf_counter()
            ex = approximate_exploitability(pop)
            row = row._replace(exploitability=ex, seconds=row.seconds + time.perf_counter() - start)
        rows.append(row)
    return pop, rows


def snapshot(pop: Population) -> Population:
    return copy.deepcopy(pop)
