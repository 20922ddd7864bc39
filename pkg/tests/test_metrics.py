import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfgmesh.config import ExperimentConfig
from mfgmesh.learner import Population, run_iteration
from mfgmesh.metrics import approximate_exploitability, average_discounted_return, discounted_returns
from mfgmesh.nn import serialize_params


def test_average_return_hand_values():
    mean, std = average_discounted_return([[1, 0], [0, 1]], 0.9)
    assert mean == pytest.approx(0.95)
    assert std == pytest.approx(0.05)
    mean, std = average_discounted_return(np.ones((4, 3)), 0.9)
    assert mean == pytest.approx(2.71) and std == 0.0


def test_ragged_rejected():
    with pytest.raises(ValueError):
        average_discounted_return([[1, 0], [1]], 0.9)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.01, 0.99))
def test_discounted_return_matches_loop(rs, gamma):
    total = 0.0
    for t, r in enumerate(rs):
        total += gamma ** t * r
    assert discounted_returns([rs], gamma)[0] == pytest.approx(total)
    assert 0 <= total <= (1 - gamma ** len(rs)) / (1 - gamma) + 1e-9


def exploit_config(**kw):
    base = dict(width=5, height=5, n_agents=4, K=1, M=8, L=5, E=5, trials=1,
                exploitability_every=0, exploit_improve_iters=1, exploit_eval_loops=2)
    base.update(kw)
    return ExperimentConfig(**base)


def test_exploitability_leaves_population_untouched():
    pop = Population(exploit_config(), 0)
    run_iteration(pop, 0)
    before = [serialize_params(l.params) for l in pop.learners]
    pos, t = pop.env.positions.copy(), pop.env.time
    state = pop.rng_act.bit_generator.state
    approximate_exploitability(pop)
    assert before == [serialize_params(l.params) for l in pop.learners]
    assert np.array_equal(pos, pop.env.positions) and t == pop.env.time
    assert state == pop.rng_act.bit_generator.state


def test_exploitability_deterministic_and_bounded():
    cfg = exploit_config()
    pop = Population(cfg, 0)
    a = approximate_exploitability(pop)
    b = approximate_exploitability(pop)
    assert a == b
    bound = (1 - cfg.gamma ** cfg.E) / (1 - cfg.gamma)
    assert -bound <= a <= bound


def test_exploitability_zero_when_reward_ignores_actions():
    def constant(env, actions, mu, grid):
        return np.full(len(actions), 0.5)

    pop = Population(exploit_config(), 0, reward_fn=constant)
    assert approximate_exploitability(pop) == pytest.approx(0.0, abs=1e-12)


def test_eval_loops_validated():
    with pytest.raises(ValueError):
        approximate_exploitability(Population(exploit_config(), 0), eval_loops=0)
