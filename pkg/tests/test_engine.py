import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import tabular_instance
from invbal.errors import ConfigError, MalformedInstanceError
from invbal.engine import (GAP_TOL, compute_regret, conservative_restriction, period_gap, run_conservative_baseline,
                           run_greedy_baseline, run_integrated)
from invbal.instances import HotelParams, gen_hotel_instance, gen_matching_instance, random_matching_instance
from invbal.learners import ClairvoyantLearner, TsMnlLearner, UcbLearner
from invbal.model import NULL_ACTION
from invbal.penalty import PenaltySchedule


class FixedLearner:
    """Always plays the same action."""

    name = "fixed"

    def __init__(self, action):
        self.action = action

    def select(self, t, x, virtual_rewards, allowed=None):
        return self.action

    def update(self, t, x, action, outcome):
        pass


def hotel(scale=0.1, seed=0):
    return gen_hotel_instance(HotelParams(scale=scale), np.random.default_rng(seed))


def ts_for(instance, seed=0, params=None):
    params = params or HotelParams()
    return TsMnlLearner.for_instance(instance, np.random.default_rng(seed), center=params.center(),
                                     halfwidth=params.eps_prior)


# ------------------------------------------------------------------ integrated loop


def test_empty_horizon():
    inst = gen_matching_instance(2, 1, 3, 0, np.ones((2, 1)), [])
    trace = run_integrated(inst, ClairvoyantLearner(inst), rng=np.random.default_rng(0))
    assert trace.horizon == 0 and trace.alg == 0.0 and trace.reg == 0.0
    assert trace.final_consumed(2).tolist() == [0, 0]


def test_clairvoyant_zero_regret(small_matching):
    for seed in range(5):
        trace = run_integrated(small_matching, ClairvoyantLearner(small_matching), rng=np.random.default_rng(seed))
        assert trace.reg == 0.0
        assert compute_regret(trace, small_matching) == 0.0


def test_single_unit_two_periods():
    inst = gen_matching_instance(1, 1, 1, 2, np.ones((1, 1)), np.ones((2, 1)), rewards=[4.0])
    trace = run_integrated(inst, ClairvoyantLearner(inst), rng=np.random.default_rng(0))
    assert trace.rewards.tolist() == [4.0, 0.0]
    assert trace.virtual_rewards[:, 0].tolist() == [4.0, 0.0]
    assert trace.alg == 4.0


def test_regret_hand_example():
    # one context, two deterministic actions worth 3 and 5; the learner insists on the first
    rows = [[[((0,), 1.0)], [((1,), 1.0)]]]
    inst = tabular_instance(rows, [5, 5], [3.0, 5.0], [0])
    trace = run_integrated(inst, FixedLearner(0), rng=np.random.default_rng(0))
    assert trace.gaps.tolist() == [2.0]
    assert compute_regret(trace, inst) == pytest.approx(2.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_trace_invariants_random_instances(seed):
    rng = np.random.default_rng(seed)
    inst = random_matching_instance(rng)
    learner = UcbLearner.for_instance(inst, scale=1.0)
    trace = run_integrated(inst, learner, rng=rng)
    b = inst.inventory
    r = np.array([res.reward for res in inst.resources])
    # conservation and counters
    assert trace.alg <= float(b @ r) + 1e-9
    assert trace.alg == pytest.approx(trace.rewards.sum())
    assert (np.diff(np.vstack([np.zeros(inst.n), trace.inventory]), axis=0) >= 0).all()
    assert (trace.inventory <= b).all()
    # discount coupling: exhausted resources carry zero virtual reward
    for t in range(1, trace.horizon + 1):
        depleted = trace.consumed_before(t) == b
        assert (trace.virtual_rewards[t - 1][depleted] == 0).all()
    # the stored regret matches a recomputation from the true law
    assert compute_regret(trace, inst) == pytest.approx(trace.reg, abs=1e-9)
    assert (trace.gaps >= 0).all()


def test_replay_determinism(small_matching):
    def go():
        learner = UcbLearner.for_instance(small_matching, scale=2.0)
        return run_integrated(small_matching, learner, rng=np.random.default_rng(99))

    a, b = go(), go()
    assert list(a.records()) == list(b.records())


def test_jsonl_export(tmp_path, small_matching):
    trace = run_integrated(small_matching, ClairvoyantLearner(small_matching), rng=np.random.default_rng(1))
    path = tmp_path / "trace.jsonl"
    trace.write_jsonl(path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(lines) == small_matching.horizon + 1
    assert lines[0]["t"] == 1 and set(lines[0]) >= {"context", "virtual_rewards", "action", "outcome", "inventory"}
    summary = lines[-1]
    assert summary["summary"] and summary["ALG"] == trace.alg and summary["REG"] == trace.reg
    assert sum(rec["reward"] for rec in lines[:-1]) == pytest.approx(trace.alg)


def test_learner_mode_mismatch():
    inst = hotel()
    with pytest.raises(ConfigError):
        run_integrated(inst, UcbLearner(4, 2), rng=np.random.default_rng(0))


def test_schedule_mode_mismatch(small_matching):
    res = hotel().resources
    with pytest.raises(ConfigError):
        run_integrated(small_matching, ClairvoyantLearner(small_matching), PenaltySchedule.scaled_psi(res))


def test_disallowed_action_rejected():
    inst = hotel(scale=0.1)
    # the full assortment is offered each period, so depleted rooms make it illegal eventually
    full = len(inst.actions) - 1
    with pytest.raises(MalformedInstanceError):
        run_integrated(inst, FixedLearner(full), rng=np.random.default_rng(0))


def test_period_gap_rules():
    R = np.array([1.0, 3.0, 2.0])
    assert period_gap(R, None, 0, 1) == 2.0
    assert period_gap(R, np.array([True, False, True]), 2, 1) == 0.0
    assert period_gap(R, None, NULL_ACTION, 1) == 3.0
    assert period_gap(np.array([-1.0]), None, NULL_ACTION, 1) == 0.0
    with pytest.raises(MalformedInstanceError):
        period_gap(R, np.array([True, False, False]), 1, 1)
    assert period_gap(np.array([1.0, 1.0 + GAP_TOL / 2]), np.array([True, False]), 1, 1) == 0.0


def test_compute_regret_rejects_wrong_horizon(small_matching):
    trace = run_integrated(small_matching, ClairvoyantLearner(small_matching), rng=np.random.default_rng(1))
    other = gen_matching_instance(3, 2, 2, 3, np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(MalformedInstanceError):
        compute_regret(trace, other)


# ------------------------------------------------------------------ greedy


def test_greedy_matches_integrated_in_first_period(small_matching):
    for seed in range(5):
        a = run_integrated(small_matching, UcbLearner.for_instance(small_matching), rng=np.random.default_rng(seed))
        b = run_greedy_baseline(small_matching, UcbLearner.for_instance(small_matching),
                                rng=np.random.default_rng(seed))
        assert a.actions[0] == b.actions[0]
        np.testing.assert_array_equal(a.virtual_rewards[0], b.virtual_rewards[0])


def test_greedy_uses_undiscounted_rewards_until_depletion():
    inst = gen_matching_instance(1, 1, 3, 6, np.ones((1, 1)), np.ones((6, 1)), rewards=[2.0])
    trace = run_greedy_baseline(inst, ClairvoyantLearner(inst), rng=np.random.default_rng(0))
    assert trace.virtual_rewards[:, 0].tolist() == [2.0, 2.0, 2.0, 0.0, 0.0, 0.0]
    assert trace.inventory[-1, 0] == 3 and trace.alg == 6.0


def test_greedy_on_hotel_conserves():
    inst = hotel(scale=0.1)
    trace = run_greedy_baseline(inst, ts_for(inst), rng=np.random.default_rng(0))
    cap = sum(r.inventory * r.max_price for r in inst.resources)
    assert trace.alg <= cap
    assert (trace.inventory <= inst.inventory).all()


# ------------------------------------------------------------------ conservative


def test_conservative_restriction_shape():
    inst = hotel()
    mask = conservative_restriction(inst)
    actions = inst.actions
    assert mask[actions.index(())]
    low_items = {2 * c for c in range(4)}
    for a, ok in zip(actions, mask):
        assert ok == (not (set(a) & low_items))
    assert mask.sum() == 2 ** 4


def test_conservative_trace_only_high_prices():
    inst = hotel(scale=0.1)
    trace = run_conservative_baseline(inst, ts_for(inst), rng=np.random.default_rng(0))
    items = inst.items
    for a, y in zip(trace.actions, trace.outcomes):
        if a != NULL_ACTION:
            assert all(j % 2 == 1 for j in inst.actions[a])
        for j in y:
            assert items.price[j] == inst.resources[items.resource[j]].max_price
    assert compute_regret(trace, inst) == pytest.approx(trace.reg, abs=1e-9)


def test_conservative_requires_two_prices(small_matching):
    with pytest.raises(ConfigError):
        run_conservative_baseline(small_matching, ClairvoyantLearner(small_matching))


def test_multi_price_filters_depleted_combinations():
    inst = hotel(scale=0.1)
    trace = run_integrated(inst, ts_for(inst), rng=np.random.default_rng(3))
    items = inst.items
    for t in range(1, trace.horizon + 1):
        N = trace.consumed_before(t)
        a = int(trace.actions[t - 1])
        if a != NULL_ACTION:
            for j in inst.actions[a]:
                assert N[items.resource[j]] < inst.resources[items.resource[j]].inventory
    assert compute_regret(trace, inst) == pytest.approx(trace.reg, abs=1e-9)


def test_multi_price_clairvoyant_zero_regret():
    inst = hotel(scale=0.1, seed=4)
    trace = run_integrated(inst, ClairvoyantLearner(inst), rng=np.random.default_rng(0))
    assert trace.reg == 0.0
    cap = sum(r.inventory * r.max_price for r in inst.resources)
    assert 0 < trace.alg <= cap
