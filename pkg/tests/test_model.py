import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from helpers import tabular_instance
from invbal.errors import MalformedInstanceError
from invbal.instances import HotelParams, draw_hotel_scenario, gen_matching_instance, hotel_instance
from invbal.model import (MULTI, NULL_ACTION, Instance, InventoryState, MatchingLaw, MnlLaw, Resource, TabularLaw,
                          apply_outcome, assortment_family, dense_outcome, dumps_instance, expected_auxiliary_reward,
                          instance_from_dict, instance_to_dict, load_instance, loads_instance, sample_outcome,
                          save_instance)


# ------------------------------------------------------------------ resources


@pytest.mark.parametrize("kwargs", [
    dict(inventory=0, reward=1.0),
    dict(inventory=2.5, reward=1.0),
    dict(inventory=3, reward=0.0),
    dict(inventory=3),
    dict(inventory=3, reward=1.0, prices=(1.0,)),
    dict(inventory=3, prices=()),
    dict(inventory=3, prices=(2.0, 1.0)),
    dict(inventory=3, prices=(1.0, 1.0)),
])
def test_resource_rejects_invalid(kwargs):
    with pytest.raises(MalformedInstanceError):
        Resource(**kwargs)


def test_resource_max_price():
    assert Resource(2, reward=4.0).max_price == 4.0
    assert Resource(2, prices=(1, 3)).max_price == 3.0


# ------------------------------------------------------------------ sampling


def test_matching_ineligible_never_consumes(rng):
    law = MatchingLaw([[0.9, 0.8], [1.0, 1.0]])
    x = np.array([0.0, 1.0])
    assert all(sample_outcome(law, x, (0, 1), rng) == () for _ in range(200))


def test_matching_certain_click(rng):
    law = MatchingLaw([[1.0]])
    assert all(sample_outcome(law, np.array([1.0]), (0, 0), rng) == (0,) for _ in range(50))


def test_mnl_empty_assortment_never_consumes(rng):
    law = MnlLaw(np.ones((3, 2)), 1.0)
    assert all(sample_outcome(law, np.array([1.0, 2.0]), (), rng) == () for _ in range(50))


def test_tabular_unknown_context_rejected(rng):
    inst = tabular_instance([[[((0,), 1.0)]]], [1], [1.0], [0])
    with pytest.raises(MalformedInstanceError):
        inst.law.sample(np.array([5.0]), 0, rng)


def test_unknown_action_rejected():
    with pytest.raises(MalformedInstanceError):
        MatchingLaw([[0.5]]).action_index((3, 3))


def test_sampling_draws_one_uniform_per_call():
    law = MnlLaw(np.zeros((2, 1)), 1.0)
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    law.sample(np.array([1.0]), law.action_index((0, 1)), a)
    b.random()
    assert a.random() == b.random()


def test_sampling_is_deterministic_given_seed():
    law = MatchingLaw([[0.5, 0.2]])
    draws = [[sample_outcome(law, np.array([1.0]), (0, 0), np.random.default_rng(s)) for s in range(30)]
             for _ in range(2)]
    assert draws[0] == draws[1]


# ------------------------------------------------------------------ dynamics


def test_depleted_resource_earns_nothing():
    res = (Resource(1, reward=3.0),)
    reward, state = apply_outcome(InventoryState((1,), 4), (0,), res)
    assert reward == 0.0 and state.consumed == (1,)


def test_empty_outcome_changes_nothing():
    res = (Resource(2, reward=3.0),)
    reward, state = apply_outcome(InventoryState((1,), 0), (), res)
    assert reward == 0.0 and state.consumed == (1,)


def test_outcome_rewards_are_additive():
    res = (Resource(2, reward=3.0), Resource(2, reward=5.0))
    reward, state = apply_outcome(InventoryState.initial(2), (0, 1), res)
    assert reward == 8.0 and state.consumed == (1, 1)


def test_multiprice_outcome_earns_the_transacted_price():
    res = (Resource(2, prices=(10.0, 20.0)), Resource(1, prices=(5.0,)))
    reward, state = apply_outcome(InventoryState.initial(2), (1, 2), res)
    assert reward == 25.0 and state.consumed == (1, 1)


@given(st.lists(st.lists(st.integers(0, 2), max_size=3, unique=True), max_size=30))
def test_counters_monotone_and_capped(outcomes):
    res = (Resource(2, reward=1.0), Resource(3, reward=2.0), Resource(1, reward=4.0))
    state = InventoryState.initial(3)
    total = 0.0
    for y in outcomes:
        reward, nxt = apply_outcome(state, tuple(y), res)
        assert all(a <= b <= r.inventory for a, b, r in zip(state.consumed, nxt.consumed, res))
        total += reward
        state = nxt
    assert total == sum(c * r.reward for c, r in zip(state.consumed, res))


def test_dense_outcome():
    assert dense_outcome((0, 2), 4).tolist() == [1, 0, 1, 0]


# ------------------------------------------------------------------ expected reward


def test_matching_expected_reward():
    law = MatchingLaw([[0.3, 0.7], [0.4, 0.1]])
    assert expected_auxiliary_reward(law, np.array([1.0, 1.0]), (0, 1), [2.0, 5.0]) == pytest.approx(0.7 * 2.0)
    assert expected_auxiliary_reward(law, np.array([0.0, 1.0]), (0, 1), [2.0, 5.0]) == 0.0


def test_zero_virtual_rewards_give_zero():
    law = MnlLaw(np.ones((3, 2)), 2.0)
    assert expected_auxiliary_reward(law, np.array([1.0, 0.5]), (0, 2), np.zeros(3)) == 0.0


def test_tabular_expected_reward_hand_expansion():
    inst = tabular_instance([[[((0,), 0.3), ((), 0.7)]]], [1], [10.0], [0])
    assert expected_auxiliary_reward(inst.law, np.array([0.0]), 0, [10.0]) == pytest.approx(3.0, abs=1e-15)


def test_expected_reward_dimension_mismatch():
    with pytest.raises(MalformedInstanceError):
        expected_auxiliary_reward(MatchingLaw([[0.5]]), np.array([1.0]), (0, 0), [1.0, 2.0])


def test_null_action_expects_nothing():
    law = MatchingLaw([[0.5]])
    assert expected_auxiliary_reward(law, np.array([1.0]), None, [3.0]) == 0.0
    assert law.action_index(None) == NULL_ACTION


@pytest.mark.slow
@pytest.mark.parametrize("law,x,action,vr", [
    (MatchingLaw([[0.35, 0.8]]), np.array([1.0]), (0, 0), np.array([2.0])),
    (MnlLaw([[0.2, 0.1], [-0.3, 0.4], [0.0, 0.0]], 1.5), np.array([1.0, 0.7]), (0, 1, 2), np.array([3.0, -1.0, 2.0])),
])
def test_monte_carlo_matches_expectation(law, x, action, vr):
    rng = np.random.default_rng(99)
    a = law.action_index(action)
    draws = np.array([sum(vr[j] for j in law.sample(x, a, rng)) for _ in range(100_000)])
    exact = expected_auxiliary_reward(law, x, action, vr)
    assert abs(draws.mean() - exact) <= 4 * draws.std(ddof=1) / math.sqrt(len(draws))


# ------------------------------------------------------------------ laws


def test_tabular_rejects_unnormalized():
    with pytest.raises(MalformedInstanceError):
        TabularLaw([[0.0]], [0], {(0, 0): [((0,), 0.3), ((), 0.6)]}, 1)


def test_tabular_rejects_missing_cell():
    with pytest.raises(MalformedInstanceError):
        TabularLaw([[0.0], [1.0]], [0], {(0, 0): [((), 1.0)]}, 1)


@pytest.mark.parametrize("p", [[[1.2]], [[-0.1]], [[float("nan")]], [0.5]])
def test_matching_rejects_bad_probabilities(p):
    with pytest.raises(MalformedInstanceError):
        MatchingLaw(p)


def test_mnl_family_must_be_downward_closed():
    with pytest.raises(MalformedInstanceError):
        MnlLaw(np.zeros((2, 1)), 1.0, [(), (0, 1), (0,)])
    with pytest.raises(MalformedInstanceError):
        MnlLaw(np.zeros((2, 1)), 1.0, [(0,)])


def test_mnl_context_needs_constant_feature():
    law = MnlLaw(np.zeros((2, 2)), 1.0)
    with pytest.raises(MalformedInstanceError):
        law.check_context(np.array([0.0, 1.0]))


def test_assortment_family_one_per_resource():
    fam = assortment_family(4, item_resource=[0, 0, 1, 1], one_per_resource=True)
    assert (0, 1) not in fam and (0, 2) in fam and len(fam) == 9


@given(hnp.arrays(float, (3, 2), elements=st.floats(0, 1)), st.lists(st.sampled_from([0.0, 1.0]), min_size=3,
                                                                      max_size=3))
def test_matching_distributions_normalized(p, x):
    law = MatchingLaw(p)
    for a in range(len(law.actions)):
        assert abs(math.fsum(q for _, q in law.distribution(np.array(x), a)) - 1) <= 1e-12


@given(hnp.arrays(float, (4, 3), elements=st.floats(-5, 5)), st.floats(0.01, 100),
       hnp.arrays(float, 2, elements=st.floats(-3, 3)))
def test_mnl_distributions_normalized(beta, v0, feats):
    law = MnlLaw(beta, v0)
    x = np.concatenate([[1.0], feats])
    q = law.consumption_matrix(x)
    assert np.all(q >= 0)
    for a in range(len(law.actions)):
        assert abs(math.fsum(p for _, p in law.distribution(x, a)) - 1) <= 1e-12
        assert q[a].sum() <= 1 + 1e-12


# ------------------------------------------------------------------ instances


def test_instance_rejects_mode_mismatch():
    with pytest.raises(MalformedInstanceError):
        Instance((Resource(1, prices=(1.0,)),), MatchingLaw([[0.5]]), [[1.0]])
    with pytest.raises(MalformedInstanceError):
        Instance((Resource(1, reward=1.0),), MnlLaw([[0.0]], 1.0), [[1.0]], MULTI)


def test_instance_rejects_foreign_context():
    with pytest.raises(MalformedInstanceError):
        Instance((Resource(1, reward=1.0),), MatchingLaw([[0.5]]), [[2.0]])


def test_instance_summary_properties(small_matching):
    assert small_matching.horizon == 20
    assert small_matching.b_min == 1
    assert small_matching.r_max == 3.0
    contexts, cls, counts = small_matching.context_classes()
    assert counts.sum() == 20 and len(contexts) == 4
    np.testing.assert_array_equal(contexts[cls], small_matching.arrivals)


# ------------------------------------------------------------------ serialization


def _roundtrip_equal(inst):
    text = dumps_instance(inst)
    again = loads_instance(text)
    assert dumps_instance(again) == text
    assert instance_to_dict(again) == instance_to_dict(inst)


def test_matching_roundtrip(small_matching):
    _roundtrip_equal(small_matching)


def test_tabular_roundtrip():
    _roundtrip_equal(tabular_instance([[[((0, 1), 0.25), ((1,), 0.5), ((), 0.25)]]], [2, 1], [1.0, 2.5], [0, 0],
                                      n_items=2))


def test_hotel_roundtrip(tmp_path):
    params = HotelParams()
    inst = hotel_instance(params, draw_hotel_scenario(params, np.random.default_rng(0)), 0.2)
    path = tmp_path / "hotel.json"
    save_instance(inst, path)
    again = load_instance(path)
    assert instance_to_dict(again) == instance_to_dict(inst)
    np.testing.assert_array_equal(again.law.beta, inst.law.beta)


def test_empty_horizon_roundtrip():
    _roundtrip_equal(gen_matching_instance(2, 1, 1, 0, [[0.5], [0.5]], []))


@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 6), st.data())
def test_random_matching_roundtrip(n, K, T, data):
    p = data.draw(hnp.arrays(float, (n, K), elements=st.floats(0, 1)))
    ctx = data.draw(hnp.arrays(float, (T, n), elements=st.sampled_from([0.0, 1.0])))
    b = data.draw(st.lists(st.integers(1, 5), min_size=n, max_size=n))
    _roundtrip_equal(gen_matching_instance(n, K, b, T, p, ctx))


@pytest.mark.parametrize("doc", [
    {"mode": "single", "horizon": 0, "arrivals": [], "law": {"kind": "matching", "p": [[0.5]]}},
    {"resources": [{"inventory": 1, "reward": 1}], "horizon": 2, "arrivals": [[1]],
     "law": {"kind": "matching", "p": [[0.5]]}},
    {"resources": [{"inventory": 1, "reward": 1}], "horizon": 1, "arrivals": [[1]], "law": {"kind": "unknown"}},
])
def test_malformed_documents_rejected(doc):
    with pytest.raises(MalformedInstanceError):
        instance_from_dict(doc)
