import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import B_SYM, C_DET, P_CHANGE
from socialsense.belief import ModelParams, belief2, hmm_filter, predict, social_learning_filter
from socialsense.errors import UnsupportedDimension
from socialsense.social import (
    analyze_trace,
    herd_region_boundaries,
    is_cascade_point,
    is_individual_herd,
    iter_protocol,
    run_protocol,
    time_to_cascade,
)


def test_single_step_trace(change_model):
    t = run_protocol(change_model, 1, seed=9)
    assert len(t) == 1
    expected, _ = social_learning_filter(change_model.prior, t.actions[0], change_model)
    np.testing.assert_array_equal(t.public[1], expected)
    np.testing.assert_array_equal(t.public[0], change_model.prior)


def test_protocol_is_deterministic(change_model):
    a = run_protocol(change_model, 300, seed=42)
    b = run_protocol(change_model, 300, seed=42)
    for f in ("true_state", "obs", "private", "actions", "public"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))


def test_protocol_rng_stream_layout(change_model):
    # x_0 from the prior, then per step: state transition, observation
    rng = np.random.default_rng(123)
    u = rng.random(1 + 2 * 20)
    x = int(u[0] >= 0.5)
    t = run_protocol(change_model, 20, seed=123)
    for k in range(20):
        x = int(u[1 + 2 * k] >= np.cumsum(P_CHANGE[x])[0])
        y = int(u[2 + 2 * k] >= np.cumsum(B_SYM[x])[0])
        assert t.true_state[k] == x and t.obs[k] == y


def test_reveal_mode_public_belief_is_hmm_filter():
    p = ModelParams(P_CHANGE, B_SYM, None, [0.5, 0.5], reveal=True)
    t = run_protocol(p, 100, seed=1)
    pi = np.array([0.5, 0.5])
    for k in range(100):
        assert t.actions[k] == t.obs[k]
        pi = hmm_filter(pi, t.obs[k], p)
        np.testing.assert_array_equal(t.public[k + 1], pi)


def test_private_belief_is_hmm_update_of_public(change_model):
    t = run_protocol(change_model, 50, seed=2)
    for k in range(50):
        np.testing.assert_array_equal(t.private[k], hmm_filter(t.public[k], t.obs[k], change_model))


def test_individual_herd_at_vertex(change_model, static_model):
    for p in (change_model, static_model):
        assert is_individual_herd([1.0, 0.0], p)
        assert is_individual_herd([0.0, 1.0], p)


def test_individual_herd_examples(change_model):
    assert not is_individual_herd(belief2(0.5), change_model)
    assert is_individual_herd(belief2(0.99), change_model)
    acts = {int(a) for a in __import__("socialsense.belief", fromlist=["obs_actions"]).obs_actions(belief2(0.99), change_model)}
    assert acts == {1}


def test_cascade_point_rules(change_model, static_model):
    assert is_cascade_point(belief2(0.99), static_model)
    assert not is_cascade_point(belief2(0.99), change_model)
    flat = ModelParams(np.eye(2), np.full((2, 2), 0.5), C_DET, [0.5, 0.5])
    rng = np.random.default_rng(0)
    for pi in rng.dirichlet(np.ones(2), size=20):
        assert is_cascade_point(pi, flat)


def test_herd_and_cascade_coincide_with_identity_transition(static_model):
    for g in np.linspace(0, 1, 201):
        pi = belief2(g)
        if is_individual_herd(pi, static_model):
            assert is_cascade_point(pi, static_model)


def test_cascade_absorbs_with_identity_transition(static_model):
    for seed in range(30):
        t = run_protocol(static_model, 200, seed)
        rep = analyze_trace(t, static_model)
        assert rep.cascade_at is not None
        c = rep.cascade_at
        assert all(is_cascade_point(t.public[k], static_model) for k in range(c, len(t) + 1))
        assert np.all(t.actions[c:] == t.actions[c])


def test_short_horizon_reports_no_cascade(static_model):
    onset = {s: time_to_cascade(static_model, s, 1000) for s in range(50)}
    seed, k = max(onset.items(), key=lambda kv: kv[1])
    assert k > 2
    rep = analyze_trace(run_protocol(static_model, k - 1, seed), static_model)
    assert rep.cascade_at is None


def test_single_step_trace_has_no_herd_of_agents(change_model):
    assert analyze_trace(run_protocol(change_model, 1, 0), change_model).herd_at is None


def test_change_model_herds_without_cascade(change_model):
    t = run_protocol(change_model, 200, seed=1)
    rep = analyze_trace(t, change_model)
    assert rep.individual_herd_at is not None
    assert rep.cascade_at is None


def test_time_to_cascade_matches_trace(static_model):
    for seed in range(20):
        t = run_protocol(static_model, 100, seed)
        assert time_to_cascade(static_model, seed, 100) == analyze_trace(t, static_model).cascade_at


def test_herd_at_definition(static_model):
    t = run_protocol(static_model, 50, seed=3)
    rep = analyze_trace(t, static_model)
    k = rep.herd_at
    assert np.all(t.actions[k:] == t.actions[-1])
    if k > 1:
        assert t.actions[k - 1] != t.actions[-1]


def test_herd_regions_change_model(change_model):
    iv = herd_region_boundaries(change_model)
    assert [i.action for i in iv] == [0, 1]
    lo, hi = iv[0], iv[1]
    assert lo.lo == 0.0 and hi.hi == 1.0
    assert 0 < lo.hi < hi.lo < 1


def test_herd_regions_uninformative_observation():
    p = ModelParams(np.eye(2), np.full((2, 2), 0.5), C_DET, [0.5, 0.5])
    iv = herd_region_boundaries(p)
    # every grid point herds; intervals are split only by the herd action
    assert iv[0].lo == 0.0 and iv[-1].hi == 1.0
    assert all(abs(b.lo - a.hi - 0.001) < 1e-12 for a, b in zip(iv, iv[1:]))
    dominant = p.with_(costs=[[0.0, 1.0], [0.0, 1.0]])
    assert herd_region_boundaries(dominant) == [type(iv[0])(0.0, 1.0, 0)]


def test_herd_regions_shrink_with_sharp_observations():
    C = [[0.0, 1.0], [1.0, 0.0]]
    soft = herd_region_boundaries(ModelParams(np.eye(2), [[0.7, 0.3], [0.3, 0.7]], C, [0.5, 0.5]))
    sharp = herd_region_boundaries(ModelParams(np.eye(2), [[0.99, 0.01], [0.01, 0.99]], C, [0.5, 0.5]))
    assert sharp[0].hi < soft[0].hi
    assert sharp[-1].lo > soft[-1].lo


def test_herd_regions_consistent_with_grid(change_model):
    grid = np.linspace(0, 1, 1001)
    iv = herd_region_boundaries(change_model, 1001)
    inside = np.zeros(1001, dtype=bool)
    for i in iv:
        sel = (grid >= i.lo) & (grid <= i.hi)
        assert not np.any(inside & sel)
        inside |= sel
    for g, flag in zip(grid, inside):
        assert is_individual_herd(belief2(g), change_model) == flag


def test_herd_regions_need_two_states():
    p = ModelParams(np.eye(3), np.full((3, 2), 0.5), np.eye(3), np.full(3, 1 / 3))
    with pytest.raises(UnsupportedDimension):
        herd_region_boundaries(p)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_herd_steps_advance_by_prediction(seed):
    p = ModelParams(P_CHANGE, B_SYM, C_DET, [0.5, 0.5])
    t = run_protocol(p, 60, seed)
    for k in range(60):
        if is_individual_herd(t.public[k], p):
            np.testing.assert_allclose(t.public[k + 1], predict(t.public[k], p), atol=1e-12)


def test_iter_protocol_steps_are_numbered(change_model):
    ks = [s.k for _, s in zip(range(5), iter_protocol(change_model, 0))]
    assert ks == [1, 2, 3, 4, 5]
