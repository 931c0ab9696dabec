import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contactshape.environment import LatticeSpec, make_deterministic_env, make_iid_env, uniform
from contactshape.field import (FixtureEvents, events_on_edge, events_on_site, field_new, load_fixture,
                                make_view)
from contactshape.restart import thinned_coupling


def _field(seed=1, lam=2.0, d=1):
    return field_new(make_deterministic_env(LatticeSpec(d, 10), lam), seed)


def test_same_seeds_same_events():
    a = events_on_site(_field(3), (0,), 0, 100)
    b = events_on_site(_field(3), (0,), 0, 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, events_on_site(_field(4), (0,), 0, 100))


def test_zero_rate_fixture_edge_is_empty():
    fx = FixtureEvents.from_dict(sites={(0,): [1.0]})
    f = field_new(make_deterministic_env(LatticeSpec(1, 3), 0.0), 0, fixture=fx)
    assert len(events_on_edge(f, ((0,), (1,)), 0, 100)) == 0


def test_zero_rate_random_edge_is_empty():
    f = field_new(make_deterministic_env(LatticeSpec(1, 3), 0.0), 0)
    assert len(events_on_edge(f, ((0,), (1,)), 0, 1000)) == 0


def test_site_rate_clt():
    n = len(events_on_site(_field(5), (2,), 0, 10_000))
    assert 0.97 <= n / 10_000 <= 1.03


def test_edge_rate_clt():
    n = len(events_on_edge(_field(6, lam=2.0), ((0,), (1,)), 0, 10_000))
    assert 1.94 <= n / 10_000 <= 2.06


def test_edge_rate_below_ceiling():
    # environment rate 1.0 under ceiling 3.0: thinning must keep about one third
    env = make_deterministic_env(LatticeSpec(1, 3), 1.0, 1.0, 3.0)
    f = field_new(env, 2)
    n = len(events_on_edge(f, ((0,), (1,)), 0, 10_000))
    assert 0.97 <= n / 10_000 <= 1.03


def test_empty_and_invalid_intervals():
    f = _field()
    assert len(events_on_site(f, (0,), 3.0, 3.0)) == 0
    assert len(events_on_edge(f, ((0,), (1,)), 3.0, 3.0)) == 0
    with pytest.raises(ValueError):
        events_on_site(f, (0,), -1.0, 2.0)
    with pytest.raises(ValueError):
        events_on_site(f, (0,), 2.0, 1.0)


def test_split_interval_concatenates():
    f = _field(8)
    whole = events_on_site(f, (1,), 0, 50)
    parts = np.concatenate([events_on_site(f, (1,), 0, 17.3), events_on_site(f, (1,), 17.3, 50)])
    assert np.array_equal(whole, parts)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0, 30), b=st.floats(0, 30), c=st.floats(0, 30), seed=st.integers(0, 2 ** 40))
def test_split_property_edges(a, b, c, seed):
    t0, t1, t2 = sorted((a, b, c))
    f = field_new(make_iid_env(LatticeSpec(2, 5), uniform(1, 3), 2), seed, slab_length=0.7)
    e = ((0, 0), (0, 1))
    whole = events_on_edge(f, e, t0, t2)
    parts = np.concatenate([events_on_edge(f, e, t0, t1), events_on_edge(f, e, t1, t2)])
    assert np.array_equal(whole, parts)
    assert np.all(np.diff(whole) > 0)
    assert np.all((whole >= t0) & (whole < t2))


def test_mean_count_over_replicas():
    T = 25.0
    counts = [len(events_on_site(_field(s), (0,), 0, T)) for s in range(1000)]
    assert abs(np.mean(counts) - T) < 3 * np.sqrt(T)
    assert abs(np.var(counts) / T - 1) < 0.2


def test_disjoint_edges_uncorrelated():
    f = field_new(make_iid_env(LatticeSpec(1, 10), uniform(1, 3), 0), 12)
    a = np.array([len(events_on_edge(f, ((0,), (1,)), k, k + 1)) for k in range(1000)])
    b = np.array([len(events_on_edge(f, ((1,), (2,)), k, k + 1)) for k in range(1000)])
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_identity_view():
    f = _field(9, d=2)
    v = make_view(f, (0, 0), 0.0)
    for z in [(0, 0), (1, -2), (3, 3)]:
        assert np.array_equal(events_on_site(v, z, 0, 20), events_on_site(f, z, 0, 20))
    assert np.array_equal(events_on_edge(v, ((0, 0), (1, 0)), 0, 20), events_on_edge(f, ((0, 0), (1, 0)), 0, 20))


def test_view_definition_unfold():
    f = _field(10)
    v = make_view(f, (1,), 2.5)
    assert np.array_equal(events_on_site(v, (0,), 0, 1), events_on_site(f, (1,), 2.5, 3.5) - 2.5)


@settings(max_examples=30, deadline=None)
@given(x=st.integers(-5, 5), y=st.integers(-5, 5), t=st.floats(0, 10), s=st.floats(0, 10))
def test_nested_views_compose(x, y, t, s):
    f = _field(11)
    nested = make_view(make_view(f, (x,), t), (y,), s)
    single = make_view(f, (x + y,), t + s)
    assert nested.space_offset == single.space_offset
    assert nested.time_offset == single.time_offset
    assert np.array_equal(events_on_site(nested, (1,), 0, 5), events_on_site(single, (1,), 0, 5))


def test_fixture_file_loads(data_dir):
    fx = load_fixture(data_dir / "trace_fixture.jsonl")
    f = field_new(make_deterministic_env(LatticeSpec(1, 3), 2.0), 0, fixture=fx)
    assert list(events_on_edge(f, ((1,), (0,)), 0, 10)) == [0.5]
    assert list(events_on_site(f, (0,), 0, 10)) == [1.2]
    assert list(events_on_site(f, (1,), 0, 10)) == [2.0]
    assert list(events_on_site(f, (2,), 0, 10)) == []


# thinned sub-stream ------------------------------------------------------------


def test_thinning_keeps_everything_at_lambda_min():
    f = _field(13)
    pair = thinned_coupling(f, 2.0, thin_seed=5)
    e = ((0,), (1,))
    assert np.array_equal(pair.weak_events_on_edge(e, 0, 200), pair.strong_events_on_edge(e, 0, 200))


def test_thinning_half_fraction():
    f = field_new(make_deterministic_env(LatticeSpec(1, 3), 2.0), 14)
    pair = thinned_coupling(f, 1.0, thin_seed=6)
    e = ((0,), (1,))
    strong = pair.strong_events_on_edge(e, 0, 5000)
    weak = pair.weak_events_on_edge(e, 0, 5000)
    assert len(strong) >= 10_000
    frac = len(weak) / len(strong)
    assert 0.47 <= frac <= 0.53


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 40), t0=st.floats(0, 50), dt=st.floats(0, 20))
def test_weak_subset_of_strong(seed, t0, dt):
    f = field_new(make_iid_env(LatticeSpec(2, 5), uniform(1.5, 3.0), 1), seed)
    pair = thinned_coupling(f, 1.5, thin_seed=seed + 1)
    e = ((0, 0), (1, 0))
    weak = pair.weak_events_on_edge(e, t0, t0 + dt)
    strong = pair.strong_events_on_edge(e, t0, t0 + dt)
    assert set(weak.tolist()) <= set(strong.tolist())
