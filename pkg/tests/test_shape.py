import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contactshape import _kernels as K
from contactshape.dynamics import run_contact
from contactshape.environment import LatticeSpec, make_deterministic_env, make_iid_env, uniform
from contactshape.errors import EstimationError, PreconditionError
from contactshape.essential import essential_batch
from contactshape.field import field_new
from contactshape.shape import (MuNorm, ShapeSnapshot, chain_holds, discretized_ball, estimate_mu_direction,
                                extract_shape, fit_tail, mu_from_samples, shape_inclusion_check,
                                sigma_row_status, survival_probability, wilson)


def _factory(lam, d=1, L=60, dist=None):
    w = LatticeSpec(d, L)
    if dist is None:
        env = make_deterministic_env(w, lam)
        return lambda s: field_new(env, s)
    return lambda s: field_new(make_iid_env(w, dist, s), s)


# survival ---------------------------------------------------------------------------------


def test_wilson_interval():
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi and hi - lo == pytest.approx(2 * 0.0962, abs=2e-3)
    assert wilson(0, 0) == (0.0, 1.0)


def test_survival_without_arrows_is_exponential():
    est = survival_probability(_factory(0.0, L=3), range(2000), T_surv=1.0)
    assert est.ci[0] <= math.exp(-1.0) <= est.ci[1]


def test_survival_needs_replicas():
    with pytest.raises(PreconditionError):
        survival_probability(_factory(2.0), range(10), 5.0)


def test_survival_strictly_between_and_stable():
    fac = _factory(2.0, L=220)
    a = survival_probability(fac, range(0, 2000), 200.0)
    b = survival_probability(fac, range(2000, 4000), 200.0)
    assert 0 < a.rho_hat < 1 and 0 < b.rho_hat < 1
    assert abs(a.rho_hat - b.rho_hat) < 0.03


def test_random_env_survives_at_least_as_weak_constant():
    seeds = range(600)
    env = survival_probability(_factory(None, L=120, dist=uniform(1.8, 2.2)), seeds, 50.0)
    const = survival_probability(_factory(1.8, L=120), seeds, 50.0)
    assert env.rho_hat >= const.rho_hat - (const.ci[1] - const.ci[0]) / 2


# time constant --------------------------------------------------------------------------


def test_mu_zero_direction():
    est = estimate_mu_direction(_factory(2.0), (0,), [1, 2, 4], range(20), LatticeSpec(1, 60), 40.0, 20.0)
    assert est.mu_hat == 0.0


def test_mu_extrapolation_recovers_known_line():
    rng = np.random.default_rng(0)
    n = np.array([2, 4, 8, 16, 32])
    samples = 0.7 + 1.5 / n + rng.normal(0, 0.05, (400, len(n)))
    est = mu_from_samples((1,), n, samples, seed=1)
    assert abs(est.mu_hat - 0.7) < 3 * est.mu_se + 1e-3
    assert est.ci[0] < 0.7 < est.ci[1]


def test_mu_needs_replicas():
    with pytest.raises(EstimationError):
        mu_from_samples((1,), [1, 2], np.ones((3, 2)))


# the norm -------------------------------------------------------------------------------------


def test_norm_reproduces_estimates_and_symmetry():
    norm = MuNorm({(1, 0): 0.4, (1, 1): 0.6}, 2)
    assert norm([(1, 0)])[0] == pytest.approx(0.4)
    assert norm([(1, 1)])[0] == pytest.approx(0.6)
    assert norm([(0, -1)])[0] == pytest.approx(0.4)
    assert norm([(-1, 1)])[0] == pytest.approx(0.6)
    assert norm.width == pytest.approx(0.6)


def test_norm_one_dimension():
    norm = MuNorm({(1,): 0.5}, 1)
    assert norm([(-4,)])[0] == 2.0


vec = st.tuples(st.floats(-10, 10), st.floats(-10, 10))


@settings(max_examples=60, deadline=None)
@given(a=vec, b=vec, c=st.floats(0, 5))
def test_norm_axioms(a, b, c):
    norm = MuNorm({(1, 0): 0.35, (1, 1): 0.55, (2, 1): 0.9}, 2)
    na, nb = norm([a])[0], norm([b])[0]
    assert norm([(a[0] + b[0], a[1] + b[1])])[0] <= na + nb + 1e-9
    assert norm([(c * a[0], c * a[1])])[0] == pytest.approx(c * na, abs=1e-9)
    assert na >= 0


# snapshots and inclusion --------------------------------------------------------------------------


def test_discretized_ball_passes_above_width():
    norm = MuNorm({(1, 0): 0.4, (1, 1): 0.6}, 2)
    t = 20.0
    ball = discretized_ball(norm, t)
    eps = 1.01 * norm.width / t
    assert shape_inclusion_check(ball, norm, eps).passed


def test_zero_epsilon_fails():
    norm = MuNorm({(1, 0): 0.4, (1, 1): 0.6}, 2)
    assert not shape_inclusion_check(discretized_ball(norm, 20.0), norm, 0.0).passed


def test_inclusion_reports_violations():
    norm = MuNorm({(1,): 1.0}, 1)
    snap = ShapeSnapshot(10.0, "H", np.arange(-5, 6).reshape(-1, 1))
    res = shape_inclusion_check(snap, norm, 0.25)
    assert res.outer_ok and not res.inner_ok and len(res.missing) > 0
    far = ShapeSnapshot(10.0, "H", np.arange(-20, 21).reshape(-1, 1))
    res = shape_inclusion_check(far, norm, 0.25)
    assert res.inner_ok and not res.outer_ok and len(res.outside) > 0


def _pair_and_batch(seed, w, horizon, T_surv, lam=1.5):
    f = field_new(make_iid_env(w, uniform(lam - 0.5, lam + 0.5), seed), seed)
    origin = run_contact(f, [(0,) * w.d], 0.0, horizon, w)
    full = run_contact(f, [w.site(i) for i in range(w.n_sites)], 0.0, horizon, w)
    return origin, full, essential_batch(f, w, horizon, T_surv, origin=origin)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31), t=st.floats(0.5, 8))
def test_chain_holds(seed, t):
    w = LatticeSpec(2, 12)
    origin, full, batch = _pair_and_batch(seed, w, 12.0, 4.0)
    if origin.truncated:
        return
    snaps = extract_shape(w, origin, full, batch, t)
    assert chain_holds(snaps)


def test_dead_process_gives_empty_flagged_snapshots():
    w = LatticeSpec(1, 10)
    for seed in range(50):
        origin, full, batch = _pair_and_batch(seed, w, 20.0, 5.0, lam=1.0)
        if origin.tau is not None and origin.tau < 10.0:
            snaps = extract_shape(w, origin, full, batch, 10.0)
            assert len(snaps["G"].sites) == 0 and len(snaps["K'G"].sites) == 0
            assert snaps["G"].extinct and snaps["K'G"].extinct
            assert (batch.status == K.STATUS_DEATH).all()
            return
    pytest.fail("no early death in 50 seeds")


def test_truncated_or_late_snapshot_rejected():
    w = LatticeSpec(1, 10)
    origin, full, batch = _pair_and_batch(1, w, 10.0, 5.0)
    with pytest.raises(PreconditionError):
        extract_shape(w, origin, full, batch, 11.0)


# tail fits --------------------------------------------------------------------------------------


def test_fit_exponential_oracle():
    x = np.random.default_rng(1).exponential(1 / 0.5, 10_000)
    fit = fit_tail(x, "exponential")
    assert 0.45 <= fit.rate_hat <= 0.55
    assert fit.ci[0] <= fit.rate_hat <= fit.ci[1]


def test_fit_stretched_oracle():
    # P(X > t) = exp(-2 sqrt t)  <=>  X = (E / 2)^2 with E ~ Exp(1)
    e = np.random.default_rng(2).exponential(1.0, 10_000)
    fit = fit_tail((e / 2) ** 2, "stretched-sqrt")
    assert 1.8 <= fit.rate_hat <= 2.2


def test_fit_constant_samples_rejected():
    with pytest.raises(EstimationError):
        fit_tail(np.full(500, 3.0), "exponential")
    with pytest.raises(EstimationError):
        fit_tail(np.arange(10.0), "exponential")


def test_sigma_row_status_reports_rejections():
    env = make_deterministic_env(LatticeSpec(1, 4), 2.0)
    res = [sigma_row_status(field_new(env, s), (1,), [1, 2], env.spec, 30.0, 10.0) for s in range(40)]
    statuses = {st for _, st in res}
    # survivors always reach the edge of so small a window
    assert statuses == {"died", "truncated"}
    assert all(row is None for row, _ in res)
