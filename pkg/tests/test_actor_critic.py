import numpy as np
import pytest

from hilab.actor_critic import (
    AdvantageScaler,
    CriticModel,
    GreedyPolicy,
    PolicyModel,
    actor_loss,
    actor_update_mask,
    advantages,
    alive_mask,
    critic_loss,
    lambda_returns,
)
from hilab.flow_model import Denoiser, RewardTermModel
from hilab.imagination import ImaginationConfig, horizon_imagine
from hilab.nets import symexp, symlog
from hilab.rng import make_rng
from hilab.schedules import ScheduleSpec, horizon_schedule

from oracles import finite_difference_grads, max_relative_error, recursive_lambda_returns


# --- symlog pair ----------------------------------------------------------------

def test_symlog_symexp_examples():
    assert symlog(0.0) == 0.0
    assert np.isclose(symlog(np.e - 1), 1.0, atol=1e-15)
    xs = np.array([10.0**k for k in range(-3, 7)])
    for x in np.concatenate([xs, -xs]):
        assert abs(symexp(symlog(x)) - x) < 1e-9


# --- lambda returns -------------------------------------------------------------

def test_lambda_returns_hand_case():
    v = symlog(np.full(3, 0.5))  # symexp(V) = 0.5 everywhere
    g = lambda_returns(np.array([0.0, 0.0, 1.0]), np.zeros(3), v, gamma=0.99, lam=0.95)
    np.testing.assert_allclose(g, [0.4902975, 0.495, 0.5], atol=1e-12)


def test_lambda_returns_terminal_case():
    v = np.array([0.3])
    np.testing.assert_array_equal(lambda_returns(np.array([5.0]), np.ones(1), v), symexp(v))


def test_lambda_returns_bootstrap_cut():
    r = np.array([0.7, 0.1, 0.2])
    d = np.array([1.0, 0.0, 0.0])
    v = symlog(np.array([2.0, 3.0, 4.0]))
    g = lambda_returns(r, d, v)
    assert g[0] == r[0]  # termination cuts the bootstrap entirely


def test_lambda_returns_oracle_bit_exact():
    rng = make_rng(0, 70)
    for _ in range(1000):
        h = int(rng.integers(1, 17))
        r = rng.normal(size=h)
        kind = rng.integers(0, 3)
        if kind == 0:
            d = np.zeros(h)  # truncated segment: bootstrap through the end
        elif kind == 1:
            d = (rng.random(h) < 0.3).astype(float)  # hard termination flags
        else:
            d = rng.random(h)  # predicted probabilities
        v = rng.normal(size=h)
        vec = lambda_returns(r, d, v)
        oracle = recursive_lambda_returns(r, d, v, 0.99, 0.95)
        assert np.array_equal(vec, oracle)
    # batched rows equal row-wise application
    r = rng.normal(size=(5, 8))
    d = (rng.random((5, 8)) < 0.2).astype(float)
    v = rng.normal(size=(5, 8))
    batched = lambda_returns(r, d, v)
    for i in range(5):
        assert np.array_equal(batched[i], lambda_returns(r[i], d[i], v[i]))


def test_lambda_returns_shape_mismatch():
    with pytest.raises(ValueError):
        lambda_returns(np.zeros(3), np.zeros(4), np.zeros(3))


# --- advantage scaling -------------------------------------------------------------

def test_scaler_ema_arithmetic():
    scaler = AdvantageScaler()
    returns = np.linspace(0.0, 1.0, 101)  # q95 - q5 = 0.9
    scaler.update(returns)
    q5, q95 = np.quantile(returns, [0.05, 0.95])
    assert np.isclose(scaler.ema_s, 0.005 * (q95 - q5), atol=1e-15)
    scaler.update(returns)
    assert np.isclose(scaler.ema_s, 0.995 * 0.005 * (q95 - q5) + 0.005 * (q95 - q5), atol=1e-15)


def test_scaler_small_range_keeps_unit_divisor():
    # prior 0, range 0.2 -> S = 0.001, divisor max(1, S) = 1
    scaler = AdvantageScaler()
    returns = np.array([0.0, 0.2])
    q5, q95 = np.quantile(returns, [0.05, 0.95])
    adv = advantages(returns, symlog(returns), scaler)
    assert np.isclose(scaler.ema_s, 0.005 * (q95 - q5), atol=1e-15)
    np.testing.assert_allclose(adv, returns - returns, atol=1e-12)  # G == symexp(V)


def test_advantages_zero_when_values_match():
    scaler = AdvantageScaler()
    g = np.array([0.1, 0.5, 2.0])
    np.testing.assert_allclose(advantages(g, symlog(g), scaler), 0.0, atol=1e-12)


def test_advantages_shift_linearity():
    g = np.array([0.0, 0.3, 0.6, 1.2])
    v = np.zeros(4)
    c = 0.37
    s1, s2 = AdvantageScaler(), AdvantageScaler()
    a = advantages(g, v, s1)
    b = advantages(g + c, v, s2)
    # the quantile range is shift invariant (up to float rounding)
    assert np.isclose(s1.ema_s, s2.ema_s, atol=1e-12)
    np.testing.assert_allclose(b - a, c / max(1.0, s2.ema_s), atol=1e-9)


def test_scaler_empty_batch_raises():
    with pytest.raises(ValueError):
        AdvantageScaler().update(np.array([]))


# --- rollout-driven losses ------------------------------------------------------------

def _rollout(seed=0, horizon=6, budget=8, bsz=4, mode="stable"):
    den = Denoiser(2, 3, 4, 16, make_rng(seed, 71))
    pol = PolicyModel(2, 3, 4, 16, make_rng(seed, 72))
    rt = RewardTermModel(2, 4, 16, make_rng(seed, 73))
    cfg = ImaginationConfig(ScheduleSpec(horizon=horizon, budget=budget, nu=2.0),
                            context=1, mode=mode, batch_size=bsz, seed=seed)
    ctx = make_rng(seed, 74).uniform(-1, 1, (bsz, 1, 2))
    return pol, horizon_imagine(den, pol, rt, cfg, ctx)


def test_actor_update_mask_matches_loop():
    for spec in (ScheduleSpec(8, 6, 2.0), ScheduleSpec(8, 8, 1.0), ScheduleSpec(32, 16, 4.0)):
        k = horizon_schedule(spec)
        mask = actor_update_mask(k)
        for b in range(spec.budget):
            for t in range(1, spec.horizon):
                assert mask[b, t - 1] == (k[b + 1, t] > k[b, t])


def test_alive_mask_hand_case():
    term_probs = np.array([[0.0, 0.1, 0.7, 0.0, 0.2]])  # frames 0..4, context len 1
    rollout = type("R", (), {})()
    rollout.context_len = 1
    rollout.term_probs = term_probs
    rollout.schedule = np.zeros((3, 4))  # horizon 4 -> 3 slots
    mask = alive_mask(rollout)
    # transition into frame 2 terminates (0.7 >= 0.5): slots at frames 1, 2, 3
    # -> alive, dead, dead
    np.testing.assert_array_equal(mask, [[True, False, False]])


def test_actor_loss_zero_advantage_zero_entropy():
    pol, rollout = _rollout(1)
    adv = np.zeros(rollout.action_trace.shape[1:])
    loss, grads, _ = actor_loss(pol, rollout, adv, eta=0.0)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads)


def test_actor_entropy_gradient_zero_at_uniform():
    pol, rollout = _rollout(2)
    for w in pol.mlp.weights:
        w[:] = 0.0
    for b in pol.mlp.biases:
        b[:] = 0.0
    # re-imagine with the uniform policy so traces carry uniform inputs
    den = Denoiser(2, 3, 4, 16, make_rng(2, 71))
    rt = RewardTermModel(2, 4, 16, make_rng(2, 73))
    cfg = ImaginationConfig(ScheduleSpec(horizon=6, budget=8, nu=2.0), context=1,
                            batch_size=4, seed=2)
    ctx = make_rng(2, 74).uniform(-1, 1, (4, 1, 2))
    rollout = horizon_imagine(den, pol, rt, cfg, ctx)
    adv = np.zeros(rollout.action_trace.shape[1:])
    loss, grads, entropy = actor_loss(pol, rollout, adv, eta=0.001)
    assert np.isclose(entropy, np.log(3), atol=1e-12)
    assert np.isclose(loss, -0.001 * np.log(3), atol=1e-12)
    assert max(np.max(np.abs(g)) for g in grads) < 1e-12


def test_actor_loss_gradient_matches_finite_differences():
    pol, rollout = _rollout(3, horizon=4, budget=5, bsz=2)
    rng = make_rng(3, 75)
    adv = rng.normal(size=rollout.action_trace.shape[1:])

    def loss_fn():
        return actor_loss(pol, rollout, adv, eta=0.01)[0]

    _, grads, _ = actor_loss(pol, rollout, adv, eta=0.01)
    numeric = finite_difference_grads(loss_fn, pol.mlp.param_list(), h=1e-5)
    assert max_relative_error(grads, numeric) < 1e-4


def test_masked_pairs_contribute_exactly_nothing():
    pol, rollout = _rollout(4)
    rng = make_rng(4, 76)
    adv = rng.normal(size=rollout.action_trace.shape[1:])
    _, grads, _ = actor_loss(pol, rollout, adv, eta=0.01)
    # poison every masked-out (step, slot) trace entry; gradients must not move
    mask = actor_update_mask(rollout.schedule)[:, None, :] & alive_mask(rollout)[None, :, :]
    rollout.policy_windows[~mask] = 1e6
    rollout.action_trace[~mask] = 0
    _, poisoned, _ = actor_loss(pol, rollout, adv, eta=0.01)
    for a, b in zip(grads, poisoned):
        np.testing.assert_array_equal(a, b)


def test_actor_gradients_independent_of_critic():
    pol, rollout = _rollout(5)
    critic = CriticModel(2, 4, 16, make_rng(5, 77))
    adv = np.full(rollout.action_trace.shape[1:], 0.3)
    _, grads_before, _ = actor_loss(pol, rollout, adv)
    for w in critic.mlp.weights:
        w += 123.0  # arbitrary critic perturbation
    _, grads_after, _ = actor_loss(pol, rollout, adv)
    for a, b in zip(grads_before, grads_after):
        np.testing.assert_array_equal(a, b)


def test_balanced_noise_coverage_default_configs():
    # queried-frame times at actor-gradient steps hit every decile of [0, 1)
    # at the default operating points
    for spec in (ScheduleSpec(32, 16, 4.0), ScheduleSpec(32, 32, 4.0)):
        k = horizon_schedule(spec)
        mask = actor_update_mask(k)
        taus = k[:-1, : spec.horizon - 1][mask]
        hist, _ = np.histogram(taus[taus < 1.0], bins=10, range=(0.0, 1.0))
        assert np.all(hist > 0), (spec, hist)


# --- critic ---------------------------------------------------------------------------

def test_critic_loss_zero_at_exact_fit():
    critic = CriticModel(2, 2, 4, make_rng(6, 78))
    for w in critic.mlp.weights:
        w[:] = 0.0
    for b in critic.mlp.biases:
        b[:] = 0.0
    z = make_rng(6, 79).uniform(-1, 1, (2, 4, 2))
    returns = np.zeros((2, 3))  # symlog(0) = 0 = V
    loss, grads = critic_loss(critic, z, returns, slice(1, None))
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads)


def test_critic_loss_gradient_matches_finite_differences():
    rng = make_rng(7, 80)
    critic = CriticModel(2, 2, 8, rng)
    z = rng.uniform(-1, 1, (2, 4, 2))
    returns = rng.normal(size=(2, 3))

    def loss_fn():
        return critic_loss(critic, z, returns, slice(1, None))[0]

    _, grads = critic_loss(critic, z, returns, slice(1, None))
    numeric = finite_difference_grads(loss_fn, critic.mlp.param_list(), h=1e-5)
    assert max_relative_error(grads, numeric) < 1e-4


def test_critic_loss_symlog_compression():
    # doubling positive targets with V = 0 grows the loss sublinearly in the
    # squared sense: loss(2G) < 4 * loss(G)
    critic = CriticModel(2, 2, 4, make_rng(8, 81))
    for w in critic.mlp.weights:
        w[:] = 0.0
    for b in critic.mlp.biases:
        b[:] = 0.0
    z = make_rng(8, 82).uniform(-1, 1, (1, 4, 2))
    g = np.abs(make_rng(8, 83).normal(size=(1, 3))) + 0.1
    loss1, _ = critic_loss(critic, z, g, slice(1, None))
    loss2, _ = critic_loss(critic, z, 2 * g, slice(1, None))
    assert loss2 < 4 * loss1


# --- greedy wrapper ----------------------------------------------------------------------

def test_greedy_policy_one_hot():
    pol = PolicyModel(2, 3, 2, 8, make_rng(9, 84))
    greedy = GreedyPolicy(pol)
    z = make_rng(9, 85).uniform(-1, 1, (2, 3, 2))
    tau = np.ones((2, 3))
    probs, _ = greedy.distributions_and_windows(z, tau)
    assert np.all(probs.sum(axis=-1) == 1.0)
    assert np.all((probs == 0.0) | (probs == 1.0))
    np.testing.assert_array_equal(
        probs.argmax(axis=-1), pol.distributions(z, tau).argmax(axis=-1)
    )
