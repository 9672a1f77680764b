import math

import numpy as np
import pytest

from hca_marl import nets, ppo
from hca_marl.errors import NonFiniteError, ShapeError
from hca_marl.nets import (
    CategoricalPolicyHead,
    GaussianPolicyHead,
    adam_init,
    forward,
    mlp_init,
    mlp_params,
)
from hca_marl.ppo import (
    CriticBinding,
    PpoConfig,
    UpdateBatch,
    clipped_surrogate,
    ppo_update,
    probability_ratio,
    total_loss,
    value_loss,
)


def make_gaussian_actor(obs_dim, act_dim, seed, hidden=(6,)):
    rng = np.random.default_rng(seed)
    net = mlp_init([obs_dim, *hidden, act_dim], "tanh", rng)
    log_std = rng.normal(0.0, 0.1, size=act_dim)
    return GaussianPolicyHead(net, log_std)


def make_categorical_actor(obs_dim, n_actions, seed, hidden=(6,)):
    net = mlp_init([obs_dim, *hidden, n_actions], "tanh", np.random.default_rng(seed))
    return CategoricalPolicyHead(net)


def make_batch(actor, n_rows, seed, n_critics=1):
    """Sample a batch from the actor itself, then perturb old log-probs so
    ratios spread away from 1."""
    rng = np.random.default_rng(seed)
    if isinstance(actor, GaussianPolicyHead):
        obs_dim = actor.mean_net.in_dim
        states = rng.normal(size=(n_rows, obs_dim))
        mean = forward(actor.mean_net, states)
        actions = mean + np.exp(actor.log_std) * rng.normal(size=mean.shape)
        lp = nets.gaussian_log_probs(mean, actor.log_std, actions)
    else:
        obs_dim = actor.logit_net.in_dim
        states = rng.normal(size=(n_rows, obs_dim))
        logits = forward(actor.logit_net, states)
        logp = nets.log_softmax(logits)
        actions = np.array([rng.choice(len(p), p=np.exp(p)) for p in logp])
        lp = logp[np.arange(n_rows), actions]
    log_probs_old = lp + rng.normal(0.0, 0.3, size=n_rows)
    advantages = rng.normal(size=n_rows)
    targets = [rng.normal(size=n_rows) for _ in range(n_critics)]
    return UpdateBatch(states, actions, log_probs_old, advantages, targets)


def make_critics(obs_dim, batch, n, seed, lr=1e-3):
    out = []
    for i in range(n):
        net = mlp_init([obs_dim, 6, 1], "tanh", np.random.default_rng(seed + i))
        out.append(
            CriticBinding(
                name=f"c{i}",
                net=net,
                adam=adam_init(mlp_params(net), lr),
                inputs=batch.states,
            )
        )
    return out


# ---------------------------------------------------------------------------
# elementary ops
# ---------------------------------------------------------------------------

def test_ratio_equal_log_probs_is_one():
    assert probability_ratio(-1.3, -1.3) == 1.0


def test_ratio_log_two_apart_is_two():
    assert probability_ratio(0.5 + math.log(2.0), 0.5) == pytest.approx(2.0, abs=1e-12)


def test_ratio_matches_density_quotient():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = rng.normal(size=2)
        assert probability_ratio(a, b) == pytest.approx(
            math.exp(a) / math.exp(b), rel=1e-12
        )


def test_ratio_overflow_clamps_and_counts():
    before = ppo.ratio_overflows.count
    r = probability_ratio(1000.0, 0.0)
    assert np.isfinite(r) and r > 1e20
    assert ppo.ratio_overflows.count == before + 1


def test_clipped_surrogate_upper_clip():
    assert clipped_surrogate(1.3, 1.0, 0.2) == pytest.approx(1.2, abs=1e-15)


def test_clipped_surrogate_negative_advantage_picks_unclipped():
    assert clipped_surrogate(1.3, -1.0, 0.2) == pytest.approx(-1.3, abs=1e-15)


def test_clipped_surrogate_identity_ratio_returns_advantage():
    for adv in (-2.0, 0.0, 0.7):
        assert clipped_surrogate(1.0, adv, 0.1) == adv


def test_clipped_surrogate_equals_product_inside_clip_range():
    rng = np.random.default_rng(4)
    for _ in range(100):
        eps = rng.uniform(0.05, 0.5)
        r = rng.uniform(1 - eps, 1 + eps)
        adv = rng.normal()
        assert clipped_surrogate(r, adv, eps) == pytest.approx(r * adv, abs=1e-12)


def test_clipped_surrogate_never_exceeds_unclipped():
    rng = np.random.default_rng(6)
    for _ in range(500):
        r = rng.uniform(0.0, 3.0)
        adv = rng.normal()
        eps = rng.uniform(0.05, 0.9)
        assert clipped_surrogate(r, adv, eps) <= r * adv + 1e-15


def test_value_loss_zero_when_equal():
    assert value_loss([1.0, -2.0], [1.0, -2.0]) == 0.0


def test_value_loss_single_element():
    assert value_loss([0.0], [2.0]) == pytest.approx(2.0, abs=1e-15)


def test_value_loss_matches_elementwise_oracle():
    rng = np.random.default_rng(8)
    v = rng.normal(size=5)
    t = rng.normal(size=5)
    want = 0.5 * sum((a - b) ** 2 for a, b in zip(v, t)) / 5
    assert value_loss(v, t) == pytest.approx(want, abs=1e-12)


def test_value_loss_rejects_length_mismatch():
    with pytest.raises(ShapeError):
        value_loss([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# full-loss gradient vs finite differences
# ---------------------------------------------------------------------------

def fd_grad(f, arrays, h=1e-5):
    grads = []
    for p in arrays:
        g = np.zeros_like(p)
        flat, gflat = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f()
            flat[i] = orig - h
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def max_rel_err(analytic, fd):
    worst = 0.0
    for a, f in zip(analytic, fd):
        denom = np.maximum(np.abs(f), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


@pytest.mark.parametrize("kind", ["gaussian", "categorical"])
def test_full_loss_gradient_matches_finite_differences(kind):
    cfg = PpoConfig(clip_epsilon=0.2, entropy_beta=0.01, value_loss_coeff=0.5,
                    epochs=1, minibatch_size=64, learning_rate=1e-3)
    for seed in range(3):
        if kind == "gaussian":
            actor = make_gaussian_actor(3, 2, seed)
        else:
            actor = make_categorical_actor(3, 4, seed)
        batch = make_batch(actor, 12, seed + 100, n_critics=2)
        critics = make_critics(3, batch, 2, seed + 200)

        a_params = ppo.actor_params(actor)
        c_params = [mlp_params(c.net) for c in critics]

        def loss():
            trial_actor = ppo.actor_with_params(actor, a_params)
            trial_critics = [
                ppo.CriticBinding(c.name, nets.mlp_with_params(c.net, cp), c.adam, c.inputs)
                for c, cp in zip(critics, c_params)
            ]
            return total_loss(trial_actor, trial_critics, batch, cfg)

        pol, ent, agrads = ppo._policy_terms(
            actor, batch.states, batch.actions, batch.log_probs_old,
            batch.advantages, cfg,
        )
        rows = np.arange(len(batch))
        cgrads = [
            ppo._critic_terms(c, np.asarray(batch.value_targets[i]), rows,
                              cfg.value_loss_coeff)[1]
            for i, c in enumerate(critics)
        ]
        analytic = agrads + [g for gs in cgrads for g in gs]
        numeric = fd_grad(loss, a_params + [p for cp in c_params for p in cp])
        assert max_rel_err(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# update loop
# ---------------------------------------------------------------------------

def test_update_zero_advantage_zero_beta_perfect_critic_is_noop():
    actor = make_gaussian_actor(3, 2, 0)
    rng = np.random.default_rng(0)
    states = rng.normal(size=(8, 3))
    mean = forward(actor.mean_net, states)
    actions = mean.copy()
    lp = nets.gaussian_log_probs(mean, actor.log_std, actions)
    critic_net = mlp_init([3, 4, 1], "tanh", np.random.default_rng(1))
    targets = forward(critic_net, states)[:, 0]
    batch = UpdateBatch(states, actions, lp, np.zeros(8), [targets])
    critics = [CriticBinding("c0", critic_net, adam_init(mlp_params(critic_net), 1e-3), states)]
    cfg = PpoConfig(entropy_beta=0.0, epochs=2, minibatch_size=4, learning_rate=1e-3)

    new_actor, _, new_critics, diag = ppo_update(
        actor, adam_init(ppo.actor_params(actor), 1e-3), critics, batch, cfg,
        np.random.default_rng(5),
    )
    for a, b in zip(ppo.actor_params(actor), ppo.actor_params(new_actor)):
        assert np.array_equal(a, b)
    for a, b in zip(mlp_params(critic_net), mlp_params(new_critics[0].net)):
        assert np.array_equal(a, b)
    assert diag.value_loss == 0.0


def test_update_loss_decomposition_matches_standalone_ops():
    # single critic, beta 0, one epoch, full-batch minibatch: reported losses
    # must equal the standalone op values computed on the pre-update nets
    actor = make_gaussian_actor(4, 2, 3)
    batch = make_batch(actor, 16, 7)
    critics = make_critics(4, batch, 1, 50)
    cfg = PpoConfig(entropy_beta=0.0, epochs=1, minibatch_size=16, learning_rate=1e-3)

    mean = forward(actor.mean_net, batch.states)
    lpn = nets.gaussian_log_probs(mean, actor.log_std, batch.actions)
    surr = [
        clipped_surrogate(probability_ratio(a, b), adv, cfg.clip_epsilon)
        for a, b, adv in zip(lpn, batch.log_probs_old, batch.advantages)
    ]
    want_policy_loss = -float(np.mean(surr))
    preds = forward(critics[0].net, batch.states)[:, 0]
    want_value_loss = value_loss(preds, batch.value_targets[0])

    _, _, _, diag = ppo_update(
        actor, adam_init(ppo.actor_params(actor), 1e-3), critics, batch, cfg,
        np.random.default_rng(11),
    )
    assert diag.policy_loss == pytest.approx(want_policy_loss, abs=1e-12)
    assert diag.value_loss == pytest.approx(want_value_loss, abs=1e-12)


def test_update_is_bitwise_deterministic():
    def run():
        actor = make_gaussian_actor(3, 2, 1)
        batch = make_batch(actor, 32, 9)
        critics = make_critics(3, batch, 1, 77)
        cfg = PpoConfig(epochs=3, minibatch_size=8, learning_rate=1e-3)
        a, _, cs, _ = ppo_update(
            actor, adam_init(ppo.actor_params(actor), 1e-3), critics, batch,
            cfg, np.random.default_rng(123),
        )
        return ppo.actor_params(a) + mlp_params(cs[0].net)

    first, second = run(), run()
    for x, y in zip(first, second):
        assert np.array_equal(x, y)


def test_update_head_selection_trains_only_selected_head():
    # two-head critic with all rows on head 1: head-0 output weights get no
    # gradient
    rng = np.random.default_rng(0)
    states = rng.normal(size=(8, 3))
    actor = make_gaussian_actor(3, 1, 0)
    mean = forward(actor.mean_net, states)
    actions = mean + rng.normal(size=mean.shape)
    lp = nets.gaussian_log_probs(mean, actor.log_std, actions)
    net = mlp_init([3, 4, 2], "tanh", np.random.default_rng(5))
    batch = UpdateBatch(states, actions, lp, np.zeros(8), [rng.normal(size=8)])
    binding = CriticBinding(
        "mgr", net, adam_init(mlp_params(net), 1e-3), states,
        head=np.ones(8, dtype=int),
    )
    cfg = PpoConfig(entropy_beta=0.0, epochs=1, minibatch_size=8, learning_rate=1e-3)
    _, _, new_critics, _ = ppo_update(
        actor, adam_init(ppo.actor_params(actor), 1e-3), [binding], batch, cfg,
        np.random.default_rng(3),
    )
    new_net = new_critics[0].net
    assert np.array_equal(net.weights[-1][0], new_net.weights[-1][0])  # head 0 untouched
    assert not np.array_equal(net.weights[-1][1], new_net.weights[-1][1])


def test_update_row_mask_restricts_training_rows():
    rng = np.random.default_rng(1)
    actor = make_gaussian_actor(2, 1, 4)
    states = rng.normal(size=(6, 2))
    mean = forward(actor.mean_net, states)
    actions = mean + rng.normal(size=mean.shape)
    lp = nets.gaussian_log_probs(mean, actor.log_std, actions)
    batch = UpdateBatch(states, actions, lp, np.zeros(6), [rng.normal(size=6)])
    net = mlp_init([2, 3, 1], "tanh", np.random.default_rng(6))
    mask = np.zeros(6, dtype=bool)  # no rows at all -> net untouched
    binding = CriticBinding("m", net, adam_init(mlp_params(net), 1e-3), states,
                            row_mask=mask)
    cfg = PpoConfig(entropy_beta=0.0, epochs=2, minibatch_size=3, learning_rate=1e-3)
    _, _, out, _ = ppo_update(
        actor, adam_init(ppo.actor_params(actor), 1e-3), [binding], batch, cfg,
        np.random.default_rng(8),
    )
    for a, b in zip(mlp_params(net), mlp_params(out[0].net)):
        assert np.array_equal(a, b)


def test_update_aborts_on_non_finite_inputs():
    actor = make_gaussian_actor(2, 1, 0)
    batch = make_batch(actor, 4, 0)
    batch.advantages[0] = np.nan
    critics = make_critics(2, batch, 1, 1)
    cfg = PpoConfig(epochs=1, minibatch_size=4, learning_rate=1e-3)
    with pytest.raises(NonFiniteError):
        ppo_update(actor, adam_init(ppo.actor_params(actor), 1e-3), critics,
                   batch, cfg, np.random.default_rng(0))
