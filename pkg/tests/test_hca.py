import numpy as np
import pytest

from hca_marl.errors import ConfigError
from hca_marl.hca import (
    CriticSchedule,
    HierarchySpec,
    active_critic_count,
    fuse_values,
    fused_advantages,
    manager_observation,
    resolve_recipe,
)
from hca_marl.rollout import (
    AdvantageConfig,
    Trajectory,
    Transition,
    compute_advantages,
)


def multi_critic_traj(rewards, value_matrix, terminal=True, bootstraps=None):
    value_matrix = np.asarray(value_matrix, dtype=float)
    m = value_matrix.shape[1]
    transitions = [
        Transition(
            state=np.zeros(2),
            manager_states=[np.zeros(3)] * (m - 1),
            action=np.zeros(1),
            log_prob_old=0.0,
            reward=float(r),
            done=bool(terminal and i == len(rewards) - 1),
            value_estimates=value_matrix[i],
        )
        for i, r in enumerate(rewards)
    ]
    if bootstraps is None:
        bootstraps = np.zeros(m)
    return Trajectory(transitions, np.asarray(bootstraps, dtype=float))


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

def test_fuse_values_picks_maximum():
    assert fuse_values([0.5, 0.7]) == 0.7


def test_fuse_values_identical_critics_collapse():
    assert fuse_values([0.31, 0.31, 0.31]) == 0.31


def test_fuse_values_matches_linear_scan():
    rng = np.random.default_rng(0)
    for _ in range(100):
        vals = rng.normal(size=5)
        best = vals[0]
        for v in vals[1:]:
            if v > best:
                best = v
        assert fuse_values(vals) == best


def test_fuse_values_dominance_and_permutation_invariance():
    rng = np.random.default_rng(1)
    for _ in range(50):
        vals = rng.normal(size=6)
        fused = fuse_values(vals)
        assert all(fused >= v for v in vals)
        assert any(fused == v for v in vals)
        assert fuse_values(rng.permutation(vals)) == fused
        assert fuse_values(np.concatenate([vals, vals])) == fused


def test_fuse_values_rejects_empty_and_non_finite():
    with pytest.raises(ValueError):
        fuse_values([])
    with pytest.raises(ValueError):
        fuse_values([0.0, np.inf])
    with pytest.raises(ValueError):
        fuse_values([np.nan])


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------

def test_schedule_disabled_keeps_all_critics():
    sched = CriticSchedule(enabled=False)
    assert active_critic_count(12345, 3, sched) == 3
    assert active_critic_count(0, 1, sched) == 1


def test_schedule_inside_window_uses_all_critics():
    sched = CriticSchedule(enabled=True, period_T=100, active_window_n=10)
    assert active_critic_count(5, 3, sched) == 3


def test_schedule_outside_window_uses_two_critics():
    sched = CriticSchedule(enabled=True, period_T=100, active_window_n=10)
    assert active_critic_count(50, 3, sched) == 2


def test_schedule_is_periodic():
    sched = CriticSchedule(enabled=True, period_T=100, active_window_n=10)
    for t in (5, 50):
        for k in range(4):
            assert active_critic_count(t + 100 * k, 4, sched) == active_critic_count(t, 4, sched)


def test_schedule_requires_two_critics_when_enabled():
    sched = CriticSchedule(enabled=True, period_T=10, active_window_n=2)
    with pytest.raises(ValueError):
        active_critic_count(0, 1, sched)


# ---------------------------------------------------------------------------
# fused advantages
# ---------------------------------------------------------------------------

def test_single_critic_fused_equals_baseline():
    rng = np.random.default_rng(2)
    rewards = rng.normal(size=6)
    values = rng.normal(size=(6, 1))
    traj = multi_critic_traj(rewards, values)
    cfg = AdvantageConfig(gamma=0.95, lam=0.9, normalize=False)
    fused = fused_advantages(traj, cfg, CriticSchedule(), t0=0)
    base = compute_advantages(traj, values[:, 0], cfg, bootstrap=0.0)
    np.testing.assert_array_equal(fused, base)


def test_dominated_manager_critic_reduces_to_local():
    rng = np.random.default_rng(3)
    rewards = rng.normal(size=5)
    local = rng.normal(size=5)
    values = np.stack([local, np.full(5, -1e9)], axis=1)
    traj = multi_critic_traj(rewards, values, bootstraps=[0.0, 0.0])
    cfg = AdvantageConfig(gamma=0.9, lam=0.95, normalize=False)
    fused = fused_advantages(traj, cfg, CriticSchedule(), t0=0)
    single = multi_critic_traj(rewards, local[:, None])
    base = compute_advantages(single, local, cfg, bootstrap=0.0)
    np.testing.assert_allclose(fused, base, atol=1e-12)


@pytest.mark.parametrize("estimator", ["gae", "n_step"])
def test_two_critic_fused_matches_two_stage_brute_force(estimator):
    rng = np.random.default_rng(4)
    rewards = rng.normal(size=6)
    values = rng.normal(size=(6, 2))
    boots = rng.normal(size=2)
    traj = multi_critic_traj(rewards, values, terminal=False, bootstraps=boots)
    cfg = AdvantageConfig(gamma=0.97, lam=0.9, estimator=estimator, n=3, normalize=False)
    fused = fused_advantages(traj, cfg, CriticSchedule(), t0=0)
    # brute force: elementwise max first, then the plain estimator
    fused_values = np.maximum(values[:, 0], values[:, 1])
    want = compute_advantages(traj, fused_values, cfg, bootstrap=float(boots.max()))
    np.testing.assert_allclose(fused, want, atol=1e-12)


def test_fused_advantages_respects_schedule_windows():
    # 3 critics; outside the window only the first two fuse
    rewards = np.zeros(4)
    values = np.array([
        [0.0, 1.0, 5.0],
        [0.0, 1.0, 5.0],
        [0.0, 1.0, 5.0],
        [0.0, 1.0, 5.0],
    ])
    sched = CriticSchedule(enabled=True, period_T=4, active_window_n=2)
    traj = multi_critic_traj(rewards, values, terminal=False, bootstraps=[0.0, 0.0, 0.0])
    cfg = AdvantageConfig(gamma=1.0, lam=1.0, normalize=False)
    # t0=0: steps 0,1 are in-window (max=5), steps 2,3 out (max=1); boot at
    # step 4 in-window (0.0 across all critics)
    from hca_marl.hca import fused_value_series

    fused, boot = fused_value_series(traj, sched, t0=0)
    np.testing.assert_array_equal(fused, [5.0, 5.0, 1.0, 1.0])
    assert boot == 0.0


def test_fused_advantages_monotone_in_manager_values():
    rng = np.random.default_rng(5)
    rewards = rng.normal(size=5)
    values = rng.normal(size=(5, 2))
    traj = multi_critic_traj(rewards, values, terminal=False, bootstraps=[0.1, 0.2])
    from hca_marl.hca import fused_value_series

    base, _ = fused_value_series(traj, CriticSchedule(), t0=0)
    bumped = values.copy()
    bumped[:, 1] += 0.5
    traj2 = multi_critic_traj(rewards, bumped, terminal=False, bootstraps=[0.1, 0.2])
    up, _ = fused_value_series(traj2, CriticSchedule(), t0=0)
    assert np.all(up >= base)


# ---------------------------------------------------------------------------
# hierarchy spec + recipes
# ---------------------------------------------------------------------------

def test_hierarchy_spec_validates_references():
    with pytest.raises(ConfigError):
        HierarchySpec(
            workers=["w0"], managers=["m0"],
            assignment={"w0": ["bogus"]},
            manager_obs_recipe={"m0": ["worker_obs"]},
        )
    with pytest.raises(ConfigError):
        HierarchySpec(
            workers=["w0"], managers=["m0"],
            assignment={"w0": ["m0"]},
            manager_obs_recipe={},
        )


def test_hierarchy_spec_lookups():
    spec = HierarchySpec(
        workers=["w0", "w1"], managers=["m0"],
        assignment={"w0": ["m0"], "w1": ["m0"]},
        manager_obs_recipe={"m0": ["worker_obs"]},
    )
    assert spec.managers_of("w0") == ["m0"]
    assert spec.workers_of("m0") == ["w0", "w1"]
    assert spec.managers_of("w1") == ["m0"]


def test_named_recipes_resolve():
    assert resolve_recipe("M1") == ["all_worker_obs", "ball_racket_distances"]
    assert resolve_recipe(["worker_obs"]) == ["worker_obs"]
    with pytest.raises(ConfigError):
        resolve_recipe("M9")


def test_manager_observation_identity_recipe():
    obs = np.array([1.0, 2.0, 3.0])
    out = manager_observation({"worker_obs": obs}, ["worker_obs"])
    np.testing.assert_array_equal(out, obs)


def test_manager_observation_concatenates_in_recipe_order():
    q = {"a": np.array([1.0]), "b": np.array([2.0, 3.0])}
    np.testing.assert_array_equal(manager_observation(q, ["b", "a"]), [2.0, 3.0, 1.0])


def test_manager_observation_unknown_quantity_is_config_error():
    with pytest.raises(ConfigError):
        manager_observation({"worker_obs": np.zeros(2)}, ["nonexistent"])
