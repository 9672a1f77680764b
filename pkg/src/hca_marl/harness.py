"""Self-play training runs, metrics emission, checkpoints, and comparisons.

One seed is one fully deterministic job: networks, action sampling, update
shuffling and the environment each draw from independent streams spawned from
the seed, so runs replay bit-for-bit regardless of how many seeds execute in
parallel.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nets
from .envs import make_env
from .envs.base import ContinuousSpec, DiscreteSpec, MultiAgentEnv
from .errors import ConfigError, NonFiniteError
from .hca import (
    CriticSchedule,
    HierarchySpec,
    active_critic_count,
    fuse_values,
    fused_value_series,
    manager_observation,
    resolve_recipe,
)
from .nets import (
    AdamState,
    CategoricalPolicyHead,
    GaussianPolicyHead,
    Mlp,
    adam_init,
    forward,
    load_mlp,
    mlp_clone,
    mlp_init,
    mlp_params,
    save_mlp,
)
from .ppo import CriticBinding, PpoConfig, UpdateBatch, actor_params, ppo_update
from .rollout import (
    AdvantageConfig,
    RolloutBuffer,
    Trajectory,
    TrajectoryBuilder,
    Transition,
    compute_advantages,
    discounted_returns,
    normalize_advantages,
)

METRICS_HEADER = "step,agent_group,cumulative_reward_mean,episode_length_mean,entropy,value_estimate_mean"

ALGORITHMS = ("ppo", "hca_ppo")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class NetworkConfig:
    hidden_sizes: tuple[int, ...] = (128, 128)
    activation: str = "tanh"
    init_log_std: float = 0.25  # continuous policies start wider than N(0,1)


@dataclass
class HierarchyConfig:
    """How managers are attached to the scenario's workers.

    ``managers`` is "none", "per_team", "shared", or an explicit list of
    ``{id, team, workers, recipe}`` mappings. ``recipe`` is the default
    observation recipe; ``manager_obs_recipe`` overrides it per manager id.
    ``clone_local_critic`` initializes manager nets as copies of their single
    worker's local critic instead of fresh random draws.
    """

    managers: object = "none"
    recipe: object = None
    manager_obs_recipe: dict = field(default_factory=dict)
    clone_local_critic: bool = False


@dataclass
class ExperimentConfig:
    scenario: str = "tennis_1v1"
    algorithm: str = "ppo"
    total_steps: int = 100_000
    seeds: tuple[int, ...] = (1, 2, 3)
    metrics_interval: int = 1000
    buffer_size: int = 10240
    ppo: PpoConfig = field(default_factory=PpoConfig)
    advantage: AdvantageConfig = field(default_factory=AdvantageConfig)
    schedule: CriticSchedule = field(default_factory=CriticSchedule)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)
    env: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be >= 0")
        if self.metrics_interval < 1:
            raise ConfigError("metrics_interval must be positive")
        if self.buffer_size < 1:
            raise ConfigError("buffer_size must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.algorithm == "ppo" and self.hierarchy.managers not in ("none", None):
            raise ConfigError("algorithm 'ppo' requires hierarchy.managers: none")
        if self.algorithm == "hca_ppo" and self.hierarchy.managers in ("none", None):
            raise ConfigError("algorithm 'hca_ppo' requires at least one manager")


@dataclass
class MetricsRecord:
    step: int
    agent_group: str
    cumulative_reward_mean: float
    episode_length_mean: float
    entropy: float
    value_estimate_mean: float

    def csv_row(self) -> str:
        vals = (self.cumulative_reward_mean, self.episode_length_mean,
                self.entropy, self.value_estimate_mean)
        cols = ",".join(repr(float(v)) for v in vals)
        return f"{self.step},{self.agent_group},{cols}"


@dataclass
class RunResult:
    seed: int
    metrics_path: Path
    checkpoint_dir: Path | None
    records: list[MetricsRecord]
    diagnostics: dict
    failed: bool = False
    failure_reason: str | None = None


# ---------------------------------------------------------------------------
# runtime wiring
# ---------------------------------------------------------------------------

@dataclass
class Brain:
    """One trained policy/value pair shared by a list of agents."""

    brain_id: str
    agents: list[str]
    actor: object
    actor_adam: AdamState
    critic: Mlp
    critic_adam: AdamState


@dataclass
class ManagerRuntime:
    manager_id: str
    team: int | None
    workers: list[str]
    recipe: list[str]
    obs_dim: int
    net: Mlp
    adam: AdamState
    head_of: dict[str, int]


def brain_layout(env: MultiAgentEnv) -> list[tuple[str, list[str]]]:
    """Brains per scenario: tennis rackets each own a brain; soccer shares a
    striker brain and a goalie brain across teams."""
    roles = {s.role for s in env.roster}
    if roles == {"racket"}:
        return [(s.agent_id, [s.agent_id]) for s in env.roster]
    layout = []
    for role in ("striker", "goalie"):
        members = [s.agent_id for s in env.roster if s.role == role]
        layout.append((role, members))
    return layout


def agent_group(env: MultiAgentEnv, agent_id: str) -> str:
    spec = env.spec_of(agent_id)
    return spec.role


def default_recipe(scenario: str):
    return "M1" if scenario.startswith("tennis") else ["manager_raycast"]


def resolve_hierarchy(cfg: ExperimentConfig, env: MultiAgentEnv) -> HierarchySpec:
    """Expand the hierarchy config against the scenario roster."""
    workers = env.agent_ids()
    base_recipe = cfg.hierarchy.recipe or default_recipe(cfg.scenario)
    managers_cfg = cfg.hierarchy.managers
    entries: list[dict] = []
    if managers_cfg in ("none", None):
        pass
    elif managers_cfg == "per_team":
        for team in sorted({s.team for s in env.roster}):
            entries.append(
                {
                    "id": f"mgr_t{team}",
                    "team": team,
                    "workers": [s.agent_id for s in env.roster if s.team == team],
                }
            )
    elif managers_cfg == "shared":
        entries.append({"id": "mgr_shared", "team": None, "workers": list(workers)})
    elif isinstance(managers_cfg, (list, tuple)):
        for raw in managers_cfg:
            if not isinstance(raw, dict) or "id" not in raw:
                raise ConfigError("explicit manager entries need at least an 'id'")
            entry = dict(raw)
            team = entry.get("team")
            if "workers" not in entry:
                if team is None:
                    entry["workers"] = list(workers)
                else:
                    entry["workers"] = [s.agent_id for s in env.roster if s.team == team]
            entries.append(entry)
    else:
        raise ConfigError(
            f"hierarchy.managers must be none|per_team|shared|list, got {managers_cfg!r}"
        )

    manager_ids = [e["id"] for e in entries]
    assignment: dict[str, list[str]] = {w: [] for w in workers}
    recipes: dict[str, list[str]] = {}
    for e in entries:
        for w in e["workers"]:
            if w not in assignment:
                raise ConfigError(f"manager {e['id']!r} references unknown worker {w!r}")
            assignment[w].append(e["id"])
        chosen = cfg.hierarchy.manager_obs_recipe.get(e["id"], e.get("recipe", base_recipe))
        recipes[e["id"]] = resolve_recipe(chosen)
    spec = HierarchySpec(workers, manager_ids, assignment, recipes)
    spec_teams = {e["id"]: e.get("team") for e in entries}
    spec.manager_teams = spec_teams  # type: ignore[attr-defined]
    return spec


def _policy_head_for(spec, hidden, activation, rng, init_log_std):
    if isinstance(spec.action_space, ContinuousSpec):
        net = mlp_init(
            [spec.obs_dim, *hidden, spec.action_space.dim], activation, rng, output_scale=0.01
        )
        return GaussianPolicyHead(net, np.full(spec.action_space.dim, init_log_std))
    net = mlp_init(
        [spec.obs_dim, *hidden, spec.action_space.n], activation, rng, output_scale=0.01
    )
    return CategoricalPolicyHead(net)


class _SeedRun:
    """All mutable state for one seeded training job."""

    def __init__(self, cfg: ExperimentConfig, seed: int, capture_states: bool = False):
        self.cfg = cfg
        self.seed = seed
        self.capture_states = capture_states
        ss = np.random.SeedSequence(seed)
        init_ss, env_ss, act_ss, upd_ss = ss.spawn(4)
        self.rng_init = np.random.default_rng(init_ss)
        self.rng_actions = np.random.default_rng(act_ss)
        self.rng_update = np.random.default_rng(upd_ss)
        self.env = make_env(cfg.scenario, cfg.env)
        self.env_seed = int(env_ss.generate_state(1)[0])

        hidden = list(cfg.network.hidden_sizes)
        activation = cfg.network.activation
        self.brains: list[Brain] = []
        self.brain_of: dict[str, Brain] = {}
        for brain_id, members in brain_layout(self.env):
            spec = self.env.spec_of(members[0])
            actor = _policy_head_for(spec, hidden, activation, self.rng_init,
                                     cfg.network.init_log_std)
            critic = mlp_init([spec.obs_dim, *hidden, 1], activation, self.rng_init,
                              output_scale=0.01)
            brain = Brain(
                brain_id, members,
                actor, adam_init(actor_params(actor), cfg.ppo.learning_rate),
                critic, adam_init(mlp_params(critic), cfg.ppo.learning_rate),
            )
            self.brains.append(brain)
            for m in members:
                self.brain_of[m] = brain

        self.hierarchy = resolve_hierarchy(cfg, self.env)
        self.managers: list[ManagerRuntime] = []
        self.managers_by_id: dict[str, ManagerRuntime] = {}
        obs0 = self.env.reset(seed=self.env_seed)
        for mgr_id in self.hierarchy.managers:
            team = self.hierarchy.manager_teams[mgr_id]  # type: ignore[attr-defined]
            members = self.hierarchy.workers_of(mgr_id)
            recipe = self.hierarchy.manager_obs_recipe[mgr_id]
            quantities = self.env.manager_quantities(members, team)
            obs_dim = manager_observation(quantities, recipe).size
            if cfg.hierarchy.clone_local_critic:
                if len(members) != 1:
                    raise ConfigError(
                        "clone_local_critic requires exactly one worker per manager"
                    )
                local = self.brain_of[members[0]].critic
                if obs_dim != local.in_dim:
                    raise ConfigError(
                        "clone_local_critic requires the manager observation to "
                        "match the worker observation"
                    )
                net = mlp_clone(local)
            else:
                net = mlp_init([obs_dim, *hidden, len(members)], activation,
                               self.rng_init, output_scale=0.01)
            self.managers.append(
                ManagerRuntime(
                    mgr_id, team, members, recipe, obs_dim, net,
                    adam_init(mlp_params(net), cfg.ppo.learning_rate),
                    {w: i for i, w in enumerate(members)},
                )
            )
        self.managers_by_id = {m.manager_id: m for m in self.managers}
        self.agent_managers = {
            a: [self.managers_by_id[m] for m in self.hierarchy.managers_of(a)]
            for a in self.env.agent_ids()
        }

        self.obs = obs0
        self.global_step = 0
        self.buffers: dict[str, RolloutBuffer] = {a: RolloutBuffer() for a in self.env.agent_ids()}
        self.builders: dict[str, TrajectoryBuilder] = {
            a: TrajectoryBuilder(0) for a in self.env.agent_ids()
        }

        groups = sorted({agent_group(self.env, a) for a in self.env.agent_ids()})
        self.groups = groups
        self._reset_windows()
        self.episode_return = {a: 0.0 for a in self.env.agent_ids()}
        self.episode_len = 0
        self.records: list[MetricsRecord] = []
        self.diagnostics: dict = {"value_means": []}
        if capture_states:
            self.diagnostics["state_windows"] = {g: [] for g in groups}
            self._window_states = {g: [] for g in groups}

    # -- metric windows ------------------------------------------------------

    def _reset_windows(self):
        g = self.groups
        self.w_value = {k: 0.0 for k in g}
        self.w_value_local = {k: 0.0 for k in g}
        self.w_value_n = {k: 0 for k in g}
        self.w_entropy = {k: 0.0 for k in g}
        self.w_entropy_n = {k: 0 for k in g}
        self.w_ep_returns = {k: [] for k in g}
        self.w_ep_lengths = {k: [] for k in g}

    def _emit_metrics(self):
        for g in self.groups:
            if self.w_ep_returns[g]:
                cum = float(np.mean(self.w_ep_returns[g]))
                ep_len = float(np.mean(self.w_ep_lengths[g]))
            else:
                in_progress = [
                    self.episode_return[a]
                    for a in self.env.agent_ids()
                    if agent_group(self.env, a) == g
                ]
                cum = float(np.mean(in_progress))
                ep_len = float(self.episode_len)
            entropy = self.w_entropy[g] / max(self.w_entropy_n[g], 1)
            value = self.w_value[g] / max(self.w_value_n[g], 1)
            local = self.w_value_local[g] / max(self.w_value_n[g], 1)
            self.records.append(
                MetricsRecord(self.global_step, g, cum, ep_len, entropy, value)
            )
            self.diagnostics["value_means"].append(
                {"step": self.global_step, "group": g, "fused": value, "local": local}
            )
            if self.capture_states:
                self.diagnostics["state_windows"][g].append(
                    np.array(self._window_states[g]) if self._window_states[g] else np.empty((0,))
                )
                self._window_states[g] = []
        self._reset_windows()

    # -- rollout ---------------------------------------------------------------

    def _sample_action(self, brain: Brain, obs: np.ndarray):
        actor = brain.actor
        if isinstance(actor, GaussianPolicyHead):
            mean = forward(actor.mean_net, obs)
            noise = self.rng_actions.standard_normal(mean.shape[0])
            action = mean + np.exp(actor.log_std) * noise
            lp = float(nets.gaussian_log_probs(mean, actor.log_std, action)[0])
            entropy = nets.gaussian_entropy(actor.log_std)
            return action, lp, entropy
        logits = forward(actor.logit_net, obs)
        logp = nets.log_softmax(logits)[0]
        p = np.exp(logp)
        u = self.rng_actions.random()
        action = int(np.searchsorted(np.cumsum(p), u))
        action = min(action, p.size - 1)
        return action, float(logp[action]), float(-(p * logp).sum())

    def _manager_observations(self) -> dict[str, np.ndarray]:
        """Each manager's observation at the current state, computed once."""
        out = {}
        for mgr in self.managers:
            quantities = self.env.manager_quantities(mgr.workers, mgr.team, mgr.recipe)
            out[mgr.manager_id] = manager_observation(quantities, mgr.recipe)
        return out

    def _critic_values(self, agent: str, obs: np.ndarray, mgr_obs_map: dict):
        """(value vector local-first, manager observation list) at ``obs``."""
        brain = self.brain_of[agent]
        values = [float(forward(brain.critic, obs)[0])]
        mgr_obs = []
        for mgr in self.agent_managers[agent]:
            mo = mgr_obs_map[mgr.manager_id]
            mgr_obs.append(mo)
            values.append(float(forward(mgr.net, mo)[mgr.head_of[agent]]))
        return np.array(values), mgr_obs

    def _fused_value(self, agent: str, values: np.ndarray) -> float:
        h = active_critic_count(self.global_step, values.size, self.cfg.schedule) \
            if values.size > 1 else 1
        return fuse_values(values[:h])

    def collect_step(self):
        env = self.env
        actions, step_data = {}, {}
        mgr_obs_map = self._manager_observations()
        for agent in env.agent_ids():
            obs = self.obs[agent]
            brain = self.brain_of[agent]
            action, lp, entropy = self._sample_action(brain, obs)
            values, mgr_obs = self._critic_values(agent, obs, mgr_obs_map)
            actions[agent] = action
            step_data[agent] = (obs, action, lp, entropy, values, mgr_obs)

        next_obs, rewards, dones, info = env.step(actions)
        done = all(dones.values())

        for agent in env.agent_ids():
            obs, action, lp, entropy, values, mgr_obs = step_data[agent]
            self.builders[agent].add(
                Transition(obs, mgr_obs, action, lp, rewards[agent], done, values)
            )
            g = agent_group(env, agent)
            fused = self._fused_value(agent, values)
            self.w_value[g] += fused
            self.w_value_local[g] += values[0]
            self.w_value_n[g] += 1
            self.w_entropy[g] += entropy
            self.w_entropy_n[g] += 1
            self.episode_return[agent] += rewards[agent]
            if self.capture_states:
                self._window_states[g].append(obs)

        self.episode_len += 1
        self.global_step += 1

        if done:
            for agent in env.agent_ids():
                traj, t0 = self.builders[agent].finish(
                    np.zeros(1 + len(self.agent_managers[agent]))
                )
                self.buffers[agent].add(traj, t0)
                self.builders[agent] = TrajectoryBuilder(self.global_step)
                g = agent_group(env, agent)
                self.w_ep_returns[g].append(self.episode_return[agent])
                self.episode_return[agent] = 0.0
            for g in self.groups:
                self.w_ep_lengths[g].append(self.episode_len)
            self.episode_len = 0
            self.obs = env.reset()
        else:
            self.obs = next_obs

        if self.global_step % self.cfg.metrics_interval == 0:
            self._emit_metrics()

    def _close_open_trajectories(self):
        """Bootstrap any in-flight trajectory with current critic values."""
        mgr_obs_map = self._manager_observations()
        for agent in self.env.agent_ids():
            builder = self.builders[agent]
            if not builder.transitions:
                builder.start_step = self.global_step
                continue
            values, _ = self._critic_values(agent, self.obs[agent], mgr_obs_map)
            traj, t0 = builder.finish(values)
            self.buffers[agent].add(traj, t0)
            self.builders[agent] = TrajectoryBuilder(self.global_step)

    # -- update -------------------------------------------------------------------

    def _advantages_and_targets(self, traj: Trajectory, t0: int):
        adv_cfg = self.cfg.advantage
        if self.cfg.algorithm == "hca_ppo" and traj.critic_count > 1:
            fused, boot = fused_value_series(traj, self.cfg.schedule, t0)
            adv = compute_advantages(traj, fused, adv_cfg, bootstrap=boot)
            targets = discounted_returns(traj.rewards(), adv_cfg.gamma, boot)
        else:
            values = traj.value_matrix()[:, 0]
            boot = float(traj.bootstrap_values[0])
            adv = compute_advantages(traj, values, adv_cfg, bootstrap=boot)
            targets = discounted_returns(traj.rewards(), adv_cfg.gamma, boot)
        return adv, targets

    def update_brains(self):
        for brain in self.brains:
            states, acts, lps, advs, targets = [], [], [], [], []
            row_agI: list[str] = []
            mgr_rows: dict[str, list[np.ndarray]] = {}
            for agent in brain.agents:
                for traj, t0 in self.buffers[agent].items:
                    adv, tgt = self._advantages_and_targets(traj, t0)
                    advs.append(adv)
                    targets.append(tgt)
                    for k, tr in enumerate(traj.transitions):
                        states.append(tr.state)
                        acts.append(tr.action)
                        lps.append(tr.log_prob_old)
                        row_agI.append(agent)
                        for mg, mo in zip(self.agent_managers[agent], tr.manager_states):
                            mgr_rows.setdefault(mg.manager_id, []).append(mo)
            if not states:
                continue
            states = np.array(states)
            actions = np.array(acts)
            log_probs_old = np.array(lps)
            advantages = np.concatenate(advs)
            target_series = np.concatenate(targets)
            if self.cfg.advantage.normalize:
                advantages = normalize_advantages(advantages)

            bindings = [
                CriticBinding("local", brain.critic, brain.critic_adam, states)
            ]
            value_targets = [target_series]
            row_agents = np.array(row_agI)
            touched_managers = []
            for mgr in self.managers:
                member_set = [a for a in brain.agents if a in mgr.head_of]
                if not member_set:
                    continue
                mask = np.isin(row_agents, member_set)
                if not mask.any():
                    continue
                inputs = np.zeros((len(states), mgr.obs_dim))
                inputs[mask] = np.array(mgr_rows[mgr.manager_id])
                heads = np.zeros(len(states), dtype=int)
                for a in member_set:
                    heads[row_agents == a] = mgr.head_of[a]
                bindings.append(
                    CriticBinding(mgr.manager_id, mgr.net, mgr.adam, inputs,
                                  head=heads, row_mask=mask)
                )
                value_targets.append(target_series)
                touched_managers.append(mgr)

            batch = UpdateBatch(states, actions, log_probs_old, advantages, value_targets)
            new_actor, new_adam, new_bindings, _ = ppo_update(
                brain.actor, brain.actor_adam, bindings, batch, self.cfg.ppo,
                self.rng_update,
            )
            brain.actor, brain.actor_adam = new_actor, new_adam
            brain.critic, brain.critic_adam = new_bindings[0].net, new_bindings[0].adam
            for mgr, binding in zip(touched_managers, new_bindings[1:]):
                mgr.net, mgr.adam = binding.net, binding.adam
        for buf in self.buffers.values():
            buf.clear()

    # -- run ------------------------------------------------------------------------

    def steps_per_round(self) -> int:
        rates = {len(b.agents) for b in self.brains}
        rate = rates.pop()
        return max(self.cfg.buffer_size // rate, 1)

    def train(self):
        per_round = self.steps_per_round()
        while self.global_step < self.cfg.total_steps:
            budget = min(per_round, self.cfg.total_steps - self.global_step)
            for _ in range(budget):
                self.collect_step()
            if budget == per_round:
                self._close_open_trajectories()
                self.update_brains()
            else:
                break  # trailing partial buffer is dropped


# ---------------------------------------------------------------------------
# experiment entry points
# ---------------------------------------------------------------------------

def metrics_filename(scenario: str, algorithm: str, seed: int) -> str:
    return f"{scenario}_{algorithm}_seed{seed}.csv"


def write_metrics_csv(path: Path, records: list[MetricsRecord],
                      failure_reason: str | None = None) -> None:
    lines = [METRICS_HEADER]
    lines += [r.csv_row() for r in records]
    if failure_reason is not None:
        lines.append(f"# failed: {failure_reason}")
    path.write_text("\n".join(lines) + "\n")


def read_metrics_csv(path) -> tuple[list[MetricsRecord], str | None]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != METRICS_HEADER:
        raise ConfigError(f"{path}: not a metrics file (bad header)")
    records, failure = [], None
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("# failed:"):
            failure = line.split(":", 1)[1].strip()
            continue
        parts = line.split(",")
        records.append(
            MetricsRecord(int(parts[0]), parts[1], float(parts[2]),
                          float(parts[3]), float(parts[4]), float(parts[5]))
        )
    return records, failure


def run_single_seed(cfg: ExperimentConfig, seed: int, out_dir,
                    capture_states: bool = False) -> RunResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / metrics_filename(cfg.scenario, cfg.algorithm, seed)
    run = _SeedRun(cfg, seed, capture_states=capture_states)
    try:
        run.train()
    except NonFiniteError as exc:
        write_metrics_csv(metrics_path, run.records, failure_reason=str(exc))
        return RunResult(seed, metrics_path, None, run.records, run.diagnostics,
                         failed=True, failure_reason=str(exc))
    write_metrics_csv(metrics_path, run.records)
    ckpt_dir = out / f"{cfg.scenario}_{cfg.algorithm}_seed{seed}_ckpt"
    save_checkpoint(ckpt_dir, cfg, run)
    return RunResult(seed, metrics_path, ckpt_dir, run.records, run.diagnostics)


def run_experiment(cfg: ExperimentConfig, out_dir, capture_states: bool = False) -> list[RunResult]:
    """Train every configured seed sequentially; failed seeds do not block
    the remaining ones."""
    return [run_single_seed(cfg, s, out_dir, capture_states) for s in cfg.seeds]


# ---------------------------------------------------------------------------
# checkpoints + evaluation
# ---------------------------------------------------------------------------

def save_checkpoint(ckpt_dir: Path, cfg: ExperimentConfig, run: _SeedRun) -> None:
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format": 1,
        "scenario": cfg.scenario,
        "algorithm": cfg.algorithm,
        "activation": cfg.network.activation,
        "brains": {},
        "managers": {},
    }
    for brain in run.brains:
        actor = brain.actor
        actor_file = f"{brain.brain_id}_actor.hcac"
        critic_file = f"{brain.brain_id}_critic.hcac"
        if isinstance(actor, GaussianPolicyHead):
            save_mlp(ckpt_dir / actor_file, actor.mean_net, trailing=actor.log_std)
            kind = "gaussian"
            action_dim = actor.action_dim
        else:
            save_mlp(ckpt_dir / actor_file, actor.logit_net)
            kind = "categorical"
            action_dim = actor.n_actions
        save_mlp(ckpt_dir / critic_file, brain.critic)
        manifest["brains"][brain.brain_id] = {
            "agents": brain.agents,
            "kind": kind,
            "action_dim": action_dim,
            "obs_dim": run.env.spec_of(brain.agents[0]).obs_dim,
            "actor_file": actor_file,
            "critic_file": critic_file,
        }
    for mgr in run.managers:
        mgr_file = f"{mgr.manager_id}_manager.hcac"
        save_mlp(ckpt_dir / mgr_file, mgr.net)
        manifest["managers"][mgr.manager_id] = {
            "workers": mgr.workers,
            "team": mgr.team,
            "recipe": mgr.recipe,
            "obs_dim": mgr.obs_dim,
            "file": mgr_file,
        }
    (ckpt_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )


def load_policies(ckpt_dir) -> tuple[dict, dict[str, object]]:
    """Manifest plus a per-brain actor map (critics are not needed to act)."""
    ckpt_dir = Path(ckpt_dir)
    manifest_path = ckpt_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{ckpt_dir}: no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    activation = manifest["activation"]
    actors: dict[str, object] = {}
    for brain_id, entry in manifest["brains"].items():
        if entry["kind"] == "gaussian":
            net, log_std = load_mlp(
                ckpt_dir / entry["actor_file"], activation,
                trailing_len=entry["action_dim"],
            )
            actors[brain_id] = GaussianPolicyHead(net, log_std)
        else:
            net, _ = load_mlp(ckpt_dir / entry["actor_file"], activation)
            actors[brain_id] = CategoricalPolicyHead(net)
    return manifest, actors


@dataclass
class EvalSummary:
    mean_cumulative_reward: float
    mean_episode_length: float


def evaluate(checkpoint_dir, scenario: str, episodes: int, seed: int,
             env_overrides: dict | None = None) -> EvalSummary:
    """Deterministic-policy rollouts: Gaussian mean / categorical argmax."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    manifest, actors = load_policies(checkpoint_dir)
    if manifest["scenario"] != scenario:
        raise ConfigError(
            f"checkpoint is for {manifest['scenario']!r}, not {scenario!r}"
        )
    env = make_env(scenario, env_overrides)
    actor_of: dict[str, object] = {}
    for brain_id, entry in manifest["brains"].items():
        for agent in entry["agents"]:
            spec = env.spec_of(agent)
            if spec.obs_dim != entry["obs_dim"]:
                raise ConfigError(
                    f"checkpoint obs dim {entry['obs_dim']} != scenario's {spec.obs_dim}"
                )
            want = (
                spec.action_space.dim
                if isinstance(spec.action_space, ContinuousSpec)
                else spec.action_space.n
            )
            if entry["action_dim"] != want:
                raise ConfigError("checkpoint action spec does not match scenario")
            actor_of[agent] = actors[brain_id]

    obs = env.reset(seed=seed)
    returns, lengths = [], []
    for _ in range(episodes):
        ep_return = {a: 0.0 for a in env.agent_ids()}
        length = 0
        done = False
        while not done:
            actions = {}
            for agent in env.agent_ids():
                actor = actor_of[agent]
                if isinstance(actor, GaussianPolicyHead):
                    actions[agent] = forward(actor.mean_net, obs[agent])
                else:
                    actions[agent] = int(np.argmax(forward(actor.logit_net, obs[agent])))
            obs, rewards, dones, _ = env.step(actions)
            for a, r in rewards.items():
                ep_return[a] += r
            length += 1
            done = all(dones.values())
        returns.extend(ep_return.values())
        lengths.append(length)
        obs = env.reset()
    return EvalSummary(float(np.mean(returns)), float(np.mean(lengths)))


# ---------------------------------------------------------------------------
# run comparison
# ---------------------------------------------------------------------------

_METRICS_NAME_RE = re.compile(r"(?P<scenario>.+?)_(?P<algorithm>hca_ppo|ppo)_seed(?P<seed>\d+)$")

METRIC_COLUMNS = (
    "cumulative_reward_mean",
    "episode_length_mean",
    "entropy",
    "value_estimate_mean",
)


def parse_metrics_filename(path) -> tuple[str, str, int]:
    stem = Path(path).name
    if stem.endswith(".csv"):
        stem = stem[:-4]
    m = _METRICS_NAME_RE.match(stem)
    if not m:
        raise ConfigError(f"{path}: does not match <scenario>_<algorithm>_seed<k>.csv")
    return m["scenario"], m["algorithm"], int(m["seed"])


def exponential_smoothing(series, weight: float) -> list[float]:
    """Display smoothing: s_0 = x_0, s_t = w*s_(t-1) + (1-w)*x_t."""
    out: list[float] = []
    for x in series:
        out.append(x if not out else weight * out[-1] + (1.0 - weight) * x)
    return out


@dataclass
class ComparisonResult:
    scenario: str
    algorithms: dict  # algorithm -> group -> {steps, raw, smoothed, final_window, seeds}
    final_window_fraction: float = 0.1

    def table(self) -> str:
        lines = [
            f"scenario: {self.scenario}",
            f"{'algorithm':<10} {'group':<10} {'seeds':>5} "
            f"{'final_reward':>14} {'final_ep_len':>14}",
        ]
        for alg in sorted(self.algorithms):
            for group in sorted(self.algorithms[alg]):
                e = self.algorithms[alg][group]
                lines.append(
                    f"{alg:<10} {group:<10} {len(e['seeds']):>5} "
                    f"{e['final_window']['cumulative_reward_mean']:>14.6f} "
                    f"{e['final_window']['episode_length_mean']:>14.6f}"
                )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "final_window_fraction": self.final_window_fraction,
            "algorithms": self.algorithms,
        }


def compare_runs(metrics_files, smooth: float | None = None) -> ComparisonResult:
    """Aligned per-step seed medians per algorithm plus final-window means.

    The final window is the last 10% of aligned steps (at least one row).
    """
    paths = [Path(p) for p in metrics_files]
    if len(paths) < 2:
        raise ConfigError("need at least two metrics files to compare")
    scenario = None
    by_alg: dict[str, dict[int, dict[str, dict[int, MetricsRecord]]]] = {}
    for p in paths:
        scen, alg, seed = parse_metrics_filename(p)
        if scenario is None:
            scenario = scen
        elif scen != scenario:
            raise ConfigError(f"mixed scenarios: {scenario} vs {scen}")
        records, failure = read_metrics_csv(p)
        if failure is not None:
            continue  # failed runs carry no comparable final state
        per_group: dict[str, dict[int, MetricsRecord]] = {}
        for r in records:
            per_group.setdefault(r.agent_group, {})[r.step] = r
        by_alg.setdefault(alg, {})[seed] = per_group

    algorithms: dict = {}
    for alg, seeds in by_alg.items():
        groups = sorted({g for per_group in seeds.values() for g in per_group})
        algorithms[alg] = {}
        for group in groups:
            step_sets = [
                set(per_group.get(group, {})) for per_group in seeds.values()
            ]
            steps = sorted(set.intersection(*step_sets)) if step_sets else []
            raw = {}
            for metric in METRIC_COLUMNS:
                series = []
                for step in steps:
                    vals = [
                        getattr(per_group[group][step], metric)
                        for per_group in seeds.values()
                    ]
                    series.append(float(np.median(vals)))
                raw[metric] = series
            entry = {
                "seeds": sorted(seeds),
                "steps": steps,
                "raw": raw,
            }
            if smooth is not None:
                entry["smoothed"] = {
                    m: exponential_smoothing(raw[m], smooth) for m in METRIC_COLUMNS
                }
            n_final = max(1, int(np.ceil(len(steps) * 0.1))) if steps else 0
            entry["final_window"] = {
                m: (float(np.mean(raw[m][-n_final:])) if n_final else float("nan"))
                for m in METRIC_COLUMNS
            }
            algorithms[alg][group] = entry
    return ComparisonResult(scenario or "", algorithms)
