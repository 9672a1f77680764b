"""Experiment configuration files: strict parsing, serialization, reference.

The YAML document mirrors ExperimentConfig field-for-field; unknown keys are a
hard error naming the offending key path so typos cannot silently fall back to
defaults. ``python -m hca_marl.config`` prints a generated reference with
every key and its default.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .errors import ConfigError
from .harness import ExperimentConfig, HierarchyConfig, NetworkConfig
from .hca import CriticSchedule
from .ppo import PpoConfig
from .rollout import AdvantageConfig

# dataclass field name <-> YAML key divergences ("lambda" is reserved in
# Python, so the dataclass field is "lam")
_YAML_ALIASES = {"advantage": {"lambda": "lam"}}


def _check_keys(data: dict, allowed, path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(
                f"unknown key {path}{key!r}; allowed: {sorted(allowed)}"
            )


def _section(data: dict, key: str, cls, defaults_cls=None, aliases=None):
    raw = data.get(key)
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{key}: expected a mapping")
    aliases = aliases or {}
    renamed = {aliases.get(k, k): v for k, v in raw.items()}
    field_names = {f.name for f in dataclasses.fields(cls)}
    for original in raw:
        mapped = aliases.get(original, original)
        if mapped not in field_names:
            raise ConfigError(
                f"unknown key {key}.{original!r}; allowed: "
                f"{sorted(set(aliases) | field_names - set(aliases.values()))}"
            )
    try:
        return cls(**renamed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


_TOP_LEVEL_KEYS = {
    "scenario", "algorithm", "total_steps", "seeds", "metrics_interval",
    "buffer_size", "ppo", "advantage", "schedule", "network", "hierarchy",
    "env",
}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys(data, _TOP_LEVEL_KEYS, "")

    network_raw = data.get("network") or {}
    if not isinstance(network_raw, dict):
        raise ConfigError("network: expected a mapping")
    _check_keys(network_raw, {"hidden_sizes", "activation", "init_log_std"}, "network.")
    defaults = NetworkConfig()
    network = NetworkConfig(
        hidden_sizes=tuple(network_raw.get("hidden_sizes", defaults.hidden_sizes)),
        activation=network_raw.get("activation", defaults.activation),
        init_log_std=float(network_raw.get("init_log_std", defaults.init_log_std)),
    )

    hierarchy_raw = data.get("hierarchy") or {}
    if not isinstance(hierarchy_raw, dict):
        raise ConfigError("hierarchy: expected a mapping")
    _check_keys(
        hierarchy_raw,
        {"managers", "recipe", "manager_obs_recipe", "clone_local_critic"},
        "hierarchy.",
    )
    managers = hierarchy_raw.get("managers", "none")
    if isinstance(managers, list):
        managers = [dict(m) for m in managers]
        for m in managers:
            _check_keys(m, {"id", "team", "workers", "recipe"}, "hierarchy.managers[].")
    hierarchy = HierarchyConfig(
        managers=managers,
        recipe=hierarchy_raw.get("recipe"),
        manager_obs_recipe=dict(hierarchy_raw.get("manager_obs_recipe") or {}),
        clone_local_critic=bool(hierarchy_raw.get("clone_local_critic", False)),
    )

    env = data.get("env") or {}
    if not isinstance(env, dict):
        raise ConfigError("env: expected a mapping")

    seeds = data.get("seeds", (1, 2, 3))
    if isinstance(seeds, int):
        seeds = (seeds,)
    try:
        seeds = tuple(int(s) for s in seeds)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds: {exc}") from exc

    try:
        return ExperimentConfig(
            scenario=str(data.get("scenario", "tennis_1v1")),
            algorithm=str(data.get("algorithm", "ppo")),
            total_steps=int(data.get("total_steps", 100_000)),
            seeds=seeds,
            metrics_interval=int(data.get("metrics_interval", 1000)),
            buffer_size=int(data.get("buffer_size", 10240)),
            ppo=_section(data, "ppo", PpoConfig),
            advantage=_section(
                data, "advantage", AdvantageConfig,
                aliases=_YAML_ALIASES["advantage"],
            ),
            schedule=_section(data, "schedule", CriticSchedule),
            network=network,
            hierarchy=hierarchy,
            env=dict(env),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data or {})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "scenario": cfg.scenario,
        "algorithm": cfg.algorithm,
        "total_steps": cfg.total_steps,
        "seeds": list(cfg.seeds),
        "metrics_interval": cfg.metrics_interval,
        "buffer_size": cfg.buffer_size,
        "ppo": dataclasses.asdict(cfg.ppo),
        "advantage": {
            "gamma": cfg.advantage.gamma,
            "lambda": cfg.advantage.lam,
            "estimator": cfg.advantage.estimator,
            "n": cfg.advantage.n,
            "normalize": cfg.advantage.normalize,
        },
        "schedule": dataclasses.asdict(cfg.schedule),
        "network": {
            "hidden_sizes": list(cfg.network.hidden_sizes),
            "activation": cfg.network.activation,
            "init_log_std": cfg.network.init_log_std,
        },
        "hierarchy": {
            "managers": cfg.hierarchy.managers,
            "recipe": cfg.hierarchy.recipe,
            "manager_obs_recipe": cfg.hierarchy.manager_obs_recipe,
            "clone_local_critic": cfg.hierarchy.clone_local_critic,
        },
        "env": cfg.env,
    }


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True, default_flow_style=False)


def config_reference() -> str:
    """Generated key-by-key reference with defaults."""
    cfg = ExperimentConfig()
    lines = [
        "Configuration file reference (YAML). Unknown keys are rejected.",
        "",
        "key                                default        notes",
        "-" * 78,
    ]

    def emit(prefix, obj, notes=None):
        notes = notes or {}
        for f in dataclasses.fields(obj):
            name = f.name
            yaml_name = "lambda" if (prefix == "advantage." and name == "lam") else name
            value = getattr(obj, name)
            note = notes.get(name, "")
            lines.append(f"{prefix + yaml_name:<34} {value!r:<14} {note}")

    lines.append(f"{'scenario':<34} {'tennis_1v1':<14} tennis_1v1 | tennis_2v2 | soccer_2v2")
    lines.append(f"{'algorithm':<34} {'ppo':<14} ppo | hca_ppo")
    lines.append(f"{'total_steps':<34} {cfg.total_steps!r:<14} environment steps per seed")
    lines.append(f"{'seeds':<34} {list(cfg.seeds)!r:<14} one training job per seed")
    lines.append(f"{'metrics_interval':<34} {cfg.metrics_interval!r:<14} steps between metric rows")
    lines.append(f"{'buffer_size':<34} {cfg.buffer_size!r:<14} transitions per brain per update")
    emit("ppo.", cfg.ppo, {
        "clip_epsilon": "surrogate clip width",
        "entropy_beta": "entropy bonus weight",
        "minibatch_size": "SGD minibatch",
    })
    emit("advantage.", cfg.advantage, {
        "lam": "GAE smoothing weight",
        "estimator": "gae | n_step",
        "n": "horizon for n_step",
    })
    emit("schedule.", cfg.schedule, {
        "enabled": "periodic critic gating",
        "period_T": "gating period (steps)",
        "active_window_n": "steps per period with all critics",
    })
    emit("network.", cfg.network)
    lines.append(f"{'hierarchy.managers':<34} {'none':<14} none | per_team | shared | explicit list")
    lines.append(f"{'hierarchy.recipe':<34} {'None':<14} default recipe (M1..M4 or a list)")
    lines.append(f"{'hierarchy.manager_obs_recipe':<34} {'{}':<14} per-manager recipe overrides")
    lines.append(f"{'hierarchy.clone_local_critic':<34} {'False':<14} init managers as local-critic copies")
    lines.append(f"{'env':<34} {'{}':<14} per-scenario physics overrides")
    lines.append("")
    lines.append("Recipe quantities (tennis): worker_obs, all_worker_obs,")
    lines.append("  ball_racket_distances, prev_ball_position, prev_ball_velocity,")
    lines.append("  prev_racket_positions, teammate_distances")
    lines.append("Recipe quantities (soccer): worker_obs, all_worker_obs,")
    lines.append("  manager_raycast, teammate_distances")
    return "\n".join(lines)


if __name__ == "__main__":
    print(config_reference())
