"""2D tennis: two sides volley a ball over a net.

Rewards: +0.1 to the last hitter each time the ball clears the net, -0.1 to
the agent that lets the ball ground on its side or hits it out, and the rally
ends with that -0.1. Actions are continuous 3-vectors: [0] moves toward/away
from the net (raw magnitude, so wild commands overshoot), [1] modulates swing
power at contact, [2] above 0.5 triggers a jump.

An episode is one rally. The 2v2 variant fields two rackets per side and
extends each worker's observation with teammate position/velocity/distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .base import AgentSpec, ContinuousSpec, MultiAgentEnv

OBS_DIM_1V1 = 8
OBS_DIM_2V2 = 13


@dataclass
class TennisParams:
    half_length: float = 3.0     # court runs x in [-half_length, half_length]
    net_height: float = 0.5
    gravity: float = 0.02        # per-step velocity drop
    racket_speed: float = 0.2    # max horizontal move per step
    jump_impulse: float = 0.15
    reach_x: float = 0.5
    reach_y: float = 0.5
    hit_vx: float = 0.12         # horizontal launch speed toward the opponent
    hit_vx_swing_gain: float = 0.04  # swing-power modulation of launch speed
    hit_vy: float = 0.24
    serve_height: float = 1.2
    serve_jitter: float = 0.25
    racket_home: float = 1.5     # |x| of the single-racket home position
    racket_homes_2v2: tuple[float, float] = (1.0, 2.2)
    racket_margin: float = 0.15  # keep-out zone next to the net
    max_steps: int = 1000


@dataclass
class _Racket:
    x: float
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    grounded: bool = True
    swing: float = 0.0  # this step's swing-power command


class TennisEnv(MultiAgentEnv):
    """Tennis competition; ``players_per_side`` is 1 or 2."""

    def __init__(self, players_per_side: int = 1, params: TennisParams | None = None):
        super().__init__()
        if players_per_side not in (1, 2):
            raise ConfigError("players_per_side must be 1 or 2")
        self.p = params or TennisParams()
        self.players_per_side = players_per_side
        obs_dim = OBS_DIM_1V1 if players_per_side == 1 else OBS_DIM_2V2
        self.roster = []
        for team, side in ((0, "a"), (1, "b")):
            for k in range(players_per_side):
                suffix = "" if players_per_side == 1 else str(k + 1)
                self.roster.append(
                    AgentSpec(
                        agent_id=f"racket_{side}{suffix}",
                        team=team,
                        role="racket",
                        obs_dim=obs_dim,
                        action_space=ContinuousSpec(3),
                    )
                )
        self._rally_index = 0
        self._reset_state(receiving_team=0)

    # -- state ---------------------------------------------------------------

    def _side_sign(self, team: int) -> float:
        return -1.0 if team == 0 else 1.0

    def _reset_state(self, receiving_team: int) -> None:
        p = self.p
        self.rackets: dict[str, _Racket] = {}
        for spec in self.roster:
            sign = self._side_sign(spec.team)
            if self.players_per_side == 1:
                home = p.racket_home
            else:
                idx = int(spec.agent_id[-1]) - 1
                home = p.racket_homes_2v2[idx]
            jitter = self._rng.uniform(-0.1, 0.1)
            self.rackets[spec.agent_id] = _Racket(x=sign * home + jitter)
        serve_x = self._side_sign(receiving_team) * (
            p.racket_home + self._rng.uniform(-p.serve_jitter, p.serve_jitter)
        )
        self.ball_pos = np.array([serve_x, p.serve_height])
        self.ball_vel = np.array([0.0, 0.0])
        self.last_touch_agent: str | None = None
        self.last_touch_team: int | None = None
        self._steps_in_episode = 0
        self._snapshot_previous()

    def _snapshot_previous(self) -> None:
        self._prev_ball_pos = self.ball_pos.copy()
        self._prev_ball_vel = self.ball_vel.copy()
        self._prev_racket_pos = np.array(
            [[self.rackets[a].x, self.rackets[a].y] for a in self.agent_ids()]
        )

    def reset(self, seed: int | None = None) -> dict[str, np.ndarray]:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
            self._rally_index = 0
        receiving = self._rally_index % 2
        self._rally_index += 1
        self._reset_state(receiving_team=receiving)
        return self.observations()

    # -- observations ----------------------------------------------------------

    def worker_observation(self, agent_id: str) -> np.ndarray:
        r = self.rackets[agent_id]
        base = [
            self.ball_pos[0], self.ball_pos[1],
            self.ball_vel[0], self.ball_vel[1],
            r.x, r.y, r.vx, r.vy,
        ]
        if self.players_per_side == 1:
            return np.array(base)
        spec = self.spec_of(agent_id)
        mate_id = next(
            s.agent_id for s in self.roster
            if s.team == spec.team and s.agent_id != agent_id
        )
        m = self.rackets[mate_id]
        dist = float(np.hypot(m.x - r.x, m.y - r.y))
        return np.array(base + [m.x, m.y, m.vx, m.vy, dist])

    def manager_quantities(
        self, assigned: list[str], team: int | None, names: list[str] | None = None
    ) -> dict[str, np.ndarray]:
        """Named quantities a manager recipe can reference; ``names`` limits
        the computation to the listed ones."""
        builders = {
            "worker_obs": lambda: np.concatenate(
                [self.worker_observation(a) for a in assigned]
            ) if assigned else np.empty(0),
            "all_worker_obs": lambda: np.concatenate(
                [self.worker_observation(a) for a in self.agent_ids()]
            ),
            "ball_racket_distances": self._ball_racket_distances,
            "prev_ball_position": lambda: self._prev_ball_pos.copy(),
            "prev_ball_velocity": lambda: self._prev_ball_vel.copy(),
            "prev_racket_positions": lambda: self._prev_racket_pos.ravel().copy(),
            "teammate_distances": lambda: self._teammate_distances(assigned),
        }
        wanted = builders.keys() if names is None else [n for n in names if n in builders]
        return {name: builders[name]() for name in wanted}

    def _ball_racket_distances(self) -> np.ndarray:
        pos = np.array([[self.rackets[a].x, self.rackets[a].y] for a in self.agent_ids()])
        return np.linalg.norm(pos - self.ball_pos, axis=1)

    def _teammate_distances(self, assigned: list[str]) -> np.ndarray:
        pos = [np.array([self.rackets[a].x, self.rackets[a].y]) for a in assigned]
        return np.array(
            [
                float(np.linalg.norm(pos[i] - pos[j]))
                for i in range(len(pos))
                for j in range(i + 1, len(pos))
            ]
        )

    # -- dynamics ----------------------------------------------------------------

    def _move_rackets(self, actions: dict) -> None:
        p = self.p
        for spec in self.roster:
            r = self.rackets[spec.agent_id]
            a = np.asarray(actions[spec.agent_id], dtype=np.float64)
            toward_net = -self._side_sign(spec.team)
            # raw command scaling: oversized commands overshoot the target
            r.vx = float(a[0]) * p.racket_speed * toward_net
            r.x += r.vx
            sign = self._side_sign(spec.team)
            lo, hi = sorted((sign * p.racket_margin, sign * (p.half_length - 0.05)))
            r.x = float(np.clip(r.x, lo, hi))
            r.swing = float(a[1])
            if a[2] > 0.5 and r.grounded:
                r.vy = p.jump_impulse
                r.grounded = False
            if not r.grounded:
                r.vy -= p.gravity
                r.y += r.vy
                if r.y <= 0.0:
                    r.y, r.vy, r.grounded = 0.0, 0.0, True

    def _eligible_hitter(self) -> str | None:
        """Nearest in-reach racket whose team did not touch the ball last."""
        p = self.p
        best, best_dx = None, np.inf
        for spec in self.roster:
            if self.last_touch_team is not None and spec.team == self.last_touch_team:
                continue
            r = self.rackets[spec.agent_id]
            dx = abs(self.ball_pos[0] - r.x)
            dy = abs(self.ball_pos[1] - r.y)
            if dx <= p.reach_x and dy <= p.reach_y and dx < best_dx:
                best, best_dx = spec.agent_id, dx
        return best

    def _ground_loser(self) -> str:
        """On the ball's side, the racket nearest the landing point."""
        side = self.ball_pos[0] if self.ball_pos[0] != 0.0 else self._prev_ball_pos[0]
        team = 0 if side < 0 else 1
        candidates = [s.agent_id for s in self.roster if s.team == team]
        return min(candidates, key=lambda a: abs(self.rackets[a].x - self.ball_pos[0]))

    def step(self, actions: dict):
        self._check_actions(actions)
        p = self.p
        rewards = {a: 0.0 for a in self.agent_ids()}
        info: dict = {"hit_by": None, "net_crossing_by": None, "rally_end": None}
        done = False

        prev_snapshot = (
            self.ball_pos.copy(), self.ball_vel.copy(),
            np.array([[self.rackets[a].x, self.rackets[a].y] for a in self.agent_ids()]),
        )

        self._move_rackets(actions)

        prev = self.ball_pos.copy()
        self.ball_vel[1] -= p.gravity
        self.ball_pos = self.ball_pos + self.ball_vel

        # net crossing / net block
        if prev[0] * self.ball_pos[0] < 0.0:
            frac = (0.0 - prev[0]) / (self.ball_pos[0] - prev[0])
            y_cross = prev[1] + frac * (self.ball_pos[1] - prev[1])
            if y_cross >= p.net_height:
                if self.last_touch_agent is not None:
                    rewards[self.last_touch_agent] += 0.1
                    info["net_crossing_by"] = self.last_touch_agent
            else:
                # stopped by the net: drops back on the hitter's side
                self.ball_pos[0] = float(np.sign(prev[0])) * 0.02
                self.ball_pos[1] = max(y_cross, 0.01)
                self.ball_vel[0] = -0.25 * self.ball_vel[0]

        if abs(self.ball_pos[0]) > p.half_length:
            loser = self.last_touch_agent or self._ground_loser()
            rewards[loser] -= 0.1
            info["rally_end"] = {"loser": loser, "reason": "out"}
            done = True
        else:
            hitter = self._eligible_hitter()
            if hitter is not None:
                spec = self.spec_of(hitter)
                r = self.rackets[hitter]
                toward_opponent = -self._side_sign(spec.team)
                launch = p.hit_vx + p.hit_vx_swing_gain * np.tanh(r.swing)
                self.ball_vel[0] = toward_opponent * launch
                self.ball_vel[1] = p.hit_vy
                self.ball_pos[1] = max(self.ball_pos[1], 0.01)
                self.last_touch_agent = hitter
                self.last_touch_team = spec.team
                info["hit_by"] = hitter
            elif self.ball_pos[1] <= 0.0:
                loser = self._ground_loser()
                rewards[loser] -= 0.1
                info["rally_end"] = {"loser": loser, "reason": "ground"}
                done = True

        self._steps_in_episode += 1
        self._step_count += 1
        if not done and self._steps_in_episode >= p.max_steps:
            info["rally_end"] = {"loser": None, "reason": "step_limit"}
            done = True

        # previous-step quantities lag by exactly one step
        self._prev_ball_pos, self._prev_ball_vel, self._prev_racket_pos = prev_snapshot

        dones = {a: done for a in self.agent_ids()}
        return self.observations(), rewards, dones, info
