"""2v2 soccer: striker/goalie pairs push a ball toward the opposing goal.

Per step every striker pays a -0.001 existential penalty and every goalie
collects +0.001. On a goal: scoring striker +1, scoring goalie +0.1,
conceding striker -0.1, conceding goalie -1, so the goal-triggered terms sum
to zero across the four agents. ``literal_goalie_rewards`` swaps the goalie
signs to +0.1 own goal / -1 opponent goal for comparison runs.

Workers observe 14 rays over 180 degrees, 7 object types plus normalized
distance each (112 entries). The per-team manager view uses 6 coarser types
(98 entries), cast from the team centroid toward the opposing goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import AgentSpec, DiscreteSpec, MultiAgentEnv
from .raycast import RayCastSpec, cast_rays

WORKER_OBS_DIM = 112   # 14 rays x (7 types + distance)
MANAGER_OBS_DIM = 98   # 14 rays x (6 types + distance)

# worker ray one-hot indices
W_BALL, W_TEAMMATE, W_OPP_STRIKER, W_OPP_GOALIE, W_OWN_GOAL, W_OPP_GOAL, W_WALL = range(7)
# manager ray one-hot indices
M_BALL, M_OWN_AGENT, M_OPP_AGENT, M_OWN_GOAL, M_OPP_GOAL, M_WALL = range(6)

STRIKER_ACTIONS = 6  # fwd, back, rotate left/right, strafe left/right
GOALIE_ACTIONS = 4   # fwd, back, strafe left/right


@dataclass
class SoccerParams:
    width: float = 6.0
    height: float = 4.0
    goal_half_width: float = 0.7
    agent_radius: float = 0.15
    ball_radius: float = 0.1
    agent_speed: float = 0.08
    rotate_step: float = np.pi / 12
    kick_speed: float = 0.14
    ball_friction: float = 0.98
    wall_restitution: float = 0.7
    ray_max_range: float = 5.0
    max_steps: int = 1000
    existential: float = 0.001
    literal_goalie_rewards: bool = False


@dataclass
class _Agent:
    pos: np.ndarray
    heading: float


class SoccerEnv(MultiAgentEnv):
    """Two teams of one striker and one goalie each."""

    def __init__(self, params: SoccerParams | None = None):
        super().__init__()
        self.p = params or SoccerParams()
        self.roster = [
            AgentSpec("striker_a", 0, "striker", WORKER_OBS_DIM, DiscreteSpec(STRIKER_ACTIONS)),
            AgentSpec("goalie_a", 0, "goalie", WORKER_OBS_DIM, DiscreteSpec(GOALIE_ACTIONS)),
            AgentSpec("striker_b", 1, "striker", WORKER_OBS_DIM, DiscreteSpec(STRIKER_ACTIONS)),
            AgentSpec("goalie_b", 1, "goalie", WORKER_OBS_DIM, DiscreteSpec(GOALIE_ACTIONS)),
        ]
        self._worker_rays = RayCastSpec(14, 180.0, self.p.ray_max_range, 7)
        self._manager_rays = RayCastSpec(14, 180.0, self.p.ray_max_range, 6)
        self._reset_state()

    # team 0 defends the goal at x=0 and attacks the goal at x=width

    def _goal_center(self, team: int) -> np.ndarray:
        x = 0.0 if team == 0 else self.p.width
        return np.array([x, self.p.height / 2])

    def _reset_state(self) -> None:
        p = self.p
        jitter = lambda s: self._rng.uniform(-s, s)
        cy = p.height / 2
        self.agents = {
            "striker_a": _Agent(np.array([p.width * 0.35 + jitter(0.2), cy + jitter(0.5)]), 0.0),
            "goalie_a": _Agent(np.array([p.width * 0.08, cy + jitter(0.3)]), 0.0),
            "striker_b": _Agent(np.array([p.width * 0.65 + jitter(0.2), cy + jitter(0.5)]), np.pi),
            "goalie_b": _Agent(np.array([p.width * 0.92, cy + jitter(0.3)]), np.pi),
        }
        self.ball_pos = np.array([p.width / 2 + jitter(0.2), cy + jitter(0.2)])
        self.ball_vel = np.zeros(2)
        self._steps_in_episode = 0

    def reset(self, seed: int | None = None) -> dict[str, np.ndarray]:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._reset_state()
        return self.observations()

    # -- geometry for ray casting ------------------------------------------------

    def _wall_and_goal_segments(self, own_goal_type: int, opp_goal_type: int,
                                wall_type: int, team: int):
        p = self.p
        W, H = p.width, p.height
        g_lo, g_hi = H / 2 - p.goal_half_width, H / 2 + p.goal_half_width
        left_goal_type = own_goal_type if team == 0 else opp_goal_type
        right_goal_type = opp_goal_type if team == 0 else own_goal_type
        segs = [
            (wall_type, np.array([0.0, 0.0]), np.array([W, 0.0])),
            (wall_type, np.array([0.0, H]), np.array([W, H])),
            (wall_type, np.array([0.0, 0.0]), np.array([0.0, g_lo])),
            (wall_type, np.array([0.0, g_hi]), np.array([0.0, H])),
            (wall_type, np.array([W, 0.0]), np.array([W, g_lo])),
            (wall_type, np.array([W, g_hi]), np.array([W, H])),
            (left_goal_type, np.array([0.0, g_lo]), np.array([0.0, g_hi])),
            (right_goal_type, np.array([W, g_lo]), np.array([W, g_hi])),
        ]
        return segs

    def worker_observation(self, agent_id: str) -> np.ndarray:
        spec = self.spec_of(agent_id)
        me = self.agents[agent_id]
        circles = [(W_BALL, self.ball_pos, self.p.ball_radius)]
        for other in self.roster:
            if other.agent_id == agent_id:
                continue
            a = self.agents[other.agent_id]
            if other.team == spec.team:
                t = W_TEAMMATE
            elif other.role == "striker":
                t = W_OPP_STRIKER
            else:
                t = W_OPP_GOALIE
            circles.append((t, a.pos, self.p.agent_radius))
        segments = self._wall_and_goal_segments(W_OWN_GOAL, W_OPP_GOAL, W_WALL, spec.team)
        return cast_rays(me.pos, me.heading, self._worker_rays, circles, segments)

    def manager_raycast(self, team: int) -> np.ndarray:
        members = [s.agent_id for s in self.roster if s.team == team]
        centroid = np.mean([self.agents[a].pos for a in members], axis=0)
        target = self._goal_center(1 - team)
        delta = target - centroid
        heading = float(np.arctan2(delta[1], delta[0]))
        circles = [(M_BALL, self.ball_pos, self.p.ball_radius)]
        for other in self.roster:
            a = self.agents[other.agent_id]
            t = M_OWN_AGENT if other.team == team else M_OPP_AGENT
            circles.append((t, a.pos, self.p.agent_radius))
        segments = self._wall_and_goal_segments(M_OWN_GOAL, M_OPP_GOAL, M_WALL, team)
        return cast_rays(centroid, heading, self._manager_rays, circles, segments)

    def manager_quantities(
        self, assigned: list[str], team: int | None, names: list[str] | None = None
    ) -> dict[str, np.ndarray]:
        if team is None:
            raise ValueError("soccer manager quantities require a team")
        builders = {
            "worker_obs": lambda: np.concatenate(
                [self.worker_observation(a) for a in assigned]
            ) if assigned else np.empty(0),
            "all_worker_obs": lambda: np.concatenate(
                [self.worker_observation(a) for a in self.agent_ids()]
            ),
            "manager_raycast": lambda: self.manager_raycast(team),
            "teammate_distances": lambda: self._teammate_distances(assigned),
        }
        wanted = builders.keys() if names is None else [n for n in names if n in builders]
        return {name: builders[name]() for name in wanted}

    def _teammate_distances(self, assigned: list[str]) -> np.ndarray:
        positions = [self.agents[a].pos for a in assigned]
        return np.array(
            [
                float(np.linalg.norm(positions[i] - positions[j]))
                for i in range(len(positions))
                for j in range(i + 1, len(positions))
            ]
        )

    # -- dynamics -----------------------------------------------------------------

    def _apply_action(self, agent_id: str, action: int) -> None:
        p = self.p
        a = self.agents[agent_id]
        role = self.spec_of(agent_id).role
        move = None
        if role == "striker":
            if action == 2:
                a.heading += p.rotate_step
                return
            if action == 3:
                a.heading -= p.rotate_step
                return
            move = {0: 0.0, 1: np.pi, 4: np.pi / 2, 5: -np.pi / 2}[action]
        else:
            move = {0: 0.0, 1: np.pi, 2: np.pi / 2, 3: -np.pi / 2}[action]
        ang = a.heading + move
        a.pos = a.pos + p.agent_speed * np.array([np.cos(ang), np.sin(ang)])
        r = p.agent_radius
        a.pos[0] = float(np.clip(a.pos[0], r, p.width - r))
        a.pos[1] = float(np.clip(a.pos[1], r, p.height - r))

    def _kick_contacts(self) -> None:
        p = self.p
        reach = p.agent_radius + p.ball_radius + 0.02
        for spec in self.roster:
            a = self.agents[spec.agent_id]
            delta = self.ball_pos - a.pos
            dist = float(np.linalg.norm(delta))
            if dist < reach:
                direction = delta / dist if dist > 1e-9 else np.array([1.0, 0.0])
                self.ball_vel = p.kick_speed * direction
                self.ball_pos = a.pos + direction * reach

    def _ball_walls(self):
        """Bounce the ball or detect a goal; returns conceding team or None."""
        p = self.p
        r = p.ball_radius
        g_lo, g_hi = p.height / 2 - p.goal_half_width, p.height / 2 + p.goal_half_width
        x, y = self.ball_pos
        in_mouth = g_lo <= y <= g_hi
        if x - r <= 0.0:
            if in_mouth:
                return 0
            self.ball_pos[0] = r
            self.ball_vel[0] = -self.ball_vel[0] * p.wall_restitution
        elif x + r >= p.width:
            if in_mouth:
                return 1
            self.ball_pos[0] = p.width - r
            self.ball_vel[0] = -self.ball_vel[0] * p.wall_restitution
        if y - r <= 0.0:
            self.ball_pos[1] = r
            self.ball_vel[1] = -self.ball_vel[1] * p.wall_restitution
        elif y + r >= p.height:
            self.ball_pos[1] = p.height - r
            self.ball_vel[1] = -self.ball_vel[1] * p.wall_restitution
        return None

    def _goal_rewards(self, conceding_team: int) -> dict[str, float]:
        out = {}
        for spec in self.roster:
            scored = spec.team != conceding_team
            if spec.role == "striker":
                out[spec.agent_id] = 1.0 if scored else -0.1
            elif self.p.literal_goalie_rewards:
                # the source description verbatim: -1 on the opponent's goal,
                # +0.1 on the own goal
                out[spec.agent_id] = -1.0 if scored else 0.1
            else:
                out[spec.agent_id] = 0.1 if scored else -1.0
        return out

    def step(self, actions: dict):
        self._check_actions(actions)
        p = self.p
        for spec in self.roster:
            self._apply_action(spec.agent_id, int(actions[spec.agent_id]))
        self._kick_contacts()
        self.ball_pos = self.ball_pos + self.ball_vel
        self.ball_vel = self.ball_vel * p.ball_friction
        conceding = self._ball_walls()

        rewards = {}
        for spec in self.roster:
            rewards[spec.agent_id] = (
                -p.existential if spec.role == "striker" else p.existential
            )
        info: dict = {"goal": None}
        done = False
        if conceding is not None:
            for agent_id, r in self._goal_rewards(conceding).items():
                rewards[agent_id] += r
            info["goal"] = {"conceding_team": conceding, "scoring_team": 1 - conceding}
            done = True

        self._steps_in_episode += 1
        self._step_count += 1
        if not done and self._steps_in_episode >= p.max_steps:
            info["step_limit"] = True
            done = True

        dones = {a: done for a in self.agent_ids()}
        return self.observations(), rewards, dones, info
