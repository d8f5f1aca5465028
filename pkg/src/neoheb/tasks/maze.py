"""Grid maze agent trained with a reward-modulated eligibility rule.

Every grid cell is an input neuron wired to four leaky action neurons.  The
action with the highest membrane potential is taken and that neuron's
potential is halved.  Eligibility of the (state, action) synapse grows by one
per selection and all eligibilities decay by ``gamma`` every step.  At the
end of an episode the weights move by ``(sigmoid(r) - chi) * e``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .. import device as dv
from .. import xbar
from ..rng import stream

UP, DOWN, LEFT, RIGHT = range(4)
ACTIONS = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

CHEESE, TRAP, TIMEOUT = "cheese", "trap", "timeout"


@dataclass
class MazeConfig:
    n: int = 5
    cheese_pos: tuple | None = None       # (row, col); None = seeded placement
    trap_positions: tuple | None = None   # tuple of (row, col)
    n_traps: int | None = None            # default ceil(n/2)
    r_best: float | None = None           # default +n
    r_worst: float | None = None          # default -n
    r_step: float = -0.1
    chi: float = 0.5
    gamma: float = 0.5
    eta: float = 1.0                      # weight change per unit (sigmoid(r) - chi) * e
    leak: float = 0.9                     # per-step retention of action potentials
    w_init: float = 1.0                   # initial weights ~ U(0, w_init)
    max_steps: int | None = None          # default 4 n^2
    max_episodes: int = 300
    benchmark_streak: int = 5

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid side must be >= 2")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.r_best is None:
            self.r_best = float(self.n)
        if self.r_worst is None:
            self.r_worst = -float(self.n)
        if self.r_best <= 0:
            raise ValueError("r_best must be positive")
        if self.n_traps is None:
            self.n_traps = math.ceil(self.n / 2)
        if self.max_steps is None:
            self.max_steps = 4 * self.n * self.n
        if self.cheese_pos is not None:
            self.cheese_pos = tuple(self.cheese_pos)
            self._check_cell(self.cheese_pos)
        if self.trap_positions is not None:
            self.trap_positions = tuple(tuple(t) for t in self.trap_positions)
            for t in self.trap_positions:
                self._check_cell(t)
            if self.cheese_pos in self.trap_positions:
                raise ValueError("cheese cannot sit on a trap")

    def _check_cell(self, p):
        if not (0 <= p[0] < self.n and 0 <= p[1] < self.n):
            raise ValueError(f"cell {p} outside the {self.n}x{self.n} grid")

    @property
    def n_states(self):
        return self.n * self.n

    def state(self, pos):
        return pos[0] * self.n + pos[1]


# -- layout ------------------------------------------------------------------------

def _reachable(n, cheese, traps):
    """Cells from which the cheese can be reached without crossing a trap."""
    seen = {cheese}
    q = deque([cheese])
    while q:
        r, c = q.popleft()
        for dr, dc in MOVES:
            p = (r + dr, c + dc)
            if 0 <= p[0] < n and 0 <= p[1] < n and p not in seen and p not in traps:
                seen.add(p)
                q.append(p)
    return seen


def place_layout(cfg: MazeConfig, rng) -> MazeConfig:
    """Fill in missing cheese/trap positions so that every free cell can reach
    the cheese."""
    n = cfg.n
    cells = [(r, c) for r in range(n) for c in range(n)]
    cheese = cfg.cheese_pos
    if cheese is None:
        cheese = cells[int(rng.integers(len(cells)))]
    traps = cfg.trap_positions
    if traps is None:
        for _ in range(1000):
            free = [p for p in cells if p != cheese]
            pick = rng.choice(len(free), size=min(cfg.n_traps, len(free) - 1), replace=False)
            cand = tuple(sorted(free[i] for i in pick))
            if len(_reachable(n, cheese, set(cand))) == n * n - len(cand):
                traps = cand
                break
        else:
            raise RuntimeError("could not place traps with a reachable cheese")
    d = asdict(cfg)
    d.update(cheese_pos=tuple(cheese), trap_positions=tuple(traps))
    return MazeConfig(**d)


def layout_to_json(cfg: MazeConfig) -> str:
    return json.dumps({"n": cfg.n, "cheese": list(cfg.cheese_pos),
                       "traps": [list(t) for t in cfg.trap_positions]}, sort_keys=True)


def layout_from_json(text: str, base: MazeConfig | None = None) -> MazeConfig:
    data = json.loads(text)
    d = asdict(base) if base is not None else {}
    d.update(n=int(data["n"]), cheese_pos=tuple(data["cheese"]),
             trap_positions=tuple(tuple(t) for t in data["traps"]))
    return MazeConfig(**d)


# -- environment and agent primitives ------------------------------------------------

def env_step(pos, action, cfg: MazeConfig):
    """Move one cell; walls clamp.  Returns ``(pos', reward, done)``."""
    if not (0 <= pos[0] < cfg.n and 0 <= pos[1] < cfg.n):
        raise ValueError("position outside the grid")
    dr, dc = MOVES[action]
    new = (min(max(pos[0] + dr, 0), cfg.n - 1), min(max(pos[1] + dc, 0), cfg.n - 1))
    if new == cfg.cheese_pos:
        return new, cfg.r_best, True
    if cfg.trap_positions and new in cfg.trap_positions:
        return new, cfg.r_worst, True
    return new, cfg.r_step, False


def select_action(potentials, last_action=None):
    """Argmax (lowest index on ties); the winner's potential is halved in place."""
    a = int(np.argmax(potentials))
    potentials[a] *= 0.5
    return a


def rl_eligibility_step(e, state, action, gamma):
    """Decay every entry by ``gamma``, then add one at ``(state, action)``."""
    e *= gamma
    e[state, action] += 1.0
    return e


def reward_modulation(total_reward, cfg: MazeConfig):
    r = total_reward / cfg.r_best
    return 1.0 / (1.0 + math.exp(-r)) - cfg.chi


def rl_weight_update(W, e, total_reward, cfg: MazeConfig):
    """``W + eta * (sigmoid(total / r_best) - chi) * e`` (ideal synapses)."""
    return W + cfg.eta * reward_modulation(total_reward, cfg) * e


# -- agents ----------------------------------------------------------------------------

@dataclass
class HardwareMaze:
    """Crossbar realization of the state-to-action weights."""

    device: dv.DeviceParams = field(default_factory=lambda: dv.DeviceParams(bits=7))
    variability: float | None = None   # sets D_v = C_v when given
    w_max: float = 2.0
    cal: float = 1.0                   # K per eligibility unit
    write_mode: str = "phenomenological"
    recenter_every: int = 10

    def params(self) -> dv.DeviceParams:
        p = self.device
        if self.variability is not None:
            p = replace(p, D_v=self.variability, C_v=self.variability)
        return p


class MazeAgent:
    def __init__(self, cfg: MazeConfig, mode="ideal", hw: HardwareMaze | None = None, seed=0):
        self.cfg = cfg
        self.mode = mode
        self.seed = seed
        rng = stream(seed, "maze-weights")
        self.W = cfg.w_init * rng.random((cfg.n_states, 4))
        self.arr = None
        if mode == "hardware":
            self.hw = hw or HardwareMaze()
            self._build(stream(seed, "maze-devices"))
        elif mode != "ideal":
            raise ValueError("mode must be 'ideal' or 'hardware'")

    def _build(self, rng):
        hw, cfg = self.hw, self.cfg
        p = hw.params()
        # gain so a fresh device moves by eta * e for one eligibility unit
        k = xbar.matched_write_gain(cfg.eta, p, hw.w_max, hw.cal, mode=hw.write_mode)
        p = replace(p, kappa_lin=k) if hw.write_mode == "linear" else replace(p, kappa_set=k)
        self.arr = xbar.new_crossbar(self.W, p, hw.w_max, rng=rng, clip=True, gamma=cfg.gamma,
                                     cal=hw.cal, write_mode=hw.write_mode,
                                     recenter_every=hw.recenter_every)
        self.W = None

    def weights(self):
        if self.mode == "ideal":
            return self.W
        return xbar.stored_weights(self.arr)

    def drive(self, state):
        """Input current into the action neurons for a one-hot state."""
        if self.mode == "ideal":
            return self.W[state]
        x = np.zeros(self.cfg.n_states)
        x[state] = 1.0
        return xbar.spike_integration(self.arr, x)

    def mark(self, e, state, action):
        if self.mode == "ideal":
            return rl_eligibility_step(e, state, action, self.cfg.gamma)
        inc = np.zeros(self.arr.shape)
        inc[state, action] = self.hw.cal
        xbar.e_update_increment(self.arr, inc, inc)
        return rl_eligibility_step(e, state, action, self.cfg.gamma)

    def learn(self, e, total_reward):
        m = reward_modulation(total_reward, self.cfg)
        if self.mode == "ideal":
            self.W = self.W + self.cfg.eta * m * e
            return
        plane = ("pos",) if m > 0 else ("neg",)
        xbar.weight_update_phase(self.arr, planes=plane, gain=abs(m))


@dataclass
class EpisodeRecord:
    steps: int
    total_reward: float
    outcome: str
    rewards: list = field(default_factory=list)
    path: list = field(default_factory=list)


def run_episode(agent: MazeAgent, cfg: MazeConfig, start=None, seed=0, rng=None) -> EpisodeRecord:
    """One episode from ``start`` (or a seeded random free cell), then the
    end-of-episode weight update."""
    cfg = agent.cfg if cfg is None else cfg
    if start is None:
        rng = rng if rng is not None else stream(seed, "maze-start")
        free = [(r, c) for r in range(cfg.n) for c in range(cfg.n)
                if (r, c) != cfg.cheese_pos and (r, c) not in (cfg.trap_positions or ())]
        start = free[int(rng.integers(len(free)))]
    start = tuple(start)
    if start == cfg.cheese_pos or start in (cfg.trap_positions or ()):
        raise ValueError("start cell must be free")
    v = np.zeros(4)
    e = np.zeros((cfg.n_states, 4))
    pos = start
    rewards, path = [], [pos]
    outcome = TIMEOUT
    for _ in range(cfg.max_steps):
        s = cfg.state(pos)
        v = cfg.leak * v + agent.drive(s)
        a = select_action(v)
        e = agent.mark(e, s, a)
        pos, rew, done = env_step(pos, a, cfg)
        rewards.append(rew)
        path.append(pos)
        if done:
            outcome = CHEESE if rew == cfg.r_best else TRAP
            break
    total = float(sum(rewards))
    agent.learn(e, total)
    return EpisodeRecord(steps=len(rewards), total_reward=total, outcome=outcome,
                         rewards=rewards, path=path)


@dataclass
class TrainingRecord:
    episodes_to_benchmark: int   # max_episodes when the benchmark was not reached
    success: bool
    layout: str = ""


def run_training(cfg: MazeConfig, mode="ideal", seed=0, hw: HardwareMaze | None = None,
                 layout_seed=None) -> TrainingRecord:
    """Train until ``benchmark_streak`` consecutive positive-reward episodes."""
    if cfg.cheese_pos is None or cfg.trap_positions is None:
        cfg = place_layout(cfg, stream(seed if layout_seed is None else layout_seed, "maze-layout"))
    agent = MazeAgent(cfg, mode, hw, seed)
    rng = stream(seed, "maze-start")
    streak = 0
    for ep in range(1, cfg.max_episodes + 1):
        rec = run_episode(agent, cfg, rng=rng)
        streak = streak + 1 if rec.total_reward > 0 else 0
        if streak >= cfg.benchmark_streak:
            return TrainingRecord(ep, True, layout_to_json(cfg))
    return TrainingRecord(cfg.max_episodes, False, layout_to_json(cfg))
