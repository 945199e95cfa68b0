"""DQN-family agent: masked epsilon-greedy acting, uniform replay, TD targets."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NoLegalAction, NonFiniteLoss
from .nn import DuelingNet, HeadMode, OptimState, adam_step, forward, forward_backward, init_net


class Variant(enum.Enum):
    DQN = "dqn"
    DOUBLE = "double"
    DUELING = "dueling"

    @property
    def head_mode(self) -> HeadMode:
        return HeadMode.DUELING if self is Variant.DUELING else HeadMode.PLAIN


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.85
    epsilon: float = 0.05
    batch_size: int = 64
    target_sync_period: int = 500
    variant: Variant = Variant.DUELING
    lr: float = 1e-3
    hidden: int = 128
    buffer_capacity: int = 50_000

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.batch_size < 1 or self.target_sync_period < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size, target_sync_period and buffer_capacity must be >= 1")
        object.__setattr__(self, "variant", Variant(self.variant))


@dataclass(frozen=True, eq=False)
class Transition:
    s: np.ndarray
    a: int
    r: float
    s2: np.ndarray
    done: bool
    mask2: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring; the oldest transition is overwritten first."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0
        self.pushed = 0

    def __len__(self):
        return len(self._items)

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._next] = t
        self._next = (self._next + 1) % self.capacity
        self.pushed += 1

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform draw with replacement."""
        if k < 1 or len(self._items) < k:
            raise InsufficientData(f"need {k} transitions, have {len(self._items)}")
        return [self._items[i] for i in rng.integers(0, len(self._items), size=k)]

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[: self._next]


def buffer_push(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.push(transition)


def buffer_sample(buffer: ReplayBuffer, k: int, rng: np.random.Generator) -> list[Transition]:
    return buffer.sample(k, rng)


def select_action(net: DuelingNet, state_vec, legal_mask, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over legal actions; greedy ties go to the lowest index."""
    mask = np.asarray(legal_mask, dtype=bool)
    legal = np.flatnonzero(mask)
    if legal.size == 0:
        raise NoLegalAction("no legal action in this state")
    if rng.random() < epsilon:
        return int(legal[rng.integers(0, legal.size)])
    q = forward(net, state_vec)
    return int(legal[np.argmax(q[legal])])


def _masked(q: np.ndarray, masks: np.ndarray) -> np.ndarray:
    return np.where(masks, q, -np.inf)


def td_targets(variant: Variant, batch: list[Transition], net: DuelingNet, target_net: DuelingNet,
               gamma: float) -> np.ndarray:
    """``r`` for terminal transitions, else ``r + gamma * Q_target(s', a*)``.

    ``a*`` maximises the target net (DQN, dueling) or the online net (Double
    DQN) over the actions legal in ``s'``.
    """
    r = np.array([t.r for t in batch], dtype=float)
    done = np.array([t.done for t in batch], dtype=bool)
    y = r.copy()
    live = np.flatnonzero(~done)
    if live.size == 0:
        return y
    s2 = np.stack([batch[i].s2 for i in live]).astype(float)
    masks = np.stack([batch[i].mask2 for i in live]).astype(bool)
    q_t = forward(target_net, s2)
    if Variant(variant) is Variant.DOUBLE:
        a_star = np.argmax(_masked(forward(net, s2), masks), axis=1)
        nxt = q_t[np.arange(live.size), a_star]
    else:
        nxt = _masked(q_t, masks).max(axis=1)
    y[live] = r[live] + gamma * nxt
    return y


class Agent:
    """Online/target networks, optimizer state, replay buffer and RNG."""

    def __init__(self, input_dim: int, n_actions: int, config: AgentConfig = AgentConfig(), seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.online = init_net(input_dim, n_actions, config.hidden, config.variant.head_mode, seed)
        self.target = self.online.copy()
        self.opt = OptimState.for_net(self.online, config.lr)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.updates = 0

    @property
    def input_dim(self) -> int:
        return self.online.input_dim

    @property
    def n_actions(self) -> int:
        return self.online.n_actions

    def act(self, state_vec, legal_mask, epsilon: float | None = None) -> int:
        eps = self.config.epsilon if epsilon is None else epsilon
        return select_action(self.online, state_vec, legal_mask, eps, self.rng)

    def remember(self, t: Transition) -> None:
        self.buffer.push(t)

    def learn(self) -> float | None:
        """One mini-batch update if the buffer holds a full batch."""
        if len(self.buffer) < self.config.batch_size:
            return None
        return train_step(self, self.buffer.sample(self.config.batch_size, self.rng))


def train_step(agent: Agent, batch: list[Transition]) -> float:
    """One Adam step on the mean squared TD error; returns the pre-update loss.

    Only the taken action's Q receives gradient; targets are constants.
    The target net is synced every ``target_sync_period`` updates.
    """
    if not batch:
        raise ValueError("empty batch")
    cfg = agent.config
    y = td_targets(cfg.variant, batch, agent.online, agent.target, cfg.gamma)
    s = np.stack([t.s for t in batch]).astype(float)
    a = np.array([t.a for t in batch])
    rows = np.arange(len(batch))
    loss_box = {}

    def upstream(q):
        err = q[rows, a] - y
        loss_box["loss"] = float(np.mean(err ** 2))
        g = np.zeros_like(q)
        g[rows, a] = 2.0 * err / len(batch)
        return g

    _, grads = forward_backward(agent.online, s, upstream)
    loss = loss_box["loss"]
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    agent.online, agent.opt = adam_step(agent.online, grads, agent.opt)
    agent.updates += 1
    if agent.updates % cfg.target_sync_period == 0:
        sync_target(agent)
    return loss


def sync_target(agent: Agent) -> None:
    agent.target = agent.online.copy()
