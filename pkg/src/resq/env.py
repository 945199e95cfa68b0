"""Area-wise optimal-stopping environment.

One episode is one cost area. The agent starts on an all-zero placeholder
session where waiting is the only move; each wait reveals the next real
session, and accepting any quote of the latest session ends the episode.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .coverage import CostArea
from .errors import AreaTooLarge, EpisodeFinished, IllegalAction
from .pricedata import MICRO


@dataclass(frozen=True)
class RewardParams:
    h: float = 0.01
    r_global_min: float = 1.0
    r_timeout: float = 2.0
    t_sv_minutes: float = 1.0

    def __post_init__(self):
        if self.h <= 0 or self.r_global_min <= 0 or self.r_timeout <= 0 or self.t_sv_minutes <= 0:
            raise ValueError("reward parameters must be positive")


@dataclass(frozen=True)
class Accept:
    m: int
    r: int


@dataclass(frozen=True)
class Wait:
    pass


WAIT = Wait()
Action = Union[Accept, Wait]


@dataclass(frozen=True)
class EncoderDims:
    n_max: int = 32
    m_max: int = 3
    r_max: int = 32

    @property
    def block(self) -> int:
        return self.n_max * self.m_max * self.r_max

    @property
    def input_dim(self) -> int:
        return 2 * self.block + 2

    @property
    def n_actions(self) -> int:
        return self.m_max * self.r_max + 1

    @property
    def wait_index(self) -> int:
        return self.m_max * self.r_max

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_max, self.m_max, self.r_max)


@dataclass(frozen=True)
class EnvState:
    """``k`` real sessions revealed; rows ``0..k-1`` of the tensor are visible."""

    area: CostArea = field(repr=False)
    k: int
    done: bool
    params: RewardParams = field(default_factory=RewardParams, repr=False)
    wait_at_end: bool = False

    @property
    def elapsed_minutes(self) -> float:
        return self.k * self.params.t_sv_minutes


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool
    info: dict


def reset(area: CostArea, params: RewardParams = RewardParams(), wait_at_end: bool = False) -> EnvState:
    """Start an episode on the zero-price initial session.

    With ``wait_at_end`` the agent may also wait on the last session, which
    then times out instead of forcing an accept.
    """
    return EnvState(area, 0, False, params, wait_at_end)


def legal_actions(state: EnvState) -> list[Action]:
    if state.done:
        raise EpisodeFinished("episode already finished")
    N, M, R = state.area.shape
    acts: list[Action] = []
    if state.k >= 1:
        acts = [Accept(m, r) for m in range(M) for r in range(R)]
    if state.k < N or state.wait_at_end:
        acts.append(WAIT)
    return acts


def is_legal(state: EnvState, action: Action) -> bool:
    if state.done:
        return False
    N, M, R = state.area.shape
    if isinstance(action, Wait):
        return state.k < N or state.wait_at_end
    if isinstance(action, Accept):
        return state.k >= 1 and 0 <= action.m < M and 0 <= action.r < R
    return False


def wait_penalty(k: int, params: RewardParams) -> float:
    """Reward for waiting after ``k`` revealed sessions (0 on the start session)."""
    if k == 0:
        return 0.0
    return -math.exp(params.h * k * params.t_sv_minutes)


def compute_reward(state: EnvState, action: Action, area: CostArea, params: RewardParams) -> float:
    if not is_legal(state, action):
        raise IllegalAction(f"{action} not legal at k={state.k}")
    if isinstance(action, Wait):
        if state.k == area.n_sessions:
            return -params.r_timeout
        return wait_penalty(state.k, params)
    price = int(area.prices_micro[state.k - 1, action.m, action.r])
    gmin = area.global_min_micro
    if price == gmin:
        return params.r_global_min
    return (gmin - price) / MICRO


def step(state: EnvState, action: Action) -> StepOutcome:
    if state.done:
        raise EpisodeFinished("episode already finished")
    area, params = state.area, state.params
    reward = compute_reward(state, action, area, params)
    info = {"session": state.k, "global_min": area.global_min_micro / MICRO, "accepted_price": None}
    if isinstance(action, Accept):
        info["accepted_price"] = int(area.prices_micro[state.k - 1, action.m, action.r]) / MICRO
        nxt = EnvState(area, state.k, True, params, state.wait_at_end)
    elif state.k == area.n_sessions:
        info["timeout"] = True
        nxt = EnvState(area, state.k, True, params, state.wait_at_end)
    else:
        nxt = EnvState(area, state.k + 1, False, params, state.wait_at_end)
    return StepOutcome(nxt, reward, nxt.done, info)


# -- fixed-size encoding for the Q-network -----------------------------------

def action_index(action: Action, dims: EncoderDims) -> int:
    if isinstance(action, Wait):
        return dims.wait_index
    return action.m * dims.r_max + action.r


def index_action(i: int, dims: EncoderDims) -> Action:
    if i == dims.wait_index:
        return WAIT
    if not 0 <= i < dims.wait_index:
        raise IllegalAction(f"action index {i} out of range")
    return Accept(i // dims.r_max, i % dims.r_max)


def _check_dims(area: CostArea, dims: EncoderDims):
    N, M, R = area.shape
    if N > dims.n_max or M > dims.m_max or R > dims.r_max:
        raise AreaTooLarge(f"area {area.shape} exceeds encoder dims {dims.as_tuple()}")


def legal_mask(state: EnvState, dims: EncoderDims) -> np.ndarray:
    mask = np.zeros(dims.n_actions, dtype=bool)
    if state.done:
        return mask
    _check_dims(state.area, dims)
    N, M, R = state.area.shape
    if state.k >= 1:
        mask[: dims.wait_index].reshape(dims.m_max, dims.r_max)[:M, :R] = True
    if state.k < N or state.wait_at_end:
        mask[dims.wait_index] = True
    return mask


def encode_state(state: EnvState, dims: EncoderDims = EncoderDims()) -> np.ndarray:
    """Revealed prices (scaled by their max), presence mask, then k and t scalars.

    Sessions are laid out newest first, so the quotes that can be accepted
    always occupy the same input positions.
    """
    area = state.area
    _check_dims(area, dims)
    N, M, R = area.shape
    k = state.k
    prices = np.zeros((dims.n_max, dims.m_max, dims.r_max))
    mask = np.zeros_like(prices)
    if k:
        seen = area.prices_micro[:k][::-1].astype(float)
        top = seen.max()
        prices[:k, :M, :R] = seen / (top if top > 0 else 1.0)
        mask[:k, :M, :R] = 1.0
    scalars = np.array([k / dims.n_max, state.elapsed_minutes / (dims.n_max * state.params.t_sv_minutes)])
    return np.concatenate([prices.ravel(), mask.ravel(), scalars])


def trace_line(k: int, action: Action, reward: float, done: bool) -> str:
    """One JSON-lines record of an episode trace."""
    act = "wait" if isinstance(action, Wait) else {"m": action.m, "r": action.r}
    return json.dumps({"k": k, "action": act, "reward": reward, "done": done})
