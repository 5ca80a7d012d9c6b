"""Episodic environment: one episode tracks one video under a memory policy.

Timing within a step at timestep t: the tracker scores frame t against the
current bank first (that score is the reward), and only then is frame t's
memory offered to the bank. While the bank is still filling, the incoming
memory is appended automatically and any provided action is ignored; those
warm-up steps carry rewards but no decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .bank import (
    Action,
    MemoryBank,
    MemoryEntry,
    action_space,
    apply_action,
    auto_append,
    encode_observation,
    new_bank,
)
from .errors import (
    ConfigurationError,
    InvariantError,
    PreconditionError,
    StateBudgetError,
)
from .videos import VideoSpec

DEFAULT_STATE_BUDGET = 500_000


class Tracker(Protocol):
    def predict(self, t: int, bank: MemoryBank) -> tuple[float, bool]: ...


@dataclass(frozen=True)
class StepInfo:
    q: float
    predicted_empty: bool
    gt_empty: bool
    warmup: bool


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray | None
    reward: float
    done: bool
    info: StepInfo


@dataclass(frozen=True)
class TraceStep:
    observation: np.ndarray
    action: Action | None
    log_prob: float | None
    value_estimate: float | None
    reward: float
    info: StepInfo


@dataclass(frozen=True)
class EpisodeTrace:
    video_id: str
    gamma: float
    steps: tuple[TraceStep, ...]
    final_return: float


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    total = 0.0
    weight = 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total


def episode_return(trace: EpisodeTrace, gamma: float | None = None) -> float:
    """Discounted sum of the trace's rewards, the first step at weight 1."""
    if not trace.steps:
        raise ConfigurationError("cannot score an empty trace")
    g = trace.gamma if gamma is None else gamma
    _check_gamma(g)
    return discounted_return([s.reward for s in trace.steps], g)


class TrackingEnv:
    """Memory-bank control environment over one video and one tracker."""

    def __init__(
        self,
        video: VideoSpec,
        tracker: Tracker,
        capacity: int = 7,
        gamma: float = 1.0,
    ) -> None:
        if video.length < 2:
            raise ConfigurationError("video must have at least two frames")
        _check_gamma(gamma)
        action_space(capacity)  # validates capacity
        self.video = video
        self.tracker = tracker
        self.capacity = capacity
        self.gamma = gamma
        self._bank: MemoryBank | None = None
        self._t = 0
        self._done = True

    @property
    def t(self) -> int:
        return self._t

    @property
    def done(self) -> bool:
        return self._done

    @property
    def bank(self) -> MemoryBank:
        if self._bank is None:
            raise PreconditionError("call reset() before inspecting the bank")
        return self._bank

    @property
    def needs_action(self) -> bool:
        return not self._done and self.bank.is_full

    @property
    def observation(self) -> np.ndarray:
        if self._done:
            raise PreconditionError("episode is done; no observation available")
        return encode_observation(self.bank, self._t, self.video.length)

    def reset(self) -> np.ndarray:
        if hasattr(self.tracker, "start_episode"):
            self.tracker.start_episode()
        self._bank = new_bank(self.capacity, MemoryEntry(frame_index=0, feature_id=0))
        self._t = 1
        self._done = False
        return self.observation

    def step(self, action: Action | None = None) -> StepOutcome:
        if self._done or self._bank is None:
            raise PreconditionError("episode is done; call reset() first")
        t = self._t
        frame = self.video.frames[t]
        q, predicted_empty = self.tracker.predict(t, self._bank)
        if not 0.0 <= q <= 1.0:
            raise InvariantError(f"tracker returned q={q} outside [0, 1] at t={t}")
        info = StepInfo(
            q=float(q),
            predicted_empty=bool(predicted_empty),
            gt_empty=not frame.visible,
            warmup=not self._bank.is_full,
        )
        incoming = MemoryEntry(frame_index=t, feature_id=t)
        if self._bank.is_full:
            if action is None:
                raise PreconditionError(f"bank is full at t={t}; an action is required")
            self._bank = apply_action(self._bank, action, incoming)
        else:
            self._bank = auto_append(self._bank, incoming)
        self._t = t + 1
        self._done = self._t >= self.video.length
        obs = None if self._done else self.observation
        return StepOutcome(observation=obs, reward=info.q, done=self._done, info=info)


SelectFn = Callable[[TrackingEnv], tuple[Action, float | None, float | None]]


def rollout(env: TrackingEnv, select_action: SelectFn | None = None) -> EpisodeTrace:
    """Run one full episode and record it.

    select_action(env) -> (action, log_prob, value) is consulted only when
    the bank is full; it may be None for purely warm-up-length videos.
    """
    obs = env.reset()
    steps: list[TraceStep] = []
    rewards: list[float] = []
    while not env.done:
        if env.needs_action:
            if select_action is None:
                raise PreconditionError("a policy is required once the bank is full")
            action, log_prob, value = select_action(env)
        else:
            action, log_prob, value = None, None, None
        outcome = env.step(action)
        steps.append(
            TraceStep(
                observation=obs,
                action=action,
                log_prob=log_prob,
                value_estimate=value,
                reward=outcome.reward,
                info=outcome.info,
            )
        )
        rewards.append(outcome.reward)
        obs = outcome.observation
    return EpisodeTrace(
        video_id=env.video.video_id,
        gamma=env.gamma,
        steps=tuple(steps),
        final_return=discounted_return(rewards, env.gamma),
    )


def legal_transitions(
    slots: tuple[int, ...], t: int, capacity: int
) -> list[tuple[Action | None, tuple[int, ...]]]:
    """Successor bank states of (slots, t), keyed by the action that reaches them.

    Warm-up states (bank not yet full) have a single successor independent of
    any action, reported with action None.
    """
    if len(slots) < capacity:
        return [(None, slots + (t,))]
    out: list[tuple[Action | None, tuple[int, ...]]] = [(Action.discard(), slots)]
    for i in range(1, capacity):
        out.append((Action.replace(i), slots[:i] + (t,) + slots[i + 1 :]))
    return out


def enumerate_reachable_states(
    video_length: int,
    capacity: int,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> list[tuple[tuple[int, ...], int]]:
    """All (slot-ordered bank, timestep) states reachable from the start.

    States are listed for t in 1..video_length-1 in ascending (t, slots)
    order. Raises StateBudgetError once the count would exceed state_budget.
    """
    if video_length < 2:
        raise ConfigurationError("video_length must be at least 2")
    action_space(capacity)
    current: set[tuple[int, ...]] = {(0,)}
    states: list[tuple[tuple[int, ...], int]] = []
    count = 0
    for t in range(1, video_length):
        for slots in sorted(current):
            count += 1
            if count > state_budget:
                raise StateBudgetError(
                    f"reachable states at t={t} exceed the state budget "
                    f"({state_budget}); raise the budget or shrink the problem"
                )
            states.append((slots, t))
        if t + 1 < video_length:
            nxt: set[tuple[int, ...]] = set()
            for slots in current:
                for _, succ in legal_transitions(slots, t, capacity):
                    nxt.add(succ)
            current = nxt
    return states


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")
