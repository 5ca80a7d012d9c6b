"""Reference update policies and the exact dynamic-programming oracle.

FIFO replaces the slot holding the oldest non-pinned memory. Greedy asks the
tracker which single update maximizes the very next frame's score. The
oracle runs backward induction over every reachable bank state and is exact
for deterministic trackers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bank import (
    Action,
    MemoryBank,
    MemoryEntry,
    action_from_index,
    action_space,
    apply_action,
    bank_from_frames,
    parse_action,
)
from .env import (
    DEFAULT_STATE_BUDGET,
    TrackingEnv,
    Tracker,
    enumerate_reachable_states,
    legal_transitions,
)
from .errors import ConfigurationError, PreconditionError, UnsupportedCapabilityError
from .nets import PolicyParams, greedy_action_index, policy_forward
from .videos import VideoSpec


def fifo_policy(bank: MemoryBank) -> Action:
    """Replace the slot whose memory is oldest, never touching slot 0."""
    if not bank.is_full:
        raise PreconditionError("fifo applies once the bank is full")
    slots = bank.frame_indices
    oldest = min(range(1, len(slots)), key=lambda i: slots[i])
    return Action.replace(oldest)


def random_policy(rng: np.random.Generator, capacity: int) -> Action:
    """Uniform draw over the full action space (discard included)."""
    actions = action_space(capacity)
    return actions[int(rng.integers(len(actions)))]


def _require_lookahead(tracker) -> None:
    if not getattr(tracker, "supports_lookahead", False):
        raise UnsupportedCapabilityError(
            "this tracker cannot be queried on hypothetical banks; "
            "lookahead-based policies need a synthetic or scripted tracker"
        )


def greedy_policy(env: TrackingEnv, tracker: Tracker | None = None) -> Action:
    """One-step lookahead: pick the update maximizing the next frame's score.

    Ties resolve to discard, then to the lowest slot.
    """
    tracker = tracker if tracker is not None else env.tracker
    _require_lookahead(tracker)
    if not env.needs_action:
        raise PreconditionError("greedy applies once the bank is full")
    t = env.t
    if t + 1 >= env.video.length:
        return Action.discard()
    incoming = MemoryEntry(frame_index=t, feature_id=t)
    best_action = None
    best_q = -np.inf
    for action in action_space(env.capacity):
        candidate = apply_action(env.bank, action, incoming)
        q, _ = tracker.predict(t + 1, candidate)
        if q > best_q:
            best_action, best_q = action, q
    return best_action


@dataclass(frozen=True)
class OracleSolution:
    optimal_return: float
    policy: dict[tuple[int, tuple[int, ...]], Action]
    state_count: int


def dp_oracle(
    video: VideoSpec,
    tracker: Tracker,
    capacity: int = 7,
    gamma: float = 1.0,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> OracleSolution:
    """Backward induction over all reachable (bank, t) states.

    Exact for deterministic trackers; ties break to discard, then to the
    lowest replacement slot.
    """
    _require_lookahead(tracker)
    if not 0.0 < gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in (0, 1], got {gamma}")
    t_len = video.length
    states = enumerate_reachable_states(t_len, capacity, state_budget)
    by_t: dict[int, list[tuple[int, ...]]] = {}
    for slots, t in states:
        by_t.setdefault(t, []).append(slots)

    values: dict[tuple[int, tuple[int, ...]], float] = {}
    policy: dict[tuple[int, tuple[int, ...]], Action] = {}
    for t in range(t_len - 1, 0, -1):
        for slots in by_t[t]:
            q, _ = tracker.predict(t, bank_from_frames(slots, capacity))
            transitions = legal_transitions(slots, t, capacity)
            if t + 1 >= t_len:
                future = 0.0
                if len(slots) == capacity:
                    policy[(t, slots)] = Action.discard()
            elif transitions[0][0] is None:
                future = values[(t + 1, transitions[0][1])]
            else:
                best_action, future = None, -np.inf
                for action, succ in transitions:
                    v = values[(t + 1, succ)]
                    if v > future:
                        best_action, future = action, v
                policy[(t, slots)] = best_action
            values[(t, slots)] = float(q) + gamma * future
    return OracleSolution(
        optimal_return=values[(1, (0,))],
        policy=policy,
        state_count=len(states),
    )


def save_oracle_policy(path: str | Path, solution: OracleSolution) -> None:
    """Dump the decision table, one state per line, for inspection."""
    lines = [f"optimal_return\t{solution.optimal_return!r}"]
    for (t, slots) in sorted(solution.policy):
        action = solution.policy[(t, slots)]
        lines.append(f"{t}\t{','.join(map(str, slots))}\t{action.describe()}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_oracle_policy(path: str | Path) -> OracleSolution:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("optimal_return\t"):
        raise ConfigurationError(f"{path}: missing optimal_return header")
    optimal_return = float(lines[0].split("\t", 1)[1])
    policy: dict[tuple[int, tuple[int, ...]], Action] = {}
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ConfigurationError(f"{path}:{i}: expected 3 fields, got {len(parts)}")
        t = int(parts[0])
        slots = tuple(int(s) for s in parts[1].split(","))
        policy[(t, slots)] = parse_action(parts[2])
    return OracleSolution(optimal_return=optimal_return, policy=policy, state_count=len(policy))


class FifoPolicy:
    """Rollout adapter: always replace the oldest non-pinned memory."""

    name = "fifo"

    def select(self, env: TrackingEnv) -> tuple[Action, None, None]:
        return fifo_policy(env.bank), None, None


class RandomPolicy:
    name = "random"

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def select(self, env: TrackingEnv) -> tuple[Action, None, None]:
        return random_policy(self.rng, env.capacity), None, None


class GreedyPolicy:
    name = "greedy"

    def select(self, env: TrackingEnv) -> tuple[Action, None, None]:
        return greedy_policy(env), None, None


class OraclePolicy:
    name = "oracle"

    def __init__(self, solution: OracleSolution) -> None:
        self.solution = solution

    def select(self, env: TrackingEnv) -> tuple[Action, None, None]:
        key = (env.t, env.bank.frame_indices)
        try:
            return self.solution.policy[key], None, None
        except KeyError:
            raise PreconditionError(
                f"oracle policy has no decision for t={key[0]} bank={key[1]}; "
                "was it computed for a different video or capacity?"
            ) from None


class LearnedPolicy:
    """Deterministic greedy readout of trained parameters."""

    name = "learned"

    def __init__(self, params: PolicyParams) -> None:
        self.params = params

    def select(self, env: TrackingEnv) -> tuple[Action, float, float]:
        probs, value = policy_forward(self.params, env.observation)
        idx = greedy_action_index(probs)
        return (
            action_from_index(idx, env.capacity),
            float(np.log(probs[idx])),
            value,
        )
