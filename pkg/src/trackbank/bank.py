"""Fixed-capacity memory bank with a pinned initial slot.

The bank is the state a memory-update policy controls. Slot 0 permanently
holds the frame-0 memory; slots 1..capacity-1 hold replaceable memories of
later frames. All operations are pure and return new banks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, InvariantError, PreconditionError

DEFAULT_CAPACITY = 7


@dataclass(frozen=True)
class MemoryEntry:
    """One stored memory: the frame it was taken from and its feature tag."""

    frame_index: int
    feature_id: int

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise InvariantError(
                f"frame_index must be non-negative, got {self.frame_index}"
            )


@dataclass(frozen=True)
class Action:
    """A memory-update decision: discard the incoming memory, or replace one slot.

    ``slot is None`` encodes the discard action. Replacement targets are
    limited to slots 1..capacity-1; slot 0 is pinned and cannot be named, so
    an action touching it is unrepresentable.
    """

    slot: int | None = None

    def __post_init__(self) -> None:
        if self.slot is not None and self.slot < 1:
            raise InvariantError(f"slot {self.slot} is not a legal replacement target")

    @classmethod
    def discard(cls) -> "Action":
        return cls(None)

    @classmethod
    def replace(cls, slot: int) -> "Action":
        return cls(slot)

    @property
    def is_discard(self) -> bool:
        return self.slot is None

    def describe(self) -> str:
        return "discard" if self.slot is None else f"replace:{self.slot}"


def action_space(capacity: int) -> tuple[Action, ...]:
    """All legal actions for a full bank, in canonical order.

    Index 0 is discard; index i (1 <= i < capacity) replaces slot i. The
    size of the action space therefore equals the capacity.
    """
    _check_capacity(capacity)
    return (Action.discard(),) + tuple(Action.replace(i) for i in range(1, capacity))


def action_to_index(action: Action) -> int:
    return 0 if action.slot is None else action.slot


def action_from_index(index: int, capacity: int) -> Action:
    _check_capacity(capacity)
    if not 0 <= index < capacity:
        raise ConfigurationError(
            f"action index {index} out of range for capacity {capacity}"
        )
    return Action.discard() if index == 0 else Action.replace(index)


def parse_action(text: str) -> Action:
    """Inverse of Action.describe()."""
    if text == "discard":
        return Action.discard()
    if text.startswith("replace:"):
        try:
            return Action.replace(int(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigurationError(f"unrecognized action {text!r}")


@dataclass(frozen=True)
class MemoryBank:
    capacity: int
    slots: tuple[MemoryEntry, ...]

    def __post_init__(self) -> None:
        _check_capacity(self.capacity)
        if not self.slots:
            raise InvariantError("bank must hold at least the frame-0 memory")
        if len(self.slots) > self.capacity:
            raise InvariantError(
                f"{len(self.slots)} entries exceed capacity {self.capacity}"
            )
        if self.slots[0].frame_index != 0:
            raise InvariantError("slot 0 must hold the frame-0 memory")
        frames = [e.frame_index for e in self.slots]
        if len(set(frames)) != len(frames):
            raise InvariantError(f"duplicate frame indices in bank: {frames}")

    @property
    def is_full(self) -> bool:
        return len(self.slots) == self.capacity

    @property
    def frame_indices(self) -> tuple[int, ...]:
        return tuple(e.frame_index for e in self.slots)

    @property
    def newest_frame(self) -> int:
        return max(e.frame_index for e in self.slots)


def new_bank(capacity: int, initial: MemoryEntry) -> MemoryBank:
    """A fresh bank holding only the frame-0 memory in slot 0."""
    if initial.frame_index != 0:
        raise ConfigurationError(
            f"initial entry must come from frame 0, got {initial.frame_index}"
        )
    return MemoryBank(capacity=capacity, slots=(initial,))


def bank_from_frames(frame_indices: Iterable[int], capacity: int) -> MemoryBank:
    """Rebuild a bank state from slot-ordered frame indices.

    Feature tags are set equal to the frame indices, matching how the
    environment creates entries.
    """
    entries = tuple(MemoryEntry(int(f), int(f)) for f in frame_indices)
    return MemoryBank(capacity=capacity, slots=entries)


def auto_append(bank: MemoryBank, incoming: MemoryEntry) -> MemoryBank:
    """Warm-up growth: append the incoming memory to the first free slot."""
    if bank.is_full:
        raise PreconditionError("bank is full; auto_append only applies while filling")
    _check_incoming(bank, incoming)
    return MemoryBank(capacity=bank.capacity, slots=bank.slots + (incoming,))


def apply_action(bank: MemoryBank, action: Action, incoming: MemoryEntry) -> MemoryBank:
    """Apply a discard/replace decision to a full bank."""
    if not bank.is_full:
        raise PreconditionError(
            "bank is not full; updates are automatic until capacity is reached"
        )
    _check_incoming(bank, incoming)
    if action.is_discard:
        return bank
    if action.slot >= bank.capacity:
        raise ConfigurationError(
            f"slot {action.slot} out of range for capacity {bank.capacity}"
        )
    slots = list(bank.slots)
    slots[action.slot] = incoming
    return MemoryBank(capacity=bank.capacity, slots=tuple(slots))


def encode_observation(bank: MemoryBank, t: int, video_length: int) -> np.ndarray:
    """Binary policy observation: ones at stored frame indices and at t."""
    return encode_observation_bits(bank.frame_indices, t, video_length)


def encode_observation_bits(
    frame_indices: tuple[int, ...], t: int, video_length: int
) -> np.ndarray:
    if not 0 <= t < video_length:
        raise ConfigurationError(f"t={t} out of range for video length {video_length}")
    obs = np.zeros(video_length, dtype=np.float64)
    for f in frame_indices:
        if f >= t:
            raise InvariantError(
                f"stored frame {f} is not in the past of timestep {t}"
            )
        obs[f] = 1.0
    obs[t] = 1.0
    return obs


def _check_capacity(capacity: int) -> None:
    if capacity < 2:
        raise ConfigurationError(f"capacity must be at least 2, got {capacity}")


def _check_incoming(bank: MemoryBank, incoming: MemoryEntry) -> None:
    if incoming.frame_index <= bank.newest_frame:
        raise InvariantError(
            f"incoming frame {incoming.frame_index} is not newer than the bank "
            f"(newest stored frame {bank.newest_frame})"
        )
