"""Hand-built videos, scripted tables, and observations shared across tests."""

import numpy as np

from trackbank import (
    FrameSpec,
    ScriptedTable,
    VideoSpec,
    enumerate_reachable_states,
)
from trackbank.bank import encode_observation_bits


def angles_video(angles, visible=None, difficulty=None, distractors=None, video_id="clip"):
    frames = []
    for i, theta in enumerate(angles):
        frames.append(
            FrameSpec(
                appearance=float(theta),
                visible=True if visible is None else bool(visible[i]),
                difficulty=0.0 if difficulty is None else float(difficulty[i]),
                distractor_appearance=None if distractors is None else distractors[i],
            )
        )
    return VideoSpec(video_id=video_id, frames=tuple(frames))


def flat_video(length, video_id="flat"):
    """Every frame at the same angle, so any bank scores q = 1."""
    return angles_video([0.0] * length, video_id=video_id)


def table_from_fn(video_length, capacity, fn):
    """Total scripted table with (q, predicted_empty) = fn(t, slots)."""
    entries = {}
    for slots, t in enumerate_reachable_states(video_length, capacity):
        entries[(t, slots)] = fn(t, slots)
    return ScriptedTable(video_length=video_length, capacity=capacity, entries=entries)


def pivotal_table():
    """T=4, N=2: keeping frame 1 at t=2 is worth 1.0 at t=3, swapping only 0.2."""
    rewards = {
        (1, (0,)): 0.5,
        (2, (0, 1)): 0.25,
        (3, (0, 1)): 1.0,
        (3, (0, 2)): 0.2,
    }
    return ScriptedTable(
        video_length=4,
        capacity=2,
        entries={key: (q, False) for key, q in rewards.items()},
    )


def random_table(video_length, capacity, rng):
    """Total table with q drawn from {0.00, 0.01, ..., 1.00} per state."""
    return table_from_fn(
        video_length,
        capacity,
        lambda t, slots: (float(rng.integers(0, 101)) / 100.0, False),
    )


def random_observation(rng, video_length, capacity):
    """An observation the environment could actually emit: frame 0 stored,
    capacity-1 other past frames stored, and the current timestep flagged."""
    t = int(rng.integers(capacity, video_length))
    stored = rng.choice(np.arange(1, t), size=capacity - 1, replace=False)
    return encode_observation_bits(
        (0, *sorted(int(s) for s in stored)), t, video_length
    )
