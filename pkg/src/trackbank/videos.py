"""Synthetic video descriptions and the scripted families that generate them.

A video is a sequence of frames, each carrying a 1-D angular appearance, a
visibility flag, a difficulty level, and optionally the appearance of a
distractor object shown while the target is hidden. Frame 0 is the prompt
frame and is always visible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvariantError

TWO_PI = 2.0 * math.pi

FAMILIES = ("drift", "occlusion", "distractor")


@dataclass(frozen=True)
class FrameSpec:
    appearance: float
    visible: bool
    difficulty: float = 0.0
    distractor_appearance: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.appearance < TWO_PI:
            raise InvariantError(
                f"appearance must lie in [0, 2*pi), got {self.appearance}"
            )
        if not 0.0 <= self.difficulty < 1.0:
            raise InvariantError(
                f"difficulty must lie in [0, 1), got {self.difficulty}"
            )
        if self.distractor_appearance is not None and not (
            0.0 <= self.distractor_appearance < TWO_PI
        ):
            raise InvariantError(
                f"distractor_appearance must lie in [0, 2*pi), "
                f"got {self.distractor_appearance}"
            )


@dataclass(frozen=True)
class VideoSpec:
    video_id: str
    frames: tuple[FrameSpec, ...]

    def __post_init__(self) -> None:
        if len(self.frames) < 2:
            raise InvariantError("a video needs at least two frames")
        if not self.frames[0].visible:
            raise InvariantError("frame 0 is the prompt frame and must be visible")
        if not self.video_id:
            raise InvariantError("video_id must be non-empty")

    @property
    def length(self) -> int:
        return len(self.frames)


def _wrap(theta: float) -> float:
    return float(theta % TWO_PI)


def generate_video(family: str, length: int, seed: int) -> VideoSpec:
    """Deterministically generate one video of the named family.

    Families:
      drift       target appearance performs a slow random walk, always visible
      occlusion   one contiguous hidden window with an appearance jump across it
      distractor  appearance ramps away from the prompt, then a hidden window
                  shows a distractor near the ramp's end, then the target
                  returns near its original appearance
    """
    if family not in FAMILIES:
        raise ConfigurationError(
            f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}"
        )
    if length < 2:
        raise ConfigurationError(f"length must be at least 2, got {length}")
    rng = np.random.default_rng(seed)
    maker = {"drift": _drift, "occlusion": _occlusion, "distractor": _distractor}[family]
    frames = maker(length, rng)
    return VideoSpec(video_id=f"{family}-L{length}-s{seed}", frames=tuple(frames))


def _drift(length: int, rng: np.random.Generator) -> list[FrameSpec]:
    theta = rng.uniform(0.0, TWO_PI)
    frames = [FrameSpec(appearance=_wrap(theta), visible=True)]
    for _ in range(1, length):
        theta = _wrap(theta + rng.normal(0.0, 0.18))
        frames.append(
            FrameSpec(
                appearance=theta,
                visible=True,
                difficulty=float(rng.uniform(0.0, 0.1)),
            )
        )
    return frames


def _occlusion(length: int, rng: np.random.Generator) -> list[FrameSpec]:
    start = max(1, int(round(length * 0.4)))
    width = max(1, int(round(length * 0.25)))
    if start + width > length:
        width = length - start
    theta = rng.uniform(0.0, TWO_PI)
    frames = [FrameSpec(appearance=_wrap(theta), visible=True)]
    for t in range(1, start):
        theta = _wrap(theta + rng.normal(0.0, 0.12))
        frames.append(
            FrameSpec(appearance=theta, visible=True, difficulty=float(rng.uniform(0.0, 0.1)))
        )
    frozen = _wrap(theta)
    for _ in range(start, start + width):
        frames.append(FrameSpec(appearance=frozen, visible=False))
    # appearance jumps across the occlusion
    sign = 1.0 if rng.random() < 0.5 else -1.0
    theta = _wrap(theta + sign * rng.uniform(math.pi / 3, 2 * math.pi / 3))
    for _ in range(start + width, length):
        frames.append(
            FrameSpec(appearance=_wrap(theta), visible=True, difficulty=float(rng.uniform(0.0, 0.1)))
        )
        theta = _wrap(theta + rng.normal(0.0, 0.05))
    return frames


def _distractor(length: int, rng: np.random.Generator) -> list[FrameSpec]:
    window_start = max(1, int(round(length * 0.45)))
    window_width = max(1, int(round(length * 0.30)))
    if window_start + window_width > length:
        window_width = length - window_start

    theta0 = rng.uniform(0.0, TWO_PI)
    plateau = theta0 + math.pi
    frames = [FrameSpec(appearance=_wrap(theta0), visible=True)]

    # The ramp stays well clear of the distractor's angle, so keeping ramp
    # memories is harmless; only memories of the hidden window itself can
    # make the tracker hallucinate on later window frames.
    ramp_peak = 0.6 * math.pi
    ramp_steps = window_start - 1
    for k in range(1, window_start):
        target = theta0 + ramp_peak * (k / max(1, ramp_steps))
        theta = target + rng.normal(0.0, 0.02)
        frames.append(
            FrameSpec(
                appearance=_wrap(theta),
                visible=True,
                difficulty=float(rng.uniform(0.0, 0.08)),
            )
        )

    for _ in range(window_start, window_start + window_width):
        shown = _wrap(plateau + rng.normal(0.0, 0.03))
        frames.append(
            FrameSpec(
                appearance=shown,
                visible=False,
                distractor_appearance=shown,
            )
        )

    theta = theta0 + rng.normal(0.0, 0.15)
    for _ in range(window_start + window_width, length):
        frames.append(
            FrameSpec(
                appearance=_wrap(theta),
                visible=True,
                difficulty=float(rng.uniform(0.0, 0.08)),
            )
        )
        theta += rng.normal(0.0, 0.05)
    return frames


def video_to_dict(video: VideoSpec) -> dict:
    return {
        "video_id": video.video_id,
        "frames": [
            {
                "appearance": f.appearance,
                "visible": f.visible,
                "difficulty": f.difficulty,
                "distractor_appearance": f.distractor_appearance,
            }
            for f in video.frames
        ],
    }


def video_from_dict(data: dict) -> VideoSpec:
    try:
        frames = tuple(
            FrameSpec(
                appearance=float(f["appearance"]),
                visible=bool(f["visible"]),
                difficulty=float(f.get("difficulty", 0.0)),
                distractor_appearance=(
                    None
                    if f.get("distractor_appearance") is None
                    else float(f["distractor_appearance"])
                ),
            )
            for f in data["frames"]
        )
        return VideoSpec(video_id=str(data["video_id"]), frames=frames)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed video record: {exc}") from exc


def save_video(video: VideoSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(video_to_dict(video), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_video(path: str | Path) -> VideoSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"not a video file: {path} ({exc})") from exc
    return video_from_dict(data)
