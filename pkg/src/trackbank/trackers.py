"""Tracker stand-ins: a closed-form appearance model and a scripted table.

The synthetic tracker scores a frame by the best cosine match between the
frame's appearance angle and the appearances of the frames held in the bank.
The scripted tracker replays a precomputed (timestep, bank) -> score table,
which also serves as the interchange format for external tracker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .bank import MemoryBank, bank_from_frames
from .env import enumerate_reachable_states, DEFAULT_STATE_BUDGET, Tracker
from .errors import ConfigurationError, InvariantError, PreconditionError
from .videos import FrameSpec, VideoSpec


@dataclass(frozen=True)
class SimParams:
    """Knobs of the synthetic appearance model.

    hallucination_threshold: distractor similarity at or above which the
        tracker wrongly reports the target while it is hidden.
    similarity_floor: best-match similarity below which a visible target is
        reported as absent.
    """

    hallucination_threshold: float = 0.5
    similarity_floor: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.hallucination_threshold < 1.0:
            raise ConfigurationError(
                f"hallucination_threshold must lie in (0, 1), "
                f"got {self.hallucination_threshold}"
            )
        if not 0.0 <= self.similarity_floor < 1.0:
            raise ConfigurationError(
                f"similarity_floor must lie in [0, 1), got {self.similarity_floor}"
            )


def _best_similarity(target: float, bank: MemoryBank, video: VideoSpec) -> float:
    best = 0.0
    for entry in bank.slots:
        fid = entry.feature_id
        if not 0 <= fid < video.length:
            raise InvariantError(
                f"feature_id {fid} does not index a frame of video "
                f"'{video.video_id}' (length {video.length})"
            )
        sim = math.cos(target - video.frames[fid].appearance)
        if sim > best:
            best = sim
    return best


def simulate(
    frame: FrameSpec,
    bank: MemoryBank,
    video: VideoSpec,
    params: SimParams | None = None,
) -> tuple[float, bool]:
    """Score one frame against a bank. Returns (q, predicted_empty).

    Visible target: q is the best clamped cosine similarity, shrunk by the
    frame's difficulty; the prediction is empty only below the similarity
    floor. Hidden target: the tracker hallucinates whenever some stored
    memory matches the distractor at or above the hallucination threshold,
    scoring 0; staying silent scores 1.
    """
    p = params or SimParams()
    if frame.visible:
        sim_max = _best_similarity(frame.appearance, bank, video)
        q = min(max(sim_max * (1.0 - frame.difficulty), 0.0), 1.0)
        return q, sim_max < p.similarity_floor
    if frame.distractor_appearance is None:
        d_sim = 0.0
    else:
        d_sim = _best_similarity(frame.distractor_appearance, bank, video)
    predicted_empty = d_sim < p.hallucination_threshold
    return (1.0 if predicted_empty else 0.0), predicted_empty


class SyntheticTracker:
    """Closed-form tracker over one video. Deterministic and replayable."""

    supports_lookahead = True

    def __init__(self, video: VideoSpec, params: SimParams | None = None) -> None:
        self.video = video
        self.params = params or SimParams()

    def predict(self, t: int, bank: MemoryBank) -> tuple[float, bool]:
        if not 0 <= t < self.video.length:
            raise ConfigurationError(
                f"t={t} out of range for video '{self.video.video_id}'"
            )
        return simulate(self.video.frames[t], bank, self.video, self.params)


TableKey = tuple[int, tuple[int, ...]]


@dataclass(frozen=True)
class ScriptedTable:
    """Exact (timestep, slot-ordered bank) -> (q, predicted_empty) lookup.

    Total over every state reachable under its (video_length, capacity);
    totality is checked by verify_total and on load.
    """

    video_length: int
    capacity: int
    entries: dict[TableKey, tuple[float, bool]]

    def lookup(self, t: int, frame_indices: tuple[int, ...]) -> tuple[float, bool]:
        key = (t, tuple(frame_indices))
        try:
            return self.entries[key]
        except KeyError:
            raise PreconditionError(
                f"no table entry for t={t} bank={','.join(map(str, frame_indices))}"
            ) from None

    def verify_total(self, state_budget: int = DEFAULT_STATE_BUDGET) -> None:
        for slots, t in enumerate_reachable_states(
            self.video_length, self.capacity, state_budget
        ):
            if (t, slots) not in self.entries:
                raise InvariantError(
                    f"table is missing reachable state t={t} "
                    f"bank={','.join(map(str, slots))}"
                )

    def save(self, path: str | Path) -> None:
        lines = [f"{self.video_length} {self.capacity}"]
        for (t, slots) in sorted(self.entries):
            q, pe = self.entries[(t, slots)]
            lines.append(
                f"{t}\t{','.join(map(str, slots))}\t{q!r}\t{'true' if pe else 'false'}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(
        cls,
        path: str | Path,
        verify: bool = True,
        state_budget: int = DEFAULT_STATE_BUDGET,
    ) -> "ScriptedTable":
        text = Path(path).read_text(encoding="utf-8")
        table = cls.parse(text, source=str(path))
        if verify:
            table.verify_total(state_budget)
        return table

    @classmethod
    def parse(cls, text: str, source: str = "<string>") -> "ScriptedTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ConfigurationError(f"{source}: empty table file")
        head = lines[0].split()
        if len(head) != 2:
            raise ConfigurationError(
                f"{source}: header must be 'video_length capacity', got {lines[0]!r}"
            )
        try:
            video_length, capacity = int(head[0]), int(head[1])
        except ValueError:
            raise ConfigurationError(f"{source}: non-integer header {lines[0]!r}") from None
        entries: dict[TableKey, tuple[float, bool]] = {}
        for i, line in enumerate(lines[1:], start=2):
            parts = line.split("\t")
            if len(parts) != 4:
                raise ConfigurationError(
                    f"{source}:{i}: expected 4 tab-separated fields, got {len(parts)}"
                )
            t_text, slots_text, q_text, pe_text = parts
            try:
                t = int(t_text)
                slots = tuple(int(s) for s in slots_text.split(","))
                q = float(q_text)
            except ValueError:
                raise ConfigurationError(f"{source}:{i}: malformed row {line!r}") from None
            if pe_text not in ("true", "false"):
                raise ConfigurationError(
                    f"{source}:{i}: predicted_empty must be true/false, got {pe_text!r}"
                )
            if not 0.0 <= q <= 1.0:
                raise ConfigurationError(f"{source}:{i}: q={q} outside [0, 1]")
            key = (t, slots)
            if key in entries:
                raise ConfigurationError(f"{source}:{i}: duplicate state {key}")
            entries[key] = (q, pe_text == "true")
        return cls(video_length=video_length, capacity=capacity, entries=entries)


class ScriptedTracker:
    """Replays a ScriptedTable. Deterministic and replayable."""

    supports_lookahead = True

    def __init__(self, table: ScriptedTable) -> None:
        self.table = table

    def predict(self, t: int, bank: MemoryBank) -> tuple[float, bool]:
        return self.table.lookup(t, bank.frame_indices)


def dump_scripted_table(
    tracker: Tracker,
    video_length: int,
    capacity: int,
    state_budget: int = DEFAULT_STATE_BUDGET,
) -> ScriptedTable:
    """Record a deterministic tracker's outputs over every reachable state."""
    entries: dict[TableKey, tuple[float, bool]] = {}
    for slots, t in enumerate_reachable_states(video_length, capacity, state_budget):
        q, pe = tracker.predict(t, bank_from_frames(slots, capacity))
        entries[(t, slots)] = (float(q), bool(pe))
    return ScriptedTable(video_length=video_length, capacity=capacity, entries=entries)
