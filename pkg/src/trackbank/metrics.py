"""Per-frame scoring records and the three aggregate tracking metrics.

quality averages per-frame scores where a frame on which both the ground
truth and the prediction are empty counts as 1. accuracy is the mean IoU
over frames with nonzero IoU. robustness is the fraction of visible-target
frames on which the tracker kept any overlap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, InvariantError


@dataclass(frozen=True)
class FrameResult:
    iou: float
    predicted_empty: bool
    gt_empty: bool

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou <= 1.0:
            raise InvariantError(f"iou must lie in [0, 1], got {self.iou}")
        if (self.predicted_empty or self.gt_empty) and self.iou != 0.0:
            raise InvariantError(
                "an empty prediction or empty ground truth carries zero IoU; "
                "the empty-empty agreement is scored by quality(), not stored"
            )

    @property
    def frame_score(self) -> float:
        if self.gt_empty and self.predicted_empty:
            return 1.0
        return self.iou


def _check_nonempty(results: Sequence[FrameResult]) -> None:
    if not results:
        raise ConfigurationError("metrics need at least one frame result")


def quality(results: Sequence[FrameResult]) -> float:
    """Mean per-frame score; empty-empty frames score 1."""
    _check_nonempty(results)
    return sum(r.frame_score for r in results) / len(results)


def accuracy(results: Sequence[FrameResult]) -> float:
    """Mean IoU over frames with nonzero IoU; 0.0 when no frame qualifies."""
    _check_nonempty(results)
    hits = [r.iou for r in results if r.iou > 0.0]
    if not hits:
        return 0.0
    return sum(hits) / len(hits)


def robustness(results: Sequence[FrameResult]) -> float:
    """Fraction of visible-target frames with nonzero IoU; 1.0 when the
    target is never visible."""
    _check_nonempty(results)
    visible = [r for r in results if not r.gt_empty]
    if not visible:
        return 1.0
    return sum(1 for r in visible if r.iou > 0.0) / len(visible)


@dataclass(frozen=True)
class MetricSummary:
    quality: float
    accuracy: float
    robustness: float
    accuracy_degenerate: bool
    robustness_degenerate: bool
    frames: int

    def to_dict(self) -> dict:
        return {
            "quality": self.quality,
            "accuracy": self.accuracy,
            "robustness": self.robustness,
            "accuracy_degenerate": self.accuracy_degenerate,
            "robustness_degenerate": self.robustness_degenerate,
            "frames": self.frames,
        }


def compute_summary(results: Sequence[FrameResult]) -> MetricSummary:
    _check_nonempty(results)
    return MetricSummary(
        quality=quality(results),
        accuracy=accuracy(results),
        robustness=robustness(results),
        accuracy_degenerate=not any(r.iou > 0.0 for r in results),
        robustness_degenerate=all(r.gt_empty for r in results),
        frames=len(results),
    )


def frame_results_from_infos(infos: Iterable) -> list[FrameResult]:
    """Per-frame scoring records for a full episode, frame 0 included.

    Frame 0 carries the prompt and scores 1. A step whose prediction or
    ground truth is empty stores zero IoU; for the remaining steps the
    tracker's q is the frame's IoU.
    """
    results = [FrameResult(iou=1.0, predicted_empty=False, gt_empty=False)]
    for info in infos:
        iou = 0.0 if (info.predicted_empty or info.gt_empty) else info.q
        results.append(
            FrameResult(iou=iou, predicted_empty=info.predicted_empty, gt_empty=info.gt_empty)
        )
    return results


def frame_results_from_trace(trace) -> list[FrameResult]:
    return frame_results_from_infos(step.info for step in trace.steps)


def trace_quality(trace) -> float:
    return quality(frame_results_from_trace(trace))


def format_signed(x: float) -> str:
    return f"{x:+.2f}"


def comparison_table(
    rows: Sequence[tuple[str, float, float, float]],
    baseline: str,
) -> tuple[str, list[dict]]:
    """Aligned text table plus per-method records, deltas against a baseline.

    Each row is (name, quality, accuracy, robustness) with values in [0, 1].
    The text shows percentages to two decimals; non-baseline rows prefix each
    cell with the signed delta against the baseline row.
    """
    if not rows:
        raise ConfigurationError("comparison needs at least one row")
    names = [r[0] for r in rows]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"duplicate method names: {names}")
    if baseline not in names:
        raise ConfigurationError(
            f"baseline {baseline!r} not among methods {', '.join(names)}"
        )
    base = next(r for r in rows if r[0] == baseline)

    records = []
    for name, q, a, r in rows:
        records.append(
            {
                "method": name,
                "baseline": name == baseline,
                "quality_pct": q * 100.0,
                "accuracy_pct": a * 100.0,
                "robustness_pct": r * 100.0,
                "quality_delta_pct": (q - base[1]) * 100.0,
                "accuracy_delta_pct": (a - base[2]) * 100.0,
                "robustness_delta_pct": (r - base[3]) * 100.0,
            }
        )

    def cell(rec: dict, metric: str) -> str:
        pct = f"{rec[metric + '_pct']:.2f}"
        if rec["baseline"]:
            return pct
        return f"{format_signed(rec[metric + '_delta_pct'])} {pct}"

    headers = ["method", "quality [%]", "accuracy [%]", "robustness [%]"]
    body = [
        [rec["method"], cell(rec, "quality"), cell(rec, "accuracy"), cell(rec, "robustness")]
        for rec in records
    ]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in body)) for i in range(len(headers))
    ]
    lines = [
        "  ".join(
            h.ljust(widths[i]) if i == 0 else h.rjust(widths[i])
            for i, h in enumerate(headers)
        )
    ]
    for row in body:
        lines.append(
            "  ".join(
                row[i].ljust(widths[i]) if i == 0 else row[i].rjust(widths[i])
                for i in range(len(row))
            )
        )
    return "\n".join(lines) + "\n", records


def write_frame_records(path: str | Path, results: Iterable[FrameResult]) -> None:
    """One JSON object per frame, t counted from 0."""
    lines = []
    for t, r in enumerate(results):
        lines.append(
            json.dumps(
                {
                    "t": t,
                    "iou": r.iou,
                    "predicted_empty": r.predicted_empty,
                    "gt_empty": r.gt_empty,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_frame_records(path: str | Path) -> list[FrameResult]:
    results = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            results.append(
                FrameResult(
                    iou=float(data["iou"]),
                    predicted_empty=bool(data["predicted_empty"]),
                    gt_empty=bool(data["gt_empty"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"{path}:{i}: malformed frame record: {exc}") from exc
    return results
