"""Future-tube assembly: from payload boxes to a full predicted segment.

A tube observed up to frame t carries, through its member micro-tubes,
regressed future boxes reaching at most ``t - delta + n * delta_f``. This
module copies those payload boxes into the future segment (latest member
wins on conflicts), then fills every remaining frame up to the video end
by constant-velocity extrapolation of the already-built sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .geometry import BoundingBox, FrameSize, clip_box, extrapolate
from .linking import ActionTube

VELOCITY_WINDOW = 5


@dataclass(frozen=True)
class PredictionHorizon:
    """How far a detection's payload reaches: past offset, future step, steps."""

    delta_p: int = 0
    delta_f: int = 1
    n: int = 0

    def __post_init__(self) -> None:
        if self.delta_p < 0:
            raise ValueError(f"past offset must be >= 0, got {self.delta_p}")
        if self.delta_f < 1:
            raise ValueError(f"future step must be >= 1, got {self.delta_f}")
        if self.n < 0:
            raise ValueError(f"future step count must be >= 0, got {self.n}")


def assemble_future(
    tube: ActionTube,
    now: int,
    horizon: PredictionHorizon,
    aggregate: str = "latest",
) -> dict[int, BoundingBox]:
    """Collect payload future boxes of a tube's members into a frame map.

    Covers frames in ``(now, last_member_t + n * delta_f]``. When several
    members predict the same frame the most recent member wins
    (``aggregate="latest"``, it is conditioned on the newest input);
    ``aggregate="mean"`` averages the candidates coordinate-wise instead.
    Frames no payload covers are left absent for extrapolation.
    """
    if aggregate not in ("latest", "mean"):
        raise ValueError(f"unknown aggregate mode {aggregate!r}")
    if not tube.members:
        raise ValueError("tube has no member micro-tubes")
    if horizon.n == 0:
        return {}

    range_end = tube.members[-1].t + horizon.n * horizon.delta_f
    collected: dict[int, list[BoundingBox]] = {}
    for member in tube.members:
        payload = member.predictions
        if payload is None:
            continue
        if len(payload.future_boxes) != horizon.n:
            raise ValueError(
                f"payload carries {len(payload.future_boxes)} future boxes, horizon says {horizon.n}"
            )
        for k, box in enumerate(payload.future_boxes, start=1):
            f = member.t + k * horizon.delta_f
            if now < f <= range_end:
                collected.setdefault(f, []).append(box)

    out: dict[int, BoundingBox] = {}
    for f in sorted(collected):
        boxes = collected[f]
        if aggregate == "latest":
            out[f] = boxes[-1]
        else:
            out[f] = BoundingBox(
                sum(b.x_min for b in boxes) / len(boxes),
                sum(b.y_min for b in boxes) / len(boxes),
                sum(b.x_max for b in boxes) / len(boxes),
                sum(b.y_max for b in boxes) / len(boxes),
            )
    return out


def predict_full_tube(
    tube: ActionTube,
    now: int,
    video_length: int,
    horizon: PredictionHorizon,
    frame: FrameSize,
    aggregate: str = "latest",
) -> ActionTube:
    """Complete a tube with a predicted segment covering ``(now, T]``.

    Payload boxes are placed first (clipped to the frame); every frame they
    leave open, including the whole tail past the payload reach, is filled
    by extrapolating the last ``VELOCITY_WINDOW`` boxes of the combined
    detected-plus-assembled sequence. At ``now >= T`` the predicted
    segment is empty and the detected segment is untouched.
    """
    if not tube.detected:
        raise ValueError("empty tube")
    if now < tube.last_detected_frame:
        raise ValueError(
            f"observation frontier {now} lies inside the detected segment "
            f"(ends at {tube.last_detected_frame})"
        )
    if now >= video_length:
        return replace(tube, predicted={})

    assembled = {
        f: clip_box(box, frame)
        for f, box in assemble_future(tube, now, horizon, aggregate).items()
        if f <= video_length
    }

    known = sorted({**tube.detected, **assembled}.items())
    predicted = dict(assembled)
    missing = [f for f in range(now + 1, video_length + 1) if f not in assembled]
    runs: list[list[int]] = []
    for f in missing:
        if runs and runs[-1][-1] == f - 1:
            runs[-1].append(f)
        else:
            runs.append([f])
    for run in runs:
        history = [(f, b) for f, b in known if f < run[0]][-VELOCITY_WINDOW:]
        boxes = extrapolate(history, run, frame, window=VELOCITY_WINDOW)
        predicted.update(zip(run, boxes))

    return replace(tube, predicted=dict(sorted(predicted.items())))


def early_label(tubes: list[ActionTube]) -> int:
    """Class of the highest-scoring tube; score ties pick the lowest class."""
    if not tubes:
        raise ValueError("no tubes")
    best = min(tubes, key=lambda t: (-t.tube_score, t.class_id))
    return best.class_id
