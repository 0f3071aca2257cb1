"""Axis-aligned box algebra: IoU, offset codecs, clipping, extrapolation.

Boxes are half-open pixel extents with real-valued corners; the area of a
box is ``(x_max - x_min) * (y_max - y_min)``. Everything in this module is
a pure function over immutable values and is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

DEFAULT_VARIANCES = (0.1, 0.2)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates.

    Invariants: ``x_min <= x_max``, ``y_min <= y_max``, all coordinates
    finite. Zero-width or zero-height boxes are valid (their area is 0 and
    their IoU with anything is 0).
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center_x(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def center_y(self) -> float:
        return 0.5 * (self.y_min + self.y_max)

    @classmethod
    def from_center_size(cls, cx: float, cy: float, width: float, height: float) -> "BoundingBox":
        return cls(cx - 0.5 * width, cy - 0.5 * height, cx + 0.5 * width, cy + 0.5 * height)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def translated(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)


@dataclass(frozen=True)
class FrameSize:
    """Image extent in pixels used for clipping boxes to the visible area."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame size must be at least 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class OffsetCode:
    """Center-size regression offsets of a box relative to a prior box.

    ``d_cx``/``d_cy`` are center shifts in prior-size units, ``d_w``/``d_h``
    are log size ratios; both are divided by their variance, following the
    SSD offset convention.
    """

    d_cx: float
    d_cy: float
    d_w: float
    d_h: float
    v_center: float = DEFAULT_VARIANCES[0]
    v_size: float = DEFAULT_VARIANCES[1]

    def __post_init__(self) -> None:
        if self.v_center <= 0 or self.v_size <= 0:
            raise ValueError(f"variances must be positive, got ({self.v_center}, {self.v_size})")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.d_cx, self.d_cy, self.d_w, self.d_h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1].

    Returns 0.0 when either box has zero area.
    """
    if a.area <= 0.0 or b.area <= 0.0:
        return 0.0
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def mean_iou_microtube(prior: BoundingBox, gt_boxes: Sequence[BoundingBox]) -> float:
    """Arithmetic mean of ``iou(prior, g)`` over the boxes of one micro-tube.

    This is the overlap used to match a single prior box against a
    ground-truth micro-tube (a box per involved frame).
    """
    if not gt_boxes:
        raise ValueError("empty micro-tube")
    return sum(iou(prior, g) for g in gt_boxes) / len(gt_boxes)


def paired_mean_iou(boxes_a: Sequence[BoundingBox], boxes_b: Sequence[BoundingBox]) -> float:
    """Mean of frame-aligned IoUs between two equal-length box sequences.

    Used as the overlap between two micro-tubes (box at t with box at t,
    box at t+delta with box at t+delta).
    """
    if len(boxes_a) != len(boxes_b):
        raise ValueError(f"length mismatch: {len(boxes_a)} vs {len(boxes_b)}")
    if not boxes_a:
        raise ValueError("empty micro-tube")
    return sum(iou(a, b) for a, b in zip(boxes_a, boxes_b)) / len(boxes_a)


def encode_offsets(
    box: BoundingBox,
    prior: BoundingBox,
    variances: tuple[float, float] = DEFAULT_VARIANCES,
) -> OffsetCode:
    """Encode ``box`` as center-size offsets relative to ``prior``.

    d_cx = (cx - pcx) / (pw * v_center)      d_w = log(w / pw) / v_size
    d_cy = (cy - pcy) / (ph * v_center)      d_h = log(h / ph) / v_size

    Both boxes must have positive area.
    """
    v_center, v_size = variances
    if prior.area <= 0.0 or box.area <= 0.0:
        raise ValueError("degenerate box")
    return OffsetCode(
        d_cx=(box.center_x - prior.center_x) / (prior.width * v_center),
        d_cy=(box.center_y - prior.center_y) / (prior.height * v_center),
        d_w=math.log(box.width / prior.width) / v_size,
        d_h=math.log(box.height / prior.height) / v_size,
        v_center=v_center,
        v_size=v_size,
    )


def decode_offsets(code: OffsetCode, prior: BoundingBox) -> BoundingBox:
    """Invert :func:`encode_offsets`; exact up to floating round-off."""
    if prior.area <= 0.0:
        raise ValueError("degenerate box")
    if not all(math.isfinite(v) for v in code.as_tuple()):
        raise ValueError(f"non-finite offset code {code.as_tuple()}")
    cx = code.d_cx * code.v_center * prior.width + prior.center_x
    cy = code.d_cy * code.v_center * prior.height + prior.center_y
    w = prior.width * math.exp(code.d_w * code.v_size)
    h = prior.height * math.exp(code.d_h * code.v_size)
    return BoundingBox.from_center_size(cx, cy, w, h)


def clip_box(box: BoundingBox, frame: FrameSize) -> BoundingBox:
    """Clamp a box to the frame extent [0, width] x [0, height].

    Idempotent. A box entirely outside the frame collapses to zero width
    or height on the nearest edge; it is kept rather than dropped so that
    tube lengths stay invariant under clipping.
    """

    def clamp(v: float, hi: int) -> float:
        return min(max(v, 0.0), float(hi))

    return BoundingBox(
        clamp(box.x_min, frame.width),
        clamp(box.y_min, frame.height),
        clamp(box.x_max, frame.width),
        clamp(box.y_max, frame.height),
    )


def extrapolate(
    history: Sequence[tuple[int, BoundingBox]],
    target_frames: Sequence[int],
    frame: FrameSize,
    window: int = 5,
) -> list[BoundingBox]:
    """Continue a box trajectory at constant velocity.

    The per-coordinate velocity is the mean of consecutive first
    differences (each divided by its frame gap) over the last
    ``min(window, len(history))`` entries. Each target box is the last
    history box advanced by velocity times the frame gap, then clipped to
    the frame.

    Args:
        history: time-ordered ``(frame_index, box)`` pairs, at least 2.
        target_frames: frames to predict, all strictly after the last
            history frame.
        frame: clipping extent.
        window: number of trailing history entries the velocity is
            estimated from (default 5).

    Returns:
        One box per target frame, in the order given.
    """
    if len(history) < 2:
        raise ValueError("insufficient history")
    frames = [f for f, _ in history]
    if any(b >= a for a, b in zip(frames[1:], frames)):
        raise ValueError(f"history frames must be strictly increasing, got {frames}")
    last_frame, last_box = history[-1]
    if any(t <= last_frame for t in target_frames):
        raise ValueError(f"target frames must follow the last history frame {last_frame}")

    recent = history[-min(window, len(history)):]
    steps = len(recent) - 1
    velocity = [0.0, 0.0, 0.0, 0.0]
    for (fa, a), (fb, b) in zip(recent, recent[1:]):
        gap = fb - fa
        for k, (va, vb) in enumerate(zip(a.as_tuple(), b.as_tuple())):
            velocity[k] += (vb - va) / gap
    velocity = [v / steps for v in velocity]

    out = []
    for t in target_frames:
        gap = t - last_frame
        x0, y0, x1, y1 = (c + v * gap for c, v in zip(last_box.as_tuple(), velocity))
        # A shrinking box extrapolated past its collapse point inverts;
        # collapse to the crossing midpoint to keep the box valid.
        if x0 > x1:
            x0 = x1 = 0.5 * (x0 + x1)
        if y0 > y1:
            y0 = y1 = 0.5 * (y0 + y1)
        out.append(clip_box(BoundingBox(x0, y0, x1, y1), frame))
    return out
