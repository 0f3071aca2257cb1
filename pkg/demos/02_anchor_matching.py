#!/usr/bin/env python3
"""Prior-box layout and ground-truth matching walkthrough.

Run with: python3 demos/02_anchor_matching.py
"""

from tubekit import (
    BoundingBox,
    FrameSize,
    MicroTubeTarget,
    PriorBoxSpec,
    default_prior_spec,
    generate_priors,
    match_priors,
)

frame = FrameSize(300, 300)

# --- Generating priors -------------------------------------------------------
# One box per (grid cell, aspect ratio), centered on the cell; a box at
# scale s and ratio r has area s^2*W*H and width/height ratio r.
small = PriorBoxSpec(grids=((2, 2),), scales=(0.5,), aspect_ratios=(1.0,), frame=frame)
priors = generate_priors(small)
print("2x2 grid at scale 0.5 gives", len(priors), "priors:")
for p in priors.boxes:
    print("  center", (p.center_x, p.center_y), "size", (p.width, p.height))

pyramid = generate_priors(default_prior_spec(frame))
print("\ndefault pyramid size:", len(pyramid), "priors")

# --- Matching ---------------------------------------------------------------
# A ground truth here is a micro-tube: one box per involved frame plus a
# class. Matching runs in two passes: a forced bipartite pass guarantees
# every ground truth a prior even when every overlap is below threshold,
# then every remaining prior whose best overlap reaches 0.5 joins in.
gt_box = BoundingBox(70, 70, 150, 150)
gt = MicroTubeTarget(boxes=(gt_box, gt_box.translated(4, 0)), class_id=2)

assignment = match_priors(priors, [gt], threshold=0.5)
print("\nmatching one ground truth against the 4 coarse priors:")
for i, (j, ov) in enumerate(zip(assignment.gt_index, assignment.match_iou)):
    state = f"-> gt {j} (mean IoU {ov:.3f})" if j >= 0 else "unmatched"
    print(f"  prior {i}: {state}")
print("forced prior per gt:", assignment.forced_prior)
print("matched priors total:", assignment.n_matched)

# Even a ground truth that overlaps nothing well still gets its best prior:
corner = MicroTubeTarget(boxes=(BoundingBox(0, 0, 20, 20),) * 2, class_id=0)
forced = match_priors(priors, [corner], threshold=0.5)
print("\nall overlaps below 0.5, still matched:",
      forced.n_matched, "with IoU", round(max(forced.match_iou), 3))
