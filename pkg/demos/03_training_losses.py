#!/usr/bin/env python3
"""The multi-task training objective as checkable numeric functions.

total = (l_cls + alpha*l_reg + beta*l_pred) / max(N, 1)

Run with: python3 demos/03_training_losses.py
"""

import numpy as np

from tubekit import (
    BoundingBox,
    MicroTubeTarget,
    PriorBoxSet,
    LossInputs,
    match_priors,
    run_grad_check,
    smooth_l1,
    softmax_cross_entropy,
    total_loss,
)
from tubekit.losses import encode_box_sequence

rng = np.random.default_rng(0)

# --- The two elementary losses ----------------------------------------------
print("smooth L1 at d=0.5 (quadratic branch):", smooth_l1([0.5], [0.0]))   # 0.125
print("smooth L1 at d=2 (linear branch):", smooth_l1([2.0], [0.0]))        # 1.5
print("cross-entropy, uniform logits over 4 classes:",
      softmax_cross_entropy([0.0] * 4, 1))                                  # log 4

# --- A tiny training sample ---------------------------------------------------
# 6 priors, 2 ground-truth micro-tubes, 3 real classes (+ background last).
priors = PriorBoxSet(tuple(
    BoundingBox(x, y, x + 40, y + 40)
    for x, y in [(0, 0), (50, 0), (100, 0), (0, 50), (50, 50), (100, 50)]
))
gts = [
    MicroTubeTarget(boxes=(BoundingBox(2, 2, 42, 42), BoundingBox(4, 2, 44, 42)), class_id=0),
    MicroTubeTarget(boxes=(BoundingBox(98, 48, 138, 88),) * 2, class_id=2),
]
assignment = match_priors(priors, gts, threshold=0.5)
print("\nmatched priors:", assignment.matched_priors(), "N =", assignment.n_matched)

n_priors, n_classes, n_future = len(priors), 3, 2
width = 4 * (1 + n_future)

# Encode the regression targets against each matched prior.
mt_targets = np.zeros((n_priors, 8))
pred_targets = np.zeros((n_priors, width))
mask = np.zeros((n_priors, 1 + n_future), dtype=bool)
for i in assignment.matched_priors():
    gt = gts[assignment.gt_index[i]]
    mt_targets[i] = encode_box_sequence(gt.boxes, priors.boxes[i], priors.variances)
    # pretend the past box and both future boxes exist and sit still
    pred_targets[i] = encode_box_sequence([gt.boxes[0]] * (1 + n_future),
                                          priors.boxes[i], priors.variances)
    mask[i] = True

logits = rng.normal(0, 1, (n_priors, n_classes + 1))
inputs = LossInputs(
    class_logits=logits,
    microtube_outputs=mt_targets + rng.normal(0, 0.3, (n_priors, 8)),
    prediction_outputs=pred_targets + rng.normal(0, 0.3, (n_priors, width)),
    assignment=assignment,
    microtube_targets=mt_targets,
    prediction_targets=pred_targets,
    prediction_mask=mask,
)
out = total_loss(inputs)
print(f"l_cls={out.l_cls:.4f}  l_reg={out.l_reg:.4f}  l_pred={out.l_pred:.4f}"
      f"  total={out.total:.4f}")

# Masking the future slots silences l_pred without touching the rest:
inputs.prediction_mask[:, 1:] = False
print("after masking the future slots, l_pred =", round(total_loss(inputs).l_pred, 4))

# --- Gradient check -----------------------------------------------------------
# Analytic gradients of both losses against central finite differences,
# sampled away from the smooth-L1 kinks at |d| = 1.
report = run_grad_check(seed=0, trials=200)
print(f"\ngradient check: smooth L1 {report.smooth_l1_error:.2e}, "
      f"cross-entropy {report.cross_entropy_error:.2e} "
      f"(pass at 1e-4: {report.passed(1e-4)})")
