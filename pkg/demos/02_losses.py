#!/usr/bin/env python3
# The three training objectives on a toy example, with a finite-difference
# check of each analytic gradient.

import numpy as np

from boxsal import LossWeights, background_loss, smoothness_loss, symmetric_ce, total_loss

rng = np.random.default_rng(0)
H = W = 6

image = np.tile([0.1, 0.15, 0.3], (H, W, 1))
image[2:5, 1:4] = [0.9, 0.8, 0.3]           # bright object
pseudo = np.zeros((H, W)); pseudo[2:5, 1:4] = 1.0
box = np.zeros((H, W)); box[1:5, 0:5] = 1.0  # loose box around it
pred = np.clip(pseudo + rng.normal(0, 0.15, (H, W)), 0.02, 0.98)  # noisy guess

w = LossWeights()  # alpha = beta = lambda1 = lambda2 = 1

spn = symmetric_ce(pred, pseudo, w)
print(f"symmetric cross-entropy : {spn.value:.4f}")

fore = smoothness_loss(pred, box, image, w)
floor = (H * (W - 1) + (H - 1) * W) * 1e-3
print(f"smoothness              : {fore.value:.4f}  (flat-map floor {floor:.4f})")

back = background_loss(pred, box, w)
print(f"background              : {back.value:.4f}  (0 iff prediction is 0 outside the box)")

total = total_loss(pred, pseudo, box, image, w)
print(f"combined                : {total.value:.4f} "
      f"= {spn.value:.4f} + {fore.value:.4f} + {back.value:.4f}")

# central finite differences against the analytic gradient
h = 1e-6
fd = np.zeros_like(pred)
for idx in np.ndindex(pred.shape):
    up = pred.copy(); up[idx] += h
    dn = pred.copy(); dn[idx] -= h
    fd[idx] = (total_loss(up, pseudo, box, image, w).value
               - total_loss(dn, pseudo, box, image, w).value) / (2 * h)
rel = np.linalg.norm(total.grad_s - fd) / np.linalg.norm(fd)
print(f"gradient vs finite differences: relative error {rel:.2e}")

# the background gradient never touches inside-box pixels
print("background grad nonzero inside box:", bool((back.grad_s[box == 1] != 0).any()))

# a perfectly confident, perfectly placed prediction zeroes the data terms
exact = pseudo.copy()
print(f"loss at the exact label : spn={symmetric_ce(exact, pseudo, w).value:.4f} "
      f"back={background_loss(exact, box, w).value:.4f} "
      f"fore={smoothness_loss(exact, box, image, w).value:.4f}")
