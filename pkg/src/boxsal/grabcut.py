"""Pseudo-label generation by iterated GMM / graph-cut segmentation.

Pixels outside every annotation box are hard background; pixels inside
start as probable foreground and are relabeled each round by a minimum
cut over color-likelihood data terms and contrast-weighted 4-neighbor
smoothness terms.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import BoxAnnotation, DatasetRecord, LabelSource, PseudoLabel, as_grid, rasterize_boxes
from .gmm import GmmModel, fit_gmm, neg_log_likelihood
from .maxflow import FlowNetwork, max_flow

# trimap labels
TRIMAP_BG = 0       # definite background (outside every box), permanent
TRIMAP_PROB_BG = 1  # undecided, currently background
TRIMAP_PROB_FG = 2  # undecided, currently foreground


@dataclass(frozen=True)
class GrabCutConfig:
    components: int = 5        # GMM components per side
    iterations: int = 5        # segmentation rounds (early stop on convergence)
    gamma_pairwise: float = 50.0
    seed: int = 17             # k-means++ seeding


def init_trimap(annotation: BoxAnnotation, height: int, width: int) -> np.ndarray:
    """Probable foreground inside any box, definite background elsewhere."""
    mask = rasterize_boxes(annotation, height, width)
    trimap = np.where(mask > 0, TRIMAP_PROB_FG, TRIMAP_BG).astype(np.uint8)
    return trimap


def contrast_beta(image: np.ndarray) -> float:
    """1 / (2 * mean squared color difference) over 4-neighbor pairs.

    Returns 0 for a constant image (uniform pairwise weights).
    """
    image = as_grid(image, name="image")
    img = image if image.ndim == 3 else image[:, :, None]
    dx = ((img[:, 1:] - img[:, :-1]) ** 2).sum(axis=2)
    dy = ((img[1:, :] - img[:-1, :]) ** 2).sum(axis=2)
    n_pairs = dx.size + dy.size
    if n_pairs == 0:
        return 0.0
    mean_sq = (dx.sum() + dy.sum()) / n_pairs
    if mean_sq <= 0.0:
        return 0.0
    return 1.0 / (2.0 * mean_sq)


def pairwise_capacities(image: np.ndarray, gamma_pairwise: float
                        ) -> tuple[np.ndarray, np.ndarray, float]:
    """Contrast-attenuated 4-neighbor capacities.

    Returns ``(right, down, beta)`` where ``right[u, v]`` links pixel
    (u, v) to (u, v+1) and ``down[u, v]`` links (u, v) to (u+1, v), each
    ``gamma_pairwise * exp(-beta * ||c_p - c_q||^2)``.
    """
    image = as_grid(image, name="image")
    img = image if image.ndim == 3 else image[:, :, None]
    beta = contrast_beta(image)
    dx = ((img[:, 1:] - img[:, :-1]) ** 2).sum(axis=2)
    dy = ((img[1:, :] - img[:-1, :]) ** 2).sum(axis=2)
    right = gamma_pairwise * np.exp(-beta * dx)
    down = gamma_pairwise * np.exp(-beta * dy)
    return right, down, beta


def _data_terms(image: np.ndarray, fg_gmm: GmmModel, bg_gmm: GmmModel
                ) -> tuple[np.ndarray, np.ndarray]:
    h, w = image.shape[:2]
    flat = image.reshape(-1, 3)
    nll_fg = np.asarray(neg_log_likelihood(fg_gmm, flat)).reshape(h, w)
    nll_bg = np.asarray(neg_log_likelihood(bg_gmm, flat)).reshape(h, w)
    return nll_fg, nll_bg


def build_graph(image: np.ndarray, trimap: np.ndarray, fg_gmm: GmmModel,
                bg_gmm: GmmModel, gamma_pairwise: float) -> FlowNetwork:
    """Assemble the segmentation energy graph.

    Node p = row * W + col; source = H*W, sink = H*W + 1.  The source
    side of the min cut is foreground: for undecided pixels the sink arc
    carries the foreground data term and the source arc the background
    data term, so each pixel pays the term of the side it joins.
    Gaussian densities above 1 make data terms negative, so a single
    global offset is added to every terminal pair; each pixel pays
    exactly one terminal arc in any cut, leaving the argmin unchanged.
    Definite-background pixels get a sink arc of capacity ``k_inf``
    (1 + the sum of all finite capacities) that no minimum cut can
    afford to sever.
    """
    image = as_grid(image, channels=3, name="image")
    h, w = image.shape[:2]
    if trimap.shape != (h, w):
        raise ValueError(f"trimap shape {trimap.shape} != image {h}x{w}")

    right, down, _ = pairwise_capacities(image, gamma_pairwise)
    nll_fg, nll_bg = _data_terms(image, fg_gmm, bg_gmm)

    probable = trimap != TRIMAP_BG
    offset = 0.0
    if probable.any():
        offset = max(0.0, -min(nll_fg[probable].min(), nll_bg[probable].min()))
    src_cap = np.where(probable, nll_bg + offset, 0.0)
    snk_cap = np.where(probable, nll_fg + offset, 0.0)

    finite_total = right.sum() * 2 + down.sum() * 2 + src_cap.sum() + snk_cap[probable].sum()
    k_inf = 1.0 + finite_total
    snk_cap = np.where(probable, snk_cap, k_inf)

    n_pixels = h * w
    net = FlowNetwork(n_pixels + 2, source=n_pixels, sink=n_pixels + 1)
    for p in range(n_pixels):
        net.add_edge(net.source, p, src_cap.flat[p])
        net.add_edge(p, net.sink, snk_cap.flat[p])
    for u in range(h):
        for v in range(w - 1):
            cap = right[u, v]
            net.add_edge(u * w + v, u * w + v + 1, cap, cap)
    for u in range(h - 1):
        for v in range(w):
            cap = down[u, v]
            net.add_edge(u * w + v, (u + 1) * w + v, cap, cap)
    return net


def segmentation_energy(image: np.ndarray, fg_mask: np.ndarray, trimap: np.ndarray,
                        fg_gmm: GmmModel, bg_gmm: GmmModel, gamma_pairwise: float) -> float:
    """Data + pairwise energy of a labeling (no terminal offset, no k_inf).

    Data terms are summed over undecided pixels only; definite-background
    pixels contribute no data cost because their label is fixed.
    """
    nll_fg, nll_bg = _data_terms(image, fg_gmm, bg_gmm)
    probable = trimap != TRIMAP_BG
    fg = fg_mask.astype(bool)
    data = nll_fg[probable & fg].sum() + nll_bg[probable & ~fg].sum()
    right, down, _ = pairwise_capacities(image, gamma_pairwise)
    mismatch_x = fg[:, 1:] != fg[:, :-1]
    mismatch_y = fg[1:, :] != fg[:-1, :]
    pairwise = right[mismatch_x].sum() + down[mismatch_y].sum()
    return float(data + pairwise)


def grabcut_iterate(image: np.ndarray, trimap: np.ndarray, k: int = 5, iters: int = 5,
                    gamma_pairwise: float = 50.0, seed: int = 17,
                    stats: dict | None = None) -> PseudoLabel:
    """Run the fit-GMMs / cut / relabel loop and return the final mask.

    Each round refits both appearance models on the current labeling,
    solves the min cut and updates the undecided pixels; stops after
    ``iters`` rounds or as soon as the labeling stops changing.  If a cut
    empties the foreground, the previous round's labeling is returned.
    The hard-background region of the trimap is never foreground in the
    output.  ``stats``, when given, receives ``iterations``,
    ``converged`` and ``energy_history``.
    """
    image = as_grid(image, channels=3, name="image")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    h, w = image.shape[:2]
    probable = trimap != TRIMAP_BG
    if stats is None:
        stats = {}
    stats.update({"iterations": 0, "converged": False, "energy_history": []})

    if not probable.any():
        warnings.warn("empty annotation: pseudo-label is all background", stacklevel=2)
        return PseudoLabel(np.zeros((h, w)), LabelSource.GRABCUT)

    rng = np.random.default_rng(seed)
    fg = trimap == TRIMAP_PROB_FG
    converged = False
    for it in range(iters):
        fg_pixels = image[fg].reshape(-1, 3)
        bg_pixels = image[~fg].reshape(-1, 3)
        if fg_pixels.shape[0] == 0 or bg_pixels.shape[0] == 0:
            break
        fg_gmm = fit_gmm(fg_pixels, k=k, rng=rng)
        bg_gmm = fit_gmm(bg_pixels, k=k, rng=rng)
        net = build_graph(image, trimap, fg_gmm, bg_gmm, gamma_pairwise)
        result = max_flow(net)
        new_fg = probable & result.source_side[:h * w].reshape(h, w)
        stats["iterations"] = it + 1
        if not new_fg.any():
            # cut emptied the foreground; keep the previous labeling
            break
        stats["energy_history"].append(
            segmentation_energy(image, new_fg, trimap, fg_gmm, bg_gmm, gamma_pairwise))
        if (new_fg == fg).all():
            converged = True
            break
        fg = new_fg
    stats["converged"] = converged
    return PseudoLabel(fg.astype(np.float64), LabelSource.GRABCUT)


def generate_pseudo_label(record: DatasetRecord, config: GrabCutConfig = GrabCutConfig(),
                          stats: dict | None = None) -> PseudoLabel:
    """GrabCut over the whole image with the record's multi-box trimap."""
    trimap = init_trimap(record.annotation, record.height, record.width)
    return grabcut_iterate(record.image, trimap, k=config.components,
                           iters=config.iterations, gamma_pairwise=config.gamma_pairwise,
                           seed=config.seed, stats=stats)
