"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to see
the lines for passing criteria too).

Budgets: the gradient sweep stays under 10 s, the max-flow oracle under
30 s, desk-scale training under 5 min, and the ablation ladder under
20 min; everything here runs on one CPU core.
"""
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from boxsal.cli import main as cli_main
from boxsal.core import (BoundingBox, BoxAnnotation, DatasetRecord, LabelSource,
                         PseudoLabel, rasterize_boxes)
from boxsal.data_io import SyntheticSceneSpec, generate_synthetic
from boxsal.gmm import fit_gmm
from boxsal.grabcut import GrabCutConfig, generate_pseudo_label, grabcut_iterate, init_trimap
from boxsal.losses import (background_loss, cross_entropy, smoothness_loss,
                           symmetric_ce, total_loss)
from boxsal.maxflow import FlowNetwork, max_flow
from boxsal.metrics import e_measure_mean, evaluate_dataset, f_measure_mean, mae, s_measure
from boxsal.predictor import PredictorConfig, forward
from boxsal.trainer import desk_config, train, with_loss_switches
from oracles import oracle_e_measure, oracle_f_measure, oracle_mae, oracle_s_measure


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[acceptance] {name}: {status}{suffix}", flush=True)
    assert ok, f"{name}{suffix}"


# --- criterion 1: analytic loss gradients vs central finite differences ----

def test_criterion_1_gradient_correctness():
    rng = np.random.default_rng(101)
    h_step = 1e-5
    started = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        pred = rng.uniform(0.05, 0.95, (5, 5))
        target = rng.uniform(0.05, 0.95, (5, 5))
        image = rng.uniform(0, 1, (5, 5, 3))
        box = (rng.uniform(0, 1, (5, 5)) > 0.5).astype(float)
        if box.sum() == box.size:
            box[0, 0] = 0.0
        cases = [
            lambda p: cross_entropy(p, target),
            lambda p: symmetric_ce(p, target),
            lambda p: smoothness_loss(p, box, image),
            lambda p: background_loss(p, box),
            lambda p: total_loss(p, target, box, image),
        ]
        for fn in cases:
            analytic = fn(pred).grad_s
            fd = np.zeros_like(pred)
            for idx in np.ndindex(pred.shape):
                up = pred.copy(); up[idx] += h_step
                dn = pred.copy(); dn[idx] -= h_step
                fd[idx] = (fn(up).value - fn(dn).value) / (2 * h_step)
            err = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, err)
    elapsed = time.perf_counter() - started
    report("criterion 1: loss gradients match finite differences",
           worst <= 1e-4 and elapsed < 10.0,
           f"worst rel err {worst:.2e}, {elapsed:.1f}s")


# --- criterion 2: closed-form loss anchors ---------------------------------

def test_criterion_2_closed_form_anchors():
    half = np.full((4, 4), 0.5)
    sym = symmetric_ce(half, half).value
    ok_sym = abs(sym - 2 * np.log(2)) <= 1e-9

    pred = np.full((2, 2), 0.5); pred[0, 0] = 0.0
    box = np.zeros((2, 2)); box[0, 0] = 1.0
    back = background_loss(pred, box).value
    ok_back = abs(back - np.log(2)) <= 1e-9

    smooth = smoothness_loss(np.full((2, 2), 0.3), np.zeros((2, 2)), np.zeros((2, 2))).value
    ok_smooth = abs(smooth - 0.004) <= 1e-12

    report("criterion 2: closed-form anchors", ok_sym and ok_back and ok_smooth,
           f"sym {sym:.12f}, back {back:.12f}, smooth {smooth:.15f}")


# --- criterion 3: max-flow equals exhaustive min-cut ------------------------

def _brute_min_cut_vectorized(n: int, arcs) -> float:
    subsets = np.arange(2 ** n, dtype=np.uint32)
    cut = np.zeros(2 ** n)
    for u, v, cap in arcs:
        in_s_u = np.ones(2 ** n, dtype=bool) if u == 0 else (subsets >> (u - 1)) & 1 > 0
        in_s_v = np.zeros(2 ** n, dtype=bool) if v == n + 1 else (subsets >> (v - 1)) & 1 > 0
        if v == 0:
            in_s_v = np.ones(2 ** n, dtype=bool)
        cut += cap * (in_s_u & ~in_s_v)
    return float(cut.min())


def test_criterion_3_max_flow_oracle():
    rng = np.random.default_rng(103)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 13))
        net = FlowNetwork(n + 2, source=0, sink=n + 1)
        arcs = []
        for u in range(n + 2):
            for v in range(n + 2):
                if u == v or v == 0 or u == n + 1:
                    continue
                if rng.random() < 0.3:
                    cap = float(rng.uniform(0, 10))
                    net.add_edge(u, v, cap)
                    arcs.append((u, v, cap))
        flow = max_flow(net).flow_value
        cut = _brute_min_cut_vectorized(n, arcs)
        worst = max(worst, abs(flow - cut))
    elapsed = time.perf_counter() - started
    report("criterion 3: max-flow equals exhaustive min-cut on 1000 graphs",
           worst <= 1e-9 and elapsed < 30.0, f"worst gap {worst:.2e}, {elapsed:.1f}s")


# --- criterion 4: EM log-likelihood monotonicity ----------------------------

def test_criterion_4_em_monotonicity():
    rng = np.random.default_rng(104)
    worst = np.inf
    for _ in range(50):
        n = int(rng.integers(30, 300))
        centers = rng.uniform(0, 1, (int(rng.integers(1, 4)), 3))
        pts = np.clip(centers[rng.integers(len(centers), size=n)]
                      + rng.normal(0, 0.08, (n, 3)), 0, 1)
        model = fit_gmm(pts, k=int(rng.integers(1, 6)), rng=int(rng.integers(1 << 31)))
        steps = np.diff(np.array(model.log_likelihood_history))
        if steps.size:
            worst = min(worst, float(steps.min()))
    report("criterion 4: EM log-likelihood non-decreasing over 50 fits",
           worst >= -1e-8, f"worst step {worst:.3e}")


# --- criterion 5: GrabCut recovery on the square scene ----------------------

def _square_scene(seed):
    rng = np.random.default_rng(seed)
    image = np.tile([0.1, 0.2, 0.8], (16, 16, 1))
    image[4:12, 4:12] = [0.9, 0.15, 0.1]
    image = np.clip(image + rng.normal(0, 0.02, image.shape), 0, 1)
    gt = np.zeros((16, 16)); gt[4:12, 4:12] = 1
    box = BoundingBox(4, 4, 12, 12).dilated(2, 16, 16)
    return image, gt, BoxAnnotation((box,), f"square-{seed}")


def test_criterion_5_grabcut_recovery():
    worst_iou = 1.0
    clean_outside = True
    for seed in range(20):
        image, gt, ann = _square_scene(seed)
        trimap = init_trimap(ann, 16, 16)
        label = grabcut_iterate(image, trimap, seed=17)
        inter = float(((label.mask > 0) & (gt > 0)).sum())
        union = float(((label.mask > 0) | (gt > 0)).sum())
        worst_iou = min(worst_iou, inter / union)
        clean_outside &= bool((label.mask[trimap == 0] == 0).all())
    report("criterion 5: GrabCut square recovery over 20 seeded trials",
           worst_iou >= 0.95 and clean_outside,
           f"worst IoU {worst_iou:.3f}, outside-box clean {clean_outside}")


# --- criterion 6: metric oracles -------------------------------------------

def test_criterion_6_metric_oracles():
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(100):
        pred = rng.uniform(0, 1, (8, 8))
        gt = (rng.uniform(0, 1, (8, 8)) > rng.uniform(0.2, 0.8)).astype(float)
        worst = max(worst, abs(mae(pred, gt) - oracle_mae(pred, gt)))
        worst = max(worst, abs(s_measure(pred, gt) - oracle_s_measure(pred, gt)))
        worst = max(worst, abs(e_measure_mean(pred, gt) - oracle_e_measure(pred, gt)))
        if gt.sum() > 0:
            worst = max(worst, abs(f_measure_mean(pred, gt) - oracle_f_measure(pred, gt)))
    gt = (np.indices((8, 8)).sum(axis=0) % 3 == 0).astype(float)
    perfect_ok = (mae(gt, gt) == 0.0 and s_measure(gt, gt) >= 0.999
                  and f_measure_mean(gt, gt) >= 0.99 and e_measure_mean(gt, gt) >= 0.99)
    report("criterion 6: metrics match independent oracles",
           worst <= 1e-10 and perfect_ok, f"worst gap {worst:.2e}")


# --- criteria 7-8 share desk-scale corpora ----------------------------------

def _desk_corpus(count, seed0, noise):
    grabcut_records, box_records = [], []
    for i in range(count):
        rec = generate_synthetic(SyntheticSceneSpec(seed=seed0 + i, noise_sigma=noise))
        label = generate_pseudo_label(rec, GrabCutConfig())
        box_mask = rasterize_boxes(rec.annotation, rec.height, rec.width)
        grabcut_records.append(DatasetRecord(rec.image, rec.annotation, label, rec.gt))
        box_records.append(DatasetRecord(rec.image, rec.annotation,
                                         PseudoLabel(box_mask, LabelSource.RAW_BOX), rec.gt))
    return grabcut_records, box_records


def test_criterion_7_end_to_end_descent():
    started = time.perf_counter()
    records, _ = _desk_corpus(8, seed0=100, noise=0.02)
    config = desk_config()  # 15 epochs, batch 4, seed 17
    assert config.epochs == 15 and config.seed == 17
    state, log = train(records, config)
    drop_ok = log[-1]["loss_total"] <= 0.5 * log[0]["loss_total"]
    outside = []
    for rec in records:
        sal, _ = forward(state, rec.image)
        box = rasterize_boxes(rec.annotation, rec.height, rec.width)
        outside.append(float(sal[box == 0].mean()))
    elapsed = time.perf_counter() - started
    report("criterion 7: desk-scale training descends and clears the background",
           drop_ok and max(outside) < 0.05 and elapsed < 300.0,
           f"loss {log[0]['loss_total']:.2f}->{log[-1]['loss_total']:.2f}, "
           f"worst outside-box mean {max(outside):.4f}, {elapsed:.0f}s")


def test_criterion_8_ablation_direction():
    started = time.perf_counter()
    grabcut_records, box_records = _desk_corpus(32, seed0=200, noise=0.05)

    def arm(records, fore, back):
        config = with_loss_switches(desk_config(), fore=fore, back=back)
        state, _ = train(records, config)
        preds = [forward(state, r.image)[0] for r in records]
        return evaluate_dataset(preds, [r.gt for r in records])

    bnd = arm(box_records, fore=False, back=False)
    gcut = arm(grabcut_records, fore=False, back=False)
    ours = arm(grabcut_records, fore=True, back=True)
    elapsed = time.perf_counter() - started

    mae_order = bnd.mae > gcut.mae >= ours.mae
    s_order = ours.s_alpha >= gcut.s_alpha > bnd.s_alpha
    gap = bnd.mae - gcut.mae
    report("criterion 8: ablation ladder direction",
           mae_order and s_order and gap >= 0.01 and elapsed < 1200.0,
           f"mae box/gcut/full = {bnd.mae:.4f}/{gcut.mae:.4f}/{ours.mae:.4f}, "
           f"S = {bnd.s_alpha:.4f}/{gcut.s_alpha:.4f}/{ours.s_alpha:.4f}, "
           f"gap {gap:.4f}, {elapsed:.0f}s")


# --- criterion 9: byte-identical reruns through the CLI ---------------------

def _tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_byte_identical_reruns(tmp_path):
    from boxsal.trainer import save_train_config
    config = replace(
        desk_config(epochs=3, batch_size=2, checkpoint_every=2),
        predictor=PredictorConfig(stages=2, stage_channels=(4, 8), lateral_channels=4, seed=3))
    config_path = tmp_path / "config.json"
    save_train_config(config, config_path)

    trees = []
    for run in ("one", "two"):
        root = tmp_path / run
        corpus = root / "corpus"
        assert cli_main(["synth", "--out", str(corpus), "--count", "4",
                         "--size", "16", "--seed", "40"]) == 0
        assert cli_main(["pseudo-label", "--annotations", str(corpus / "annotations.json"),
                         "--out", str(root / "labels"), "--seed", "17"]) == 0
        assert cli_main(["train", "--config", str(config_path), "--data", str(corpus),
                         "--labels", str(root / "labels"),
                         "--out", str(root / "model")]) == 0
        assert cli_main(["predict", "--checkpoint", str(root / "model" / "final.ckpt"),
                         "--images", str(corpus / "images"),
                         "--out", str(root / "preds")]) == 0
        trees.append(_tree_bytes(root))
    same = trees[0].keys() == trees[1].keys() and all(
        trees[0][k] == trees[1][k] for k in trees[0])
    report("criterion 9: pseudo-label, train, predict reruns are byte-identical",
           same, f"{len(trees[0])} files compared")
