#!/usr/bin/env python3
# The four-arm ablation ladder on one synthetic corpus:
#   raw boxes as labels -> refined labels -> + smoothness -> + background.
# Each arm trains the same predictor from the same initialization; only the
# supervision and the loss switches differ.

from boxsal import (DatasetRecord, GrabCutConfig, LabelSource, PseudoLabel,
                    SyntheticSceneSpec, evaluate_dataset, format_report, forward,
                    generate_pseudo_label, generate_synthetic, rasterize_boxes)
from boxsal.trainer import desk_config, train, with_loss_switches

N_IMAGES = 32

refined, boxed = [], []
for i in range(N_IMAGES):
    scene = generate_synthetic(SyntheticSceneSpec(seed=200 + i, noise_sigma=0.05))
    label = generate_pseudo_label(scene, GrabCutConfig())
    box_mask = rasterize_boxes(scene.annotation, scene.height, scene.width)
    refined.append(DatasetRecord(scene.image, scene.annotation, label, scene.gt))
    boxed.append(DatasetRecord(scene.image, scene.annotation,
                               PseudoLabel(box_mask, LabelSource.RAW_BOX), scene.gt))
print(f"corpus: {N_IMAGES} blob scenes\n")

ladder = [
    ("box labels        ", boxed,   dict(fore=False, back=False)),
    ("refined labels    ", refined, dict(fore=False, back=False)),
    ("+ smoothness      ", refined, dict(fore=True, back=False)),
    ("+ background (all)", refined, dict(fore=True, back=True)),
]

print("                     S    F    E    MAE")
for name, data, switches in ladder:
    config = with_loss_switches(desk_config(), **switches)
    state, _ = train(data, config)
    preds = [forward(state, r.image)[0] for r in data]
    report = evaluate_dataset(preds, [r.gt for r in data])
    print(format_report(report, label=name))

print("\nreading the ladder: training on raw boxes regresses the rectangle, so")
print("structure scores drop and MAE rises; refined labels recover the object;")
print("the constraints then trim the remaining label noise. Margins between")
print("the refined arms are small on clean synthetic scenes; the box-vs-refined")
print("gap is the dominant effect.")
