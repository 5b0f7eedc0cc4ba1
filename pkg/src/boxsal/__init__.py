"""Weakly supervised saliency detection from bounding-box annotations.

Pipeline: rasterized box supervision -> GrabCut pseudo-labels -> a
compact encoder-decoder predictor trained under symmetric cross-entropy
plus box-gated smoothness and background constraints -> the four
standard saliency metrics.
"""
from .core import (AnnotationError, BoundingBox, BoxAnnotation, BoxSalError,
                   ConfigurationError, DatasetRecord, DecodeError, DimensionError,
                   LabelSource, PseudoLabel, as_grid, count_foreground, rasterize_boxes)
from .data_io import (SyntheticSceneSpec, derive_annotation, generate_synthetic,
                      load_annotations, load_image, save_annotations, save_image)
from .gmm import GmmModel, fit_gmm, neg_log_likelihood
from .grabcut import (GrabCutConfig, build_graph, generate_pseudo_label, grabcut_iterate,
                      init_trimap)
from .losses import (LossValue, LossWeights, background_loss, cross_entropy,
                     loss_components, smoothness_loss, symmetric_ce, total_loss)
from .maxflow import FlowNetwork, MaxFlowResult, max_flow
from .metrics import (MetricReport, e_measure_mean, evaluate_dataset, f_measure_mean,
                      format_report, mae, s_measure)
from .predictor import (PredictorConfig, PredictorState, backward, forward, init_predictor,
                        load_checkpoint, parameter_count, save_checkpoint)
from .trainer import TrainConfig, desk_config, lr_at_epoch, train, train_epoch

__version__ = "0.1.0"
