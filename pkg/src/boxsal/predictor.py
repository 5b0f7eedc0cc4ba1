"""Compact fully-convolutional encoder-decoder for saliency prediction.

Encoder: per stage, a stride-2 3x3 conv + ReLU followed by a stride-1
3x3 conv + ReLU, producing features at strides 2, 4, ....  Each stage
feature passes a 3x3 lateral conv to a shared channel width, and the
decoder fuses them top-down (nearest x2 upsample + add + 3x3 conv +
ReLU), finishing with one more x2 upsample, a 1-channel 3x3 head and a
logistic squash to [0, 1] at full input resolution.

Parameters live in one flat float64 vector; ``backward`` returns the
matching flat gradient.  Forward and backward are deterministic, and a
shared state is safe to use concurrently as long as updates are
serialized by the caller.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigurationError, DimensionError, as_grid
from .nnops import (conv2d_backward, conv2d_forward, relu_backward, relu_forward,
                    sigmoid, upsample2_backward, upsample2_forward)

CHECKPOINT_MAGIC = "boxsal-checkpoint-v1"


@dataclass(frozen=True)
class PredictorConfig:
    stages: int = 4
    stage_channels: tuple[int, ...] = (8, 16, 32, 64)
    lateral_channels: int = 16
    kernel_size: int = 3
    input_channels: int = 3
    seed: int = 17

    def __post_init__(self) -> None:
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        if self.stages < 2:
            raise ConfigurationError("stages must be >= 2")
        if len(self.stage_channels) != self.stages:
            raise ConfigurationError(
                f"stage_channels has {len(self.stage_channels)} entries for {self.stages} stages")
        if self.lateral_channels < 1:
            raise ConfigurationError("lateral_channels must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ConfigurationError("kernel_size must be odd")


def parameter_layout(config: PredictorConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs defining the flat parameter vector."""
    k = config.kernel_size
    layout: list[tuple[str, tuple[int, ...]]] = []
    c_in = config.input_channels
    for i, c_out in enumerate(config.stage_channels):
        layout.append((f"enc{i}_down_w", (c_out, c_in, k, k)))
        layout.append((f"enc{i}_down_b", (c_out,)))
        layout.append((f"enc{i}_keep_w", (c_out, c_out, k, k)))
        layout.append((f"enc{i}_keep_b", (c_out,)))
        c_in = c_out
    c = config.lateral_channels
    for i, c_stage in enumerate(config.stage_channels):
        layout.append((f"lat{i}_w", (c, c_stage, k, k)))
        layout.append((f"lat{i}_b", (c,)))
    for i in range(config.stages - 1):
        layout.append((f"fuse{i}_w", (c, c, k, k)))
        layout.append((f"fuse{i}_b", (c,)))
    layout.append(("head_w", (1, c, k, k)))
    layout.append(("head_b", (1,)))
    return layout


def parameter_count(config: PredictorConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in parameter_layout(config))


@dataclass(frozen=True, eq=False)
class PredictorState:
    """Flat parameter vector plus the topology that interprets it.

    Treated as immutable: optimizer updates build a new state from a new
    vector rather than mutating in place.
    """

    config: PredictorConfig
    params: np.ndarray

    _views: dict[str, np.ndarray] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        expected = parameter_count(self.config)
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (expected,):
            raise ConfigurationError(
                f"parameter vector has shape {params.shape}, expected ({expected},)")
        if not np.isfinite(params).all():
            raise ConfigurationError("parameters contain non-finite values")
        object.__setattr__(self, "params", params)
        views = {}
        offset = 0
        for name, shape in parameter_layout(self.config):
            size = int(np.prod(shape))
            views[name] = params[offset:offset + size].reshape(shape)
            offset += size
        object.__setattr__(self, "_views", views)

    def tensor(self, name: str) -> np.ndarray:
        return self._views[name]


def init_predictor(config: PredictorConfig) -> PredictorState:
    """Kaiming fan-in random init, deterministic for a fixed config seed."""
    rng = np.random.default_rng(config.seed)
    chunks = []
    for name, shape in parameter_layout(config):
        if name.endswith("_b"):
            chunks.append(np.zeros(int(np.prod(shape))))
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            chunks.append(rng.normal(0.0, std, size=int(np.prod(shape))))
    return PredictorState(config, np.concatenate(chunks))


def _pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, int, int]:
    h, w = image.shape[1], image.shape[2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image, 0, 0
    if ph >= h or pw >= w:
        raise DimensionError(
            f"image {h}x{w} too small to reflect-pad to a multiple of {multiple}")
    return np.pad(image, ((0, 0), (0, ph), (0, pw)), mode="reflect"), ph, pw


def forward(state: PredictorState, image: np.ndarray) -> tuple[np.ndarray, dict]:
    """Predict a full-resolution saliency map in (0, 1).

    Returns ``(saliency, tape)``; the tape holds every intermediate
    needed by :func:`backward`.  Inputs whose sides are not divisible by
    ``2**stages`` are reflect-padded and the output cropped back.
    """
    cfg = state.config
    image = as_grid(image, name="image")
    if cfg.input_channels == 3:
        img = as_grid(image, channels=3, name="image").transpose(2, 0, 1)
    else:
        img = as_grid(image, channels=1, name="image")[None, :, :]
    orig_h, orig_w = img.shape[1], img.shape[2]
    x, ph, pw = _pad_to_multiple(img, 2 ** cfg.stages)

    pad = cfg.kernel_size // 2
    tape: dict = {"orig": (orig_h, orig_w), "pad": (ph, pw), "conv": {}, "relu": {}}
    laterals = []
    cur = x
    for i in range(cfg.stages):
        cur, tape["conv"][f"enc{i}_down"] = conv2d_forward(
            cur, state.tensor(f"enc{i}_down_w"), state.tensor(f"enc{i}_down_b"),
            stride=2, pad=pad)
        cur, tape["relu"][f"enc{i}_down"] = relu_forward(cur)
        cur, tape["conv"][f"enc{i}_keep"] = conv2d_forward(
            cur, state.tensor(f"enc{i}_keep_w"), state.tensor(f"enc{i}_keep_b"), pad=pad)
        cur, tape["relu"][f"enc{i}_keep"] = relu_forward(cur)
        lat, tape["conv"][f"lat{i}"] = conv2d_forward(
            cur, state.tensor(f"lat{i}_w"), state.tensor(f"lat{i}_b"), pad=pad)
        laterals.append(lat)

    cur = laterals[-1]
    for i in range(cfg.stages - 2, -1, -1):
        fused = upsample2_forward(cur) + laterals[i]
        cur, tape["conv"][f"fuse{i}"] = conv2d_forward(
            fused, state.tensor(f"fuse{i}_w"), state.tensor(f"fuse{i}_b"), pad=pad)
        cur, tape["relu"][f"fuse{i}"] = relu_forward(cur)

    full = upsample2_forward(cur)
    logits, tape["conv"]["head"] = conv2d_forward(
        full, state.tensor("head_w"), state.tensor("head_b"), pad=pad)
    sal = sigmoid(logits[0])
    tape["saliency_padded"] = sal
    return sal[:orig_h, :orig_w], tape


def backward(state: PredictorState, tape: dict, grad_s: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient of ``sum(grad_s * saliency)`` w.r.t. the flat parameters."""
    cfg = state.config
    orig_h, orig_w = tape["orig"]
    if grad_s.shape != (orig_h, orig_w):
        raise DimensionError(f"grad_s shape {grad_s.shape} != output {(orig_h, orig_w)}")
    sal = tape["saliency_padded"]
    d_sal = np.zeros_like(sal)
    d_sal[:orig_h, :orig_w] = grad_s

    grads = {name: None for name, _ in parameter_layout(cfg)}
    d_logits = (d_sal * sal * (1.0 - sal))[None, :, :]
    d_full, grads["head_w"], grads["head_b"] = conv2d_backward(
        d_logits, state.tensor("head_w"), tape["conv"]["head"])
    d_cur = upsample2_backward(d_full)

    d_laterals = [None] * cfg.stages
    for i in range(cfg.stages - 1):
        d_cur = relu_backward(d_cur, tape["relu"][f"fuse{i}"])
        d_fused, grads[f"fuse{i}_w"], grads[f"fuse{i}_b"] = conv2d_backward(
            d_cur, state.tensor(f"fuse{i}_w"), tape["conv"][f"fuse{i}"])
        d_laterals[i] = d_fused
        d_cur = upsample2_backward(d_fused)
    d_laterals[cfg.stages - 1] = d_cur

    d_stage_out = None
    for i in range(cfg.stages - 1, -1, -1):
        d_lat_in, grads[f"lat{i}_w"], grads[f"lat{i}_b"] = conv2d_backward(
            d_laterals[i], state.tensor(f"lat{i}_w"), tape["conv"][f"lat{i}"])
        d_keep = d_lat_in if d_stage_out is None else d_lat_in + d_stage_out
        d_keep = relu_backward(d_keep, tape["relu"][f"enc{i}_keep"])
        d_down, grads[f"enc{i}_keep_w"], grads[f"enc{i}_keep_b"] = conv2d_backward(
            d_keep, state.tensor(f"enc{i}_keep_w"), tape["conv"][f"enc{i}_keep"])
        d_down = relu_backward(d_down, tape["relu"][f"enc{i}_down"])
        d_stage_out, grads[f"enc{i}_down_w"], grads[f"enc{i}_down_b"] = conv2d_backward(
            d_down, state.tensor(f"enc{i}_down_w"), tape["conv"][f"enc{i}_down"])

    return np.concatenate([grads[name].ravel() for name, _ in parameter_layout(cfg)])


def save_checkpoint(path, state: PredictorState, velocity: np.ndarray | None = None,
                    extra: dict | None = None) -> None:
    """Byte-deterministic container: magic line, JSON header, raw float64 payload."""
    arrays = [("params", state.params)]
    if velocity is not None:
        arrays.append(("velocity", np.asarray(velocity, dtype=np.float64)))
    header = {
        "config": {
            "stages": state.config.stages,
            "stage_channels": list(state.config.stage_channels),
            "lateral_channels": state.config.lateral_channels,
            "kernel_size": state.config.kernel_size,
            "input_channels": state.config.input_channels,
            "seed": state.config.seed,
        },
        "arrays": [{"name": n, "size": int(a.size)} for n, a in arrays],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC.encode() + b"\n")
        fh.write(blob + b"\n")
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def load_checkpoint(path) -> tuple[PredictorState, np.ndarray | None, dict]:
    """Inverse of :func:`save_checkpoint`; round-trips bit-exactly."""
    raw = Path(path).read_bytes()
    magic, _, rest = raw.partition(b"\n")
    if magic.decode(errors="replace") != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path}: not a recognized checkpoint file")
    header_blob, _, payload = rest.partition(b"\n")
    header = json.loads(header_blob)
    cfg = header["config"]
    config = PredictorConfig(stages=cfg["stages"], stage_channels=tuple(cfg["stage_channels"]),
                             lateral_channels=cfg["lateral_channels"],
                             kernel_size=cfg["kernel_size"],
                             input_channels=cfg["input_channels"], seed=cfg["seed"])
    offset = 0
    arrays = {}
    for entry in header["arrays"]:
        size = entry["size"]
        arrays[entry["name"]] = np.frombuffer(
            payload, dtype=np.float64, count=size, offset=offset).copy()
        offset += size * 8
    state = PredictorState(config, arrays["params"])
    return state, arrays.get("velocity"), header.get("extra", {})
