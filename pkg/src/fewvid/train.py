"""Base-class training: batching, momentum updates, logging, checkpoints.

Training consumes untrimmed base videos with only their video-level labels;
everything temporal (which segments are background, which are confident
foreground) is pseudo-labeled on the fly from the model's own logits. The
optimizer is plain Nesterov momentum, and classifier rows are projected back
to the unit sphere after every step so logits stay cosines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import model as model_mod
from .data import DatasetManifest
from .errors import NumericError
from .losses import BatchVideo, LossConfig, aggregate_video_feature, self_weight, total_loss
from .pseudo import pseudo_label_bg

LOG_COLUMNS = ("step", "L_total", "L_cls", "L_contrast", "L_bg", "n_nbg")


@dataclass
class OptimizerState:
    lr: float = 0.01
    momentum: float = 0.9
    velocity: dict = field(default_factory=dict)  # tensor name -> ndarray


def nesterov_step(tensors: dict, grads: dict, state: OptimizerState,
                  renorm_rows: tuple = ("classifier",)):
    """v <- mu*v - lr*g; p <- p + mu*v - lr*g. Updates tensors in place.

    Tensors named in renorm_rows get their rows rescaled to unit norm after
    the update.
    """
    for name, tensor in tensors.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != tensor.data.shape:
            raise ad.ShapeError("nesterov_step", tensor.data.shape, g.shape)
        v = state.velocity.setdefault(name, np.zeros_like(tensor.data))
        v *= state.momentum
        v -= state.lr * g
        tensor.data += state.momentum * v - state.lr * g
    for name in renorm_rows:
        if name in tensors:
            w = tensors[name].data
            norms = np.linalg.norm(w, axis=-1, keepdims=True)
            w /= np.where(norms > 0.0, norms, 1.0)
    return tensors, state


def format_log_row(values) -> str:
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        else:
            out.append("%.17g" % v)
    return ",".join(out)


def write_log(rows: list, path):
    with open(path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            fh.write(format_log_row(row) + "\n")


@dataclass
class TrainResult:
    params: model_mod.ModelParams
    log_rows: list
    label_order: list  # classifier row index -> original class label


def load_training_videos(manifest: DatasetManifest):
    """All base videos in memory, labels remapped to classifier row indices."""
    labels = manifest.class_labels()
    remap = {label: i for i, label in enumerate(labels)}
    videos = [
        BatchVideo(features=manifest.load_sequence(e).features, label=remap[e.class_label])
        for e in manifest.entries
    ]
    return videos, labels


def train_base(manifest: DatasetManifest, loss_cfg: LossConfig = None, *,
               d: int = 64, kernel_width: int = 8, attn_width: int = 32,
               lr: float = 0.01, momentum: float = 0.9,
               batch_size: int = 16, epochs: int = 30, seed: int = 0,
               t_n: float = 0.25, top_m: int = None, use_probabilities: bool = False,
               ckpt_path=None, log_path=None, config_echo: dict = None) -> TrainResult:
    """Train the head on a base manifest; deterministic given seed."""
    loss_cfg = (loss_cfg or LossConfig()).validate()
    if not manifest.entries:
        raise NumericError("cannot train on an empty manifest")
    videos, label_order = load_training_videos(manifest)
    n_classes = len(label_order)
    d_in = videos[0].features.shape[1]
    params = model_mod.init_params(
        n_classes=n_classes, d_in=d_in, d=d, kernel_width=kernel_width,
        attn_width=attn_width, seed=seed)
    state = OptimizerState(lr=lr, momentum=momentum)
    rng = np.random.default_rng(seed)

    echo = dict(config_echo or {})
    echo.update({"n_classes": n_classes, "d": d, "d_in": d_in,
                 "kernel_width": kernel_width, "attn_width": attn_width,
                 "label_order": [int(x) for x in label_order]})

    log_rows = []
    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(videos))
        for at in range(0, len(videos), batch_size):
            batch = [videos[i] for i in order[at : at + batch_size]]
            loss, stats = total_loss(params, batch, loss_cfg, t_n=t_n, top_m=top_m,
                                     use_probabilities=use_probabilities)
            step += 1
            if not np.isfinite(stats["l_total"]):
                if ckpt_path:
                    model_mod.save_checkpoint(params, ckpt_path, echo)
                if log_path:
                    write_log(log_rows, log_path)
                where = f"; last good checkpoint written to {ckpt_path}" if ckpt_path else ""
                raise NumericError(f"non-finite loss at step {step}{where}")
            ad.backward(loss)
            grads = {name: t.grad for name, t in params.tensors().items() if t.grad is not None}
            nesterov_step(params.tensors(), grads, state)
            log_rows.append((step, stats["l_total"], stats["l_cls"],
                             stats["l_contrast"], stats["l_bg"], stats["n_nbg"]))

    if ckpt_path:
        Path(ckpt_path).parent.mkdir(parents=True, exist_ok=True)
        model_mod.save_checkpoint(params, ckpt_path, echo)
    if log_path:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        write_log(log_rows, log_path)
    return TrainResult(params=params, log_rows=log_rows, label_order=label_order)


def training_accuracy(params: model_mod.ModelParams, manifest: DatasetManifest,
                      loss_cfg: LossConfig = None) -> float:
    """Fraction of base videos whose aggregated feature lands on its own class."""
    loss_cfg = loss_cfg or LossConfig()
    videos, _ = load_training_videos(manifest)
    n = params.n_classes
    correct = 0
    for video in videos:
        f = model_mod.embed_segments(params, video.features)
        logits = model_mod.segment_logits(params, f)
        if loss_cfg.sw:
            weights = self_weight(f, pseudo_label_bg(logits.data), loss_cfg)
        else:
            weights = model_mod.baseline_attention(params, f)
        F = aggregate_video_feature(f, weights)
        Fn = F.data[0] / (np.linalg.norm(F.data[0]) + 1e-12)
        scores = params.classifier.data[:n] @ Fn
        if int(np.argmax(scores)) == video.label:
            correct += 1
    return correct / len(videos)


def gradcheck_objective(seed: int = 0, n_videos: int = 2, T: int = 8,
                        d_in: int = 8, d: int = 8, n_classes: int = 3,
                        loss_cfg: LossConfig = None, t_n: float = 0.5):
    """Standard fixture for checking the full objective's gradients:
    random videos, threshold set so every loss term participates.

    Returns (param arrays, loss builder) ready for autodiff.grad_check.
    """
    rng = np.random.default_rng(seed)
    batch = [
        BatchVideo(features=rng.normal(size=(T, d_in)), label=int(rng.integers(n_classes)))
        for _ in range(n_videos)
    ]
    params = model_mod.init_params(n_classes=n_classes, d_in=d_in, d=d, seed=seed)
    cfg = loss_cfg or LossConfig()

    def builder(leaves):
        p = model_mod.ModelParams(**leaves)
        loss, _ = total_loss(p, batch, cfg, t_n=t_n)
        return loss

    return {name: t.data for name, t in params.tensors().items()}, builder
