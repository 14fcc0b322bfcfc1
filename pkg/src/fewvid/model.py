"""Trainable head: segment embedding, cosine classifier, baseline attention.

A raw (T, d_in) segment-feature matrix is mapped per segment through a
linear transform, a depthwise temporal convolution over neighboring
segments, and row-wise L2 normalization, so every embedded segment lives on
the unit sphere and classifier logits are plain cosines. The classifier has
one row per base class plus one background row; its rows are kept unit-norm
by the trainer. The small attention net is only used by the soft-attention
baseline configuration.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import BadMagicError, DataError, TruncatedFileError, VersionError

CKPT_MAGIC = b"FVCP"
CKPT_VERSION = 1

PARAM_ORDER = ("transform", "temporal_kernel", "classifier", "attn_hidden", "attn_out")


@dataclass
class ModelParams:
    transform: ad.Tensor  # (d, d_in)
    temporal_kernel: ad.Tensor  # (d, w)
    classifier: ad.Tensor  # (N+1, d), rows unit-norm
    attn_hidden: ad.Tensor  # (hidden, d)
    attn_out: ad.Tensor  # (1, hidden)

    @property
    def d(self) -> int:
        return self.transform.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.transform.data.shape[1]

    @property
    def n_classes(self) -> int:
        return self.classifier.data.shape[0] - 1

    def tensors(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def copy(self) -> "ModelParams":
        return ModelParams(**{
            name: ad.Tensor(t.data.copy(), requires_grad=True)
            for name, t in self.tensors().items()
        })


def init_params(n_classes: int, d_in: int, d: int = 64, kernel_width: int = 8,
                attn_width: int = 32, seed: int = 0) -> ModelParams:
    """Gaussian init scaled by 1/sqrt(fan_in); classifier rows start unit-norm."""
    rng = np.random.default_rng(seed)
    classifier = rng.normal(size=(n_classes + 1, d))
    classifier /= np.linalg.norm(classifier, axis=1, keepdims=True)
    return ModelParams(
        transform=ad.Tensor(rng.normal(scale=d_in ** -0.5, size=(d, d_in)), requires_grad=True),
        temporal_kernel=ad.Tensor(rng.normal(scale=kernel_width ** -0.5, size=(d, kernel_width)),
                                  requires_grad=True),
        classifier=ad.Tensor(classifier, requires_grad=True),
        attn_hidden=ad.Tensor(rng.normal(scale=d ** -0.5, size=(attn_width, d)), requires_grad=True),
        attn_out=ad.Tensor(rng.normal(scale=attn_width ** -0.5, size=(1, attn_width)),
                           requires_grad=True),
    )


def embed_segments(params: ModelParams, raw) -> ad.Tensor:
    """(T, d_in) raw features -> (T, d) unit-norm embeddings."""
    x = raw if isinstance(raw, ad.Tensor) else ad.Tensor(raw)
    transformed = x @ params.transform.T
    mixed = ad.depthwise_conv1d(transformed, params.temporal_kernel)
    return ad.l2_normalize_rows(mixed)


def segment_logits(params: ModelParams, f: ad.Tensor, include_bg_row: bool = False) -> ad.Tensor:
    """Cosine logits against the class rows; the background row only on request."""
    w = params.classifier
    if not include_bg_row:
        n = params.n_classes
        selector = np.eye(n + 1)[:n]  # drop the background row
        w = ad.Tensor(selector) @ w
    return f @ w.T


def baseline_attention(params: ModelParams, f: ad.Tensor) -> ad.Tensor:
    """(T, 1) per-segment weights in (0, 1) from a tiny two-layer net."""
    hidden = ad.relu(f @ params.attn_hidden.T)
    return ad.sigmoid(hidden @ params.attn_out.T)


def save_checkpoint(params: ModelParams, path, config_echo: dict = None):
    """Header (JSON: tensor names + shapes + config echo) then the tensors
    as little-endian float64, concatenated in header order."""
    tensors = params.tensors()
    header = {
        "tensors": [{"name": n, "shape": list(tensors[n].data.shape)} for n in PARAM_ORDER],
        "config": config_echo or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        for name in PARAM_ORDER:
            fh.write(np.ascontiguousarray(tensors[name].data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (ModelParams, config echo dict)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise DataError(f"cannot read checkpoint {path}: {err}") from err
    if blob[:4] != CKPT_MAGIC:
        raise BadMagicError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != CKPT_VERSION:
        raise VersionError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[12 : 12 + header_len])
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: corrupt checkpoint header: {err}") from err
    at = 12 + header_len
    loaded = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        end = at + 8 * count
        if end > len(blob):
            raise TruncatedFileError(f"{path}: tensor {entry['name']} extends past end of file")
        arr = np.frombuffer(blob[at:end], dtype="<f8").reshape(shape).astype(np.float64)
        loaded[entry["name"]] = ad.Tensor(arr, requires_grad=True)
        at = end
    missing = [n for n in PARAM_ORDER if n not in loaded]
    if missing:
        raise DataError(f"{path}: checkpoint missing tensors {missing}")
    return ModelParams(**{n: loaded[n] for n in PARAM_ORDER}), header["config"]


def delta_kernel(d: int, width: int = 8) -> np.ndarray:
    """Identity kernel for the temporal convolution (single center tap)."""
    k = np.zeros((d, width))
    k[:, (width - 1) // 2] = 1.0
    return k
