"""Pseudo-labeling of untrimmed base videos from their own logits.

The segment whose best class logit is lowest is the least action-like and
becomes the video's background (BG) segment. If even that best logit sits
below a threshold the segment is non-informative background (NBG): the
classifier sees nothing it knows, which is the open-set rejection case.
Segments with the highest best-logits are foreground or informative
background (FG+IBG); more than one is kept because a single top segment
behaves like multiple-instance learning and starves the contrastive pool.

All functions here work on plain arrays and return indices; the training
graph treats these decisions as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def default_m(T: int) -> int:
    return max(2, -(-T // 8))


def _segment_scores(logits: np.ndarray, use_probabilities: bool = False) -> np.ndarray:
    """Per-segment max over classes; optionally of softmax probabilities."""
    logits = np.asarray(logits, dtype=np.float64)
    if use_probabilities:
        shifted = logits - logits.max(axis=1, keepdims=True)
        ex = np.exp(shifted)
        logits = ex / ex.sum(axis=1, keepdims=True)
    return logits.max(axis=1)


def pseudo_label_bg(logits: np.ndarray, use_probabilities: bool = False) -> int:
    """Index of the segment with the smallest best-class score; first on ties."""
    return int(np.argmin(_segment_scores(logits, use_probabilities)))


def filter_nbg(i_bg: int, logits: np.ndarray, t_n: float = 0.25,
               use_probabilities: bool = False) -> bool:
    """True when the BG segment's best score is below the open-set threshold."""
    return bool(_segment_scores(logits, use_probabilities)[i_bg] < t_n)


def select_fg_ibg(logits: np.ndarray, M: int, use_probabilities: bool = False) -> list:
    """Indices (ascending) of the M segments with the largest best-class
    scores; ties prefer the lower index."""
    scores = _segment_scores(logits, use_probabilities)
    T = scores.shape[0]
    if not 1 <= M <= T - 1:
        raise ValueError(f"M must satisfy 1 <= M <= T-1 = {T - 1}, got {M}")
    top = np.argsort(-scores, kind="stable")[:M]
    return sorted(int(i) for i in top)


@dataclass
class PseudoLabelRecord:
    i_bg: int
    is_nbg: bool
    fg_ibg_indices: list
    max_logits: np.ndarray  # per-segment best-class score, length T


def pseudo_label_video(logits: np.ndarray, t_n: float = 0.25, M: int = None,
                       use_probabilities: bool = False) -> PseudoLabelRecord:
    """Full per-video labeling; keeps i_bg out of the FG+IBG set even under
    total ties, and tolerates degenerate videos (tiny T, constant logits)."""
    scores = _segment_scores(logits, use_probabilities)
    T = scores.shape[0]
    i_bg = int(np.argmin(scores))
    if M is None:
        M = default_m(T)
    M = max(0, min(M, T - 1))
    order = [int(i) for i in np.argsort(-scores, kind="stable") if int(i) != i_bg]
    return PseudoLabelRecord(
        i_bg=i_bg,
        is_nbg=bool(scores[i_bg] < t_n),
        fg_ibg_indices=sorted(order[:M]),
        max_logits=scores,
    )


def segment_roles(record: PseudoLabelRecord) -> list:
    """Per-segment role names for inspection dumps."""
    roles = ["other"] * record.max_logits.shape[0]
    for i in record.fg_ibg_indices:
        roles[i] = "FGIBG"
    roles[record.i_bg] = "NBG" if record.is_nbg else "BG"
    return roles
