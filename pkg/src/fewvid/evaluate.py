"""Episodic novel-class evaluation: classification and temporal detection.

Support videos are trimmed, so a class prototype is just the normalized mean
of mean segment embeddings. Queries stay untrimmed: their background is
pseudo-labeled from the K-way cosine logits against the prototypes and
down-weighted before aggregation, exactly as during training but with
prototypes standing in for classifier rows. Detection scores every segment
per class (weight times cosine), turns thresholded runs into proposals, and
reports mean average precision over temporal-IoU thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as model_mod
from .data import Episode, sample_episode
from .errors import DataError
from .losses import LossConfig, aggregate_video_feature, self_weight
from .pseudo import pseudo_label_bg

DEFAULT_PROPOSAL_THRESHOLDS = tuple(np.round(np.arange(0.1, 1.0, 0.1), 2))
MAP_TIOU_GRID = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))


@dataclass
class Prototype:
    class_index: int  # 0..K-1 within the episode
    vector: np.ndarray  # (d,), unit norm unless degenerate
    degenerate: bool = False


@dataclass
class DetectionResult:
    video_id: str
    class_index: int
    interval: tuple  # half-open (start, end) in segment units
    score: float


@dataclass
class ClassifiedQuery:
    probs: np.ndarray  # (K,)
    top1: int
    predicted_set: list
    f: np.ndarray  # (T, d) embedded segments
    weights: np.ndarray  # (T,)
    i_bg: int


def compute_prototypes(params: model_mod.ModelParams, episode: Episode) -> list:
    """Mean segment embedding per support video, mean per class, normalized."""
    remap = episode.class_remap
    sums = {k: [] for k in range(episode.K)}
    for seq in episode.support:
        f = model_mod.embed_segments(params, seq.features).data
        sums[remap[seq.class_label]].append(f.mean(axis=0))
    prototypes = []
    for k in range(episode.K):
        if not sums[k]:
            raise DataError(f"episode class {k} has no support videos")
        mean = np.mean(sums[k], axis=0)
        norm = np.linalg.norm(mean)
        prototypes.append(Prototype(
            class_index=k,
            vector=mean / norm if norm > 0.0 else mean,
            degenerate=norm == 0.0,
        ))
    return prototypes


def classify_query(params: model_mod.ModelParams, features: np.ndarray, prototypes: list,
                   cfg: LossConfig = None, t_a: float = None) -> ClassifiedQuery:
    """Aggregate the query with background-aware weights, then softmax over
    cosines to the prototypes."""
    cfg = cfg or LossConfig()
    proto = np.stack([p.vector for p in prototypes])
    f = model_mod.embed_segments(params, features)
    kway = f.data @ proto.T
    i_bg = pseudo_label_bg(kway)
    if cfg.sw:
        weights = self_weight(f, i_bg, cfg)
    else:
        weights = model_mod.baseline_attention(params, f)
    F = aggregate_video_feature(f, weights).data[0]
    Fn = F / (np.linalg.norm(F) + 1e-12)
    sims = proto @ Fn
    ex = np.exp(sims - sims.max())
    probs = ex / ex.sum()
    if t_a is None:
        t_a = 0.5 / len(prototypes)
    return ClassifiedQuery(
        probs=probs,
        top1=int(np.argmax(probs)),
        predicted_set=[k for k in range(len(prototypes)) if probs[k] > t_a],
        f=f.data,
        weights=weights.data[:, 0],
        i_bg=i_bg,
    )


def episode_accuracy(params: model_mod.ModelParams, episode: Episode,
                     cfg: LossConfig = None) -> float:
    prototypes = compute_prototypes(params, episode)
    remap = episode.class_remap
    correct = sum(
        classify_query(params, q.features, prototypes, cfg).top1 == remap[q.class_label]
        for q in episode.queries
    )
    return correct / len(episode.queries)


def tcam(f: np.ndarray, weights: np.ndarray, prototypes: list) -> np.ndarray:
    """(T, K) activation: per-segment weight times cosine to each prototype."""
    proto = np.stack([p.vector for p in prototypes])
    return np.asarray(weights)[:, None] * (f @ proto.T)


def _runs_above(column: np.ndarray, threshold: float):
    above = column > threshold
    runs, start = [], None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(above)))
    return runs


def nms(detections: list, tiou_threshold: float = 0.5) -> list:
    """Greedy non-maximum suppression, highest score first; ties keep the
    earlier interval."""
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = []
    for i in order:
        cand = detections[i]
        if all(temporal_iou(cand.interval, k.interval) < tiou_threshold for k in kept):
            kept.append(cand)
    return kept


def extract_proposals(A: np.ndarray, thresholds=DEFAULT_PROPOSAL_THRESHOLDS,
                      video_id: str = "") -> list:
    """Thresholded runs of the activation map, merged across thresholds."""
    out = []
    for k in range(A.shape[1]):
        column = A[:, k]
        colmax = column.max()
        if colmax <= 0.0:
            continue
        candidates = []
        for theta in thresholds:
            for start, end in _runs_above(column, theta * colmax):
                candidates.append(DetectionResult(
                    video_id=video_id,
                    class_index=k,
                    interval=(start, end),
                    score=float(column[start:end].mean()),
                ))
        out.extend(nms(candidates, 0.5))
    return out


def temporal_iou(a, b) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    if inter == 0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union


def average_precision(detections: list, ground_truths: list, tiou_threshold: float):
    """All-point interpolated AP with greedy one-to-one matching.

    detections: (score, interval) pairs or DetectionResult; ground_truths:
    (video_id-agnostic) intervals. Returns None when there is nothing to
    detect, so callers can exclude the class from their mean.
    """
    if not ground_truths:
        return None
    pairs = []
    for det in detections:
        if isinstance(det, DetectionResult):
            pairs.append((det.score, det.interval))
        else:
            pairs.append((float(det[0]), tuple(det[1])))
    pairs.sort(key=lambda p: -p[0])
    matched = [False] * len(ground_truths)
    tp = np.zeros(len(pairs))
    for i, (_, interval) in enumerate(pairs):
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(ground_truths):
            if matched[j]:
                continue
            iou = temporal_iou(interval, gt)
            if iou > best_iou:
                best_j, best_iou = j, iou
        if best_j >= 0 and best_iou >= tiou_threshold:
            matched[best_j] = True
            tp[i] = 1.0
    if not pairs:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(pairs) + 1)
    recall = cum_tp / len(ground_truths)
    # precision envelope from the right, then sum rectangle areas
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r, ap = 0.0, 0.0
    for i in range(len(pairs)):
        if tp[i]:
            ap += (recall[i] - prev_r) * envelope[i]
            prev_r = recall[i]
    return float(ap)


def _detections_by_class(detections: list):
    keyed = {}
    for det in detections:
        keyed.setdefault(det.class_index, []).append(det)
    return keyed


def episode_detection(params: model_mod.ModelParams, episode: Episode,
                      cfg: LossConfig = None, tiou_grid=MAP_TIOU_GRID):
    """Per-episode mAP at each tIoU threshold, macro-averaged over classes.

    Detections from every query count against every class: a proposal for
    class k on a query of another class is a false positive for k.
    """
    cfg = cfg or LossConfig()
    prototypes = compute_prototypes(params, episode)
    remap = episode.class_remap
    all_dets, gts = [], {k: [] for k in range(episode.K)}
    for q in episode.queries:
        res = classify_query(params, q.features, prototypes, cfg)
        A = tcam(res.f, res.weights, prototypes)
        dets = extract_proposals(A, video_id=q.video_id)
        all_dets.extend(dets)
        for interval in q.gt_intervals:
            gts[remap[q.class_label]].append((q.video_id, tuple(interval)))
    by_class = _detections_by_class(all_dets)

    maps = {}
    for thr in tiou_grid:
        aps = []
        for k in range(episode.K):
            if not gts[k]:
                continue
            # matching is per video: offset each video into its own span so
            # intervals from different queries can never overlap
            vids = sorted({v for v, _ in gts[k]} | {d.video_id for d in by_class.get(k, [])})
            span = 1 + max(
                [iv[1] for _, iv in gts[k]]
                + [d.interval[1] for d in by_class.get(k, [])], default=0)
            offset = {v: i * span for i, v in enumerate(vids)}
            gt_shifted = [(iv[0] + offset[v], iv[1] + offset[v]) for v, iv in gts[k]]
            det_shifted = [
                (d.score, (d.interval[0] + offset[d.video_id], d.interval[1] + offset[d.video_id]))
                for d in by_class.get(k, [])
            ]
            aps.append(average_precision(det_shifted, gt_shifted, thr))
        maps[float(thr)] = float(np.mean(aps)) if aps else 0.0
    map50 = maps[0.5]
    avg_map = float(np.mean([maps[float(t)] for t in tiou_grid]))
    return map50, avg_map, maps


def mean_ci(scores) -> tuple:
    """Mean and half-width of the 95% interval (1.96 * sd / sqrt(E))."""
    scores = np.asarray(scores, dtype=np.float64)
    mean = float(scores.mean())
    if scores.size < 2:
        return mean, 0.0
    return mean, float(1.96 * scores.std(ddof=1) / np.sqrt(scores.size))


def evaluate(params: model_mod.ModelParams, manifest, mode: str, K: int = 5, n: int = 1,
             q: int = 5, episodes: int = 100, seed: int = 0, cfg: LossConfig = None) -> dict:
    """Run `episodes` independent episodes and aggregate with a 95% CI.

    Episode e is sampled with seed (seed, e), so any subset of episodes can
    be reproduced independently and in parallel.
    """
    if mode not in ("classification", "detection"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    per_episode = []
    for e in range(episodes):
        ep = sample_episode(manifest, K=K, n=n, q=q, seed=[seed, e])
        if mode == "classification":
            per_episode.append(episode_accuracy(params, ep, cfg))
        else:
            map50, avg_map, _ = episode_detection(params, ep, cfg)
            per_episode.append((map50, avg_map))
    return summarize(mode, per_episode, K=K, n=n, q=q, seed=seed)


def summarize(mode: str, per_episode: list, **meta) -> dict:
    report = {"mode": mode, "episodes": len(per_episode), "per_episode": per_episode}
    report.update(meta)
    if mode == "classification":
        mean, ci = mean_ci(per_episode)
        report.update({"accuracy_mean": mean, "accuracy_ci": ci})
    else:
        m50, c50 = mean_ci([p[0] for p in per_episode])
        mavg, cavg = mean_ci([p[1] for p in per_episode])
        report.update({"map50_mean": m50, "map50_ci": c50,
                       "avg_map_mean": mavg, "avg_map_ci": cavg})
    return report
