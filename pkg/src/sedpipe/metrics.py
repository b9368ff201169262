"""Event matching, PSDS, retrieval recall and zero-shot accuracy.

Detection/ground-truth matching follows the intersection-ratio criteria:
a detection is valid when enough of it overlaps same-class ground truth
(DTC), and a ground truth counts as recalled when enough of it is covered
by valid detections (GTC).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .losses import cosine_matrix


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class LabeledEvent:
    clip_id: str
    label: str
    onset_s: float
    offset_s: float
    score: float | None = None

    def __post_init__(self):
        if not self.onset_s < self.offset_s:
            raise MetricError(
                f"event [{self.onset_s}, {self.offset_s}] has non-positive duration")

    @property
    def duration(self) -> float:
        return self.offset_s - self.onset_s


@dataclass(frozen=True)
class PsdsConfig:
    dtc: float = 0.7
    gtc: float = 0.7
    alpha_st: float = 1.0
    alpha_ct: float = 0.0
    e_max: float = 100.0
    thresholds: tuple = field(default_factory=lambda: tuple((np.arange(1, 51) / 51.0).tolist()))

    def __post_init__(self):
        if not (0 < self.dtc <= 1 and 0 < self.gtc <= 1):
            raise MetricError("DTC/GTC must be in (0, 1]")
        if self.e_max <= 0:
            raise MetricError("e_max must be positive")
        ts = list(self.thresholds)
        if ts != sorted(set(ts)) or any(not 0 < t < 1 for t in ts):
            raise MetricError("thresholds must be unique, sorted, in (0, 1)")


def binarize_scores(scores: np.ndarray, classes: list[str], clip_id: str,
                    clip_duration_s: float, tau: float, min_event_s: float = 0.0,
                    merge_gap_s: float = 0.0) -> list[LabeledEvent]:
    """Turn an (L, C) per-frame score matrix into events at frame boundaries.

    Per class, maximal runs of frames with score >= tau become events; runs
    separated by gaps <= merge_gap_s merge, and events shorter than
    min_event_s are dropped.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_frames = scores.shape[0]
    width = clip_duration_s / n_frames
    events = []
    for c, label in enumerate(classes):
        active = scores[:, c] >= tau
        runs = []
        start = None
        for l in range(n_frames):
            if active[l] and start is None:
                start = l
            elif not active[l] and start is not None:
                runs.append((start * width, l * width))
                start = None
        if start is not None:
            runs.append((start * width, n_frames * width))
        merged = []
        for on, off in runs:
            if merged and on - merged[-1][1] <= merge_gap_s:
                merged[-1] = (merged[-1][0], off)
            else:
                merged.append((on, off))
        for on, off in merged:
            if off - on >= min_event_s and off > on:
                events.append(LabeledEvent(clip_id=clip_id, label=label,
                                           onset_s=on, offset_s=off, score=None))
    return events


def _intersection(a: LabeledEvent, b: LabeledEvent) -> float:
    return max(0.0, min(a.offset_s, b.offset_s) - max(a.onset_s, b.onset_s))


def match_events(detections: list[LabeledEvent], ground_truths: list[LabeledEvent],
                 dtc: float = 0.7, gtc: float = 0.7) -> dict:
    """Count TPs/FPs under the intersection criteria.

    A detection is DTC-valid when its total same-class GT intersection over
    its duration reaches dtc; invalid detections are FPs. A GT is a TP when
    its total intersection with DTC-valid detections over its duration
    reaches gtc.
    """
    by_key_gt = defaultdict(list)
    for gt in ground_truths:
        by_key_gt[(gt.clip_id, gt.label)].append(gt)

    valid_dets = defaultdict(list)
    fp_per_class: dict[str, int] = defaultdict(int)
    for det in detections:
        gts = by_key_gt.get((det.clip_id, det.label), [])
        inter = sum(_intersection(det, gt) for gt in gts)
        if det.duration > 0 and inter / det.duration >= dtc - 1e-12:
            valid_dets[(det.clip_id, det.label)].append(det)
        else:
            fp_per_class[det.label] += 1

    tp_per_class: dict[str, int] = defaultdict(int)
    gt_per_class: dict[str, int] = defaultdict(int)
    for (clip_id, label), gts in by_key_gt.items():
        dets = valid_dets.get((clip_id, label), [])
        for gt in gts:
            gt_per_class[label] += 1
            inter = sum(_intersection(gt, det) for det in dets)
            if gt.duration > 0 and inter / gt.duration >= gtc - 1e-12:
                tp_per_class[label] += 1

    return {
        "tp": sum(tp_per_class.values()),
        "fp": sum(fp_per_class.values()),
        "tp_per_class": dict(tp_per_class),
        "fp_per_class": dict(fp_per_class),
        "gt_per_class": dict(gt_per_class),
    }


def psds(detections: list[LabeledEvent], ground_truths: list[LabeledEvent],
         dataset_hours: float, cfg: PsdsConfig = PsdsConfig()) -> dict:
    """PSDS over score thresholds as normalized area under the ROC staircase.

    Detections must carry scores. At each threshold, per-class TPR and
    dataset-level eFPR (FP/hour) give an operating point; effective TPR is
    max(0, mean_c TPR - alpha_st * std_c TPR). The upper staircase through
    the points, extended rightward to e_max, is integrated on [0, e_max]
    and divided by e_max.
    """
    if dataset_hours <= 0:
        raise MetricError("dataset duration must be positive")
    if not ground_truths:
        raise MetricError("need at least one ground-truth event")
    for det in detections:
        if det.score is None:
            raise MetricError(f"detection without score: {det}")
    classes = sorted({gt.label for gt in ground_truths})

    points = []
    for tau in cfg.thresholds:
        kept = [d for d in detections if d.score >= tau]
        counts = match_events(kept, ground_truths, cfg.dtc, cfg.gtc)
        tprs = np.array([
            counts["tp_per_class"].get(c, 0) / counts["gt_per_class"].get(c, 1)
            for c in classes])
        eff_tpr = max(0.0, float(tprs.mean() - cfg.alpha_st * tprs.std()))
        efpr = counts["fp"] / dataset_hours
        points.append({"tau": float(tau), "efpr": float(efpr), "eff_tpr": eff_tpr})

    # Upper staircase: value at x is the best eff_tpr among points with
    # efpr <= x, extended rightward to e_max.
    pts = sorted([(p["efpr"], p["eff_tpr"]) for p in points])
    area = 0.0
    best = 0.0
    prev_x = 0.0
    for x, y in pts:
        if x > cfg.e_max:
            break
        if x > prev_x:
            area += best * (x - prev_x)
            prev_x = x
        best = max(best, y)
    area += best * (cfg.e_max - prev_x)
    score = area / cfg.e_max
    return {"psds": score, "per_threshold": points,
            "config": {"dtc": cfg.dtc, "gtc": cfg.gtc, "alpha_st": cfg.alpha_st,
                       "alpha_ct": cfg.alpha_ct, "e_max": cfg.e_max}}


def recall_at_k(similarity: np.ndarray, k: int) -> float:
    """Percentage of rows whose true column (the diagonal) ranks in the top k.

    Ties rank the lower column index first.
    """
    similarity = np.asarray(similarity, dtype=np.float64)
    m = similarity.shape[0]
    if similarity.shape != (m, m):
        raise MetricError("similarity matrix must be square")
    if k > m:
        raise MetricError(f"k={k} exceeds matrix size {m}")
    hits = 0
    for i in range(m):
        row = similarity[i]
        target = row[i]
        rank = int(np.sum(row > target) + np.sum((row == target)[:i]))
        if rank < k:
            hits += 1
    return 100.0 * hits / m


def zero_shot_accuracy(audio_emb: np.ndarray, class_text_emb: np.ndarray,
                       labels: np.ndarray) -> float:
    """Percentage of clips whose nearest class embedding (cosine) is correct."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = class_text_emb.shape[0]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise MetricError("label index out of range")
    sims = cosine_matrix(audio_emb, class_text_emb)
    preds = sims.argmax(axis=1)
    return 100.0 * float((preds == labels).mean())
