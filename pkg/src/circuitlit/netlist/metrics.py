"""Detection metrics for labeled schematic fixtures.

Matching is greedy by descending confidence at an IoU threshold; AP uses
the interpolated precision envelope (area under the PR curve); weighted mAP
weights each class AP by its share of ground-truth instances.
"""

from __future__ import annotations

from dataclasses import dataclass

from .extract import ComponentDetection


def iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    if inter == 0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def _match(
    preds: list[ComponentDetection],
    gts: list[ComponentDetection],
    iou_thr: float,
) -> list[bool]:
    """True/false-positive flag per prediction, in confidence order."""
    order = sorted(preds, key=lambda d: (-d.confidence, d.det_id))
    claimed: set[str] = set()
    flags = []
    for pred in order:
        best, best_iou = None, 0.0
        for gt in gts:
            if gt.label != pred.label or gt.det_id in claimed:
                continue
            val = iou(pred.bbox, gt.bbox)
            if val > best_iou:
                best, best_iou = gt, val
        if best is not None and best_iou >= iou_thr:
            claimed.add(best.det_id)
            flags.append(True)
        else:
            flags.append(False)
    return flags


@dataclass(frozen=True)
class DetectionScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def detection_prf(
    preds: list[ComponentDetection],
    gts: list[ComponentDetection],
    iou_thr: float = 0.5,
) -> DetectionScore:
    flags = _match(preds, gts, iou_thr)
    tp = sum(flags)
    fp = len(flags) - tp
    fn = len(gts) - tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return DetectionScore(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def average_precision(
    preds: list[ComponentDetection],
    gts: list[ComponentDetection],
    iou_thr: float = 0.5,
) -> float:
    """AP for a single class (callers pre-filter by label)."""
    if not gts:
        return 0.0
    flags = _match(preds, gts, iou_thr)
    tp = fp = 0
    points = []  # (recall, precision)
    for flag in flags:
        tp += flag
        fp += not flag
        points.append((tp / len(gts), tp / (tp + fp)))
    ap = 0.0
    prev_recall = 0.0
    for i, (recall, _) in enumerate(points):
        if recall > prev_recall:
            envelope = max(p for r, p in points[i:])
            ap += (recall - prev_recall) * envelope
            prev_recall = recall
    return ap


def weighted_map(
    preds: list[ComponentDetection],
    gts: list[ComponentDetection],
    iou_thr: float = 0.5,
) -> float:
    classes = sorted({g.label for g in gts})
    total = len(gts)
    score = 0.0
    for cls in classes:
        cls_gts = [g for g in gts if g.label == cls]
        cls_preds = [p for p in preds if p.label == cls]
        score += (len(cls_gts) / total) * average_precision(cls_preds, cls_gts, iou_thr)
    return score
