"""WSOL localization metrics and the M-Ins / Part / More error taxonomy."""

from __future__ import annotations

from dataclasses import asdict, dataclass

IOU_THRESHOLD = 0.5
MINS_IOG = 0.3
PART_IOP = 0.5
MORE_IOG = 0.7


class MetricInputError(ValueError):
    pass


def _area(b):
    x0, y0, x1, y1 = b
    if not (x1 > x0 and y1 > y0):
        raise MetricInputError(f"degenerate box {tuple(b)}")
    return (x1 - x0) * (y1 - y0)


def _intersection(a, b):
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    return w * h if w > 0 and h > 0 else 0


def iou(a, b) -> float:
    inter = _intersection(a, b)
    return inter / (_area(a) + _area(b) - inter)


def iog(pred, gt) -> float:
    """Intersection over the ground-truth box area."""
    _area(pred)
    return _intersection(pred, gt) / _area(gt)


def iop(pred, gt) -> float:
    """Intersection over the predicted box area."""
    _area(gt)
    return _intersection(pred, gt) / _area(pred)


@dataclass
class Prediction:
    image_id: str
    ranked: list  # top-5 category ids, best first
    box: tuple  # box for the rank-1 category
    gt_class_box: tuple  # box localized with the ground-truth category

    def __post_init__(self):
        if len(self.ranked) > 5 or len(set(self.ranked)) != len(self.ranked):
            raise MetricInputError(f"{self.image_id}: ranked list must hold <= 5 unique ids")


@dataclass
class GroundTruth:
    image_id: str
    category_id: int
    boxes: list


@dataclass
class EvalReport:
    top1_loc: float
    top5_loc: float
    gt_known_loc: float
    m_ins: float
    part: float
    more: float
    count: int
    top1_cls: float = 0.0

    def to_dict(self):
        return asdict(self)

    def table(self):
        rows = [
            ("Top-1 Loc", self.top1_loc),
            ("Top-5 Loc", self.top5_loc),
            ("GT-known Loc", self.gt_known_loc),
            ("Top-1 Cls", self.top1_cls),
            ("M-Ins", self.m_ins),
            ("Part", self.part),
            ("More", self.more),
        ]
        lines = [f"{name:<14}{val:7.2f}" for name, val in rows]
        lines.append(f"{'images':<14}{self.count:7d}")
        return "\n".join(lines)


def best_iou(box, gt_boxes):
    return max(iou(box, g) for g in gt_boxes)


def _pair(predictions, ground_truth):
    gt_by_id = {g.image_id: g for g in ground_truth}
    pred_ids = [p.image_id for p in predictions]
    if len(set(pred_ids)) != len(pred_ids) or set(pred_ids) != set(gt_by_id):
        raise MetricInputError("prediction and ground-truth image ids do not match")
    for g in ground_truth:
        if not g.boxes:
            raise MetricInputError(f"{g.image_id}: no ground-truth boxes")
    return [(p, gt_by_id[p.image_id]) for p in predictions]


def error_flags(pred_box, gt_boxes):
    """(m_ins, part, more) booleans for one predicted box."""
    iogs = [iog(pred_box, g) for g in gt_boxes]
    m_ins = sum(v > MINS_IOG for v in iogs) >= 2
    best = max(range(len(gt_boxes)), key=lambda i: iou(pred_box, gt_boxes[i]))
    part = iop(pred_box, gt_boxes[best]) > PART_IOP
    more = iogs[best] > MORE_IOG
    return m_ins, part, more


def error_taxonomy(predictions, ground_truth, population="failed"):
    """Percentages of images showing each error type.

    Flags use the ground-truth-class box. With ``population="failed"`` only
    images whose box misses (IoU <= 0.5) can be flagged; the denominator is
    always the total image count. An image may carry several flags.
    """
    if population not in ("failed", "all"):
        raise ValueError("population must be 'failed' or 'all'")
    pairs = _pair(predictions, ground_truth)
    counts = [0, 0, 0]
    for p, g in pairs:
        if population == "failed" and best_iou(p.gt_class_box, g.boxes) > IOU_THRESHOLD:
            continue
        for i, flag in enumerate(error_flags(p.gt_class_box, g.boxes)):
            counts[i] += int(flag)
    n = len(pairs)
    return tuple(100.0 * c / n for c in counts)


def evaluate(predictions, ground_truth, population="failed") -> EvalReport:
    pairs = _pair(predictions, ground_truth)
    top1 = top5 = known = cls1 = 0
    for p, g in pairs:
        hit_pred = best_iou(p.box, g.boxes) > IOU_THRESHOLD
        hit_gt = best_iou(p.gt_class_box, g.boxes) > IOU_THRESHOLD
        first = bool(p.ranked) and p.ranked[0] == g.category_id
        cls1 += first
        top1 += first and hit_pred
        top5 += (g.category_id in p.ranked[:5]) and hit_gt
        known += hit_gt
    n = len(pairs)
    m_ins, part, more = error_taxonomy(predictions, ground_truth, population)
    return EvalReport(
        top1_loc=100.0 * top1 / n,
        top5_loc=100.0 * top5 / n,
        gt_known_loc=100.0 * known / n,
        m_ins=m_ins,
        part=part,
        more=more,
        count=n,
        top1_cls=100.0 * cls1 / n,
    )
