from dataclasses import dataclass
from typing import Optional

import numpy as np

from lcpformer.errors import LcpShapeError


def confusion_matrix(labels: np.ndarray, predictions: np.ndarray, classes: int) -> np.ndarray:
    """
    classes x classes counts; rows are ground truth, columns predictions.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if labels.shape != predictions.shape:
        raise LcpShapeError("confusion_matrix", labels.shape, predictions.shape)
    return np.bincount(classes * labels + predictions, minlength=classes * classes).reshape(classes, classes)


@dataclass
class Metrics:
    confusion: np.ndarray
    oa: float
    macc: float
    # Per class values are NaN for classes absent from the ground truth
    class_accuracy: np.ndarray
    class_iou: np.ndarray
    miou: Optional[float] = None

    @staticmethod
    def from_confusion(confusion: np.ndarray, with_iou: bool = True) -> "Metrics":
        confusion = np.asarray(confusion, dtype=np.int64)
        tp = np.diag(confusion).astype(np.float64)
        truth = confusion.sum(axis=1).astype(np.float64)
        predicted = confusion.sum(axis=0).astype(np.float64)
        present = truth > 0
        total = confusion.sum()

        accuracy = np.full(tp.shape, np.nan)
        accuracy[present] = tp[present] / truth[present]
        iou = np.full(tp.shape, np.nan)
        iou[present] = tp[present] / (truth[present] + predicted[present] - tp[present])
        return Metrics(
            confusion,
            float(tp.sum() / total) if total else float("nan"),
            float(accuracy[present].mean()) if present.any() else float("nan"),
            accuracy,
            iou,
            (float(iou[present].mean()) if present.any() else float("nan")) if with_iou else None,
        )
