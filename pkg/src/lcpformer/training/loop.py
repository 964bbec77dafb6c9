import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from lcpformer.autodiff import Tape, Tensor
from lcpformer.autodiff.ops import cross_entropy, reshape
from lcpformer.data.checkpoint import save_checkpoint
from lcpformer.data.config import RunConfig
from lcpformer.data.dataset import Sample, split
from lcpformer.data.synthetic import generate
from lcpformer.errors import LcpConfigError, LcpNonFiniteError
from lcpformer.geometry.cloud import PointCloud
from lcpformer.logs import LcpLogger, LcpLogWrapper
from lcpformer.network.config import TASK_CLASSIFICATION, TASK_DETECTION
from lcpformer.network.model import LCPFormer
from lcpformer.network.params import is_lcp_param, param_count
from lcpformer.training.augment import augment
from lcpformer.training.metrics import Metrics, confusion_matrix
from lcpformer.training.optim import OptimizerState, clip_grad_norm, cosine_lr, optimizer_step
from lcpformer.utils import ordered_map

# Output files of a training run
METRICS_NAME = "metrics.csv"
CHECKPOINT_NAME = "best.lcpw"
METRICS_HEADER = "epoch,lr,train_loss,train_acc,val_oa,val_macc,val_miou"


@dataclass
class TrainRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_oa: float
    val_macc: float
    val_miou: Optional[float]
    wall_time: float

    def csv_row(self) -> str:
        # Wall time stays out of the CSV (identical runs give identical files)
        miou = "" if self.val_miou is None else f"{self.val_miou:.6f}"
        return f"{self.epoch},{self.lr:.8g},{self.train_loss:.6f},{self.train_acc:.6f},{self.val_oa:.6f},{self.val_macc:.6f},{miou}"


@dataclass
class SampleResult:
    loss: float
    correct: int
    total: int
    grads: List[np.ndarray]


def sample_loss(model: LCPFormer, cloud: PointCloud, targets: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """
    Mean cross-entropy of one cloud (cloud label, or every point label) and the predicted classes.
    """
    logits = model(cloud)
    if model.config.task == TASK_CLASSIFICATION:
        logits = reshape(logits, (1, model.config.classes))
    return cross_entropy(logits, targets), np.argmax(logits.data, axis=1)


def sample_gradients(model: LCPFormer, sample: Sample, seed: Sequence[int], policy: str) -> SampleResult:
    params = model.params.tensors()
    cloud = augment(sample.cloud, np.random.default_rng(list(seed)), policy)
    targets = sample.targets()
    with Tape() as tape:
        loss, predicted = sample_loss(model, cloud, targets)
        tape.backward(loss, populate=False)
    grads = [g if g is not None else np.zeros_like(p.data) for p, g in ((p, tape.grad(p)) for p in params)]
    return SampleResult(loss.item(), int((predicted == targets).sum()), targets.size, grads)


def predict(model: LCPFormer, sample: Sample) -> np.ndarray:
    out = model(sample.cloud)
    return np.argmax(out.data.reshape(-1, model.config.classes), axis=1)


def evaluate(model: LCPFormer, dataset: List[Sample], workers: int = 1) -> Metrics:
    """
    OA and mAcc (plus per class IoU and mIoU for segmentation) over a labelled dataset.
    """
    predictions = ordered_map(lambda s: predict(model, s), dataset, workers)
    labels = np.concatenate([s.targets() for s in dataset]) if dataset else np.zeros(0, dtype=np.int64)
    predicted = np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)
    confusion = confusion_matrix(labels, predicted, model.config.classes)
    return Metrics.from_confusion(confusion, with_iou=model.config.task != TASK_CLASSIFICATION)


@dataclass
class TrainResult:
    model: LCPFormer
    records: List[TrainRecord]
    best_epoch: int


class Trainer:
    """
    Seed-deterministic optimization of one network on one dataset split.
    """

    def __init__(self, config: RunConfig, model: LCPFormer, train_set: List[Sample], val_set: List[Sample], logger: LcpLogWrapper = LcpLogger):
        if model.config.task == TASK_DETECTION:
            raise LcpConfigError("Detection networks have no head to train")
        if not train_set:
            raise LcpConfigError("Empty training set")
        self.config = config
        self.model = model
        self.train_set = train_set
        self.val_set = val_set
        self.logger = logger
        t = config.train
        self.optimizer = OptimizerState.create(
            t.optimizer, model.params.tensors(), t.lr, weight_decay=t.weight_decay, momentum=t.momentum, betas=tuple(t.betas), eps=t.eps
        )

    def step(self, batch: List[Tuple[int, Sample]], epoch: int, lr: float) -> List[SampleResult]:
        """
        One optimization step: per cloud gradients (possibly on worker threads), averaged in batch order,
        clipped, then applied.
        """
        t = self.config.train
        results = ordered_map(lambda item: sample_gradients(self.model, item[1], (t.seed, epoch, item[0]), t.augment), batch, t.workers)
        # Parameters stay untouched by a failing batch
        for r in results:
            if not np.isfinite(r.loss):
                raise LcpNonFiniteError(f"loss {r.loss}")
            if not all(np.all(np.isfinite(g)) for g in r.grads):
                raise LcpNonFiniteError("non-finite gradients")
        grads = [sum(r.grads[i] for r in results) / len(results) for i in range(len(results[0].grads))]
        if t.clip_norm > 0:
            clip_grad_norm(grads, t.clip_norm)
        self.optimizer.lr = lr
        optimizer_step(self.model.params.tensors(), grads, self.optimizer)
        return results

    def run_epoch(self, epoch: int) -> Tuple[float, float, float]:
        t = self.config.train
        lr = cosine_lr(epoch, t.epochs, t.lr)
        order = np.random.default_rng([t.seed, epoch]).permutation(len(self.train_set))
        losses, correct, total = [], 0, 0
        for begin in range(0, len(order), t.batch_size):
            batch = [(int(i), self.train_set[i]) for i in order[begin : begin + t.batch_size]]
            try:
                results = self.step(batch, epoch, lr)
            except LcpNonFiniteError as e:
                raise LcpNonFiniteError(f"Non-finite training loss at epoch {epoch + 1} ({e})")
            for r in results:
                losses.append(r.loss)
                correct += r.correct
                total += r.total
        return lr, float(np.mean(losses)), correct / total

    def fit(self, out_dir: Path = None) -> TrainResult:
        t = self.config.train
        classification = self.model.config.task == TASK_CLASSIFICATION
        total = param_count(self.model.params)
        lcp = total - param_count(self.model.params, exclude=is_lcp_param)
        self.logger.info("brain", f"{total} parameters ({lcp} in propagation modules, {100.0 * lcp / total:.2f}%)")

        metrics_file = None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            metrics_file = (out_dir / METRICS_NAME).open("w")
            metrics_file.write(METRICS_HEADER + "\n")

        records: List[TrainRecord] = []
        best_epoch, best_score = 0, -np.inf
        try:
            for epoch in range(t.epochs):
                started = time.perf_counter()
                lr, loss, acc = self.run_epoch(epoch)
                val = evaluate(self.model, self.val_set, t.workers) if self.val_set else None
                record = TrainRecord(
                    epoch + 1,
                    lr,
                    loss,
                    acc,
                    val.oa if val else float("nan"),
                    val.macc if val else float("nan"),
                    None if classification or val is None else val.miou,
                    time.perf_counter() - started,
                )
                records.append(record)
                self.logger.info(
                    "chart_increasing",
                    f"Epoch {record.epoch}/{t.epochs}: loss={loss:.4f} acc={acc:.4f} val_oa={record.val_oa:.4f} "
                    + (f"val_miou={record.val_miou:.4f} " if record.val_miou is not None else "")
                    + f"lr={lr:.3g} ({record.wall_time:.1f}s)",
                )
                if metrics_file is not None:
                    metrics_file.write(record.csv_row() + "\n")
                    metrics_file.flush()

                # Best validation score (latest epoch when there is no validation set)
                score = (val.oa if classification else val.miou) if val else float(epoch)
                if score > best_score:
                    best_epoch, best_score = record.epoch, score
                    if out_dir is not None:
                        save_checkpoint(out_dir / CHECKPOINT_NAME, self.model.params, self.optimizer)
                        self.logger.debug(f"Checkpoint saved for epoch {record.epoch}")
        finally:
            if metrics_file is not None:
                metrics_file.close()
        return TrainResult(self.model, records, best_epoch)


def datasets(config: RunConfig) -> Tuple[List[Sample], List[Sample]]:
    return split(generate(config.dataset_spec()), config.data.val_fraction, config.train.seed)


def train(config: RunConfig, out_dir: Path = None, logger: LcpLogWrapper = LcpLogger) -> TrainResult:
    """
    Full training run from a resolved config: generate data, build the network, optimize.

    With an output folder, writes the metrics CSV and the best validation checkpoint.
    """
    model = LCPFormer.create(config.model_config())
    train_set, val_set = datasets(config)
    logger.debug(f"Dataset: {len(train_set)} training / {len(val_set)} validation clouds")
    return Trainer(config, model, train_set, val_set, logger).fit(out_dir)
