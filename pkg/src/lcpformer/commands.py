import sys
from abc import ABC, abstractmethod
from argparse import Namespace
from typing import Dict, List, Tuple, Type

import numpy as np

from lcpformer.autodiff.gradcheck import finite_diff_check
from lcpformer.autodiff.ops import cross_entropy, reshape
from lcpformer.data.checkpoint import load_checkpoint
from lcpformer.data.config import CONFIG_NAME, RunConfig, read_config, write_config
from lcpformer.data.dataset import TASK_SCENES, DatasetSpec, Sample, read_manifest, write_manifest
from lcpformer.data.formats import read_cloud, write_cloud
from lcpformer.data.synthetic import generate
from lcpformer.errors import LcpGradCheckError, LcpValidationError
from lcpformer.geometry.cloud import PointCloud
from lcpformer.geometry.grouping import ball_query, knn, shared_point_stats
from lcpformer.geometry.sampling import farthest_point_sampling
from lcpformer.logs import LcpLogger, LcpLogWrapper
from lcpformer.network.config import TASK_CLASSIFICATION, preset
from lcpformer.network.model import LCPFormer
from lcpformer.network.params import param_count
from lcpformer.training.loop import TrainResult, datasets, evaluate, train
from lcpformer.utils import ordered_map

# Ablation summary
ABLATION_NAME = "ablation.csv"
ABLATION_HEADER = "axis,value,epochs,params,val_oa,val_macc,val_miou"


def csv_float(value: float) -> str:
    return "" if value is None else f"{value:.6f}"


class LcpCommand(ABC):
    """
    One CLI sub-command; results go to stdout (CSV), progress to the command logger.
    """

    name: str = None

    def __init__(self, args: Namespace):
        self.args = args
        self.logger: LcpLogWrapper = LcpLogger.child(self.name)

    @abstractmethod
    def run(self):  # pragma: no cover
        pass

    def emit(self, lines: List[str]):
        sys.stdout.write("".join(line + "\n" for line in lines))
        sys.stdout.flush()

    def run_config(self) -> RunConfig:
        """
        Config file values, then --set overrides, then dedicated flags.
        """
        overrides = list(self.args.set)
        if self.args.seed is not None:
            overrides.append(f"train.seed={self.args.seed}")
        if getattr(self.args, "no_lcp", False):
            overrides.append("model.lcp=false")
        config = read_config(self.args.config).with_overrides(overrides)
        self.logger.debug(f"Config resolved from: {', '.join(config.sources)}")
        return config


class GenDataCommand(LcpCommand):
    name = "gen-data"

    def run(self):
        a = self.args
        points = a.points if a.points is not None else (4096 if a.task == TASK_SCENES else 512)
        spec = DatasetSpec(a.task, a.classes, a.samples, points, a.noise, a.seed, a.min_objects, a.max_objects)
        with self.logger.timed("hourglass_done", "Dataset generated"):
            samples = generate(spec)
        a.out_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, sample in enumerate(samples):
            name = f"cloud_{i:05d}.{a.format}"
            write_cloud(a.out_dir / name, sample.cloud)
            entries.append((name, sample.label))
            self.logger.debug(f"Written {name}")
        manifest = write_manifest(a.out_dir, entries)
        self.logger.info("floppy_disk", f"{len(samples)} clouds written to {a.out_dir} (manifest: {manifest.name})")


class StatsCommand(LcpCommand):
    name = "stats"

    def run(self):
        a = self.args
        if a.input is not None:
            cloud = read_cloud(a.input)
        else:
            cloud = PointCloud(np.random.default_rng(a.seed).uniform(-1.0, 1.0, size=(a.points, 3)))
        centers = farthest_point_sampling(cloud, a.centers)
        if a.grouping == "ball":
            if a.radius is None:
                raise LcpValidationError("Ball query grouping needs a --radius")
            grouping = ball_query(cloud, centers, a.radius, a.k)
        else:
            grouping = knn(cloud, centers, a.k)
        stats = shared_point_stats(grouping)
        self.logger.debug(f"{stats.points_covered}/{stats.n_points} points grouped at least once")
        self.emit(
            [
                "key,value",
                f"points,{stats.n_points}",
                f"centers,{a.centers}",
                f"k,{a.k}",
                f"slots_total,{stats.slots_total}",
                f"points_covered,{stats.points_covered}",
                f"fraction_shared,{stats.fraction_shared:.6f}",
                "multiplicity,points",
            ]
            + [f"{m},{c}" for m, c in enumerate(stats.histogram)]
        )


def parameter_group(name: str) -> str:
    # "blocks.2.before.0.attention.wq" -> "blocks.2.before"
    parts = name.split(".")
    return ".".join(parts[:3]) if parts[0] == "blocks" else parts[0]


class CheckGradCommand(LcpCommand):
    name = "check-grad"

    def run(self):
        a = self.args
        if a.max_entries < 0:
            raise LcpValidationError(f"--max-entries must be >= 0 (got {a.max_entries})")
        config = preset(a.preset)
        model = LCPFormer.create(config, a.seed)
        rng = np.random.default_rng(a.seed)
        cloud = PointCloud(rng.uniform(-1.0, 1.0, size=(config.input_points, 3)))
        if config.task == TASK_CLASSIFICATION:
            labels = np.array([rng.integers(config.classes)])
        else:
            labels = rng.integers(config.classes, size=config.input_points)

        def loss():
            logits = model(cloud)
            return cross_entropy(reshape(logits, (-1, config.classes)), labels)

        named = model.params.named_tensors()
        self.logger.debug(f"Checking {len(named)} tensors of the {a.preset} network")
        with self.logger.timed("stopwatch", "Finite differences computed"):
            report = finite_diff_check(loss, named, h=a.step, tol=a.tol, max_entries=a.max_entries or None, seed=a.seed)

        groups: Dict[str, float] = {}
        for name, error in report.errors.items():
            group = parameter_group(name)
            groups[group] = max(groups.get(group, 0.0), error)
        self.emit(["group,max_rel_error"] + [f"{g},{e:.3e}" for g, e in groups.items()])
        failed = [g for g, e in groups.items() if not e < a.tol]
        if failed:
            raise LcpGradCheckError(f"{len(failed)} parameter group(s) above tolerance {a.tol}: {', '.join(failed)}")
        self.logger.info("white_check_mark", f"{len(groups)} parameter groups within tolerance {a.tol} (worst: {report.worst:.3e})")


class TrainCommand(LcpCommand):
    name = "train"

    def run(self):
        config = self.run_config()
        self.args.out_dir.mkdir(parents=True, exist_ok=True)
        write_config(self.args.out_dir / CONFIG_NAME, config)
        result = train(config, self.args.out_dir, self.logger)
        self.logger.info("checkered_flag", f"Best validation epoch: {result.best_epoch}")


def metrics_csv(task: str, metrics) -> List[str]:
    if task == TASK_CLASSIFICATION:
        return ["oa,macc", f"{csv_float(metrics.oa)},{csv_float(metrics.macc)}"]
    ious = [csv_float(v) if np.isfinite(v) else "" for v in metrics.class_iou]
    header = ["oa", "macc", "miou"] + [f"iou_{c}" for c in range(len(ious))]
    return [",".join(header), ",".join([csv_float(metrics.oa), csv_float(metrics.macc), csv_float(metrics.miou)] + ious)]


class EvalCommand(LcpCommand):
    name = "eval"

    def run(self):
        a = self.args
        config_path = a.config
        if config_path is None and (a.checkpoint.parent / CONFIG_NAME).is_file():
            config_path = a.checkpoint.parent / CONFIG_NAME
        config = read_config(config_path)
        if a.task is not None and a.task != config.data.task:
            raise LcpValidationError(f"Checkpoint was trained for {config.data.task}, not {a.task}")

        model = LCPFormer.create(config.model_config())
        load_checkpoint(a.checkpoint, model.params)
        if a.data is not None:
            dataset = [Sample(read_cloud(path), label) for path, label in read_manifest(a.data)]
        else:
            dataset = datasets(config)[1]
        if not dataset:
            raise LcpValidationError("Nothing to evaluate (empty dataset)")
        with self.logger.timed("stopwatch", f"Evaluated {len(dataset)} clouds"):
            metrics = evaluate(model, dataset, a.workers)
        self.emit(metrics_csv(config.data.task, metrics))


class AblateCommand(LcpCommand):
    name = "ablate"

    def run(self):
        a = self.args
        base = self.run_config()
        a.out_dir.mkdir(parents=True, exist_ok=True)
        write_config(a.out_dir / CONFIG_NAME, base)

        def run_value(value: int) -> Tuple[int, TrainResult]:
            config = base.with_overrides([f"model.{a.axis}={value}"])
            out = a.out_dir / f"{a.axis}_{value}"
            out.mkdir(parents=True, exist_ok=True)
            write_config(out / CONFIG_NAME, config)
            self.logger.info("test_tube", f"Training with {a.axis}={value}")
            result = train(config, out, self.logger.child(f"{a.axis}={value}"))
            return value, result

        rows = [ABLATION_HEADER]
        for value, result in ordered_map(run_value, a.values, a.workers):
            last = result.records[-1]
            count = param_count(result.model.params)
            rows.append(
                f"{a.axis},{value},{last.epoch},{count},{csv_float(last.val_oa)},{csv_float(last.val_macc)},{csv_float(last.val_miou)}"
            )
        (a.out_dir / ABLATION_NAME).write_text("".join(r + "\n" for r in rows))
        self.emit(rows)


COMMANDS: Dict[str, Type[LcpCommand]] = {
    c.name: c for c in [GenDataCommand, StatsCommand, CheckGradCommand, TrainCommand, EvalCommand, AblateCommand]
}


def run_command(args: Namespace):
    COMMANDS[args.command](args).run()