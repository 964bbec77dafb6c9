import logging
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import List

import argcomplete

from lcpformer import __version__
from lcpformer.completion import ABLATION_AXES, CHECKABLE_PRESETS, AxisCompleter, PresetCompleter
from lcpformer.errors import LcpValidationError


class LcpArgumentParser(ArgumentParser):
    def error(self, message: str):
        # Usage errors are validation errors (exit code 1), not a SystemExit
        raise LcpValidationError(f"{self.prog}: {message}")


def int_list(value: str) -> List[int]:
    try:
        values = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise LcpValidationError(f"Invalid integer list: '{value}'")
    if not values:
        raise LcpValidationError("Empty value list")
    return values


class LcpParser:
    def __init__(self):
        # Prepare parser
        self.parser = LcpArgumentParser(prog="lcpformer", description="Point cloud transformer with local context propagation")

        # Version handling
        self.parser.add_argument("-V", "--version", action="version", version=f"lcpformer version {__version__}")

        # Logging
        lg = self.parser.add_argument_group("logging options")
        ll = lg.add_mutually_exclusive_group()
        ll.add_argument(
            "-q",
            "--quiet",
            action="store_const",
            const=logging.WARNING,
            default=logging.INFO,
            dest="log_level",
            help="quiet mode (only warning/error messages)",
        )
        ll.add_argument("--info", action="store_const", const=logging.INFO, default=logging.INFO, dest="log_level", help="default mode")
        ll.add_argument(
            "-v",
            "--verbose",
            action="store_const",
            const=logging.DEBUG,
            default=logging.INFO,
            dest="log_level",
            help="verbose mode (all messages, including debug ones)",
        )
        lg.add_argument("--log-file", metavar="L", default="", help="also write logs to L").completer = argcomplete.completers.FilesCompleter(
            directories=True
        )
        lg.add_argument("--no-logs", action="store_true", default=False, help="disable logging")

        # Commands
        sub = self.parser.add_subparsers(dest="command", metavar="command", required=True)
        self.add_gen_data(sub)
        self.add_stats(sub)
        self.add_check_grad(sub)
        self.add_train(sub)
        self.add_eval(sub)
        self.add_ablate(sub)

        # Handle completion
        argcomplete.autocomplete(self.parser)

    @staticmethod
    def add_run_config(p: ArgumentParser):
        cg = p.add_argument_group("config options")
        cg.add_argument(
            "--config", metavar="C", type=Path, default=None, help="run config file (default: built-in defaults)"
        ).completer = argcomplete.completers.FilesCompleter(allowednames=["*.ini", "*.cfg"], directories=True)
        cg.add_argument("--set", metavar="S.K=V", action="append", default=[], help="override config item(s) (e.g. train.epochs=10)")
        cg.add_argument("--seed", type=int, default=None, help="override train.seed")

    @staticmethod
    def out_dir(p: ArgumentParser, required: bool = True):
        p.add_argument("--out-dir", metavar="D", type=Path, required=required, help="output folder").completer = (
            argcomplete.completers.DirectoriesCompleter()
        )

    def add_gen_data(self, sub):
        p = sub.add_parser("gen-data", help="generate a synthetic dataset")
        p.add_argument("--task", choices=["classification", "segmentation"], default="classification", help="shapes or scenes")
        self.out_dir(p)
        p.add_argument("--classes", type=int, default=4, help="shape kinds, or ground + object kinds (default: 4)")
        p.add_argument("--samples", type=int, default=125, help="clouds per class, or scene count (default: 125)")
        p.add_argument("--points", type=int, default=None, help="points per cloud (default: 512 for shapes, 4096 for scenes)")
        p.add_argument("--noise", type=float, default=0.0, help="coordinate noise sigma (default: 0)")
        p.add_argument("--min-objects", type=int, default=2, help="minimum objects per scene (default: 2)")
        p.add_argument("--max-objects", type=int, default=4, help="maximum objects per scene (default: 4)")
        p.add_argument("--format", choices=["bin", "xyz"], default="bin", help="cloud file format (default: bin)")
        p.add_argument("--seed", type=int, default=0, help="generation seed (default: 0)")

    def add_stats(self, sub):
        p = sub.add_parser("stats", help="shared point statistics of a grouping")
        p.add_argument("--in", dest="input", metavar="F", type=Path, default=None, help="cloud file (default: random cube cloud)").completer = (
            argcomplete.completers.FilesCompleter(allowednames=["*.bin", "*.xyz"], directories=True)
        )
        p.add_argument("--points", type=int, default=1024, help="random cloud size (default: 1024)")
        p.add_argument("--centers", type=int, default=512, help="region count (default: 512)")
        p.add_argument("--k", type=int, default=16, help="points per region (default: 16)")
        p.add_argument("--grouping", choices=["knn", "ball"], default="knn", help="grouping kind (default: knn)")
        p.add_argument("--radius", type=float, default=None, help="ball query radius")
        p.add_argument("--seed", type=int, default=0, help="random cloud seed (default: 0)")

    def add_check_grad(self, sub):
        p = sub.add_parser("check-grad", help="finite difference check of a miniature network")
        p.add_argument("--preset", choices=CHECKABLE_PRESETS, default="miniature-cls", help="network preset").completer = PresetCompleter(True)
        p.add_argument("--tol", type=float, default=1e-4, help="max relative error (default: 1e-4)")
        p.add_argument("--step", type=float, default=1e-5, help="finite difference step (default: 1e-5)")
        p.add_argument(
            "--max-entries", type=int, default=8, help="entries sampled at random and perturbed in every tensor, 0 for all of them (default: 8)"
        )
        p.add_argument("--seed", type=int, default=0, help="parameters and input seed (default: 0)")

    def add_train(self, sub):
        p = sub.add_parser("train", help="train a network")
        self.add_run_config(p)
        self.out_dir(p)
        p.add_argument("--no-lcp", action="store_true", default=False, help="disable local context propagation")

    def add_eval(self, sub):
        p = sub.add_parser("eval", help="evaluate a checkpoint")
        p.add_argument("--checkpoint", metavar="W", type=Path, required=True, help="checkpoint file").completer = (
            argcomplete.completers.FilesCompleter(allowednames=["*.lcpw"], directories=True)
        )
        p.add_argument("--data", metavar="D", type=Path, default=None, help="dataset manifest or folder (default: regenerated validation split)")
        p.add_argument("--task", choices=["classification", "segmentation"], default=None, help="expected task")
        p.add_argument("--config", metavar="C", type=Path, default=None, help="run config (default: config.ini beside the checkpoint)")
        p.add_argument("--workers", type=int, default=1, help="evaluation threads (default: 1)")

    def add_ablate(self, sub):
        p = sub.add_parser("ablate", help="one training per value of an architecture setting")
        p.add_argument("--axis", choices=ABLATION_AXES, required=True, help="ablated setting").completer = AxisCompleter()
        p.add_argument("--values", type=int_list, required=True, help="comma separated values")
        self.add_run_config(p)
        self.out_dir(p)
        p.add_argument("--workers", type=int, default=1, help="concurrent trainings (default: 1)")

    def parse(self, argv: List[str]) -> Namespace:
        # Parse arguments
        return self.parser.parse_args(argv)
