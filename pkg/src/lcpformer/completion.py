from argparse import Action, ArgumentParser, Namespace
from typing import List

from lcpformer.network.config import PRESETS

# Gradient checks only run on miniature networks
CHECKABLE_PRESETS = ["miniature-cls", "miniature-seg"]

# Ablation axes
ABLATION_AXES = ["k", "blocks", "layers"]


class PresetCompleter:
    def __init__(self, checkable_only: bool = False):
        self.checkable_only = checkable_only

    def __call__(self, prefix: str, action: Action, parser: ArgumentParser, parsed_args: Namespace) -> List[str]:
        # Complete with known network presets
        return [p for p in (CHECKABLE_PRESETS if self.checkable_only else PRESETS) if p.startswith(prefix)]


class AxisCompleter:
    def __call__(self, prefix: str, action: Action, parser: ArgumentParser, parsed_args: Namespace) -> List[str]:
        return [a for a in ABLATION_AXES if a.startswith(prefix)]
