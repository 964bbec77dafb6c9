import configparser
import re
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List

import jsonschema
import yaml

from lcpformer.data.dataset import DatasetSpec
from lcpformer.errors import LcpConfigError
from lcpformer.logs import LcpLogger
from lcpformer.network.config import ModelConfig, preset

# Override pattern (section.key=value)
OVERRIDE_PATTERN = re.compile(r"^([^ =.]+)\.([^ =]+)=(.*)$")

# Resolved config name written beside outputs
CONFIG_NAME = "config.ini"

TRUE_WORDS = ["true", "yes", "on", "1"]
FALSE_WORDS = ["false", "no", "off", "0"]


@lru_cache(maxsize=None)
def load_schema() -> dict:
    schema_file = Path(__file__).parent / "config.yml"
    LcpLogger.debug(f"Loading config schema from {schema_file}")
    with schema_file.open() as f:
        return yaml.full_load(f)


def defaults() -> Dict[str, Dict[str, Any]]:
    return {
        section: {key: spec["default"] for key, spec in content["properties"].items()}
        for section, content in load_schema()["properties"].items()
    }


@dataclass
class DataSettings:
    task: str
    classes: int
    samples: int
    points: int
    noise: float
    val_fraction: float
    min_objects: int
    max_objects: int


@dataclass
class ModelSettings:
    preset: str
    k: List[int]
    blocks: int
    layers: int
    heads: int
    norm: str
    lcp: bool
    lcp_weighting: str
    precision: str


@dataclass
class TrainSettings:
    optimizer: str
    lr: float
    momentum: float
    weight_decay: float
    betas: List[float]
    eps: float
    epochs: int
    batch_size: int
    clip_norm: float
    augment: str
    workers: int
    seed: int


@dataclass
class RunConfig:
    data: DataSettings
    model: ModelSettings
    train: TrainSettings
    # Where values came from (file path, overrides), for logs
    sources: List[str] = field(default_factory=list, compare=False)

    @staticmethod
    def from_values(values: Dict[str, Dict[str, Any]], sources: List[str] = None) -> "RunConfig":
        try:
            jsonschema.validate(values, load_schema())
        except jsonschema.ValidationError as e:
            where = ".".join(str(p) for p in e.absolute_path)
            raise LcpConfigError(f"Invalid config value{' for ' + where if where else ''}: {e.message}")
        return RunConfig(
            DataSettings(**values["data"]), ModelSettings(**values["model"]), TrainSettings(**values["train"]), list(sources or [])
        )

    def values(self) -> Dict[str, Dict[str, Any]]:
        return {"data": asdict(self.data), "model": asdict(self.model), "train": asdict(self.train)}

    def with_overrides(self, overrides: List[str]) -> "RunConfig":
        values = self.values()
        for override in overrides:
            m = OVERRIDE_PATTERN.match(override)
            if m is None:
                raise LcpConfigError(f"Invalid override (expected section.key=value): {override}")
            section, key, text = m.groups()
            values[section] = dict(values.get(section, {}))
            values[section][key] = parse_value(section, key, text)
        return RunConfig.from_values(values, self.sources + [f"--set {o}" for o in overrides])

    def dataset_spec(self) -> DatasetSpec:
        d = self.data
        return DatasetSpec(d.task, d.classes, d.samples, d.points, d.noise, self.train.seed, d.min_objects, d.max_objects).validate()

    def model_config(self) -> ModelConfig:
        """
        Preset network adapted to the dataset (points, classes) and to the model settings.
        """
        m = self.model
        base = preset(m.preset)
        if base.task != self.data.task:
            raise LcpConfigError(f"Model preset '{m.preset}' is a {base.task} network, data task is {self.data.task}")
        if self.data.points != base.input_points:
            # Blocks keeping every input point follow the input size
            blocks = [replace(b, out_points=self.data.points) if b.out_points == base.input_points else b for b in base.blocks]
            base = replace(base, input_points=self.data.points, blocks=blocks)
        if m.k:
            base = base.with_neighbors(m.k)
        if m.blocks:
            base = base.with_block_count(m.blocks)
        if m.layers:
            base = base.with_attention_layers(m.layers)
        return replace(
            base,
            classes=self.data.classes,
            heads=m.heads,
            norm=m.norm,
            lcp=m.lcp,
            lcp_weighting=m.lcp_weighting,
            precision=m.precision,
            seed=self.train.seed,
        ).validate()


def _schema_of(section: str, key: str) -> dict:
    sections = load_schema()["properties"]
    if section not in sections:
        raise LcpConfigError(f"Unknown config section: [{section}]")
    if key not in sections[section]["properties"]:
        raise LcpConfigError(f"Unknown config key: {section}.{key}")
    return sections[section]["properties"][key]


def _convert(kind: str, text: str, name: str):
    try:
        if kind == "integer":
            return int(text)
        if kind == "number":
            return float(text)
    except ValueError:
        raise LcpConfigError(f"Invalid {kind} for {name}: '{text}'")
    if kind == "boolean":
        if text.lower() in TRUE_WORDS:
            return True
        if text.lower() in FALSE_WORDS:
            return False
        raise LcpConfigError(f"Invalid boolean for {name}: '{text}'")
    return text


def parse_value(section: str, key: str, text: str) -> Any:
    spec = _schema_of(section, key)
    name = f"{section}.{key}"
    text = text.strip()
    if spec["type"] == "array":
        return [_convert(spec["items"]["type"], item.strip(), name) for item in text.split(",") if item.strip()]
    return _convert(spec["type"], text, name)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def read_config(path: Path = None) -> RunConfig:
    """
    Read an INI run config ("key = value" lines under [data], [model] and [train]).

    Missing keys take their documented defaults; no path means all defaults.
    """
    values = defaults()
    if path is None:
        return RunConfig.from_values(values, ["defaults"])
    if not path.is_file():
        raise LcpConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as e:
        raise LcpConfigError(f"Malformed config file {path}: {e.message}")
    for section in parser.sections():
        for key, text in parser.items(section):
            values.setdefault(section, {})[key] = parse_value(section, key, text)
    return RunConfig.from_values(values, [str(path)])


def write_config(path: Path, config: RunConfig):
    parser = configparser.ConfigParser(interpolation=None)
    for section, content in config.values().items():
        parser[section] = {key: format_value(value) for key, value in content.items()}
    with path.open("w") as f:
        parser.write(f)
