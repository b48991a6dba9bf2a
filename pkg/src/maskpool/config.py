"""Run configuration: one JSON file drives every CLI command.

Defaults carry the published training recipe (25/15 ms STFT, 256 channels,
batch 96, Adam at 0.001, weight decay 0.0004); a config file only has to
name the task, the data paths, and the network head dimensions.  Relative
paths resolve against the config file's directory.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .data import TASK_MULTI, TASK_SINGLE
from .errors import ManifestError
from .network import NetworkConfig

TASKS = ("scene", "tagging")
_TASK_TO_MANIFEST = {"scene": TASK_SINGLE, "tagging": TASK_MULTI}
_TASK_TO_HEAD = {"scene": "softmax", "tagging": "sigmoid"}


@dataclass
class Paths:
    manifest: str = "manifest.csv"
    classes: str = "classes.txt"
    features_dir: str = "features"
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"

    def resolve(self, base: Path) -> "Paths":
        return Paths(**{k: str((base / v).resolve()) for k, v in asdict(self).items()})


@dataclass
class DspSettings:
    window_ms: float = 25.0
    hop_ms: float = 15.0


@dataclass
class TrainingSettings:
    batch_size: int = 96
    lr: float = 1e-3
    weight_decay: float = 4e-4
    max_epochs: int = 100
    min_delta: float = 1e-4
    patience_lr: int = 5
    patience_stop: int = 15
    lr_floor: float = 1e-5
    seed: int = 0


@dataclass
class CropSettings:
    min_frames: int = 15
    max_frames: int | None = None


@dataclass
class RunConfig:
    task: str
    network: NetworkConfig
    num_folds: int = 4
    paths: Paths = field(default_factory=Paths)
    dsp: DspSettings = field(default_factory=DspSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    crop: CropSettings = field(default_factory=CropSettings)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ManifestError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.network.head != _TASK_TO_HEAD[self.task]:
            raise ManifestError(
                f"task {self.task!r} requires head {_TASK_TO_HEAD[self.task]!r}, "
                f"config says {self.network.head!r}"
            )
        if self.num_folds < 2:
            raise ManifestError("need at least 2 folds for train/validation splits")

    @property
    def manifest_task(self) -> str:
        return _TASK_TO_MANIFEST[self.task]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["network"] = self.network.to_dict()
        return d

    def echo(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build_section(cls, values: dict, where: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ManifestError(f"unknown {where} config keys: {sorted(unknown)}")
    return cls(**values)


def load_run_config(path) -> RunConfig:
    """Parse a JSON run config, filling defaults and resolving paths."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})")
    known_top = {"task", "num_folds", "paths", "dsp", "network", "training", "crop"}
    unknown = set(raw) - known_top
    if unknown:
        raise ManifestError(f"{path}: unknown config keys: {sorted(unknown)}")
    if "task" not in raw:
        raise ManifestError(f"{path}: config needs a 'task'")
    task = raw["task"]
    net_values = dict(raw.get("network", {}))
    for required in ("input_bins", "num_classes"):
        if required not in net_values:
            raise ManifestError(f"{path}: network config needs '{required}'")
    net_values.setdefault("head", _TASK_TO_HEAD.get(task, "softmax"))
    config = RunConfig(
        task=task,
        num_folds=int(raw.get("num_folds", 4)),
        network=_build_section(NetworkConfig, net_values, "network"),
        paths=_build_section(Paths, raw.get("paths", {}), "paths").resolve(path.parent),
        dsp=_build_section(DspSettings, raw.get("dsp", {}), "dsp"),
        training=_build_section(TrainingSettings, raw.get("training", {}), "training"),
        crop=_build_section(CropSettings, raw.get("crop", {}), "crop"),
    )
    return config


def write_run_config(path, config_dict: dict) -> None:
    with open(path, "w") as fh:
        json.dump(config_dict, fh, indent=2, sort_keys=True)
        fh.write("\n")
