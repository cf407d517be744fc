"""
Configuration management for dnnet-cli
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from .errors import ConfigError

OUTPUT_ROOT_ENV = "DNNET_OUTPUT_ROOT"
PRESET_DIR = Path(__file__).resolve().parent.parent / "configs"

HEAD_SITE_SHORTHANDS = ("blocks", "stem+blocks")
INPUT_GROUPINGS = ("shared", "causal")
LAMBDA_KINDS = ("flat", "descend", "ascend", "custom", "single_pick")


def _known_fields(cls: Any, data: Dict[str, Any], section: str) -> Dict[str, Any]:
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"Unknown {section} keys: {', '.join(unknown)}")
    return dict(data)


@dataclass
class ArchDescriptor:
    """Architecture of a doubly nested residual network"""
    stages: List[int] = field(default_factory=lambda: [8])
    blocks: List[int] = field(default_factory=lambda: [2])
    groups: int = 2
    classes: int = 3
    in_channels: int = 1
    kernel_size: int = 3
    head_sites: Union[str, List[int]] = "blocks"
    input_grouping: str = "shared"
    input_hw: List[int] = field(default_factory=lambda: [8, 8])
    seed: int = 0
    precision: str = "float32"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.stages = [int(s) for s in self.stages]
        self.blocks = [int(b) for b in self.blocks]
        self.input_hw = [int(v) for v in self.input_hw]
        if not isinstance(self.head_sites, str):
            self.head_sites = [int(s) for s in self.head_sites]

    @property
    def total_blocks(self) -> int:
        return sum(self.blocks)

    def site_indices(self) -> List[int]:
        """Head sites: 0 = after the stem, k = after residual block k"""
        if self.head_sites == "blocks":
            return list(range(1, self.total_blocks + 1))
        if self.head_sites == "stem+blocks":
            return list(range(0, self.total_blocks + 1))
        if isinstance(self.head_sites, str):
            raise ConfigError(f"head_sites must be one of {HEAD_SITE_SHORTHANDS} or a list of indices")
        return sorted(set(self.head_sites))

    @property
    def num_layer_groups(self) -> int:
        return len(self.site_indices())

    def block_stage(self, block: int) -> int:
        """Stage of residual block ``block`` (1-based); the stem (0) belongs to stage 0"""
        end = 0
        for stage, count in enumerate(self.blocks):
            end += count
            if block <= end:
                return stage
        raise ConfigError(f"Block {block} out of range (model has {self.total_blocks})")

    def validate(self) -> "ArchDescriptor":
        if not self.stages or len(self.stages) != len(self.blocks):
            raise ConfigError("stages and blocks must be non-empty lists of equal length")
        if any(s < 1 for s in self.stages) or any(b < 1 for b in self.blocks):
            raise ConfigError("Stage widths and block counts must be positive")
        if self.groups < 1 or self.classes < 2 or self.in_channels < 1:
            raise ConfigError("groups must be >= 1, classes >= 2, in_channels >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError("kernel_size must be a positive odd integer")
        if self.input_grouping not in INPUT_GROUPINGS:
            raise ConfigError(f"input_grouping must be one of {INPUT_GROUPINGS}")
        if self.input_grouping == "causal" and self.in_channels % self.groups:
            raise ConfigError(
                f"input_grouping 'causal' needs in_channels ({self.in_channels}) divisible by groups ({self.groups})"
            )
        if len(self.input_hw) != 2 or min(self.input_hw) < 1:
            raise ConfigError("input_hw must be [height, width]")
        sites = self.site_indices()
        if not sites or sites[0] < 0 or sites[-1] != self.total_blocks:
            raise ConfigError(f"head_sites must lie in [0, {self.total_blocks}] and include the last block")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArchDescriptor":
        data = dict(data)
        # short keys used in docs and presets
        if "C" in data:
            data["groups"] = data.pop("C")
        if "N" in data:
            data["classes"] = data.pop("N")
        try:
            return cls(**_known_fields(cls, data, "architecture")).validate()
        except TypeError as e:
            raise ConfigError(f"Invalid architecture descriptor: {e}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ArchDescriptor":
        path = Path(path).expanduser()
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read architecture file {path}: {e}")
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]) -> None:
        with open(Path(path).expanduser(), "w") as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, indent=2, sort_keys=True)

    @classmethod
    def preset(cls, name: str) -> "ArchDescriptor":
        path = PRESET_DIR / f"{name}.yaml"
        if not path.exists():
            available = ", ".join(sorted(p.stem for p in PRESET_DIR.glob("*.yaml")))
            raise ConfigError(f"Unknown architecture preset '{name}' (available: {available})")
        return cls.load(path)

    @classmethod
    def resolve(cls, value: Union[str, Path, "ArchDescriptor"]) -> "ArchDescriptor":
        """Preset name, YAML path or an existing descriptor"""
        if isinstance(value, ArchDescriptor):
            return value.validate()
        text = str(value)
        if Path(text).expanduser().exists():
            return cls.load(text)
        return cls.preset(text)


@dataclass
class TrainConfig:
    """SGD-with-momentum training settings"""
    batch_size: int = 128
    momentum: float = 0.9
    learning_rate: float = 0.1
    decay: Optional[List[List[float]]] = None
    steps: int = 2000
    seed: int = 0
    precision: str = "float32"
    weight_decay: float = 0.0
    eval_every: int = 0
    log_every: int = 100

    def resolved_decay(self) -> List[Tuple[int, float]]:
        """(step, factor) pairs; default multiplies by 0.1 at 60% and 80% of the run"""
        if self.decay is None:
            return [(int(self.steps * 0.6), 0.1), (int(self.steps * 0.8), 0.1)]
        return sorted((int(step), float(factor)) for step, factor in self.decay)

    def lr_at(self, step: int) -> float:
        lr = self.learning_rate
        for boundary, factor in self.resolved_decay():
            if step >= boundary:
                lr *= factor
        return lr

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError("batch_size must be >= 1 and steps >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be positive and weight_decay non-negative")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        for entry in self.decay or []:
            if len(entry) != 2 or entry[1] <= 0:
                raise ConfigError(f"Invalid decay entry {entry}: expected [step, positive factor]")
        return self

    @staticmethod
    def parse_decay(text: str) -> List[List[float]]:
        """'1200:0.1,1600:0.1' -> [[1200, 0.1], [1600, 0.1]]"""
        try:
            return [[int(step), float(factor)] for step, factor in
                    (item.split(":") for item in text.split(",") if item.strip())]
        except ValueError:
            raise ConfigError(f"Invalid decay schedule '{text}' (expected STEP:FACTOR,...)")


@dataclass
class DataConfig:
    """Dataset source and generator settings"""
    source: str = "synth"
    train_count: int = 600
    test_count: int = 300
    noise_sigma: float = 0.25
    seed: int = 7
    flip: bool = False
    crop_pad: int = 0

    @property
    def cifar_dir(self) -> Optional[Path]:
        if self.source.startswith("cifar10:"):
            return Path(self.source.split(":", 1)[1]).expanduser()
        return None

    def validate(self) -> "DataConfig":
        if self.source != "synth" and self.cifar_dir is None:
            raise ConfigError(f"Unknown data source '{self.source}' (use synth or cifar10:DIR)")
        if self.train_count < 1 or self.test_count < 1:
            raise ConfigError("train_count and test_count must be positive")
        if self.noise_sigma < 0 or self.crop_pad < 0:
            raise ConfigError("noise_sigma and crop_pad must be non-negative")
        return self


@dataclass
class LambdaConfig:
    """Loss-weight matrix descriptor"""
    kind: str = "flat"
    gamma: float = 1.2
    table: Optional[str] = None
    pick: Optional[List[float]] = None
    base: float = 1.0

    @classmethod
    def parse(cls, text: str, gamma: float = 1.2) -> "LambdaConfig":
        """flat | descend | ascend | custom:FILE | pick:L,C,K[,BASE]"""
        if text in ("flat", "descend", "ascend"):
            return cls(kind=text, gamma=gamma)
        if text.startswith("custom:"):
            return cls(kind="custom", table=text.split(":", 1)[1], gamma=gamma)
        if text.startswith("pick:"):
            try:
                values = [float(v) for v in text.split(":", 1)[1].split(",")]
            except ValueError:
                values = []
            if len(values) not in (3, 4):
                raise ConfigError(f"Invalid pick '{text}' (expected pick:L,C,K or pick:L,C,K,BASE)")
            base = values[3] if len(values) == 4 else 1.0
            return cls(kind="single_pick", pick=values[:3], base=base, gamma=gamma)
        raise ConfigError(f"Unknown lambda '{text}' (use flat, descend, ascend, custom:FILE or pick:L,C,K)")

    def validate(self) -> "LambdaConfig":
        if self.kind not in LAMBDA_KINDS:
            raise ConfigError(f"lambda kind must be one of {LAMBDA_KINDS}")
        if self.kind == "custom" and not self.table:
            raise ConfigError("custom lambda needs a table file")
        if self.kind == "single_pick" and (not self.pick or len(self.pick) != 3):
            raise ConfigError("single_pick lambda needs pick = [l, c, k]")
        return self


def default_output_root() -> Path:
    return Path(os.getenv(OUTPUT_ROOT_ENV, "./runs")).expanduser()


@dataclass
class RunConfig:
    """Fully merged configuration for one command invocation"""
    arch: ArchDescriptor = field(default_factory=ArchDescriptor)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    weights: LambdaConfig = field(default_factory=LambdaConfig)
    output_dir: Optional[str] = None

    def resolve(self) -> "RunConfig":
        """Validate every section and pin the output directory"""
        self.arch.validate()
        self.train.validate()
        self.data.validate()
        self.weights.validate()
        if self.output_dir is None:
            self.output_dir = str(default_output_root())
        return self

    @property
    def output_path(self) -> Path:
        if self.output_dir is None:
            raise ConfigError("output_dir is not resolved")
        return Path(self.output_dir).expanduser()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'arch': self.arch.to_dict(),
            'train': asdict(self.train),
            'data': asdict(self.data),
            'weights': asdict(self.weights),
            'output_dir': self.output_dir,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        config = cls()
        try:
            if 'arch' in data:
                arch = data['arch']
                config.arch = ArchDescriptor.resolve(arch) if isinstance(arch, str) else ArchDescriptor.from_dict(arch)
            if 'train' in data:
                config.train = TrainConfig(**_known_fields(TrainConfig, data['train'], "train"))
            if 'data' in data:
                config.data = DataConfig(**_known_fields(DataConfig, data['data'], "data"))
            if 'weights' in data:
                config.weights = LambdaConfig(**_known_fields(LambdaConfig, data['weights'], "weights"))
        except TypeError as e:
            raise ConfigError(f"Invalid configuration: {e}")
        config.output_dir = data.get('output_dir')
        return config

    @classmethod
    def load(cls, path: Optional[Union[str, Path]]) -> "RunConfig":
        """Load from YAML; a missing path gives the defaults"""
        if path is None:
            return cls()
        path = Path(path).expanduser()
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r") as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse config file {path}: {e}")
        return cls.from_dict(data)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path).expanduser()
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, indent=2, sort_keys=True)
        return path

    def echo(self) -> Path:
        """Write resolved_config.yaml into the output directory"""
        return self.save(self.output_path / "resolved_config.yaml")

    def __str__(self) -> str:
        return yaml.dump(self.to_dict(), default_flow_style=False, indent=2, sort_keys=True)
