"""Pipeline configuration: one JSON document, every default overridable, unknown keys rejected."""
import dataclasses
import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .readout import TrainConfig
from .reservoir import ReservoirSpec
from .sweep import SweepConfig
from .units import AstrocyteConfig, NeuronConfig


class ConfigError(ValueError):
    pass


@dataclass
class LorenzConfig:
    n_trajectories: int = 20
    windows_per_trajectory: int = 500
    dt: float = 0.01
    transient_steps: int = 1000
    init_range: float = 10.0
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass
class ReservoirConfig:
    presentations: int = 30
    weight_scale: float = 1.0
    self_connections: bool = True
    size_mode: str = "total"
    input_every_step: bool = True
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    astrocyte: AstrocyteConfig = field(default_factory=AstrocyteConfig)

    def template(self, n_neurons=2, n_astrocytes=2, seed=0) -> ReservoirSpec:
        return ReservoirSpec(n_neurons=n_neurons, n_astrocytes=n_astrocytes,
                             presentations=self.presentations, weight_scale=self.weight_scale,
                             seed=seed, neuron=self.neuron, astrocyte=self.astrocyte,
                             self_connections=self.self_connections, size_mode=self.size_mode,
                             input_every_step=self.input_every_step)


@dataclass
class TrainingConfig(TrainConfig):
    # reservoir size used by the single-run `train` command
    n_neurons: int = 50
    proportion_index: int = 5

    def train_config(self) -> TrainConfig:
        return TrainConfig(**{f.name: getattr(self, f.name)
                              for f in dataclasses.fields(TrainConfig)})


@dataclass
class AnalysisConfig:
    slope_epochs: int = 10
    plateau_window: int = 5
    plateau_tol: float = 0.01
    lambda_count: int = 50
    lambda_min_ratio: float = 1e-4
    cv_folds: int = 5
    kde_grid: int = 200
    min_records: int = 5


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "out"
    dataset: Optional[str] = None
    lorenz: LorenzConfig = field(default_factory=LorenzConfig)
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def to_dict(self):
        return asdict(self)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(known)}")
    kw = {}
    for name, value in data.items():
        hint = hints[name]
        path = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(hint):
            kw[name] = _build(hint, value, path)
        elif typing.get_origin(hint) is tuple and isinstance(value, list):
            kw[name] = tuple(value)
        else:
            kw[name] = value
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(data) -> PipelineConfig:
    return _build(PipelineConfig, data, "")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def dump_config(cfg: PipelineConfig, path, **extra):
    """Write the resolved ``config.json`` (re-loadable) and a ``stamp.json`` into directory ``path``."""
    from . import __version__
    from ._kernels import backend_name

    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    stamp = {"package": "astrolsm", "version": __version__, "backend": backend_name()}
    stamp.update(extra)
    with open(out_dir / "stamp.json", "w") as fh:
        json.dump(stamp, fh, indent=2, sort_keys=True)
        fh.write("\n")
