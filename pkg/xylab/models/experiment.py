"""Experiment file schema: one YAML document per experiment, unknown keys rejected."""
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, field_validator, model_validator

from xylab.core.config import settings
from xylab.core.errors import ConfigError
from xylab.models.geometry import Arc, ArcSet, BasePoint, FiberGrid, ShiftMetric
from xylab.models.potential import FourierTerm, Potential, fourier, from_catalog
from xylab.models.results import ChainConfig

STRICT = ConfigDict(extra="forbid")


class PotentialSpec(BaseModel):
    model_config = STRICT

    name: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    fourier: Optional[List[FourierTerm]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.name is None) == (self.fourier is None):
            raise ValueError("give either a catalog name or a fourier table")
        return self

    def build(self) -> Potential:
        if self.fourier is not None:
            return fourier(self.fourier)
        return from_catalog(self.name, **self.params)


class GridSpec(BaseModel):
    model_config = STRICT

    n_nodes: PositiveInt = 128
    arity: Optional[PositiveInt] = None


class MetricSpec(BaseModel):
    model_config = STRICT

    theta: float = Field(default_factory=lambda: settings.THETA, gt=0.0, lt=1.0)


class SetSpec(BaseModel):
    """Arcs per coordinate index, e.g. {0: [[2.64, 3.64]]}."""
    model_config = STRICT

    arcs: Dict[int, List[Tuple[float, float]]] = Field(default_factory=dict)
    open: bool = False

    @field_validator("arcs")
    @classmethod
    def _valid_arcs(cls, v):
        for index, arcs in v.items():
            if index < 0:
                raise ValueError(f"coordinate index {index} is negative")
            for start, end in arcs:
                try:
                    Arc(start=start, end=end)
                except ValidationError:
                    raise ValueError(f"coordinate {index}: arc [{start}, {end}] has zero length") from None
        return v

    def build(self) -> ArcSet:
        return ArcSet.from_arcs(self.arcs, open_arcs=self.open)


class PointSpec(BaseModel):
    model_config = STRICT

    head: List[float] = Field(default_factory=list)
    tail: List[float] = Field(min_length=1)

    def build(self) -> BasePoint:
        return BasePoint(head=tuple(self.head), periodic_tail=tuple(self.tail))


class OutputSpec(BaseModel):
    model_config = STRICT

    directory: str = "results"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class ExperimentConfig(BaseModel):
    model_config = STRICT

    name: str = "experiment"
    potential: PotentialSpec
    grid: GridSpec = Field(default_factory=GridSpec)
    metric: MetricSpec = Field(default_factory=MetricSpec)
    c_schedule: List[PositiveFloat] = Field(default_factory=lambda: [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0])
    n_schedule: List[PositiveInt] = Field(default_factory=lambda: [1, 2, 5, 10, 20])
    sets: List[SetSpec] = Field(default_factory=list)
    probes: List[PointSpec] = Field(default_factory=lambda: [PointSpec(tail=[0.0])], min_length=1)
    eps_list: List[PositiveFloat] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    max_period: PositiveInt = 3
    selection_gap: PositiveFloat = Field(default_factory=lambda: settings.SELECTION_GAP)
    maxplus_method: Literal["value", "policy"] = "value"
    sampler: ChainConfig = Field(default_factory=ChainConfig)
    sampler_c: List[PositiveFloat] = Field(default_factory=lambda: [5.0, 20.0, 80.0], min_length=1)
    outputs: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("c_schedule")
    @classmethod
    def _increasing(cls, v):
        if not v:
            raise ValueError("c_schedule must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("c_schedule must be strictly increasing")
        return v

    def build_potential(self) -> Potential:
        pot = self.potential.build()
        if self.grid.arity is not None and self.grid.arity != pot.arity:
            raise ConfigError(
                f"grid arity {self.grid.arity} does not match {pot.name} (arity {pot.arity})",
                field="grid.arity",
            )
        return pot

    def build_grid(self) -> FiberGrid:
        return FiberGrid(n_nodes=self.grid.n_nodes)

    def build_metric(self) -> ShiftMetric:
        return ShiftMetric(theta=self.metric.theta)

    def build_sets(self) -> List[ArcSet]:
        return [s.build() for s in self.sets]

    def build_probes(self) -> List[BasePoint]:
        return [p.build() for p in self.probes]


def _field_of(exc: ValidationError) -> str:
    loc = exc.errors()[0]["loc"]
    return ".".join(str(part) for part in loc)


def parse_experiment(data: Union[dict, None]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("experiment file must hold a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        field = _field_of(exc)
        raise ConfigError(f"invalid config field '{field}': {exc.errors()[0]['msg']}", field=field)


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}")
    return parse_experiment(data)
