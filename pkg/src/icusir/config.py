"""
Runtime settings and experiment configuration files.
"""

import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings

from .costs import (
    AffineCost,
    ConstantCost,
    CostModel,
    MultiplicativeCost,
    PowerCost,
    StateProductCost,
    TableCost,
    ZeroCost,
)
from .errors import ConfigError
from .params import EXAMPLE1_POPULATION, EpidemicParams


class Settings(BaseSettings):
    """Process-level configuration."""

    log_level: str = "INFO"
    threads: int = 1
    default_config: Optional[str] = None
    output_dir: str = "out"

    # HTTP surface
    host: str = "127.0.0.1"
    port: int = 8765

    class Config:
        env_prefix = "ICUSIR_"
        env_file = ".env"


settings = Settings()


# =============================================================================
# Cost selectors
# =============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ZeroCostConfig(_Strict):
    kind: Literal["zero"] = "zero"


class ConstantCostConfig(_Strict):
    kind: Literal["constant"] = "constant"
    value: float = Field(ge=0)


class AffineCostConfig(_Strict):
    kind: Literal["affine"] = "affine"
    lam: float = Field(default=1.0, gt=0, alias="lambda")


class MultiplicativeSICostConfig(_Strict):
    kind: Literal["multiplicative_si"] = "multiplicative_si"
    lam: float = Field(default=1.0, gt=0, alias="lambda")


class PowerCostConfig(_Strict):
    kind: Literal["multiplicative_power"] = "multiplicative_power"
    lam: float = Field(default=1.0, gt=0, alias="lambda")
    eta: float = Field(default=1.0, ge=0, le=1)


class StateProductCostConfig(_Strict):
    kind: Literal["state_product"] = "state_product"
    lam: float = Field(default=1.0, ge=0, alias="lambda")
    s_power: int = Field(default=1, ge=0)
    i_power: int = Field(default=1, ge=0)


class TableCostConfig(_Strict):
    kind: Literal["table"] = "table"
    path: str
    method: Literal["linear", "nearest"] = "linear"


CostConfig = Annotated[
    Union[ZeroCostConfig, ConstantCostConfig, AffineCostConfig, MultiplicativeSICostConfig,
          PowerCostConfig, StateProductCostConfig, TableCostConfig],
    Field(discriminator="kind"),
]


def build_cost(cfg: CostConfig, base_dir: Optional[Path] = None) -> CostModel:
    """Instantiate the cost model a config block selects."""
    if isinstance(cfg, ZeroCostConfig):
        return ZeroCost()
    if isinstance(cfg, ConstantCostConfig):
        return ConstantCost(cfg.value)
    if isinstance(cfg, AffineCostConfig):
        return AffineCost(cfg.lam)
    if isinstance(cfg, MultiplicativeSICostConfig):
        return MultiplicativeCost.si(cfg.lam)
    if isinstance(cfg, PowerCostConfig):
        return PowerCost(cfg.lam, cfg.eta)
    if isinstance(cfg, StateProductCostConfig):
        return StateProductCost(cfg.lam, cfg.s_power, cfg.i_power)
    path = Path(cfg.path)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    return TableCost.from_csv(path, cfg.method)


# =============================================================================
# Command blocks
# =============================================================================

class ZonesBlock(_Strict):
    n_points: int = Field(default=200, ge=2)


class SimulateBlock(_Strict):
    starts: list[tuple[float, float]] = [(0.7, 0.01), (0.45, 0.03)]
    horizon: float = Field(default=5000.0, gt=0)
    step: float = Field(default=1e-2, gt=0)


class ValueBlock(_Strict):
    n_s: int = Field(default=40, ge=2)
    n_i: int = Field(default=40, ge=2)
    hj_controls: int = Field(default=64, ge=2)


class VerifyHJBlock(_Strict):
    samples: int = Field(default=10_000, ge=1)
    hj_controls: int = Field(default=64, ge=2)
    tolerance: float = Field(default=1e-8, gt=0)


class CheckCostBlock(_Strict):
    n_s: int = Field(default=200, ge=2)
    n_i: int = Field(default=200, ge=2)
    n_a: int = Field(default=21, ge=2)


class LPBlock(_Strict):
    r: int = Field(default=2, ge=0)
    q: float = Field(default=0.1, gt=0)
    T: float = Field(default=20.0, gt=0)
    x0: tuple[float, float] = (0.4, 0.03)
    iters: int = Field(default=10, ge=1)
    gap: float = Field(default=1e-6, ge=0)
    scenario_budget: int = Field(default=50, ge=1)
    depth: int = Field(default=1, ge=1)
    step: float = Field(default=1e-2, gt=0)
    grid: tuple[int, int, int] = (33, 33, 9)


class ReachBlock(_Strict):
    x0: tuple[float, float] = (0.6, 0.02)
    T: Optional[float] = Field(default=None, gt=0)
    n_points: int = Field(default=200, ge=2)


class ExperimentConfig(_Strict):
    """One experiment: parameters, cost and per-command settings."""

    params: EpidemicParams
    population: int = Field(default=EXAMPLE1_POPULATION, gt=0)
    cost: CostConfig = Field(default_factory=AffineCostConfig)
    seed: int = Field(default=0, ge=0)
    output_dir: Optional[str] = None

    zones: ZonesBlock = Field(default_factory=ZonesBlock)
    simulate: SimulateBlock = Field(default_factory=SimulateBlock)
    value: ValueBlock = Field(default_factory=ValueBlock)
    verify_hj: VerifyHJBlock = Field(default_factory=VerifyHJBlock)
    check_cost: CheckCostBlock = Field(default_factory=CheckCostBlock)
    lp: LPBlock = Field(default_factory=LPBlock)
    reach: ReachBlock = Field(default_factory=ReachBlock)


def _field_names(exc: ValidationError) -> tuple[str, ...]:
    return tuple(".".join(str(part) for part in err["loc"]) or "<root>" for err in exc.errors())


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        fields = _field_names(exc)
        first = exc.errors()[0]["msg"]
        raise ConfigError(f"invalid config ({', '.join(fields)}): {first}", fields) from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a JSON experiment config.

    Raises:
        ConfigError: unreadable file, bad JSON or a schema violation (fields named)
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)
