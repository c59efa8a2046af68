"""JSON run configuration for the command-line driver.

Every section is optional; unknown keys anywhere are an error. Relative
paths resolve against the directory holding the config file.
"""

import json
import os
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import WindGPError

CONFIG_SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataSection(_Strict):
    panel_csv: Optional[str] = None
    n_hours: int = Field(24, ge=1)
    exclude_sites: List[str] = []
    eps: float = Field(0.05, ge=0.0)


class SplitSection(_Strict):
    n_test_sites: int = Field(2, ge=0)
    n_test_days: int = Field(22, ge=0)
    test_site_ids: Optional[List[str]] = None
    test_day_ids: Optional[List[str]] = None


class ModelSection(_Strict):
    name: str = "SE-0-0"
    temporal_family: Literal["M12", "M32", "M52", "SE"] = "M32"
    periodic: bool = True


class OptimizerSection(_Strict):
    learning_rate: float = Field(0.05, gt=0.0)
    max_iters: int = Field(2000, ge=1)
    convergence_tol: float = Field(1e-7, ge=0.0)
    convergence_window: int = Field(20, ge=1)
    restart_cap: int = Field(16, ge=1)
    gradient_mode: Literal["hybrid", "full_fd"] = "hybrid"
    likelihood_path: Literal["kron", "dense"] = "kron"


class MetricsSection(_Strict):
    coverage_levels: List[float] = [0.2]
    interval_levels: List[float] = [0.05]


class SimulateSection(_Strict):
    day: Optional[str] = None
    mode: Literal["unconditional", "conditional"] = "unconditional"
    targets: Optional[List[str]] = None
    observed: Optional[List[str]] = None
    n_scenarios: int = Field(1000, ge=1)
    band_levels: List[float] = [0.1, 0.2, 0.5]
    include_nugget: bool = True

    @field_validator("band_levels")
    @classmethod
    def _levels_in_unit(cls, v):
        if any(not 0.0 <= x <= 1.0 for x in v):
            raise ValueError("band levels must lie in [0, 1]")
        return v


class SynthSection(_Strict):
    study: Literal["kernel_eval", "w1", "w2"] = "kernel_eval"
    master_seeds: List[int] = [0]
    sigma2: float = Field(0.05, gt=0.0)


class VariogramSection(_Strict):
    max_lag: int = Field(12, ge=0)


class PathsSection(_Strict):
    bundle: str = "bundle"
    model: str = "model.json"


class RunConfig(_Strict):
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    output_dir: str = "out"
    data: DataSection = DataSection()
    split: SplitSection = SplitSection()
    model: ModelSection = ModelSection()
    optimizer: OptimizerSection = OptimizerSection()
    metrics: MetricsSection = MetricsSection()
    simulate: SimulateSection = SimulateSection()
    synth: SynthSection = SynthSection()
    variogram: VariogramSection = VariogramSection()
    paths: PathsSection = PathsSection()

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, v):
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(f"unsupported config schema_version {v}")
        return v


def load_config(path: Optional[str]) -> RunConfig:
    """Parse and validate a config file; ``None`` gives all defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise WindGPError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise WindGPError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise WindGPError(f"{path}: invalid config\n{exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    if cfg.data.panel_csv and not os.path.isabs(cfg.data.panel_csv):
        cfg = cfg.model_copy(update={"data": cfg.data.model_copy(update={"panel_csv": os.path.join(base, cfg.data.panel_csv)})})
    return cfg
