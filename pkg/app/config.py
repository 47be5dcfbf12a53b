"""Application configuration management"""

import hashlib
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

from app.core.enums import AdeNormalization, CodeFeature, HeadwaySource, SpeedFeature, Units
from app.core.models import IdmBounds, IdmParams, PurePursuitConfig


class IngestSettings(BaseModel):
    """How raw NGSIM tables become scenes"""
    units: Units = Units.FEET
    lanes: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    swap_axes: bool = Field(default=True, description="Local_Y is the along-road coordinate")
    location: Optional[str] = Field(default=None, description="Filter on the Location column")
    lane_width: float = Field(default=3.66, gt=0.0)
    lane_file: Optional[Path] = None
    centerline_margin: float = Field(default=100.0, ge=0.0)
    speed_limit: float = Field(default=29.06, gt=0.0)
    smoothing_window: int = Field(default=5, ge=1)
    axle_ratio: float = Field(default=0.25, gt=0.0, le=0.5)
    headway_source: HeadwaySource = HeadwaySource.GEOMETRY


class IdmSettings(BaseModel):
    phi: float = Field(default=4.0, gt=0.0)
    bounds: IdmBounds = Field(default_factory=IdmBounds)


class DynamicsSettings(BaseModel):
    substeps: int = Field(default=1, ge=1)


class RolloutSettings(BaseModel):
    stop_on_collision: bool = False
    min_gap: float = Field(default=0.1, gt=0.0)


class EstimationSettings(BaseModel):
    horizon: int = Field(default=100, ge=2)
    restarts: int = Field(default=5, ge=0)
    fd_step: float = Field(default=1e-3, gt=0.0, lt=0.5)
    max_iter: int = Field(default=200, ge=1)
    ftol: float = Field(default=1e-10, gt=0.0)
    gtol: float = Field(default=1e-8, gt=0.0)
    early_stop_ade: float = Field(default=1e-3, ge=0.0)
    initial_params: IdmParams = Field(
        default_factory=lambda: IdmParams(a=1.5, b=2.0, T=1.5, d0=2.0, d1=3.0)
    )


class KnnSettings(BaseModel):
    k: int = Field(default=8, ge=1)
    observe_frames: int = Field(default=10, ge=2)
    features: list[CodeFeature] = Field(default_factory=lambda: list(CodeFeature))
    speed_feature: SpeedFeature = SpeedFeature.ABSOLUTE
    min_speed: float = Field(default=0.1, gt=0.0, description="Below this, headway is undefined")
    std_floor: float = Field(default=1e-9, gt=0.0)


class MetricsSettings(BaseModel):
    horizon: int = Field(default=100, ge=2)
    ade_normalization: AdeNormalization = AdeNormalization.POINTS


class RiskSettings(BaseModel):
    length_scale: float = Field(default=1.0, gt=0.0)
    width_scale: float = Field(default=1.0, gt=0.0)


class PathSettings(BaseModel):
    scene: Optional[Path] = None
    store: Optional[Path] = None
    report: Optional[Path] = None


class Settings(BaseSettings):
    """Effective run configuration: defaults < config file < environment < CLI flags"""

    app_name: str = "Driving Code IDM"
    app_version: str = "0.1.0"
    log_level: str = "INFO"

    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1, le=256)
    dt: float = Field(default=0.1, gt=0.0)

    ingest: IngestSettings = Field(default_factory=IngestSettings)
    idm: IdmSettings = Field(default_factory=IdmSettings)
    pursuit: PurePursuitConfig = Field(default_factory=PurePursuitConfig)
    dynamics: DynamicsSettings = Field(default_factory=DynamicsSettings)
    rollout: RolloutSettings = Field(default_factory=RolloutSettings)
    estimation: EstimationSettings = Field(default_factory=EstimationSettings)
    knn: KnnSettings = Field(default_factory=KnnSettings)
    metrics: MetricsSettings = Field(default_factory=MetricsSettings)
    risk: RiskSettings = Field(default_factory=RiskSettings)
    paths: PathSettings = Field(default_factory=PathSettings)

    model_config = SettingsConfigDict(
        env_prefix="DRIVECODE_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            TomlConfigSettingsSource(settings_cls),
            file_secret_settings,
        )


def load_settings(config_file: Optional[Path] = None, **overrides: Any) -> Settings:
    """
    Build the effective settings

    Args:
        config_file: Optional TOML file layered above the defaults
        overrides: Nested dictionaries from command line flags, highest priority

    Returns:
        Validated settings
    """
    if config_file is None:
        return Settings(**overrides)

    class FileSettings(Settings):
        model_config = SettingsConfigDict(toml_file=str(config_file))

    return FileSettings(**overrides)


# Fields that change how a run executes but never what it computes
RUNTIME_FIELDS = frozenset({"workers", "log_level", "paths"})


def config_json(config: Settings) -> str:
    """Canonical JSON of the result-relevant configuration"""
    return config.model_dump_json(exclude=set(RUNTIME_FIELDS))


def config_hash(config: Settings) -> str:
    """Stable digest of the effective configuration"""
    return hashlib.sha256(config_json(config).encode("utf-8")).hexdigest()[:16]


settings = Settings()
