import difflib
import os
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from exposure_risk.epi.distributions import EpiDistributions
from exposure_risk.errors import ConfigError
from exposure_risk.risk.engine import RiskParams
from exposure_risk.risk.probability import DecayModel


class Config:
    """
    Application settings for the exposure risk toolkit.

    Only the location of the engine config and logging are configurable from
    the environment; every model constant lives in the engine config file.
    """

    # Default configuration
    DEFAULT_CONFIG = {
        "app_name": "exposure-risk",
        "app_version": "0.1.0",
        "log_level": "INFO",
        "log_file": None,
        "config_path": None,
    }

    def __init__(self, load_env_file: bool = True):
        """Initialize the configuration manager."""
        if load_env_file:
            load_dotenv()
        self.config = self.DEFAULT_CONFIG.copy()
        self._load_from_env()

    def _load_from_env(self):
        """Load configuration from environment variables."""
        env_mappings = {
            "EXPOSURE_RISK_CONFIG": "config_path",
            "EXPOSURE_RISK_LOG_LEVEL": "log_level",
            "EXPOSURE_RISK_LOG_FILE": "log_file",
        }

        for env_var, config_key in env_mappings.items():
            env_value = os.getenv(env_var)
            if env_value:
                self.config[config_key] = env_value

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        """
        Get a configuration value.

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value = self.config.get(key)
        return default if value is None else value


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    note: Optional[str] = None


class MetaSection(_Section):
    version: str = "1"


class ProbSection(_Section):
    nu: float = Field(0.9, gt=0, lt=1)
    # 1 - 0.9 ** 1.83: the probability rule agrees with r_min at the defaults
    p_min: float = Field(0.175, gt=0, lt=1)
    mc_samples: int = Field(100_000, ge=10_000)
    grid_step: float = Field(0.05, gt=0)
    seed: int = 20200701
    cdf_coverage: float = Field(0.9995, ge=0.999, lt=1)
    release_threshold: float = Field(0.05, gt=0, lt=1)
    decay_model: DecayModel = DecayModel.TRUNCATED


class InferenceSection(_Section):
    grid_size: int = Field(1024, ge=64)
    mcmc_samples: int = Field(20_000, ge=1000)
    burn_in_fraction: float = Field(0.2, ge=0, lt=1)
    step: float = Field(0.5, gt=0)
    thin: int = Field(1, ge=1)


class ValidationSection(_Section):
    samples: int = Field(1_000_000, ge=1)
    min_samples: int = Field(10_000, ge=1)
    bins: int = Field(100, ge=1)
    ks_bound: float = Field(0.05, gt=0, le=1)


class RuntimeSection(_Section):
    n_jobs: int = 1

    @field_validator("n_jobs")
    @classmethod
    def _nonzero(cls, value: int) -> int:
        if value == 0:
            raise ValueError("n_jobs must be a positive count or negative (all cores)")
        return value


class EngineConfig(BaseModel):
    """Every tunable constant of the engine, in one versioned document."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    meta: MetaSection = MetaSection()
    risk: RiskParams = RiskParams()
    epi: EpiDistributions = EpiDistributions()
    prob: ProbSection = ProbSection()
    inference: InferenceSection = InferenceSection()
    validation: ValidationSection = ValidationSection()
    runtime: RuntimeSection = RuntimeSection()


_SECTIONS = {
    "meta": MetaSection,
    "risk": RiskParams,
    "epi": EpiDistributions,
    "prob": ProbSection,
    "inference": InferenceSection,
    "validation": ValidationSection,
    "runtime": RuntimeSection,
}


def _suggest(key: str, candidates: List[str]) -> str:
    matches = difflib.get_close_matches(key, candidates, n=1, cutoff=0.5)
    return f"; did you mean {matches[0]!r}?" if matches else ""


def _describe(error: Dict[str, Any]) -> str:
    loc = [str(part) for part in error["loc"]]
    path = ".".join(loc)
    if error["type"] == "extra_forbidden":
        if len(loc) == 1:
            return f"{path}: unknown section{_suggest(loc[0], list(_SECTIONS))}"
        section = _SECTIONS.get(loc[0])
        fields = list(section.model_fields) if section else []
        return f"{path}: unknown key{_suggest(loc[-1], fields)}"
    return f"{path}: {error['msg']}"


def parse_config(data: Dict[str, Any]) -> EngineConfig:
    """
    Validate a raw config mapping.

    Raises:
        ConfigError: listing every problem found
    """
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_describe(error) for error in exc.errors()]) from exc


def load_config(path) -> EngineConfig:
    """
    Load and validate a TOML engine config.

    Args:
        path: Path of the config file

    Returns:
        Validated EngineConfig with defaults applied for absent fields

    Raises:
        ConfigError: if the file is missing, unparsable or invalid
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError([f"{config_path}: config file not found"])
    try:
        with config_path.open("rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{config_path}: {exc}"]) from exc
    return parse_config(data)


def default_engine_config() -> EngineConfig:
    return EngineConfig()


# Create a global configuration instance
config = Config()
