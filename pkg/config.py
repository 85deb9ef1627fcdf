import json
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import InvalidInputError

# Load environment variables
load_dotenv()


class Config:
    """Base configuration class"""
    LOG_LEVEL = os.getenv('RISK_LOG_LEVEL', 'INFO')
    LOG_JSON = os.getenv('RISK_LOG_JSON', '0').lower() in ('1', 'true', 'yes')

    # Worker pool used for leave-one-out refits, folds, reps and sweep cells
    N_JOBS = int(os.getenv('RISK_N_JOBS', 1))

    OUTPUT_DIR = os.getenv('RISK_OUTPUT_DIR', 'results')
    SEED = int(os.getenv('RISK_SEED', 0))

    # Dense Newton solves only; p above this is rejected
    MAX_DIM = int(os.getenv('RISK_MAX_DIM', 4000))

    # Residual radius where local curvature bounds of losses are evaluated
    WORKING_RADIUS = float(os.getenv('RISK_WORKING_RADIUS', 5.0))

    PROX_TOL = 1e-14
    PROX_MAX_ITER = 200


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    LOG_LEVEL = os.getenv('RISK_LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    DEBUG = False


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    N_JOBS = 1
    LOG_LEVEL = 'WARNING'


# Configuration dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(name: Optional[str] = None):
    return config.get(name or os.getenv('RISK_ENV', 'default'), Config)


def default_lambda_grid() -> Tuple[float, ...]:
    """15 log-spaced points in [0.01, 10]"""
    return tuple(float(v) for v in np.logspace(-2, 1, 15))


def _split_list(value):
    if isinstance(value, str):
        return tuple(item.strip() for item in value.split(',') if item.strip())
    return value


class ExperimentConfig(BaseModel):
    """Resolved settings of one experiment run"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    experiment: Literal['figure1', 'rates', 'amp_trace', 'diagnostics'] = 'figure1'
    lambda_grid: Tuple[float, ...] = Field(default_factory=default_lambda_grid)
    reps: int = 20
    n: int = 500
    p: int = 400
    loss_spec: str = 'squared'
    reg_spec: str = 'ridge'
    seed: int = Field(default_factory=lambda: get_config().SEED)
    output_dir: Path = Field(default_factory=lambda: Path(get_config().OUTPUT_DIR))

    n_grid: Tuple[int, ...] = (200, 400, 800)
    folds: Tuple[int, ...] = (2, 3, 5)
    beta_variance: float = 4.0
    noise_sd: float = 1.0
    lambda_value: float = 1.0
    n_jobs: int = Field(default_factory=lambda: get_config().N_JOBS)
    amp_max_iter: int = 500
    amp_tol: float = 1e-9
    damping: float = 0.0

    @field_validator('lambda_grid', 'n_grid', 'folds', mode='before')
    @classmethod
    def _parse_lists(cls, value):
        return _split_list(value)

    @field_validator('lambda_grid')
    @classmethod
    def _positive_grid(cls, value):
        if not value or any(v <= 0 for v in value):
            raise ValueError('lambda_grid must be a nonempty list of positive reals')
        return value

    @field_validator('n_grid')
    @classmethod
    def _n_grid(cls, value):
        if not value or any(v < 2 for v in value):
            raise ValueError('n_grid must be a nonempty list of integers >= 2')
        return value

    @field_validator('folds')
    @classmethod
    def _folds(cls, value):
        if any(k < 2 for k in value):
            raise ValueError('every fold count must be >= 2')
        return value

    @model_validator(mode='after')
    def _check(self):
        if self.reps < 1:
            raise ValueError('reps must be >= 1')
        if self.n < 2 or self.p < 1:
            raise ValueError('need n >= 2 and p >= 1')
        if self.beta_variance <= 0 or self.noise_sd < 0:
            raise ValueError('beta_variance must be > 0 and noise_sd >= 0')
        if self.lambda_value <= 0:
            raise ValueError('lambda_value must be > 0')
        if not 0.0 <= self.damping < 1.0:
            raise ValueError('damping must lie in [0, 1)')
        if self.n_jobs == 0:
            raise ValueError('n_jobs must be nonzero')
        return self

    @property
    def delta(self) -> float:
        return self.n / self.p

    def header_line(self) -> str:
        """Comment line written at the top of every output CSV"""
        resolved = self.model_dump(mode='json')
        return '# config: ' + json.dumps(resolved, sort_keys=True)


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise InvalidInputError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise InvalidInputError(f"config line {lineno}: empty key")
        values[key] = value
    return values


def load_experiment_config(path=None, **overrides) -> ExperimentConfig:
    """Read a `key = value` config file and apply non-None overrides"""
    values = {}
    if path is not None:
        try:
            values = parse_config_text(Path(path).read_text())
        except OSError as e:
            raise InvalidInputError(f"cannot read config {path}: {e}") from e
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise InvalidInputError(f"invalid experiment config: {e}") from e
