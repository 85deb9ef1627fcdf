"""
Synthetic Data Generation
Gaussian designs with N(0, 1/n) entries, Gaussian coefficients and noise,
and extra-sample test draws. Every draw comes from a counter-based Philox
stream keyed by (seed, entity name, index), so results do not depend on
scheduling or on what else was drawn before.
"""

import hashlib
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from errors import InvalidInputError
from models import Dataset, save_vector_csv


class BetaPrior(Enum):
    GAUSSIAN = "gaussian"
    CONSTANT = "constant"


def _entity_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode('utf-8')).digest()[:4], 'little')


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one named entity"""
    if seed < 0 or index < 0:
        raise InvalidInputError("seeds and stream indices must be nonnegative")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(_entity_key(name), index))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, name: str, index: int = 0) -> int:
    """Child seed for one replicate of a named experiment"""
    if seed < 0 or index < 0:
        raise InvalidInputError("seeds and stream indices must be nonnegative")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(_entity_key(name), index))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    p: int
    beta_prior: BetaPrior = BetaPrior.GAUSSIAN
    prior_param: float = 1.0  # variance for gaussian, value for constant
    noise_sd: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise InvalidInputError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if self.beta_prior is BetaPrior.GAUSSIAN and not self.prior_param > 0:
            raise InvalidInputError("gaussian prior variance must be > 0")
        if not math.isfinite(self.prior_param):
            raise InvalidInputError("prior parameter must be finite")
        if self.noise_sd < 0 or not math.isfinite(self.noise_sd):
            raise InvalidInputError("noise_sd must be finite and >= 0")
        if self.seed < 0:
            raise InvalidInputError("seed must be >= 0")

    @property
    def delta(self) -> float:
        return self.n / self.p

    def resized(self, n: int, p: int, seed: Optional[int] = None) -> "SyntheticSpec":
        return replace(self, n=n, p=p, seed=self.seed if seed is None else seed)


def figure1_spec(n: int = 1500, p: int = 1200, seed: int = 0, beta_variance: float = 4.0,
                 noise_sd: float = 1.0) -> SyntheticSpec:
    """beta* ~ N(0, beta_variance I), unit noise by default"""
    return SyntheticSpec(n=n, p=p, beta_prior=BetaPrior.GAUSSIAN, prior_param=beta_variance,
                         noise_sd=noise_sd, seed=seed)


def generate(spec: SyntheticSpec) -> Tuple[Dataset, np.ndarray, np.ndarray]:
    """y = X beta* + w with X_ij ~ N(0, 1/n)"""
    X = stream(spec.seed, 'design').standard_normal((spec.n, spec.p)) / math.sqrt(spec.n)
    if spec.beta_prior is BetaPrior.GAUSSIAN:
        beta_star = stream(spec.seed, 'beta').standard_normal(spec.p) * math.sqrt(spec.prior_param)
    else:
        beta_star = np.full(spec.p, float(spec.prior_param))
    noise = stream(spec.seed, 'noise').standard_normal(spec.n) * spec.noise_sd
    y = X @ beta_star + noise
    return Dataset(X, y), beta_star, noise


def generate_test(spec: SyntheticSpec, beta_star, m: int, seed: int,
                  index: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """m fresh rows x_new ~ N(0, I/n) (training n) and y_new = x_new^T beta* + w"""
    if m < 1:
        raise InvalidInputError("need at least one test draw")
    beta_star = np.asarray(beta_star, dtype=float)
    if beta_star.shape != (spec.p,):
        raise InvalidInputError(f"beta_star has shape {beta_star.shape}, expected ({spec.p},)")
    X_new = stream(seed, 'test_design', index).standard_normal((m, spec.p)) / math.sqrt(spec.n)
    y_new = X_new @ beta_star + stream(seed, 'test_noise', index).standard_normal(m) * spec.noise_sd
    return X_new, y_new


def save_synthetic(data: Dataset, beta_star, directory, header_comment: Optional[str] = None) -> Tuple[Path, Path]:
    directory = Path(directory)
    data_path = directory / 'data.csv'
    beta_path = directory / 'beta_star.csv'
    data.to_csv(data_path, header_comment)
    save_vector_csv(beta_star, beta_path, name='beta_star', header_comment=header_comment)
    return data_path, beta_path
