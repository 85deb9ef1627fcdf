"""
Core data model: datasets, penalized models and fit results.

The objective is stored in summed form,

    sum_i l(y_i - x_i^T beta) + lambda * sum_j R(beta_j).

The averaged form n<l(y - X beta)> + lambda p<R(beta)> is the same function,
so minimizers and lambda coincide between the two conventions.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from errors import InvalidInputError, NumericalError
from services.families import ScalarFamily


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X)
        y = _frozen(self.y).reshape(-1)
        if X.ndim != 2:
            raise InvalidInputError(f"X must be a matrix, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 2 or X.shape[1] < 1:
            raise InvalidInputError(f"need n >= 2 and p >= 1, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains NaN or Inf")
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def aspect_ratio(self) -> float:
        """delta = n / p"""
        return self.n / self.p

    def without_row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """(X, y) with observation i deleted, as raw arrays"""
        if not 0 <= i < self.n:
            raise InvalidInputError(f"row index {i} out of range for n={self.n}")
        keep = np.arange(self.n) != i
        return self.X[keep], self.y[keep]

    def permuted(self, order) -> "Dataset":
        order = np.asarray(order)
        return Dataset(self.X[order], self.y[order])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read `y, x1..xp` with a header; `#` lines are comments"""
        try:
            frame = pd.read_csv(path, comment='#', float_precision='round_trip')
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InvalidInputError(f"cannot read dataset {path}: {e}") from e
        if frame.columns[0] != 'y' or frame.shape[1] < 2:
            raise InvalidInputError(f"{path}: expected columns 'y, x1..xp'")
        try:
            values = frame.to_numpy(dtype=np.float64)
        except ValueError as e:
            raise InvalidInputError(f"{path}: non-numeric entries") from e
        return cls(values[:, 1:], values[:, 0])

    def to_csv(self, path, header_comment: Optional[str] = None) -> None:
        columns = ['y'] + [f'x{j + 1}' for j in range(self.p)]
        frame = pd.DataFrame(np.column_stack([self.y, self.X]), columns=columns)
        write_frame(frame, path, header_comment)


@dataclass(frozen=True)
class PenalizedModel:
    loss: ScalarFamily
    regularizer: ScalarFamily
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise InvalidInputError(f"lambda must be > 0, got {self.lam}")
        if self.loss.curvature_lower < 0:
            raise InvalidInputError("loss curvature bound must be nonnegative")
        if self.loss.curvature_lower == 0 and not self.regularizer.curvature_lower > 0:
            raise InvalidInputError(
                f"{self.loss.spec()} + {self.regularizer.spec()}: the loss has no "
                "curvature bound, so the regularizer must be strongly convex")

    def with_lambda(self, lam: float) -> "PenalizedModel":
        return PenalizedModel(self.loss, self.regularizer, lam)

    def describe(self) -> str:
        return f"loss={self.loss.spec()} reg={self.regularizer.spec()} lambda={self.lam:g}"


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    residuals: np.ndarray
    grad_inf_norm: float
    iterations: int
    objective: float
    converged: bool = True
    objective_trace: Tuple[float, ...] = field(default_factory=tuple)

    @classmethod
    def build(cls, model: PenalizedModel, X, y, beta, iterations, converged=True,
              objective_trace=()) -> "FitResult":
        """Recompute residuals, gradient and objective at beta"""
        beta = _frozen(beta)
        residuals = _frozen(y - X @ beta)
        grad = -X.T @ model.loss.d1(residuals) + model.lam * model.regularizer.d1(beta)
        obj = float(np.sum(model.loss.value(residuals))
                    + model.lam * np.sum(model.regularizer.value(beta)))
        return cls(beta, residuals, float(np.max(np.abs(grad), initial=0.0)),
                   int(iterations), obj, converged, tuple(objective_trace))


def _check_beta(data: Dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != data.p:
        raise InvalidInputError(f"beta has length {beta.shape[0]}, expected p={data.p}")
    if not np.all(np.isfinite(beta)):
        raise InvalidInputError("beta contains NaN or Inf")
    return beta


def objective(model: PenalizedModel, data: Dataset, beta) -> float:
    """sum_i l(y_i - x_i^T beta) + lambda sum_j R(beta_j)"""
    beta = _check_beta(data, beta)
    r = data.y - data.X @ beta
    value = float(np.sum(model.loss.value(r)) + model.lam * np.sum(model.regularizer.value(beta)))
    if not np.isfinite(value):
        raise NumericalError("objective is not finite")
    return value


def gradient(model: PenalizedModel, data: Dataset, beta) -> np.ndarray:
    """-X^T l'(y - X beta) + lambda R'(beta)"""
    beta = _check_beta(data, beta)
    r = data.y - data.X @ beta
    grad = -data.X.T @ model.loss.d1(r) + model.lam * model.regularizer.d1(beta)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("gradient is not finite")
    return grad


def training_risk(model: PenalizedModel, data: Dataset, beta) -> float:
    """(1/n) sum_i l(y_i - x_i^T beta)"""
    beta = _check_beta(data, beta)
    return float(np.mean(model.loss.value(data.y - data.X @ beta)))


# ---- CSV helpers ------------------------------------------------------------

def write_frame(frame: pd.DataFrame, path, header_comment: Optional[str] = None) -> None:
    """Write a table, optionally preceded by one `#` comment line"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        if header_comment:
            line = header_comment if header_comment.startswith('#') else '# ' + header_comment
            handle.write(line.rstrip('\n') + '\n')
        frame.to_csv(handle, index=False, float_format='%.17g')


def save_vector_csv(vector, path, name: str = 'beta', header_comment: Optional[str] = None) -> None:
    write_frame(pd.DataFrame({name: np.asarray(vector, dtype=float)}), path, header_comment)


def load_vector_csv(path) -> np.ndarray:
    try:
        frame = pd.read_csv(path, comment='#', float_precision='round_trip')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InvalidInputError(f"cannot read vector {path}: {e}") from e
    values = frame.iloc[:, 0].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"{path}: vector contains NaN or Inf")
    return values
