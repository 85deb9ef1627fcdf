"""
Scalar Function Families
Losses and regularizers with value, derivatives and proximal calculus
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from config import Config
from errors import InvalidInputError, NumericalError, ProxNonConvergence

_EPS = np.finfo(float).eps


class FamilyKind(Enum):
    SQUARED = "squared"
    PSEUDO_HUBER = "pseudo_huber"
    LOGISTIC_RESIDUAL = "logistic_residual"
    RIDGE = "ridge"
    SMOOTHED_ABSOLUTE = "smoothed_absolute"
    ELASTIC_SMOOTHED = "elastic_smoothed"
    POWER = "power"


# Curvature decays to zero at infinity for these kinds
_LOCAL_CURVATURE = {
    FamilyKind.PSEUDO_HUBER,
    FamilyKind.LOGISTIC_RESIDUAL,
    FamilyKind.SMOOTHED_ABSOLUTE,
    FamilyKind.ELASTIC_SMOOTHED,
}


def _as_array(x):
    return np.asarray(x, dtype=float)


def _sqrt_smooth(x, mu):
    # sqrt(x^2 + mu^2) - mu without cancellation near zero
    return x * x / (np.hypot(x, mu) + mu)


@dataclass(frozen=True)
class ScalarFamily:
    """A C^2 convex scalar function f, optionally multiplied by `scale`.

    Losses are evaluated at residuals y - x^T beta, regularizers at
    coefficients. All methods accept numpy arrays and work elementwise.
    """
    kind: FamilyKind
    mu: Optional[float] = None
    mix: Optional[float] = None
    q: Optional[float] = None
    scale: float = 1.0
    working_radius: float = field(default=Config.WORKING_RADIUS)

    def __post_init__(self):
        if self.scale <= 0 or not math.isfinite(self.scale):
            raise InvalidInputError(f"family scale must be positive, got {self.scale}")
        if self.working_radius <= 0:
            raise InvalidInputError("working_radius must be positive")
        if self.kind in (FamilyKind.PSEUDO_HUBER, FamilyKind.SMOOTHED_ABSOLUTE,
                         FamilyKind.ELASTIC_SMOOTHED):
            if self.mu is None or not self.mu > 0:
                raise InvalidInputError(f"{self.kind.value} requires mu > 0")
        if self.kind is FamilyKind.ELASTIC_SMOOTHED:
            if self.mix is None or not 0.0 <= self.mix < 1.0:
                raise InvalidInputError("elastic_smoothed requires mix in [0, 1)")
        if self.kind is FamilyKind.POWER:
            if self.q is None or self.q < 2:
                raise InvalidInputError("power requires q >= 2")

    # ---- metadata -------------------------------------------------------

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def curvature_lower(self) -> float:
        """Lower bound on f'' (kappa_l for losses).

        For kinds whose curvature vanishes at infinity this is f'' at the
        working radius, i.e. the bound only holds locally.
        """
        if self.kind is FamilyKind.POWER:
            return self.scale if self.q == 2 else 0.0
        if self.kind in _LOCAL_CURVATURE:
            return evaluate(self, self.working_radius)[2]
        return self.scale

    @property
    def holder_exponent(self) -> float:
        if self.kind is FamilyKind.POWER and self.q > 2:
            return min(1.0, self.q - 2.0)
        return 1.0

    @property
    def growth_order(self) -> float:
        if self.kind is FamilyKind.POWER:
            return self.q - 2.0
        return 0.0

    def spec(self) -> str:
        params = []
        if self.mu is not None:
            params.append(f"mu={self.mu:g}")
        if self.mix is not None:
            params.append(f"mix={self.mix:g}")
        if self.q is not None:
            params.append(f"q={self.q:g}")
        text = self.name + (":" + ",".join(params) if params else "")
        if self.scale != 1.0:
            text += f"*{self.scale:g}"
        return text

    def scaled(self, c: float) -> "ScalarFamily":
        """c * f for c > 0"""
        return replace(self, scale=self.scale * c)

    # ---- calculus -------------------------------------------------------

    def value(self, x):
        x = _as_array(x)
        k = self.kind
        if k in (FamilyKind.SQUARED, FamilyKind.RIDGE):
            v = 0.5 * x * x
        elif k in (FamilyKind.PSEUDO_HUBER, FamilyKind.SMOOTHED_ABSOLUTE):
            v = _sqrt_smooth(x, self.mu)
        elif k is FamilyKind.LOGISTIC_RESIDUAL:
            # 2 log cosh(x/2)
            v = 2.0 * (np.logaddexp(0.5 * x, -0.5 * x) - math.log(2.0))
        elif k is FamilyKind.ELASTIC_SMOOTHED:
            v = self.mix * _sqrt_smooth(x, self.mu) + (1.0 - self.mix) * 0.5 * x * x
        else:
            v = np.abs(x) ** self.q / self.q
        return self.scale * v

    def d1(self, x):
        x = _as_array(x)
        k = self.kind
        if k in (FamilyKind.SQUARED, FamilyKind.RIDGE):
            v = x
        elif k in (FamilyKind.PSEUDO_HUBER, FamilyKind.SMOOTHED_ABSOLUTE):
            v = x / np.hypot(x, self.mu)
        elif k is FamilyKind.LOGISTIC_RESIDUAL:
            v = np.tanh(0.5 * x)
        elif k is FamilyKind.ELASTIC_SMOOTHED:
            v = self.mix * x / np.hypot(x, self.mu) + (1.0 - self.mix) * x
        else:
            v = np.sign(x) * np.abs(x) ** (self.q - 1.0)
        return self.scale * v

    def d2(self, x):
        x = _as_array(x)
        k = self.kind
        if k in (FamilyKind.SQUARED, FamilyKind.RIDGE):
            v = np.ones_like(x)
        elif k in (FamilyKind.PSEUDO_HUBER, FamilyKind.SMOOTHED_ABSOLUTE):
            v = self.mu ** 2 / np.hypot(x, self.mu) ** 3
        elif k is FamilyKind.LOGISTIC_RESIDUAL:
            e = np.exp(-np.abs(x))
            v = 2.0 * e / (1.0 + e) ** 2
        elif k is FamilyKind.ELASTIC_SMOOTHED:
            v = self.mix * self.mu ** 2 / np.hypot(x, self.mu) ** 3 + (1.0 - self.mix)
        else:
            v = (self.q - 1.0) * np.abs(x) ** (self.q - 2.0)
        return self.scale * v

    def eval(self, x: float) -> Tuple[float, float, float]:
        """(f(x), f'(x), f''(x)) at a scalar x"""
        if not math.isfinite(x):
            raise InvalidInputError(f"cannot evaluate {self.name} at {x}")
        with np.errstate(over='ignore', invalid='ignore'):
            out = (float(self.value(x)), float(self.d1(x)), float(self.d2(x)))
        if not all(math.isfinite(v) for v in out):
            raise NumericalError(f"{self.name} overflows at x={x}")
        return out

    # ---- proximal calculus ----------------------------------------------

    def prox(self, x, scale: float):
        """argmin_y 1/2 (x - y)^2 + scale * f(y), elementwise"""
        if not scale > 0:
            raise InvalidInputError(f"prox scale must be positive, got {scale}")
        arr = _as_array(x)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("prox argument must be finite")
        if self._is_quadratic():
            out = arr / (1.0 + scale * self.scale)
        else:
            out = self._prox_newton(np.atleast_1d(arr), float(scale)).reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def prox_derivative(self, x, scale: float):
        """d/dx prox(x, scale) = 1 / (1 + scale * f''(prox))"""
        y = self.prox(x, scale)
        out = 1.0 / (1.0 + scale * self.d2(y))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def has_constant_curvature(self) -> bool:
        return self._is_quadratic()

    def _is_quadratic(self) -> bool:
        return (self.kind in (FamilyKind.SQUARED, FamilyKind.RIDGE)
                or (self.kind is FamilyKind.POWER and self.q == 2))

    def _prox_newton(self, x, s):
        # Safeguarded Newton on g(y) = y - x + s f'(y), which is increasing.
        # [x - s f'(x), x] (or its mirror) always brackets the root.
        g0 = s * self.d1(x)
        lo = np.where(g0 > 0, x - g0, x)
        hi = np.where(g0 > 0, x, x - g0)
        y = np.clip(x - g0 / (1.0 + s * self.d2(x)), lo, hi)
        tol = Config.PROX_TOL * np.maximum(1.0, np.abs(x))
        for _ in range(Config.PROX_MAX_ITER):
            g = y - x + s * self.d1(y)
            width = hi - lo
            active = (np.abs(g) > tol) & (width > 4.0 * _EPS * np.maximum(1.0, np.abs(y)))
            if not active.any():
                return y
            lo = np.where(active & (g < 0), y, lo)
            hi = np.where(active & (g > 0), y, hi)
            step = y - g / (1.0 + s * self.d2(y))
            inside = (step > lo) & (step < hi)
            y = np.where(active, np.where(inside, step, 0.5 * (lo + hi)), y)
        raise ProxNonConvergence(
            f"prox of {self.spec()} did not converge for scale={s}")


# ---- module-level operations ---------------------------------------------

def evaluate(family: ScalarFamily, x: float) -> Tuple[float, float, float]:
    return family.eval(x)


def prox(family: ScalarFamily, x, scale: float):
    return family.prox(x, scale)


def prox_derivative(family: ScalarFamily, x, scale: float):
    return family.prox_derivative(x, scale)


def psi(loss: ScalarFamily, z, theta: float):
    """psi(z, theta) = theta * l'(prox_l(z, theta)) and its z-derivative.

    z - psi(z, theta) equals prox_l(z, theta).
    """
    eta = loss.prox(z, theta)
    curv = theta * loss.d2(eta)
    psi_val = theta * loss.d1(eta)
    psi_d1 = curv / (1.0 + curv)
    if np.ndim(psi_val) == 0:
        return float(psi_val), float(psi_d1)
    return psi_val, psi_d1


def smooth(base: str, mu: float, mix: float = 0.5) -> ScalarFamily:
    """C^2 stand-in for |x| or the elastic net penalty"""
    if mu is None or not mu > 0:
        raise InvalidInputError(f"smoothing parameter mu must be positive, got {mu}")
    if base == "absolute":
        return ScalarFamily(FamilyKind.SMOOTHED_ABSOLUTE, mu=mu)
    if base == "elastic_net":
        return ScalarFamily(FamilyKind.ELASTIC_SMOOTHED, mu=mu, mix=mix)
    raise InvalidInputError(f"unknown smoothing base {base!r}")


_PARAM_TYPES = {"mu": float, "mix": float, "q": float}


def parse_family(text: str) -> ScalarFamily:
    """Parse `name[:key=value,...]`, e.g. `pseudo_huber:mu=0.5`.

    A leading `loss=` or `reg=` is accepted and ignored.
    """
    text = text.strip()
    head = text.split(":", 1)[0]
    if "=" in head:
        text = text.split("=", 1)[1].strip()
    name, _, rest = text.partition(":")
    try:
        kind = FamilyKind(name.strip())
    except ValueError:
        known = ", ".join(k.value for k in FamilyKind)
        raise InvalidInputError(f"unknown family {name!r}; expected one of {known}")
    params = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _PARAM_TYPES:
            raise InvalidInputError(f"bad family parameter {item!r} in {text!r}")
        try:
            params[key] = _PARAM_TYPES[key](value)
        except ValueError:
            raise InvalidInputError(f"bad value for {key} in {text!r}")
    if kind is FamilyKind.ELASTIC_SMOOTHED:
        params.setdefault("mix", 0.5)
    return ScalarFamily(kind, **params)
