"""Market parameters, derived constants and the clamp nonlinearity.

Every other module works in terms of :class:`MarketParams` (the raw market
coefficients) and :class:`DerivedConstants` (the quantities built from them).
Rates are per year and ``sigma2`` is the variance rate, so ``sigma = sqrt(sigma2)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonPositive, ParameterOrdering

PARAM_KEYS = ("r1", "r2", "mu", "sigma2", "d", "T")


@dataclass(frozen=True)
class MarketParams:
    r1: float
    r2: float
    mu: float
    sigma2: float
    d: float = 10.0
    T: float = 3.0

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma2))

    def discounted_target(self, t):
        """``exp(-r1 (T - t)) d``, the upper end of the admissible wealth range."""
        return self.d * np.exp(-self.r1 * (self.T - np.asarray(t, dtype=float)))

    def replace(self, **changes) -> "MarketParams":
        values = asdict(self)
        values.update(changes)
        return MarketParams(**values)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DerivedConstants:
    a1: float
    a2: float
    theta1: float
    theta2: float
    k: float
    kappa: float


def validate_params(p: MarketParams) -> DerivedConstants:
    """Check the parameter invariants and return the derived constants.

    ``r1 == r2`` is accepted (the no-gap market); ``mu`` must strictly exceed
    ``r2``. Signs of the rates themselves are not restricted.
    """
    for name in ("sigma2", "d", "T"):
        value = getattr(p, name)
        if not np.isfinite(value) or value <= 0:
            raise NonPositive(f"{name} must be > 0, got {value!r}")
    for name in ("r1", "r2", "mu"):
        if not np.isfinite(getattr(p, name)):
            raise ParameterOrdering(f"{name} must be finite")
    if not p.mu > p.r2:
        raise ParameterOrdering(f"need mu > r2, got mu={p.mu}, r2={p.r2}")
    if p.r2 < p.r1:
        raise ParameterOrdering(f"need r2 >= r1, got r1={p.r1}, r2={p.r2}")

    s2 = p.sigma2
    a1 = (p.mu - p.r1) / s2
    a2 = (p.mu - p.r2) / s2
    theta1 = s2 * a1**2 - 2.0 * p.r1
    theta2 = s2 * a2**2 - 2.0 * p.r2
    k = max(2.0 * s2 * a1 + 4.0 * s2 * a1**2, theta1)
    kappa = 2.0 * p.mu + s2 * (3.0 * a1 + 1.0) * (a1 + 1.0)
    return DerivedConstants(a1=a1, a2=a2, theta1=theta1, theta2=theta2, k=k, kappa=kappa)


def clamp_A(xi, c: DerivedConstants):
    """``A(xi) = min(max(a2, -xi), a1)``; works elementwise on arrays."""
    out = np.minimum(np.maximum(c.a2, -np.asarray(xi, dtype=float)), c.a1)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ConditionResult:
    name: str
    residual: float
    passed: bool


@dataclass(frozen=True)
class C1Report:
    CD0: ConditionResult
    CD1: ConditionResult
    CD2: ConditionResult

    @property
    def passed(self) -> bool:
        return self.CD0.passed and self.CD1.passed and self.CD2.passed

    def __iter__(self):
        return iter((self.CD0, self.CD1, self.CD2))


def check_c1_conditions(p: MarketParams) -> C1Report:
    """Evaluate the three sufficient conditions for C^1 free boundaries.

    Each residual is ``>= 0`` exactly when its condition holds:
    CD0 is ``mu``, CD1 is ``sigma2 a2^2 + r1 - 2 r2`` and CD2 is
    ``1 + 2 r1/(mu - r1) - 2 a1 + a2``.
    """
    c = validate_params(p)
    cd0 = p.mu
    cd1 = p.sigma2 * c.a2**2 + p.r1 - 2.0 * p.r2
    cd2 = 1.0 + 2.0 * p.r1 / (p.mu - p.r1) - 2.0 * c.a1 + c.a2
    return C1Report(
        CD0=ConditionResult("CD0", cd0, cd0 > 0),
        CD1=ConditionResult("CD1", cd1, cd1 >= 0),
        CD2=ConditionResult("CD2", cd2, cd2 >= 0),
    )


BASELINE = MarketParams(r1=0.02, r2=0.08, mu=0.15, sigma2=0.10, d=10.0, T=3.0)
EQUAL_RATES = MarketParams(r1=0.05, r2=0.05, mu=0.15, sigma2=0.10, d=10.0, T=3.0)
