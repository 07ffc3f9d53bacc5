"""D- and I-criteria, the cube moment matrix, and relative efficiencies.

Both criteria are minimised.  Singular designs never raise from the scoring
functions; they come back flagged with an infinite value so a swarm can keep
evaluating them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .model import SecondOrderModel, build_model_matrix, check_design, expand_point, information_matrix


class CriterionKind(str, enum.Enum):
    D = "D"
    I = "I"  # noqa: E741

    @classmethod
    def parse(cls, value) -> "CriterionKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown criterion {value!r}; expected 'D' or 'I'") from None


@dataclass(frozen=True)
class CriterionValue:
    kind: CriterionKind
    value: float
    singular: bool = False

    def __post_init__(self):
        if self.singular and self.value != math.inf:
            raise ValueError("singular criterion values must be +inf")
        if not self.singular and not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"criterion value must be finite and nonnegative, got {self.value}")

    @classmethod
    def from_float(cls, kind, value: float) -> "CriterionValue":
        value = float(value)
        if math.isinf(value):
            return cls(CriterionKind.parse(kind), math.inf, True)
        return cls(CriterionKind.parse(kind), value, False)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Second moments of the model terms over the cube, ``W = ∫ f f' dx``.

    ``cholesky`` is the lower factor of ``W``; the compiled I-score kernel uses it.
    """

    K: int
    W: np.ndarray
    V: float
    cholesky: np.ndarray


def _monomial_moment(d: int) -> float:
    # ∫_{-1}^{1} t^d dt
    return 0.0 if d % 2 else 2.0 / (d + 1)


@lru_cache(maxsize=None)
def _moment_matrix_cached(K: int) -> MomentMatrix:
    model = SecondOrderModel(K)
    E = model.exponents
    p = model.p
    W = np.empty((p, p))
    for a in range(p):
        for b in range(a, p):
            W[a, b] = W[b, a] = math.prod(_monomial_moment(int(d)) for d in E[a] + E[b])
    W.setflags(write=False)
    L = np.linalg.cholesky(W)
    L.setflags(write=False)
    return MomentMatrix(K=K, W=W, V=float(2**K), cholesky=L)


def moment_matrix(K: int, model: SecondOrderModel | None = None) -> MomentMatrix:
    """Analytic moment matrix for the full quadratic model on [-1, 1]^K."""
    if model is not None and model.K != K:
        raise ValueError(f"model has K={model.K}, requested K={K}")
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    return _moment_matrix_cached(int(K))


def _stack(X, model: SecondOrderModel) -> np.ndarray:
    return check_design(X, model.K)[None, :, :]


def d_score(X, model: SecondOrderModel) -> CriterionValue:
    return CriterionValue.from_float(CriterionKind.D, kernels.d_scores(_stack(X, model))[0])


def iv_score(X, model: SecondOrderModel, W: MomentMatrix | None = None) -> CriterionValue:
    if W is None:
        W = moment_matrix(model.K)
    return CriterionValue.from_float(CriterionKind.I, kernels.iv_scores(_stack(X, model), W)[0])


def score(kind, X, model: SecondOrderModel) -> CriterionValue:
    kind = CriterionKind.parse(kind)
    return d_score(X, model) if kind is CriterionKind.D else iv_score(X, model)


def spv(x, X, model: SecondOrderModel) -> float:
    """Scaled prediction variance ``N f(x)' (F'F)^{-1} f(x)``.

    Raises ``np.linalg.LinAlgError`` if the design is singular.
    """
    X = check_design(X, model.K)
    if d_score(X, model).singular:
        raise np.linalg.LinAlgError("information matrix is singular")
    M = information_matrix(build_model_matrix(X, model))
    L = np.linalg.cholesky(M)
    z = np.linalg.solve(L, expand_point(x, model))
    return float(X.shape[0] * (z @ z))


def relative_efficiency(kind, value1, value2, p: int) -> float:
    """Efficiency of design 1 relative to design 2, in percent.

    Above 100 means design 1 scores lower (better) than design 2.  D-scores
    are compared on the ``1/p`` root scale; I-scores as a plain ratio.
    """
    kind = CriterionKind.parse(kind)
    v1, v2 = float(value1), float(value2)
    for v, name in ((value1, "value1"), (value2, "value2")):
        if getattr(v, "singular", False):
            raise ValueError(f"{name} is singular")
    if not (math.isfinite(v1) and math.isfinite(v2)) or v1 <= 0 or v2 <= 0:
        raise ValueError("relative efficiency needs finite positive criterion values")
    if kind is CriterionKind.D:
        if p < 1:
            raise ValueError("p must be positive")
        return 100.0 * (v2 / v1) ** (1.0 / p)
    return 100.0 * v2 / v1
