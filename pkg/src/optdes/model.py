"""Full second-order response-surface model on the coded cube [-1, 1]^K."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class FactorSpace:
    K: int
    lower: np.ndarray = field(default=None)
    upper: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"number of factors must be >= 1, got {self.K}")
        lower = -np.ones(self.K) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.ones(self.K) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lower.shape != (self.K,) or upper.shape != (self.K,):
            raise ValueError("bounds must have one entry per factor")
        if np.any(lower >= upper):
            raise ValueError("lower bound must be strictly below upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


def num_params(K: int) -> int:
    """Number of coefficients in the full quadratic model, (K+1)(K+2)/2."""
    if int(K) != K or K < 1:
        raise ValueError(f"model dimension must be a positive integer, got {K!r}")
    K = int(K)
    return (K + 1) * (K + 2) // 2


@dataclass(frozen=True)
class SecondOrderModel:
    """Term layout: intercept, linears, pairwise interactions (lexicographic), pure quadratics.

    ``exponents[a, k]`` is the power of factor ``k`` in term ``a``.
    """

    K: int

    def __post_init__(self):
        num_params(self.K)

    @property
    def p(self) -> int:
        return num_params(self.K)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(combinations(range(self.K), 2))

    @property
    def exponents(self) -> np.ndarray:
        K = self.K
        rows = [np.zeros(K, dtype=np.int64)]
        for k in range(K):
            e = np.zeros(K, dtype=np.int64)
            e[k] = 1
            rows.append(e)
        for i, j in self.pairs:
            e = np.zeros(K, dtype=np.int64)
            e[i] = e[j] = 1
            rows.append(e)
        for k in range(K):
            e = np.zeros(K, dtype=np.int64)
            e[k] = 2
            rows.append(e)
        return np.array(rows)

    @property
    def term_order(self) -> list[str]:
        names = ["1"] + [f"x{k + 1}" for k in range(self.K)]
        names += [f"x{i + 1}*x{j + 1}" for i, j in self.pairs]
        names += [f"x{k + 1}^2" for k in range(self.K)]
        return names


def _as_model(model: SecondOrderModel | int) -> SecondOrderModel:
    return model if isinstance(model, SecondOrderModel) else SecondOrderModel(int(model))


def expand_point(x, model: SecondOrderModel | int) -> np.ndarray:
    """Map one design point to its model row f(x)."""
    model = _as_model(model)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.K:
        raise ValueError(f"point has {x.shape[0]} coordinates, model expects {model.K}")
    inter = [x[i] * x[j] for i, j in model.pairs]
    return np.concatenate(([1.0], x, inter, x * x))


def build_model_matrix(X, model: SecondOrderModel | int) -> np.ndarray:
    """Stack ``expand_point`` over the rows of ``X`` into the N x p model matrix."""
    model = _as_model(model)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and model.K == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != model.K:
        raise ValueError(f"design has shape {X.shape}, model expects K={model.K} columns")
    if X.shape[0] < 1:
        raise ValueError("design must have at least one point")
    N = X.shape[0]
    F = np.empty((N, model.p))
    F[:, 0] = 1.0
    F[:, 1 : model.K + 1] = X
    col = model.K + 1
    for i, j in model.pairs:
        F[:, col] = X[:, i] * X[:, j]
        col += 1
    F[:, col:] = X * X
    return F


def information_matrix(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] < 1:
        raise ValueError("model matrix must be a nonempty 2-D array")
    return F.T @ F


def check_design(X, K: int | None = None) -> np.ndarray:
    """Validate a design matrix: 2-D, finite, inside the cube up to ``BOUND_SLACK``.

    Entries within the slack are clamped onto the boundary.
    """
    X = np.array(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if K == 1 else X[None, :]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design must be a nonempty N x K array, got shape {X.shape}")
    if K is not None and X.shape[1] != K:
        raise ValueError(f"design has {X.shape[1]} columns, expected {K}")
    if not np.all(np.isfinite(X)):
        raise ValueError("design contains non-finite entries")
    if np.any(np.abs(X) > 1.0 + BOUND_SLACK):
        raise ValueError("design entries must lie in [-1, 1]")
    return np.clip(X, -1.0, 1.0)


def read_design_csv(path, K: int | None = None) -> np.ndarray:
    """Read a headerless CSV with one design point per line."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no design points")
    width = len(rows[0])
    data = []
    for lineno, r in enumerate(rows, 1):
        if len(r) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} values, got {len(r)}")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return check_design(np.array(data), K)


def format_design_csv(X) -> str:
    buf = io.StringIO()
    for row in np.atleast_2d(X):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def write_text_atomic(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_design_csv(path, X) -> None:
    write_text_atomic(path, format_design_csv(X))
