"""Increment distributions for the driving sequence and vector increments.

The driving variables ``W_k`` are i.i.d. scalar draws from an
:class:`IncrementLaw`.  The walk increments are ``X_k = W_k`` and the
mean-zero vector increments ``Y_k`` are produced from ``W_k`` (or from
independent noise) by a :class:`VectorLaw`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import stats

from .errors import ConfigurationError

_FAMILIES = ("exponential", "gamma", "normal", "uniform", "deterministic",
             "quantile_table")


@dataclass(frozen=True)
class IncrementLaw:
    """A scalar increment distribution with finite positive mean.

    Supported families: ``exponential(rate)``, ``gamma(shape, rate)``,
    ``normal(mean, sd)``, ``uniform(lo, hi)``, ``deterministic(value)``
    and ``quantile_table(values)``.  The deterministic family is
    arithmetic (lattice) and is admitted for exact-value oracle tests
    only; it carries ``oracle_only=True``.
    """

    kind: str
    params: Tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _FAMILIES:
            raise ConfigurationError(f"unknown family {self.kind!r}", "law.kind")
        p = self.params
        if any(not math.isfinite(float(v)) for v in p):
            raise ConfigurationError("parameters must be finite", "law.params")
        if self.kind == "exponential":
            if len(p) != 1 or p[0] <= 0:
                raise ConfigurationError("rate must be > 0", "law.rate")
        elif self.kind == "gamma":
            if len(p) != 2 or p[0] <= 0 or p[1] <= 0:
                raise ConfigurationError("shape and rate must be > 0", "law.params")
        elif self.kind == "normal":
            if len(p) != 2 or p[1] <= 0:
                raise ConfigurationError("sd must be > 0", "law.sd")
        elif self.kind == "uniform":
            if len(p) != 2 or p[1] <= p[0]:
                raise ConfigurationError("requires lo < hi", "law.params")
        elif self.kind == "deterministic":
            if len(p) != 1:
                raise ConfigurationError("deterministic takes one value", "law.params")
        if self.mean <= 0 or not math.isfinite(self.mean):
            raise ConfigurationError("mean must be finite and > 0", "law.mean")
        if not math.isfinite(self.variance):
            raise ConfigurationError("variance must be finite", "law.variance")

    # -- constructors -------------------------------------------------

    @staticmethod
    def exponential(rate: float) -> "IncrementLaw":
        return IncrementLaw("exponential", (float(rate),))

    @staticmethod
    def gamma(shape: float, rate: float) -> "IncrementLaw":
        return IncrementLaw("gamma", (float(shape), float(rate)))

    @staticmethod
    def normal(mean: float, sd: float) -> "IncrementLaw":
        return IncrementLaw("normal", (float(mean), float(sd)))

    @staticmethod
    def uniform(lo: float, hi: float) -> "IncrementLaw":
        return IncrementLaw("uniform", (float(lo), float(hi)))

    @staticmethod
    def deterministic(value: float) -> "IncrementLaw":
        return IncrementLaw("deterministic", (float(value),))

    @staticmethod
    def quantile_table(values) -> "IncrementLaw":
        """Law defined by equally likely quantile knots (inverse-CDF table)."""
        vals = tuple(float(v) for v in np.sort(np.asarray(values, dtype=float)))
        if len(vals) < 2:
            raise ConfigurationError("need at least 2 table values", "law.values")
        return IncrementLaw("quantile_table", vals)

    # -- moments ------------------------------------------------------

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "exponential":
            return 1.0 / p[0]
        if k == "gamma":
            return p[0] / p[1]
        if k == "normal":
            return p[0]
        if k == "uniform":
            return 0.5 * (p[0] + p[1])
        if k == "deterministic":
            return p[0]
        # quantile_table samples uniformly within each knot segment
        a, b = self._segments()
        return float(np.mean(0.5 * (a + b)))

    @property
    def variance(self) -> float:
        k, p = self.kind, self.params
        if k == "exponential":
            return 1.0 / p[0] ** 2
        if k == "gamma":
            return p[0] / p[1] ** 2
        if k == "normal":
            return p[1] ** 2
        if k == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if k == "deterministic":
            return 0.0
        a, b = self._segments()
        ex2 = np.mean((a * a + a * b + b * b) / 3.0)
        return float(ex2 - self.mean ** 2)

    @property
    def central_moment4(self) -> float:
        """E(X - mu)^4, used by drift-based truncation bounds."""
        k, p = self.kind, self.params
        if k == "exponential":
            return 9.0 / p[0] ** 4
        if k == "gamma":
            a = p[0]
            return (3.0 * a * a + 6.0 * a) / p[1] ** 4
        if k == "normal":
            return 3.0 * p[1] ** 4
        if k == "uniform":
            return (p[1] - p[0]) ** 4 / 80.0
        if k == "deterministic":
            return 0.0
        a, b = self._segments()
        mu = self.mean
        width = b - a
        flat = width <= 0
        denom = np.where(flat, 1.0, 5.0 * width)
        m4 = np.where(flat, (a - mu) ** 4,
                      ((b - mu) ** 5 - (a - mu) ** 5) / denom)
        return float(np.mean(m4))

    def _segments(self) -> Tuple[np.ndarray, np.ndarray]:
        v = np.asarray(self.params)
        return v[:-1], v[1:]

    @property
    def support_min(self) -> float:
        k, p = self.kind, self.params
        if k in ("exponential", "gamma"):
            return 0.0
        if k == "normal":
            return -math.inf
        if k == "uniform":
            return p[0]
        if k == "deterministic":
            return p[0]
        return float(p[0])

    @property
    def is_arithmetic(self) -> bool:
        return self.kind == "deterministic"

    @property
    def oracle_only(self) -> bool:
        """Arithmetic laws are admitted for exact-value oracle tests only."""
        return self.is_arithmetic

    # -- sampling / quantiles -----------------------------------------

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        k, p = self.kind, self.params
        if n < 0:
            raise ConfigurationError("n must be >= 0", "sample.n")
        if k == "exponential":
            return gen.exponential(1.0 / p[0], size=n)
        if k == "gamma":
            return gen.gamma(p[0], 1.0 / p[1], size=n)
        if k == "normal":
            return gen.normal(p[0], p[1], size=n)
        if k == "uniform":
            return gen.uniform(p[0], p[1], size=n)
        if k == "deterministic":
            return np.full(n, p[0])
        return self.ppf(gen.random(n))

    def ppf(self, q) -> np.ndarray:
        k, p = self.kind, self.params
        q = np.asarray(q, dtype=float)
        if k == "exponential":
            return stats.expon.ppf(q, scale=1.0 / p[0])
        if k == "gamma":
            return stats.gamma.ppf(q, p[0], scale=1.0 / p[1])
        if k == "normal":
            return stats.norm.ppf(q, loc=p[0], scale=p[1])
        if k == "uniform":
            return stats.uniform.ppf(q, loc=p[0], scale=p[1] - p[0])
        if k == "deterministic":
            return np.full_like(q, p[0])
        knots = np.asarray(p)
        # piecewise-linear inverse CDF through equally spaced knots
        grid = np.linspace(0.0, 1.0, len(knots))
        return np.interp(q, grid, knots)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Symmetric PSD covariance of the vector increments Y_1."""

    matrix: np.ndarray
    source: str = "analytic"

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ConfigurationError("covariance must be square", "cov.matrix")
        if not np.allclose(m, m.T, atol=1e-12 * (1.0 + np.abs(m).max())):
            raise ConfigurationError("covariance must be symmetric", "cov.matrix")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class VectorLaw:
    """Mean-zero d-dimensional increments Y_k.

    ``centered_x``: Y_k = coeffs * (W_k - center), a deterministic map of
    the driving variable (covariance is analytic).
    ``gaussian``: Y_k ~ N(0, cov), drawn independently of W_k.
    ``custom``: Y_k = fn(W_k) row-wise; covariance estimated empirically.
    """

    kind: str
    coeffs: Optional[Tuple[float, ...]] = None
    cov_matrix: Optional[np.ndarray] = None
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dim: int = 1
    center: Optional[float] = None
    w_variance: Optional[float] = None
    empirical_n: int = 200_000

    @staticmethod
    def centered_x(coeffs=(1.0,), center: Optional[float] = None,
                   w_variance: Optional[float] = None) -> "VectorLaw":
        c = tuple(float(v) for v in coeffs)
        return VectorLaw("centered_x", coeffs=c, dim=len(c), center=center,
                         w_variance=w_variance)

    @staticmethod
    def gaussian(cov) -> "VectorLaw":
        m = np.atleast_2d(np.asarray(cov, dtype=float))
        return VectorLaw("gaussian", cov_matrix=m, dim=m.shape[0])

    @staticmethod
    def custom(fn: Callable[[np.ndarray], np.ndarray], dim: int,
               cov=None) -> "VectorLaw":
        m = None if cov is None else np.atleast_2d(np.asarray(cov, dtype=float))
        return VectorLaw("custom", fn=fn, dim=dim, cov_matrix=m)

    @property
    def d(self) -> int:
        return self.dim

    def bind(self, law: IncrementLaw) -> "VectorLaw":
        """Fill centering/variance of a centered_x law from the W law."""
        if self.kind != "centered_x":
            return self
        out = self
        if out.center is None:
            out = replace(out, center=law.mean)
        if out.w_variance is None:
            out = replace(out, w_variance=law.variance)
        return out

    def materialize(self, w: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        """Vector increments for a block of driving values, shape (n, d)."""
        n = len(w)
        if self.kind == "centered_x":
            if self.center is None:
                raise ConfigurationError("centered_x law is unbound; call bind()",
                                         "vector.center")
            return np.outer(w - self.center, np.asarray(self.coeffs))
        if self.kind == "gaussian":
            chol = np.linalg.cholesky(
                self.cov_matrix + 1e-15 * np.eye(self.dim))
            return gen.standard_normal((n, self.dim)) @ chol.T
        out = np.atleast_2d(np.asarray(self.fn(w), dtype=float))
        if out.shape != (n, self.dim):
            raise ConfigurationError(
                f"custom map returned shape {out.shape}, expected {(n, self.dim)}",
                "vector.fn")
        return out

    def cov(self, law: Optional[IncrementLaw] = None,
            stream=None) -> CovarianceEstimate:
        """Covariance of Y_1: analytic when possible, else empirical."""
        if self.kind == "centered_x":
            bound = self.bind(law) if law is not None else self
            if bound.w_variance is None:
                raise ConfigurationError("centered_x law is unbound; call bind()",
                                         "vector.w_variance")
            c = np.asarray(bound.coeffs)
            return CovarianceEstimate(bound.w_variance * np.outer(c, c), "analytic")
        if self.kind == "gaussian":
            return CovarianceEstimate(self.cov_matrix, "analytic")
        if self.cov_matrix is not None:
            return CovarianceEstimate(self.cov_matrix, "analytic")
        if law is None or stream is None:
            raise ConfigurationError(
                "custom vector law needs (law, stream) to estimate covariance",
                "vector.cov")
        gen = stream.generator()
        y = self.materialize(law.sample(gen, self.empirical_n), gen)
        return CovarianceEstimate(np.cov(y.T, bias=False).reshape(self.dim, self.dim),
                                  f"empirical(n={self.empirical_n})")
