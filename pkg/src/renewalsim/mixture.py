"""Chi-square mixture limit law of the slowly-changing term.

The quadratic perturbation converges in law to sum_i lambda_i * V_i with
V_i independent chi-square(1).  This module identifies the weights from
(Q, Sigma), evaluates the mixture CDF by numerical inversion of the
characteristic function prod_j (1 - 2 i lambda_j t)^{-1/2}, and exposes
the mean sum_i lambda_i.

The inversion integrates sin(theta(u)) / (u * rho(u)) over (0, inf),
where theta(u) = 0.5 * sum_i arctan(lambda_i u) - z u / 2 and
rho(u) = prod_i (1 + lambda_i^2 u^2)^{1/4}.  The head of the integral is
done with adaptive Gauss-Legendre panels; past the point where the
phase becomes strictly monotone the integral is summed lobe by lobe
(one sign-constant arch of the sine per term) and the alternating
series is accelerated by iterated averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre

from .errors import ConfigurationError, NumericError
from .laws import CovarianceEstimate
from .perturbation import QuadraticSpec
from .rng import RngStream

_GL_X, _GL_W = roots_legendre(24)
_MAX_LOBES = 200_000


@dataclass(frozen=True)
class ChiSquareMixture:
    """Mixture sum_i weights[i] * chi2_1 with independent components."""

    weights: Tuple[float, ...]
    cdf_tolerance: float = 1e-6

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) == 0 or all(v == 0.0 for v in w):
            raise ConfigurationError("weights must not be identically zero",
                                     "mixture.weights")
        if any(not math.isfinite(v) for v in w):
            raise ConfigurationError("weights must be finite", "mixture.weights")
        if self.cdf_tolerance <= 0:
            raise ConfigurationError("cdf_tolerance must be > 0",
                                     "mixture.cdf_tolerance")
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return float(sum(self.weights))


def mixture_weights(Q: QuadraticSpec, sigma: CovarianceEstimate,
                    cdf_tolerance: float = 1e-6) -> ChiSquareMixture:
    """Identify the mixture weights as eigenvalues of S^{1/2} Q S^{1/2}.

    The vector partial sums satisfy T_n/sqrt(n) => N(0, Sigma), so the
    limit of T'QT/n is G'QG with G ~ N(0, Sigma), whose law is the
    chi-square mixture with these eigenvalue weights.  The weight sum is
    checked against trace(Q Sigma) to 1e-12 relative.
    """
    if Q.d != sigma.d:
        raise ConfigurationError(f"Q is {Q.d}-dim, covariance is {sigma.d}-dim",
                                 "mixture_weights")
    evals, evecs = np.linalg.eigh(sigma.matrix)
    scale = max(1.0, float(evals[-1]))
    if evals[0] < -1e-10 * scale:
        raise NumericError(f"covariance not PSD (min eigenvalue {evals[0]:.3e})")
    root = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    w = np.linalg.eigvalsh(root @ Q.Q @ root)[::-1]
    tr = float(np.trace(Q.Q @ sigma.matrix))
    if abs(float(w.sum()) - tr) > 1e-12 * max(1.0, abs(tr)):
        raise NumericError(
            f"weight sum {w.sum():.16e} disagrees with trace {tr:.16e}")
    return ChiSquareMixture(tuple(float(v) for v in w), cdf_tolerance)


def mixture_mean(mix: ChiSquareMixture) -> float:
    """Mean of the mixture: the exact weight sum."""
    return mix.mean


# -- characteristic-function inversion ---------------------------------

def _theta(u, lams, z):
    return 0.5 * np.sum(np.arctan(np.multiply.outer(lams, u)), axis=0) - 0.5 * z * u


def _integrand(u, lams, z):
    th = _theta(u, lams, z)
    rho = np.prod((1.0 + np.multiply.outer(lams ** 2, u ** 2)) ** 0.25, axis=0)
    safe = np.where(u > 0, u * rho, 1.0)
    return np.where(u > 0, np.sin(th) / safe, 0.5 * (np.sum(lams) - z))


def _gl_panel(a, b, lams, z):
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * float(np.sum(_GL_W * _integrand(mid + half * _GL_X, lams, z)))


def _panel_adaptive(a, b, lams, z, depth=0):
    # keep the per-panel phase swing small enough for 24-point GL
    if depth < 48 and abs(float(_theta(np.array(b), lams, z))
                          - float(_theta(np.array(a), lams, z))) > 2.5:
        m = 0.5 * (a + b)
        return (_panel_adaptive(a, m, lams, z, depth + 1)
                + _panel_adaptive(m, b, lams, z, depth + 1))
    return _gl_panel(a, b, lams, z)


def _slope_bound(u, lams):
    return 0.5 * float(np.sum(np.abs(lams) / (1.0 + lams ** 2 * u ** 2)))


def _invert(lams: np.ndarray, z: float, tol: float) -> Tuple[float, float]:
    """Integral of the inversion kernel over (0, inf) and an error estimate."""
    d = len(lams)
    if z > 0:
        if _slope_bound(0.0, lams) <= 0.25 * z:
            u0 = 1.0
        else:
            hi = 1.0
            while _slope_bound(hi, lams) > 0.25 * z:
                hi *= 2.0
            u0 = max(brentq(lambda u: _slope_bound(u, lams) - 0.25 * z, 0.0, hi),
                     1.0)
    else:
        u0 = 64.0 / float(np.min(np.abs(lams)))

    total = 0.0
    a = 0.0
    b = min(1.0 / float(np.max(np.abs(lams))), u0)
    while a < u0:
        total += _panel_adaptive(a, b, lams, z)
        a, b = b, min(b * 2.0, u0)

    if z == 0:
        # two-term analytic tail of the asymptotic expansion at u -> inf
        P = float(np.prod(np.abs(lams))) ** 0.5
        th_inf = 0.25 * math.pi * float(np.sum(np.sign(lams)))
        c1 = 0.5 * float(np.sum(1.0 / lams))
        tail = (math.sin(th_inf) * (2.0 / d) * u0 ** (-d / 2.0)
                - math.cos(th_inf) * c1 * (2.0 / (d + 2.0))
                * u0 ** (-d / 2.0 - 1.0)) / P
        return total + tail, 4.0 * u0 ** (-d / 2.0 - 2.0) / P

    # past u0 the phase is strictly decreasing with slope <= -z/4; march
    # over the arches between consecutive multiples of pi
    th0 = float(_theta(np.array(u0), lams, z))
    m = int(math.ceil(-th0 / math.pi))
    while -m * math.pi > th0:
        m += 1
    prev = u0
    run = total
    psums = []
    est_prev = None
    hits = 0
    for k in range(_MAX_LOBES):
        target = -(m + k) * math.pi
        lo = prev
        width = (float(_theta(np.array(lo), lams, z)) - target) / (0.25 * z) + 1e-12
        hi = lo + width
        tries = 0
        while float(_theta(np.array(hi), lams, z)) > target and tries < 200:
            hi += width
            tries += 1
        root = brentq(lambda u: float(_theta(np.array(u), lams, z)) - target,
                      lo, hi)
        run += _gl_panel(prev, root, lams, z)
        psums.append(run)
        prev = root
        if k >= 5:
            s = np.array(psums[-16:])
            while len(s) > 1:
                s = 0.5 * (s[:-1] + s[1:])
            est = float(s[0])
            if est_prev is not None:
                step = abs(est - est_prev)
                if step < 0.25 * tol:
                    hits += 1
                    if hits >= 2:
                        return est, step + 1e-16
                else:
                    hits = 0
            est_prev = est
    achieved = abs(psums[-1] - psums[-2]) if len(psums) > 1 else math.inf
    raise NumericError(
        f"lobe summation did not converge to {tol:.1e} at z={z}",
        achieved_tolerance=achieved)


def _cdf_scalar(weights: Sequence[float], z: float, tol: float) -> float:
    lams = np.array([w for w in weights if w != 0.0], dtype=float)
    if np.all(lams > 0) and z <= 0:
        return 0.0
    if np.all(lams < 0) and z >= 0:
        return 1.0
    if z < 0:
        return 1.0 - _cdf_scalar(tuple(-w for w in weights), -z, tol)
    # rescale so the largest |weight| is 1 (pure conditioning, same law)
    c = float(np.max(np.abs(lams)))
    integral, _ = _invert(lams / c, z / c, tol)
    return min(max(0.5 - integral / math.pi, 0.0), 1.0)


def mixture_cdf(mix: ChiSquareMixture, z):
    """L(z) = P[sum_i weights[i] * chi2_1 <= z], to cdf_tolerance.

    Accepts a scalar or an array of evaluation points.
    """
    tol = 0.25 * mix.cdf_tolerance
    if np.ndim(z) == 0:
        if not math.isfinite(float(z)):
            raise ConfigurationError("z must be finite", "mixture_cdf.z")
        return _cdf_scalar(mix.weights, float(z), tol)
    zs = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(zs)):
        raise ConfigurationError("z must be finite", "mixture_cdf.z")
    return np.array([_cdf_scalar(mix.weights, float(v), tol)
                     for v in zs.ravel()]).reshape(zs.shape)


def mixture_quantile(mix: ChiSquareMixture, p: float) -> float:
    """Smallest z with L(z) = p (L is continuous and increasing)."""
    if not 0.0 < p < 1.0:
        raise ConfigurationError("p must lie in (0,1)", "mixture_quantile.p")
    mean = mix.mean
    spread = math.sqrt(2.0 * sum(w * w for w in mix.weights))
    lo, hi = mean - 4.0 * spread, mean + 4.0 * spread
    if all(w > 0 for w in mix.weights):
        lo = 0.0
    for _ in range(200):
        if mixture_cdf(mix, lo) < p:
            break
        lo -= spread
    for _ in range(200):
        if mixture_cdf(mix, hi) > p:
            break
        hi += spread
    return float(brentq(lambda v: mixture_cdf(mix, v) - p, lo, hi, xtol=1e-10))


def mixture_sample(mix: ChiSquareMixture, stream: RngStream, n: int) -> np.ndarray:
    """n Monte Carlo draws of the mixture (for empirical cross-checks)."""
    gen = stream.generator()
    w = np.asarray(mix.weights)
    return gen.chisquare(1, size=(n, len(w))) @ w
