"""Perturbed-walk assembly, first-passage sampling, and the backward
functional that generates the limiting excess law.

The walk is Z_n = S_n + xi_n + zeta_n with zeta_n = T_n'QT_n/n + zeta''_n,
stopped at t_a = inf{n >= n0 : Z_n > a} (strict).  The asymptotic
constants rho (mean limiting excess) and nu (mean limiting stationary
term at stopping) are estimated from the backward functional
Z*_j = X_{j+1} + ... + X_0 + xi_0 - xi_j, j <= -1, whose positive-part
infimum has E[(inf)_+] = mu (total-mass-one identity used as a runtime
consistency check).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConfigurationError
from .laws import CovarianceEstimate, IncrementLaw, VectorLaw
from .mixture import ChiSquareMixture, mixture_weights
from .perturbation import (QuadraticSpec, ResidualSpec, StationarySpec,
                           zeta_quadratic_path)
from .rng import RngStream

_CHUNK = 256
_BACK_BLOCK = 192


@dataclass(frozen=True)
class PerturbedWalkModel:
    """Full specification of the perturbed walk Z_n.

    The driving variables are scalar: W_k ~ increment_law, X_k = W_k,
    and Y_k = vector_law(W_k).  The staggered survival correction is not
    available here (its driver is two-dimensional); it lives in the
    staggered trial module.
    """

    increment_law: IncrementLaw
    vector_law: Optional[VectorLaw] = None
    stationary: StationarySpec = field(default_factory=StationarySpec.zero)
    quadratic: Optional[QuadraticSpec] = None
    residual: ResidualSpec = field(default_factory=ResidualSpec.zero)
    n0: int = 1
    horizon_factor: float = 10.0

    def __post_init__(self):
        if self.n0 < 1:
            raise ConfigurationError("n0 must be >= 1", "model.n0")
        if self.horizon_factor <= 0:
            raise ConfigurationError("horizon_factor must be > 0",
                                     "model.horizon_factor")
        if self.quadratic is not None and self.vector_law is None:
            raise ConfigurationError(
                "a quadratic term requires a vector law", "model.vector_law")
        if self.stationary.kind == "staggered_residual":
            raise ConfigurationError(
                "staggered_residual drives two-column rows; use the trial "
                "model instead", "model.stationary")
        if self.vector_law is not None:
            object.__setattr__(self, "vector_law",
                               self.vector_law.bind(self.increment_law))
        if self.quadratic is not None and \
                self.quadratic.d != self.vector_law.d:
            raise ConfigurationError("Q dimension != vector dimension",
                                     "model.quadratic")

    @property
    def mu(self) -> float:
        return self.increment_law.mean

    @property
    def sigma2(self) -> float:
        return self.increment_law.variance

    def horizon(self, a: float) -> int:
        return int(math.ceil(self.horizon_factor * (a / self.mu + 100.0)))

    def covariance(self) -> Optional[CovarianceEstimate]:
        if self.vector_law is None:
            return None
        return self.vector_law.cov(self.increment_law)

    def mixture(self, cdf_tolerance: float = 1e-6) -> Optional[ChiSquareMixture]:
        """Limit law of the quadratic term; None when Q is absent/zero."""
        if self.quadratic is None or not np.any(self.quadratic.Q):
            return None
        return mixture_weights(self.quadratic, self.covariance(), cdf_tolerance)

    def mixture_mean_value(self) -> float:
        mix = self.mixture()
        return 0.0 if mix is None else mix.mean

    def xi_slack(self, stream: Optional[RngStream] = None) -> float:
        """|mean| + 10 sd of the stationary term, for early-exit margins."""
        if self.stationary.kind == "zero":
            return 0.0
        sd = self.stationary.xi_sd_analytic(self.increment_law)
        if sd is not None:
            mean = 0.0 if self.stationary.kind == "zero" else None
            if self.stationary.h == "identity" and mean is None:
                geom = 1.0 if self.stationary.kind == "instantaneous" else \
                    (1.0 - self.stationary.beta ** self.stationary.truncation_depth) \
                    / (1.0 - self.stationary.beta)
                mean = self.increment_law.mean * geom - self.stationary.centering
            if mean is not None:
                return abs(mean) + 10.0 * sd
        base = stream if stream is not None else RngStream(0x5EED)
        gen = base.with_stream(base.stream_id + 101).generator()
        D = max(self.stationary.depth, 1)
        w = self.increment_law.sample(gen, 4096 + D)
        xi = self.stationary.xi_path(w[: 4096 + D], 4096)
        return abs(float(np.mean(xi))) + 10.0 * float(np.std(xi))


class _PathEngine:
    """Chunked forward simulation of one replication's path."""

    def __init__(self, model: PerturbedWalkModel, gen: np.random.Generator):
        self.model = model
        self.gen = gen
        D = model.stationary.depth
        self.w_tail = model.increment_law.sample(gen, D) if D else \
            np.empty(0)
        self.s_last = 0.0
        self.t_last = None
        if model.vector_law is not None:
            self.t_last = np.zeros(model.vector_law.d)
        self.n_done = 0
        self.full: dict = {"W": [], "S": [], "T": [], "xi": [], "zeta": [],
                           "Z": []}

    def extend(self, count: int = _CHUNK) -> dict:
        """Simulate the next ``count`` indices; returns the chunk arrays."""
        m = self.model
        w = m.increment_law.sample(self.gen, count)
        s = self.s_last + np.cumsum(w)
        self.s_last = float(s[-1])
        xi = m.stationary.xi_path(np.concatenate([self.w_tail, w]), count)
        D = m.stationary.depth
        if D:
            self.w_tail = np.concatenate([self.w_tail, w])[-D:]
        n_idx = np.arange(self.n_done + 1, self.n_done + count + 1)
        zeta = np.zeros(count)
        t_rows = None
        if m.vector_law is not None:
            y = m.vector_law.materialize(w, self.gen)
            t_rows = self.t_last + np.cumsum(y, axis=0)
            self.t_last = t_rows[-1].copy()
            if m.quadratic is not None:
                quad = np.einsum("ni,ij,nj->n", t_rows, m.quadratic.Q, t_rows)
                zeta = zeta + quad / n_idx
        if m.residual.kind != "zero":
            self.full["W"].append(w)
            self.full["S"].append(s)
            if t_rows is not None:
                self.full["T"].append(t_rows)
            path = {k: np.concatenate(v) if v else np.empty(0)
                    for k, v in self.full.items() if k in ("W", "S", "T")}
            zeta = zeta + m.residual.path(n_idx, path)
        z = s + xi + zeta
        self.n_done += count
        return {"n": n_idx, "W": w, "S": s, "T": t_rows, "xi": xi,
                "zeta": zeta, "Z": z}


@dataclass(frozen=True)
class FirstPassageSample:
    """One stopped replication of the perturbed walk."""

    t_a: int
    R_a: float
    xi_at_stop: float
    zeta_at_stop: float
    crossed: bool


def simulate_passage(model: PerturbedWalkModel, a: float,
                     stream: RngStream) -> FirstPassageSample:
    """First n >= n0 with Z_n > a (strict), its excess and perturbations.

    If no crossing happens by horizon_factor * (a/mu + 100) indices the
    sample is returned with crossed=False; callers must surface the
    non-crossing rate rather than dropping such samples.
    """
    if a <= 0:
        raise ConfigurationError("a must be > 0", "simulate_passage.a")
    horizon = model.horizon(a)
    engine = _PathEngine(model, stream.generator())
    while engine.n_done < horizon:
        chunk = engine.extend(min(_CHUNK, horizon - engine.n_done))
        eligible = (chunk["Z"] > a) & (chunk["n"] >= model.n0)
        hits = np.nonzero(eligible)[0]
        if hits.size:
            i = int(hits[0])
            # all earlier eligible indices in this chunk stayed at or
            # below the boundary; earlier chunks had no crossing at all
            assert chunk["Z"][i] - a > 0.0
            return FirstPassageSample(
                t_a=int(chunk["n"][i]),
                R_a=float(chunk["Z"][i] - a),
                xi_at_stop=float(chunk["xi"][i]),
                zeta_at_stop=float(chunk["zeta"][i]),
                crossed=True)
    return FirstPassageSample(t_a=horizon, R_a=math.nan, xi_at_stop=math.nan,
                              zeta_at_stop=math.nan, crossed=False)


@dataclass(frozen=True)
class PassageSamples:
    """Per-replication stopped values over a batch of replications."""

    a: float
    t: np.ndarray
    R: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    crossed: np.ndarray

    @property
    def reps(self) -> int:
        return len(self.t)

    @property
    def non_crossing_fraction(self) -> float:
        return float(1.0 - np.mean(self.crossed))

    @staticmethod
    def concatenate(parts: "list[PassageSamples]") -> "PassageSamples":
        a = parts[0].a
        return PassageSamples(
            a,
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.R for p in parts]),
            np.concatenate([p.xi for p in parts]),
            np.concatenate([p.zeta for p in parts]),
            np.concatenate([p.crossed for p in parts]))


def collect_passage(model: PerturbedWalkModel, a: float, reps: int,
                    stream: RngStream, rep_offset: int = 0) -> PassageSamples:
    """Stopped samples for replications rep_offset..rep_offset+reps-1.

    Replication r always uses the stream (seed, r, stream_id), so the
    result is independent of how the replication range is chunked.
    """
    t = np.empty(reps, dtype=np.int64)
    R = np.empty(reps)
    xi = np.empty(reps)
    zeta = np.empty(reps)
    crossed = np.empty(reps, dtype=bool)
    for k in range(reps):
        s = simulate_passage(model, a,
                             stream.with_replication(rep_offset + k))
        t[k], R[k], xi[k], zeta[k], crossed[k] = \
            s.t_a, s.R_a, s.xi_at_stop, s.zeta_at_stop, s.crossed
    return PassageSamples(a, t, R, xi, zeta, crossed)


@dataclass(frozen=True)
class PassageSummary:
    """Moments of the stopped quantities over the crossed replications."""

    a: float
    reps: int
    mean_t: float
    se_t: float
    mean_R: float
    se_R: float
    mean_xi: float
    mean_zeta: float
    non_crossing_fraction: float

    @property
    def usable(self) -> bool:
        """False when more than 1% of replications never crossed."""
        return self.non_crossing_fraction <= 0.01


def summarize_passage(samples: PassageSamples) -> PassageSummary:
    ok = samples.crossed
    n = int(np.count_nonzero(ok))
    if n < 2:
        raise ConfigurationError("fewer than 2 crossed replications",
                                 "summarize_passage")
    t = samples.t[ok].astype(float)
    ncf = samples.non_crossing_fraction
    if ncf > 0.01:
        warnings.warn(f"non-crossing fraction {ncf:.3f} exceeds 1%; "
                      f"summary flagged unusable", RuntimeWarning)
    return PassageSummary(
        a=samples.a, reps=samples.reps,
        mean_t=float(np.mean(t)),
        se_t=float(np.std(t, ddof=1) / math.sqrt(n)),
        mean_R=float(np.mean(samples.R[ok])),
        se_R=float(np.std(samples.R[ok], ddof=1) / math.sqrt(n)),
        mean_xi=float(np.mean(samples.xi[ok])),
        mean_zeta=float(np.mean(samples.zeta[ok])),
        non_crossing_fraction=ncf)


def estimate_Et(model: PerturbedWalkModel, a: float, reps: int,
                stream: RngStream) -> PassageSummary:
    """Mean and SE of t_a plus means of the stopped perturbed quantities."""
    if reps < 100:
        raise ConfigurationError("reps must be >= 100", "estimate_Et.reps")
    return summarize_passage(collect_passage(model, a, reps, stream))


# -- backward functional ------------------------------------------------

def recommended_backward_depth(mu: float, sigma2: float,
                               xi_slack: float) -> int:
    """Depth at which the early-exit rule is as good as certain to fire.

    The exit needs mu*i - 10*sigma*sqrt(i) - xi_slack to beat the running
    minimum (at most 0 at i=1 up to the slack); the returned depth doubles
    that fixpoint for safety.
    """
    sigma = math.sqrt(sigma2)
    hi = 4.0
    gap = lambda i: mu * i - 10.0 * sigma * math.sqrt(i) - 2.0 * xi_slack
    while gap(hi) <= 0 and hi < 1e12:
        hi *= 2.0
    return int(2 * math.ceil(hi))


def residual_dip_probability(depth: int, mu: float, sigma2: float,
                             kappa4: float, slack: float) -> float:
    """Fourth-moment bound on P[the walk ever dips to the running-min
    region beyond the given depth]; used for truncation warnings."""
    total = 0.0
    j = depth + 1
    while j < depth * 200 + 1000:
        gap = mu * j - slack
        if gap > 0:
            term = (3.0 * sigma2 ** 2 * j * j + kappa4 * j) / gap ** 4
            total += term
            if term < 1e-18 * max(total, 1e-30):
                break
        j += 1
    # integral comparison for the remaining tail, term ~ 3 sigma^4 / (mu^4 j^2)
    total += 3.0 * sigma2 ** 2 / (mu ** 4 * j)
    return min(total, 1.0)


@dataclass(frozen=True)
class BackwardFunctionalSample:
    """One replication of the backward minimum functional."""

    inf_value: float
    xi0: float
    truncation_depth: int
    attained_index: int


@dataclass(frozen=True)
class BackwardBatch:
    """Vectorized backward samples: inf_{j<=-1} Z*_j and xi_0 per rep."""

    inf_value: np.ndarray
    xi0: np.ndarray
    first_value: np.ndarray
    attained_index: np.ndarray
    truncated: np.ndarray
    depth_cap: int

    @property
    def reps(self) -> int:
        return len(self.inf_value)

    def sample(self, i: int) -> BackwardFunctionalSample:
        return BackwardFunctionalSample(
            float(self.inf_value[i]), float(self.xi0[i]), self.depth_cap,
            int(self.attained_index[i]))

    @staticmethod
    def concatenate(parts: "list[BackwardBatch]") -> "BackwardBatch":
        return BackwardBatch(
            np.concatenate([p.inf_value for p in parts]),
            np.concatenate([p.xi0 for p in parts]),
            np.concatenate([p.first_value for p in parts]),
            np.concatenate([p.attained_index for p in parts]),
            np.concatenate([p.truncated for p in parts]),
            parts[0].depth_cap)


def _backward_core(sample_rows: Callable[[np.random.Generator, int], np.ndarray],
                   x_of: Callable[[np.ndarray], np.ndarray],
                   xi_backward: Callable[[np.ndarray], np.ndarray],
                   xi_depth: int, mu: float, sigma: float, xi_slack: float,
                   depth_cap: int, gen: np.random.Generator
                   ) -> Tuple[float, float, float, int, bool]:
    """One replication: returns (inf, xi0, Z*_{-1}, attained index, truncated)."""
    D = max(xi_depth, 1)
    rows = sample_rows(gen, _BACK_BLOCK + D)
    while True:
        xi = xi_backward(rows)
        x = x_of(rows)
        I = xi.shape[0] - 1
        c = np.cumsum(x[:I])            # c[i-1] = X_0 + ... + X_{-(i-1)}
        vals = c - xi[1:I + 1]          # Z*_{-i} - xi_0
        cummin = np.minimum.accumulate(vals)
        i_idx = np.arange(1, I + 1, dtype=float)
        exit_ok = (c - 10.0 * sigma * np.sqrt(i_idx) - xi_slack) > cummin
        hit = np.nonzero(exit_ok)[0]
        if hit.size:
            stop = int(hit[0])
            prefix = vals[:stop + 1]
            arg = int(np.argmin(prefix))
            xi0 = float(xi[0])
            return (float(prefix[arg] + xi0), xi0, float(vals[0] + xi0),
                    -(arg + 1), False)
        if rows.shape[0] - D >= depth_cap:
            arg = int(np.argmin(vals))
            xi0 = float(xi[0])
            return (float(vals[arg] + xi0), xi0, float(vals[0] + xi0),
                    -(arg + 1), True)
        grow = sample_rows(gen, _BACK_BLOCK)
        rows = np.concatenate([rows, grow])


def backward_min_functional(model: PerturbedWalkModel, depth: Optional[int],
                            reps: int, stream: RngStream,
                            rep_offset: int = 0) -> BackwardBatch:
    """Samples of (inf_{j<=-1} Z*_j, xi_0) with drift-based early exit.

    ``depth`` caps the explored past; None selects the recommended value
    from the exit-rule fixpoint.  Replication r uses stream index
    rep_offset + r.  Replications that hit the cap are flagged and a
    residual dip probability is estimated for the warning.
    """
    law = model.increment_law
    xi_slack = model.xi_slack(stream)
    rec = recommended_backward_depth(law.mean, law.variance, xi_slack)
    cap = rec if depth is None else int(depth)
    if cap < 1:
        raise ConfigurationError("depth must be >= 1", "backward.depth")
    if cap < rec:
        resid = residual_dip_probability(cap, law.mean, law.variance,
                                         law.central_moment4, xi_slack)
        warnings.warn(
            f"backward depth {cap} below recommended {rec}; residual dip "
            f"probability about {resid:.2e}", RuntimeWarning)
    spec = model.stationary
    sample_rows = lambda gen, k: law.sample(gen, k)
    inf_v = np.empty(reps)
    xi0 = np.empty(reps)
    first = np.empty(reps)
    attained = np.empty(reps, dtype=np.int64)
    truncated = np.empty(reps, dtype=bool)
    sigma = math.sqrt(law.variance)
    for r in range(reps):
        gen = stream.with_replication(rep_offset + r).generator()
        inf_v[r], xi0[r], first[r], attained[r], truncated[r] = _backward_core(
            sample_rows, lambda w: w, spec.xi_backward, spec.depth,
            law.mean, sigma, xi_slack, cap, gen)
    n_trunc = int(truncated.sum())
    if n_trunc:
        warnings.warn(f"{n_trunc}/{reps} backward replications hit the "
                      f"depth cap {cap}", RuntimeWarning)
    return BackwardBatch(inf_v, xi0, first, attained, truncated, cap)


def excess_cdf_from_backward(batch: BackwardBatch, r_grid: np.ndarray,
                             mu: float) -> np.ndarray:
    """Limiting excess CDF F(r) = E[min((inf)_+, r)] / mu on a grid."""
    vplus = np.sort(np.maximum(batch.inf_value, 0.0))
    n = len(vplus)
    prefix = np.concatenate([[0.0], np.cumsum(vplus)])
    r = np.asarray(r_grid, dtype=float)
    k = np.searchsorted(vplus, r, side="left")  # values below each r
    return (prefix[k] + r * (n - k)) / (n * mu)


@dataclass(frozen=True)
class RenewalConstants:
    """The constants of the expected-stopping-time expansion
    E(t_a) ~ (a + rho - nu - lam) / mu."""

    mu: float
    sigma2: float
    rho: float
    nu: float
    lam: float
    se_rho: float
    se_nu: float
    reps: int
    methods: Tuple[Tuple[str, str], ...] = ()
    flags: Tuple[str, ...] = ()

    @property
    def consistent(self) -> bool:
        return "normalization_inconsistent" not in self.flags


def _batched_se(values: np.ndarray, n_batches: int = 100) -> float:
    """Standard error of the mean via contiguous replication batches."""
    n = len(values)
    b = max(2, min(n_batches, n))
    size = n // b
    if size == 0:
        return float(np.std(values, ddof=1) / math.sqrt(n))
    means = values[:b * size].reshape(b, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(b))


def constants_from_batch(batch: BackwardBatch, mu: float, sigma2: float,
                         lam: float) -> RenewalConstants:
    """Build the expansion constants from a backward batch.

    rho = E[(inf)_+^2]/(2 mu) and nu = E[xi_0 (inf)_+]/mu follow from the
    displayed limit laws: integrating r against the excess density
    P[inf >= r]/mu gives the second-moment identity for rho, and the
    xi-marginal's mean is the (inf)_+-weighted mean of xi_0.  A
    normalization check |E(inf)_+/mu - 1| > 5 SE flags inconsistency.
    """
    vplus = np.maximum(batch.inf_value, 0.0)
    rho_terms = vplus ** 2 / (2.0 * mu)
    nu_terms = batch.xi0 * vplus / mu
    rho = float(np.mean(rho_terms))
    nu = float(np.mean(nu_terms))
    se_rho = _batched_se(rho_terms)
    se_nu = _batched_se(nu_terms)
    flags = []
    mass = float(np.mean(vplus)) / mu
    se_mass = _batched_se(vplus) / mu
    if abs(mass - 1.0) > 5.0 * se_mass:
        flags.append("normalization_inconsistent")
        warnings.warn(
            f"backward normalization E[(inf)_+]/mu = {mass:.4f} deviates by "
            f"more than 5 SE ({se_mass:.4f}) from 1", RuntimeWarning)
    if batch.truncated.any():
        flags.append("depth_truncated")
    return RenewalConstants(
        mu=mu, sigma2=sigma2, rho=rho, nu=nu, lam=lam,
        se_rho=se_rho, se_nu=se_nu, reps=batch.reps,
        methods=(("mu", "analytic"), ("sigma2", "analytic"),
                 ("rho", "backward-mc"), ("nu", "backward-mc"),
                 ("lam", "eigen-trace")),
        flags=tuple(flags))


def estimate_rho_nu(model: PerturbedWalkModel, depth: Optional[int],
                    reps: int, stream: RngStream,
                    batch: Optional[BackwardBatch] = None) -> RenewalConstants:
    """Estimate rho and nu for a perturbed-walk model via the backward
    minimum functional; see constants_from_batch for the identities."""
    if batch is None:
        batch = backward_min_functional(model, depth, reps, stream)
    return constants_from_batch(batch, model.mu, model.sigma2,
                                model.mixture_mean_value())
