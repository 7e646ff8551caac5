"""Random-walk paths and classical renewal oracles.

These routines handle the unperturbed walk S_n = X_1 + ... + X_n and
provide the ground-truth quantities (renewal window counts, plain
overshoot samples) that the perturbed-walk experiments are checked
against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .laws import IncrementLaw, VectorLaw
from .rng import RngStream


@dataclass(frozen=True)
class WalkPath:
    """One sampled walk: increments, partial sums, optional vector part."""

    increments: np.ndarray
    partial_sums: np.ndarray
    vector_increments: Optional[np.ndarray] = None
    vector_sums: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.increments)

    def validate(self, atol: float = 1e-9) -> None:
        """Check the partial-sum recursion; raises AssertionError on failure."""
        assert len(self.increments) == len(self.partial_sums)
        if len(self) > 0:
            assert np.allclose(np.cumsum(self.increments), self.partial_sums,
                               atol=atol)
        if self.vector_increments is not None:
            assert self.vector_sums is not None
            assert len(self.vector_increments) == len(self)
            if len(self) > 0:
                assert np.allclose(np.cumsum(self.vector_increments, axis=0),
                                   self.vector_sums, atol=atol)


def sample_walk(law: IncrementLaw, vector_law: Optional[VectorLaw],
                n: int, stream: RngStream) -> WalkPath:
    """Sample S_1..S_n (and T_1..T_n when a vector law is given).

    Deterministic given ``stream``; identical triples give bit-identical
    paths.
    """
    if n < 0:
        raise ConfigurationError("n must be >= 0", "sample_walk.n")
    gen = stream.generator()
    x = law.sample(gen, n)
    s = np.cumsum(x)
    if vector_law is None:
        return WalkPath(x, s)
    vl = vector_law.bind(law)
    y = vl.materialize(x, gen)
    return WalkPath(x, s, y, np.cumsum(y, axis=0))


@dataclass(frozen=True)
class WindowCountEstimate:
    """MC estimate of the expected number of walk visits to (a, a+b]."""

    mean: float
    se: float
    reps: int
    horizon: int
    horizon_warning: bool = False


def renewal_window_count(law: IncrementLaw, a: float, b: float, horizon: int,
                         reps: int, stream: RngStream) -> WindowCountEstimate:
    """Estimate E #{n >= 1 : a < S_n <= a+b} by Monte Carlo.

    For a large the estimate approaches b / mean(X).  A warning flag is
    set when the horizon is too short to contain all crossings of the
    window with high probability.
    """
    if a <= 0 or b <= 0:
        raise ConfigurationError("a and b must be > 0", "renewal_window_count")
    mu = law.mean
    min_horizon = int(math.ceil(3.0 * (a + b) / mu))
    horizon_warning = horizon < min_horizon
    if horizon_warning:
        warnings.warn(
            f"horizon {horizon} < {min_horizon}; window counts may be censored",
            RuntimeWarning)
    nonneg = law.support_min >= 0.0
    counts = np.empty(reps)
    for r in range(reps):
        gen = stream.with_replication(r).generator()
        count = 0
        s_last = 0.0
        done = 0
        while done < horizon:
            block = min(4096, horizon - done)
            s = s_last + np.cumsum(law.sample(gen, block))
            count += int(np.count_nonzero((s > a) & (s <= a + b)))
            s_last = s[-1]
            done += block
            if nonneg and s_last > a + b:
                break
        counts[r] = count
    mean = float(np.mean(counts))
    se = float(np.std(counts, ddof=1) / math.sqrt(reps)) if reps > 1 else math.inf
    return WindowCountEstimate(mean, se, reps, horizon, horizon_warning)


@dataclass(frozen=True)
class OvershootSample:
    """Empirical overshoot values S_t - a at the first strict crossing."""

    values: np.ndarray
    non_crossed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def se(self) -> float:
        n = len(self.values)
        return float(np.std(self.values, ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def plain_overshoot(law: IncrementLaw, a: float, reps: int,
                    stream: RngStream) -> OvershootSample:
    """Sample S_t - a at t = first n with S_n > a, for the plain walk."""
    if a <= 0:
        raise ConfigurationError("a must be > 0", "plain_overshoot.a")
    horizon = int(math.ceil(10.0 * (a / law.mean + 100.0)))
    values = np.empty(reps)
    non_crossed = 0
    for r in range(reps):
        gen = stream.with_replication(r).generator()
        s_last = 0.0
        done = 0
        hit = math.nan
        while done < horizon:
            block = min(max(256, int(a / law.mean) + 64), horizon - done)
            s = s_last + np.cumsum(law.sample(gen, block))
            over = np.nonzero(s > a)[0]
            if over.size:
                hit = s[over[0]] - a
                break
            s_last = s[-1]
            done += block
        if math.isnan(hit):
            non_crossed += 1
            values[r] = math.nan
        else:
            values[r] = hit
    vals = values[~np.isnan(values)]
    if non_crossed:
        warnings.warn(f"{non_crossed}/{reps} walks never crossed a={a} "
                      f"within horizon {horizon}", RuntimeWarning)
    return OvershootSample(vals, non_crossed)
