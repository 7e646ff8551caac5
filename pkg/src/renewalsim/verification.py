"""Experiments confronting the limit statements with Monte Carlo runs.

Each experiment simulates paths of a perturbed-walk model, estimates the
left-hand side of one asymptotic statement, computes the predicted
right-hand side from independent ingredients (quadrature, stationary
sampling, backward functional), and reports both with a 3-standard-error
pass flag.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, ContractViolationError
from .first_passage import (BackwardBatch, PassageSamples, PassageSummary,
                            PerturbedWalkModel, RenewalConstants, _PathEngine,
                            backward_min_functional, collect_passage,
                            estimate_rho_nu, excess_cdf_from_backward,
                            summarize_passage)
from .mixture import mixture_cdf
from .perturbation import zeta_window_path
from .rng import RngStream

_KS_COEF_1PCT = 1.628  # Kolmogorov critical coefficient at the 1% level


@dataclass(frozen=True)
class WindowBounds:
    """The index window [m, M] around a/mu used by the diagnostics:
    m = floor((1 - a^-q)/mu * a), M = floor((1 + a^-q)/mu * a)."""

    q: float
    a: float
    m: int
    M: int

    @staticmethod
    def for_level(q: float, a: float, mu: float) -> "WindowBounds":
        if not (1.0 / 3.0 < q < 0.5):
            raise ConfigurationError("q must lie in (1/3, 1/2)", "window.q")
        if a <= 0 or mu <= 0:
            raise ConfigurationError("a and mu must be > 0", "window.a")
        m = math.floor((1.0 - a ** (-q)) / mu * a)
        M = math.floor((1.0 + a ** (-q)) / mu * a)
        if m < 1 or m >= M:
            raise ConfigurationError(
                f"a={a} too small for window bounds (m={m}, M={M})", "window.a")
        return WindowBounds(q, a, m, M)


@dataclass(frozen=True)
class EventPredicate:
    """Cylinder-set event over the recent driving window and derived xi_n.

    ``fn(windows, xi)`` receives the (k, window_depth) array of driving
    windows (oldest first; absent when window_depth=0) and the k values
    of xi_n, and returns a boolean array of length k.
    """

    description: str
    window_depth: int
    fn: Callable[[Optional[np.ndarray], np.ndarray], np.ndarray]

    @staticmethod
    def always_true() -> "EventPredicate":
        return EventPredicate("all paths", 0,
                              lambda w, xi: np.ones(len(xi), dtype=bool))

    @staticmethod
    def never() -> "EventPredicate":
        return EventPredicate("impossible event", 0,
                              lambda w, xi: np.zeros(len(xi), dtype=bool))

    @staticmethod
    def xi_leq(c: float) -> "EventPredicate":
        return EventPredicate(f"xi_n <= {c}", 0, lambda w, xi: xi <= c)

    def evaluate(self, windows: Optional[np.ndarray],
                 xi: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(windows, xi), dtype=bool)
        if out.shape != xi.shape:
            raise ConfigurationError("predicate must return one bool per index",
                                     "predicate.fn")
        return out


@dataclass(frozen=True)
class TheoremReport:
    """One estimate/theory comparison with its 3-SE verdict.

    ``std_error`` combines the MC error of both sides; for distance
    statistics (KS, chi-square) it holds threshold/3 so the pass rule
    stays |estimate - theory| <= 3 * std_error.
    """

    label: str
    estimate: float
    theory_value: float
    std_error: float
    n_reps: int

    @property
    def passed(self) -> bool:
        return abs(self.estimate - self.theory_value) <= 3.0 * self.std_error


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) \
        if len(values) > 1 else math.inf
    return m, se


def _envelope_offset(model: PerturbedWalkModel) -> Optional[float]:
    """Constant c with Z_k >= S_n + c for all k >= n (when derivable).

    Requires nonnegative increments (so S is nondecreasing), a finite
    lower bound on xi, a PSD quadratic form and a bounded-below residual.
    """
    if model.increment_law.support_min < 0:
        return None
    xi_lb = model.stationary.lower_bound_for(model.increment_law)
    if xi_lb is None:
        return None
    zeta_lb = 0.0
    if model.quadratic is not None:
        if float(np.linalg.eigvalsh(model.quadratic.Q)[0]) < 0:
            return None
    if model.residual.kind == "constant":
        res_lb = min(model.residual.value, 0.0)
    elif model.residual.kind == "zero":
        res_lb = 0.0
    else:
        return None
    return xi_lb + zeta_lb + res_lb


def _stationary_xi_sample(model: PerturbedWalkModel, reps: int,
                          stream: RngStream,
                          window_depth: int = 0
                          ) -> Tuple[Optional[np.ndarray], np.ndarray]:
    """i.i.d. stationary draws of (recent driving window, xi).

    Row i holds the last max(depth, window_depth) driving values of an
    independent stationary configuration; xi is evaluated on the last
    ``depth`` of them, the returned window is the last ``window_depth``.
    """
    D = model.stationary.depth
    P = window_depth
    need = max(D, P, 1)
    gen = stream.generator()
    rows = model.increment_law.sample(gen, reps * need).reshape(reps, need)
    xi = model.stationary.xi_of_windows(rows[:, need - D:])
    windows = rows[:, need - P:] if P > 0 else None
    return windows, xi


def _zeta_limit_cdf(model: PerturbedWalkModel, y: float) -> float:
    """CDF of the limiting slowly-changing term at y."""
    mix = model.mixture()
    if mix is None:
        base = model.residual.value if model.residual.kind == "constant" else 0.0
        return 1.0 if y >= base else 0.0
    if math.isinf(y):
        return 1.0 if y > 0 else 0.0
    return float(mixture_cdf(mix, y))


def theorem1_counts(model: PerturbedWalkModel, B: EventPredicate, y: float,
                    a: float, b: float, reps: int, stream: RngStream,
                    rep_offset: int = 0) -> np.ndarray:
    """Per-path counts of indices with (window in B, zeta_n <= y,
    a < Z_n <= a+b); replication r uses index rep_offset + r."""
    if B.window_depth > model.stationary.depth + 1:
        raise ContractViolationError(
            "predicate window deeper than the xi burn-in can supply")
    horizon = model.horizon(a)
    offset = _envelope_offset(model)
    counts = np.empty(reps)
    for r in range(reps):
        engine = _PathEngine(model,
                             stream.with_replication(rep_offset + r).generator())
        pred_tail = engine.w_tail[len(engine.w_tail)
                                  - min(B.window_depth, len(engine.w_tail)):] \
            if B.window_depth else None
        count = 0
        while engine.n_done < horizon:
            chunk = engine.extend(min(256, horizon - engine.n_done))
            sel = (chunk["Z"] > a) & (chunk["Z"] <= a + b) & \
                  (chunk["zeta"] <= y) & (chunk["n"] >= model.n0)
            if B.window_depth:
                joined = np.concatenate([pred_tail, chunk["W"]])
                wins = sliding_window_view(joined, B.window_depth)
                ok = B.evaluate(wins[-len(chunk["W"]):], chunk["xi"])
                pred_tail = joined[-(B.window_depth - 1):] \
                    if B.window_depth > 1 else joined[:0]
            else:
                ok = B.evaluate(None, chunk["xi"])
            count += int(np.count_nonzero(sel & ok))
            if offset is not None and chunk["S"][-1] + offset > a + b:
                break
        counts[r] = count
    return counts


def theorem1_experiment(model: PerturbedWalkModel, B: EventPredicate, y: float,
                        a: float, b: float, reps: int, stream: RngStream,
                        counts: Optional[np.ndarray] = None) -> TheoremReport:
    """Estimate the expected count of indices with (W_n in B, zeta_n <= y,
    a < Z_n <= a+b) and compare with (b/mu) * P[B] * L(y).

    The left side averages per-path counts; P[B] comes from an
    independent stationary sample on a separate sub-stream and L from
    the quadrature of the mixture law.  ``counts`` may carry
    pre-collected per-path counts (parallel runs).
    """
    if b > model.mu:
        warnings.warn(f"width b={b} exceeds mu={model.mu}; the product-form "
                      f"limit is proved for b <= mu", RuntimeWarning)
    if counts is None:
        counts = theorem1_counts(model, B, y, a, b, reps, stream)
    reps = len(counts)
    est, se_est = _mean_se(counts)
    wins_stat, xi_stat = _stationary_xi_sample(
        model, max(reps, 10_000),
        stream.with_stream(stream.stream_id + 7), B.window_depth)
    hit = B.evaluate(wins_stat, xi_stat)
    p_b = float(np.mean(hit))
    se_pb = float(np.std(hit, ddof=1) / math.sqrt(len(hit)))
    ly = _zeta_limit_cdf(model, y)
    theory = (b / model.mu) * p_b * ly
    se = math.sqrt(se_est ** 2 + ((b / model.mu) * ly * se_pb) ** 2)
    return TheoremReport(f"window count a={a}", est, theory, se, reps)


@dataclass(frozen=True)
class Theorem3Result:
    """Marginal and factorization checks of the joint stopped limit law."""

    a: float
    reps: int
    reports: Tuple[TheoremReport, ...]
    excess_distance: float
    zeta_distance: float
    corr_zeta_R: float
    corr_zeta_xi: float
    quadrant_chi2: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def theorem3_experiment(model: PerturbedWalkModel, a: float, reps: int,
                        stream: RngStream,
                        backward_reps: Optional[int] = None,
                        depth: Optional[int] = None,
                        samples: Optional[PassageSamples] = None,
                        batch: Optional[BackwardBatch] = None
                        ) -> Theorem3Result:
    """Compare the stopped triple (R_a, xi, zeta) with its product-form limit.

    Checks: (i) the R_a marginal against the backward-functional CDF,
    (ii) the zeta marginal against the mixture quadrature, (iii)
    factorization via correlations and a median-split quadrant count.
    ``samples`` and ``batch`` may carry pre-collected draws (parallel
    runs); otherwise both are sampled here.
    """
    if samples is None:
        samples = collect_passage(model, a, reps, stream)
    reps = len(samples.t)
    ok = samples.crossed
    n = int(np.count_nonzero(ok))
    if n < reps:
        warnings.warn(f"{reps - n} uncrossed replications excluded",
                      RuntimeWarning)
    R = samples.R[ok]
    xi = samples.xi[ok]
    zeta = samples.zeta[ok]
    if batch is None:
        batch = backward_min_functional(
            model, depth, backward_reps or reps,
            stream.with_stream(stream.stream_id + 3))
    m = len(batch.inf_value)
    # (i) excess marginal vs backward-induced CDF on the R grid
    r_sorted = np.sort(R)
    emp = np.arange(1, n + 1) / n
    theo = excess_cdf_from_backward(batch, r_sorted, model.mu)
    excess_dist = float(np.max(np.abs(emp - theo)))
    thr_excess = _KS_COEF_1PCT * math.sqrt((n + m) / (n * m))
    reports = [TheoremReport("excess marginal sup-distance", excess_dist, 0.0,
                             thr_excess / 3.0, n)]
    # (ii) zeta marginal vs quadrature
    mix = model.mixture()
    if mix is not None:
        z_sorted = np.sort(zeta)
        emp_z = np.arange(1, n + 1) / n
        quad = mixture_cdf(mix, z_sorted)
        zeta_dist = float(np.max(np.abs(emp_z - quad)))
        thr_zeta = _KS_COEF_1PCT / math.sqrt(n)
        reports.append(TheoremReport("zeta marginal sup-distance", zeta_dist,
                                     0.0, thr_zeta / 3.0, n))
    else:
        zeta_dist = float(np.max(np.abs(zeta)))
        reports.append(TheoremReport("zeta marginal degenerate", zeta_dist,
                                     0.0, 1e-12, n))
    # (iii) factorization: correlations and quadrant independence
    def corr(u, v):
        su, sv = np.std(u), np.std(v)
        if su == 0 or sv == 0:
            return 0.0
        return float(np.corrcoef(u, v)[0, 1])

    c_zr = corr(zeta, R)
    c_zx = corr(zeta, xi)
    reports.append(TheoremReport("corr(zeta, R)", c_zr, 0.0,
                                 1.0 / math.sqrt(n), n))
    reports.append(TheoremReport("corr(zeta, xi)", c_zx, 0.0,
                                 1.0 / math.sqrt(n), n))
    if np.std(zeta) > 0 and np.std(R) > 0:
        az = zeta > np.median(zeta)
        ar = R > np.median(R)
        table = np.array([[np.sum(az & ar), np.sum(az & ~ar)],
                          [np.sum(~az & ar), np.sum(~az & ~ar)]], dtype=float)
        exp = table.sum(1, keepdims=True) @ table.sum(0, keepdims=True) \
            / table.sum()
        chi2 = float(np.sum((table - exp) ** 2 / exp))
    else:
        chi2 = 0.0
    # 99th percentile of chi-square(1) = 6.635
    reports.append(TheoremReport("quadrant chi-square", chi2, 0.0,
                                 6.635 / 3.0, n))
    return Theorem3Result(a, reps, tuple(reports), excess_dist, zeta_dist,
                          c_zr, c_zx, chi2)


@dataclass(frozen=True)
class Theorem4Row:
    a: float
    mean_t: float
    se_t: float
    theory: float
    diff: float
    combined_se: float

    @property
    def passed(self) -> bool:
        return abs(self.diff) <= 3.0 * self.combined_se


@dataclass(frozen=True)
class Theorem4Result:
    """Expected stopping time against (a + rho - nu - lam)/mu on a grid."""

    rows: Tuple[Theorem4Row, ...]
    constants: RenewalConstants
    non_crossing_fraction: float

    @property
    def final_row_passed(self) -> bool:
        return self.rows[-1].passed

    @property
    def diffs_non_increasing(self) -> bool:
        """|diff| non-increasing along the grid, up to 3 SE per step."""
        d = [abs(r.diff) for r in self.rows]
        s = [r.combined_se for r in self.rows]
        return all(d[i + 1] <= d[i] + 3.0 * math.hypot(s[i], s[i + 1])
                   for i in range(len(d) - 1))

    @property
    def passed(self) -> bool:
        return self.final_row_passed and self.diffs_non_increasing and \
            self.constants.consistent


def theorem4_experiment(model: PerturbedWalkModel, a_grid: Sequence[float],
                        reps: int, stream: RngStream,
                        depth: Optional[int] = None,
                        backward_reps: Optional[int] = None,
                        constants: Optional[RenewalConstants] = None,
                        summaries: Optional[Sequence[PassageSummary]] = None
                        ) -> Theorem4Result:
    """Tabulate E(t_a) against the first-order expansion over a grid.

    ``constants`` and ``summaries`` (one per grid level, in order) may
    carry pre-computed pieces; otherwise both are sampled here, each
    level on sub-stream stream_id + 10 + i.
    """
    if len(a_grid) == 0:
        raise ConfigurationError("a_grid must be non-empty", "theorem4.a_grid")
    if summaries is not None and len(summaries) != len(a_grid):
        raise ConfigurationError("summaries must match a_grid",
                                 "theorem4.summaries")
    if constants is None:
        constants = estimate_rho_nu(model, depth, backward_reps or reps,
                                    stream.with_stream(stream.stream_id + 3))
    mu = constants.mu
    corr = constants.rho - constants.nu - constants.lam
    se_corr = math.hypot(constants.se_rho, constants.se_nu)
    rows = []
    worst_ncf = 0.0
    for i, a in enumerate(a_grid):
        if summaries is not None:
            summ = summaries[i]
        else:
            summ = summarize_passage(collect_passage(
                model, float(a), reps,
                stream.with_stream(stream.stream_id + 10 + i)))
        worst_ncf = max(worst_ncf, summ.non_crossing_fraction)
        theory = (float(a) + corr) / mu
        rows.append(Theorem4Row(
            a=float(a), mean_t=summ.mean_t, se_t=summ.se_t, theory=theory,
            diff=summ.mean_t - theory,
            combined_se=math.hypot(summ.se_t, se_corr / mu)))
    return Theorem4Result(tuple(rows), constants, worst_ncf)


@dataclass(frozen=True)
class Lemma1Row:
    a: float
    m: int
    M: int
    delta0: float
    se0: float
    delta1: float
    se1: float
    tail: float
    se_tail: float


def lemma1_collect(model: PerturbedWalkModel, q: float, a: float, reps: int,
                   stream: RngStream, rep_offset: int = 0) -> np.ndarray:
    """Per-path (early count, late count, stopping tail) at one level,
    shape (reps, 3); replication r uses index rep_offset + r."""
    a = float(a)
    wb = WindowBounds.for_level(q, a, model.mu)
    b = 0.5 * a ** (1.0 - q)
    horizon = max(model.horizon(a), wb.M + 1)
    offset = _envelope_offset(model)
    out = np.empty((reps, 3))
    for r in range(reps):
        engine = _PathEngine(model,
                             stream.with_replication(rep_offset + r).generator())
        n0 = model.n0
        cnt0 = 0
        cnt1 = 0
        t_a = None
        while engine.n_done < horizon:
            chunk = engine.extend(min(256, horizon - engine.n_done))
            n = chunk["n"]
            z = chunk["Z"]
            cnt0 += int(np.count_nonzero((n <= wb.m) & (z > a)))
            cnt1 += int(np.count_nonzero((n > wb.M) & (z <= a + b)))
            if t_a is None:
                hits = np.nonzero((z > a) & (n >= n0))[0]
                if hits.size:
                    t_a = int(n[hits[0]])
            if offset is not None and chunk["S"][-1] + offset > a + b:
                # every later index has Z above a+b: counts are final
                last = int(n[-1])
                if last < wb.m:
                    cnt0 += wb.m - last
                break
        out[r, 0] = cnt0
        out[r, 1] = cnt1
        out[r, 2] = max(0.0, (t_a if t_a is not None else horizon) - wb.M)
    return out


def lemma1_diagnostic(model: PerturbedWalkModel, q: float,
                      a_grid: Sequence[float], reps: int, stream: RngStream,
                      collected: Optional[Sequence[np.ndarray]] = None
                      ) -> Tuple[Lemma1Row, ...]:
    """Estimate the early-crossing mass Delta_0, the late-lag mass
    Delta_1 (width a^(1-q)/2), and the stopping tail sum
    E(t_a - M)_+ on a grid of levels.

    Each is an expected count of path indices; all three vanish as a
    grows, which is what the acceptance trend checks assert.
    ``collected`` may carry pre-collected per-level arrays.
    """
    rows = []
    for i, a in enumerate(a_grid):
        a = float(a)
        wb = WindowBounds.for_level(q, a, model.mu)
        if collected is not None:
            vals = collected[i]
        else:
            vals = lemma1_collect(model, q, a, reps, stream)
        d0, s0 = _mean_se(vals[:, 0])
        d1, s1 = _mean_se(vals[:, 1])
        tl, stl = _mean_se(vals[:, 2])
        rows.append(Lemma1Row(a, wb.m, wb.M, d0, s0, d1, s1, tl, stl))
    return tuple(rows)


@dataclass(frozen=True)
class Lemma3Row:
    a: float
    m: int
    M: int
    count: float
    se: float


def lemma3_collect(model: PerturbedWalkModel, q: float, eps: float, a: float,
                   reps: int, stream: RngStream,
                   rep_offset: int = 0) -> np.ndarray:
    """Per-path coupling-failure counts at one level; replication r uses
    index rep_offset + r."""
    a = float(a)
    wb = WindowBounds.for_level(q, a, model.mu)
    counts = np.empty(reps)
    for r in range(reps):
        engine = _PathEngine(model,
                             stream.with_replication(rep_offset + r).generator())
        t_rows = []
        zeta = []
        while engine.n_done < wb.M:
            chunk = engine.extend(min(256, wb.M - engine.n_done))
            t_rows.append(chunk["T"])
            zeta.append(chunk["zeta"])
        T = np.concatenate(t_rows)
        full_zeta = np.concatenate(zeta)[wb.m: wb.M]
        coupled = zeta_window_path(T, wb.m, wb.m + 1, wb.M, model.quadratic)
        counts[r] = int(np.count_nonzero(np.abs(full_zeta - coupled) >= eps))
    return counts


def lemma3_diagnostic(model: PerturbedWalkModel, q: float, eps: float,
                      a_grid: Sequence[float], reps: int, stream: RngStream,
                      collected: Optional[Sequence[np.ndarray]] = None
                      ) -> Tuple[Lemma3Row, ...]:
    """Expected count of indices n in (m, M] where the slowly-changing
    term and its windowed coupling differ by at least eps.

    ``collected`` may carry pre-collected per-level count arrays.
    """
    if eps <= 0:
        raise ConfigurationError("eps must be > 0", "lemma3.eps")
    if model.quadratic is None:
        return tuple(Lemma3Row(float(a), 0, 0, 0.0, 0.0) for a in a_grid)
    rows = []
    for i, a in enumerate(a_grid):
        a = float(a)
        wb = WindowBounds.for_level(q, a, model.mu)
        if collected is not None:
            counts = collected[i]
        else:
            counts = lemma3_collect(model, q, eps, a, reps, stream)
        c, s = _mean_se(counts)
        rows.append(Lemma3Row(a, wb.m, wb.M, c, s))
    return tuple(rows)
