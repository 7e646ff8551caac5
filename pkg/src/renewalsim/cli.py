"""Command-line runner: one config in, one CSV table and a manifest out.

Replications are split into fixed-size chunks indexed by their global
replication number, so the result of a run depends only on (config,
seed): the worker count changes wall time, never output bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, build_model, validate_for_kind
from .errors import RenewalSimError
from .first_passage import (BackwardBatch, PassageSamples,
                            backward_min_functional, collect_passage,
                            estimate_rho_nu, summarize_passage)
from .mixture import mixture_quantile
from .rng import RngStream
from .staggered import (calibrate_lrt_maxima, example1_collect, example1_run,
                        example2_collect, example2_run, staggered_backward_batch,
                        staggered_constants)
from .verification import (EventPredicate, lemma1_collect, lemma1_diagnostic,
                           lemma3_collect, lemma3_diagnostic, theorem1_counts,
                           theorem1_experiment, theorem3_experiment,
                           theorem4_experiment)

CHUNK_REPS = 1024


def _chunks(total: int) -> List[tuple]:
    return [(off, min(CHUNK_REPS, total - off))
            for off in range(0, total, CHUNK_REPS)]


def _predicate(spec: Optional[dict]) -> EventPredicate:
    if spec is None or spec["kind"] == "always_true":
        return EventPredicate.always_true()
    return EventPredicate.xi_leq(float(spec["c"]))


def _resolve_y(model, y):
    """Turn the config's y into a number ('median' and 'inf' included)."""
    if isinstance(y, str):
        if y == "inf":
            return math.inf
        mix = model.mixture()
        if mix is None:
            return model.residual.value \
                if model.residual.kind == "constant" else 0.0
        return mixture_quantile(mix, 0.5)
    return float(y)


def _run_piece(payload: dict):
    """One chunk of work, executable in any process.

    The payload carries the config dict (to rebuild the model), the
    seed, a stream shift, and the chunk's global replication offset.
    """
    cfg = ExperimentConfig.from_dict(payload["config"])
    model = build_model(cfg)
    stream = RngStream(cfg.seed)
    if payload.get("shift"):
        stream = stream.with_stream(stream.stream_id + payload["shift"])
    op = payload["op"]
    off, cnt = payload["offset"], payload["count"]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if op == "passage":
            return collect_passage(model, payload["a"], cnt, stream,
                                   rep_offset=off)
        if op == "backward":
            return backward_min_functional(model, cfg.depth, cnt, stream,
                                           rep_offset=off)
        if op == "thm1_counts":
            B = _predicate(cfg.predicate)
            y = _resolve_y(model, cfg.y)
            return theorem1_counts(model, B, y, cfg.a, cfg.b, cnt, stream,
                                   rep_offset=off)
        if op == "lemma1":
            return lemma1_collect(model, cfg.q, payload["a"], cnt, stream,
                                  rep_offset=off)
        if op == "lemma3":
            return lemma3_collect(model, cfg.q, cfg.eps, payload["a"], cnt,
                                  stream, rep_offset=off)
        if op == "stag_backward":
            return staggered_backward_batch(model, cnt, stream, cfg.depth,
                                            rep_offset=off)
        if op == "ex1":
            return example1_collect(model, payload["a"], cfg.h, cnt, stream,
                                    rep_offset=off)
        if op == "ex2":
            return example2_collect(model, payload["a"], cfg.horizon, cnt,
                                    stream, rep_offset=off)
        if op == "maxima":
            return calibrate_lrt_maxima(model.arrival_rate, cfg.horizon, cnt,
                                        stream, n0=model.n0, rep_offset=off)
    raise ValueError(f"unknown op {op!r}")


def _gather(payloads: List[dict], workers: int) -> list:
    """Run the payloads, preserving order; workers=1 stays in-process."""
    if workers <= 1 or len(payloads) <= 1:
        return [_run_piece(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_piece, payloads))


def _payloads(cfg_dict: dict, op: str, reps: int, shift: int = 0,
              **extra) -> List[dict]:
    return [dict(config=cfg_dict, op=op, offset=off, count=cnt, shift=shift,
                 **extra)
            for off, cnt in _chunks(reps)]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _report_rows(reports) -> List[list]:
    return [[r.label, r.estimate, r.theory_value, r.std_error, r.n_reps,
             r.passed] for r in reports]


_REPORT_HEADER = ("label", "estimate", "theory", "std_error", "reps",
                  "passed")


class RunOutput:
    """Everything one run produced, before it is written to disk."""

    def __init__(self, header, rows, passed, flags, non_crossing_rate,
                 extra=None):
        self.header = header
        self.rows = rows
        self.passed = passed          # None when the kind has no pass gate
        self.flags = list(flags)
        self.non_crossing_rate = non_crossing_rate
        self.extra = extra or {}

    @property
    def exit_code(self) -> int:
        return 1 if (self.passed is False or self.flags) else 0


def _constants_extra(c) -> dict:
    return {"mu": c.mu, "sigma2": c.sigma2, "rho": c.rho, "se_rho": c.se_rho,
            "nu": c.nu, "se_nu": c.se_nu, "lam": c.lam,
            "flags": list(c.flags)}


def _run_simulate(cfg: ExperimentConfig, d: dict) -> RunOutput:
    rows, flags = [], []
    worst = 0.0
    for i, a in enumerate(cfg.a_grid):
        parts = _gather(_payloads(d, "passage", cfg.reps, shift=10 + i,
                                  a=float(a)), cfg.workers)
        summ = summarize_passage(PassageSamples.concatenate(parts))
        worst = max(worst, summ.non_crossing_fraction)
        if not summ.usable:
            flags.append(f"non-crossing fraction {summ.non_crossing_fraction}"
                         f" at a={a} exceeds 1%")
        rows.append([summ.a, summ.reps, summ.mean_t, summ.se_t, summ.mean_R,
                     summ.se_R, summ.mean_xi, summ.mean_zeta,
                     summ.non_crossing_fraction])
    header = ("a", "reps", "mean_t", "se_t", "mean_R", "se_R", "mean_xi",
              "mean_zeta", "non_crossing_fraction")
    return RunOutput(header, rows, None, flags, worst)


def _run_constants(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    if cfg.model_kind() == "staggered":
        parts = _gather(_payloads(d, "stag_backward", cfg.reps, shift=3),
                        cfg.workers)
        batch = BackwardBatch.concatenate(parts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = staggered_constants(model, cfg.reps, RngStream(cfg.seed),
                                    batch=batch)
    else:
        parts = _gather(_payloads(d, "backward", cfg.reps, shift=3),
                        cfg.workers)
        batch = BackwardBatch.concatenate(parts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = estimate_rho_nu(model, cfg.depth, cfg.reps,
                                RngStream(cfg.seed), batch=batch)
    header = ("mu", "sigma2", "rho", "se_rho", "nu", "se_nu", "lam", "reps",
              "flags")
    rows = [[c.mu, c.sigma2, c.rho, c.se_rho, c.nu, c.se_nu, c.lam, c.reps,
             ";".join(c.flags)]]
    return RunOutput(header, rows, None, c.flags, None,
                     extra=_constants_extra(c))


def _run_thm1(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    parts = _gather(_payloads(d, "thm1_counts", cfg.reps), cfg.workers)
    counts = np.concatenate(parts)
    B = _predicate(cfg.predicate)
    y = _resolve_y(model, cfg.y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = theorem1_experiment(model, B, y, cfg.a, cfg.b, cfg.reps,
                                     RngStream(cfg.seed), counts=counts)
    return RunOutput(_REPORT_HEADER, _report_rows([report]), report.passed,
                     [], None)


def _run_thm3(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    samples = PassageSamples.concatenate(
        _gather(_payloads(d, "passage", cfg.reps, a=float(cfg.a)),
                cfg.workers))
    back = BackwardBatch.concatenate(
        _gather(_payloads(d, "backward", cfg.backward_reps or cfg.reps,
                          shift=3), cfg.workers))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = theorem3_experiment(model, float(cfg.a), cfg.reps,
                                  RngStream(cfg.seed), samples=samples,
                                  batch=back)
    ncf = 1.0 - float(np.count_nonzero(samples.crossed)) / len(samples.t)
    return RunOutput(_REPORT_HEADER, _report_rows(res.reports), res.passed,
                     [], ncf)


def _run_thm4(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    back = BackwardBatch.concatenate(
        _gather(_payloads(d, "backward", cfg.backward_reps or cfg.reps,
                          shift=3), cfg.workers))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        constants = estimate_rho_nu(model, cfg.depth, cfg.reps,
                                    RngStream(cfg.seed), batch=back)
    summaries = []
    for i, a in enumerate(cfg.a_grid):
        parts = _gather(_payloads(d, "passage", cfg.reps, shift=10 + i,
                                  a=float(a)), cfg.workers)
        summaries.append(summarize_passage(PassageSamples.concatenate(parts)))
    res = theorem4_experiment(model, cfg.a_grid, cfg.reps,
                              RngStream(cfg.seed), constants=constants,
                              summaries=summaries)
    header = ("a", "mean_t", "se_t", "theory", "diff", "combined_se",
              "passed")
    rows = [[r.a, r.mean_t, r.se_t, r.theory, r.diff, r.combined_se, r.passed]
            for r in res.rows]
    flags = [] if constants.consistent else list(constants.flags)
    return RunOutput(header, rows, res.passed, flags,
                     res.non_crossing_fraction,
                     extra=_constants_extra(constants))


def _run_lemma1(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    collected = []
    for a in cfg.a_grid:
        parts = _gather(_payloads(d, "lemma1", cfg.reps, a=float(a)),
                        cfg.workers)
        collected.append(np.vstack(parts))
    rows = lemma1_diagnostic(model, cfg.q, cfg.a_grid, cfg.reps,
                             RngStream(cfg.seed), collected=collected)
    header = ("a", "m", "M", "delta0", "se0", "delta1", "se1", "tail",
              "se_tail")
    table = [[r.a, r.m, r.M, r.delta0, r.se0, r.delta1, r.se1, r.tail,
              r.se_tail] for r in rows]
    return RunOutput(header, table, None, [], None)


def _run_lemma3(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    collected = []
    for a in cfg.a_grid:
        parts = _gather(_payloads(d, "lemma3", cfg.reps, a=float(a)),
                        cfg.workers)
        collected.append(np.concatenate(parts))
    rows = lemma3_diagnostic(model, cfg.q, cfg.eps, cfg.a_grid, cfg.reps,
                             RngStream(cfg.seed), collected=collected)
    header = ("a", "m", "M", "count", "se")
    table = [[r.a, r.m, r.M, r.count, r.se] for r in rows]
    return RunOutput(header, table, None, [], None)


def _run_example_fwci(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    a = cfg.c * cfg.c / (cfg.h * cfg.h)
    collected = np.vstack(
        _gather(_payloads(d, "ex1", cfg.reps, a=a), cfg.workers))
    back = BackwardBatch.concatenate(
        _gather(_payloads(d, "stag_backward",
                          cfg.backward_reps or cfg.reps, shift=3),
                cfg.workers))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        constants = staggered_constants(model, cfg.reps, RngStream(cfg.seed),
                                        batch=back)
        res = example1_run(model, cfg.h, cfg.c, cfg.reps, RngStream(cfg.seed),
                           collected=collected, constants=constants)
    header = ("a", "half_width", "confidence", "reps", "mean_t", "se_t",
              "coverage", "se_coverage", "nominal_coverage", "theory_Et",
              "combined_se", "expansion_passed", "non_crossing_fraction")
    rows = [[res.a, res.half_width, cfg.c, res.reps, res.mean_t, res.se_t,
             res.coverage, res.se_coverage, res.nominal_coverage,
             res.theory_Et, res.combined_se, res.expansion_passed,
             res.non_crossing_fraction]]
    flags = list(constants.flags)
    if res.non_crossing_fraction > 0.01:
        flags.append(f"non-crossing fraction {res.non_crossing_fraction} "
                     f"exceeds 1%")
    return RunOutput(header, rows, None, flags, res.non_crossing_fraction,
                     extra=_constants_extra(constants))


def _run_example_rst(cfg: ExperimentConfig, d: dict) -> RunOutput:
    model = build_model(cfg)
    calibrated = cfg.a is None
    if calibrated:
        maxima = np.concatenate(
            _gather(_payloads(d, "maxima", cfg.calibration_reps, shift=5),
                    cfg.workers))
        a = float(np.quantile(maxima, 1.0 - cfg.level))
    else:
        a = float(cfg.a)
    collected = np.vstack(
        _gather(_payloads(d, "ex2", cfg.reps, a=a), cfg.workers))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = example2_run(model, a, cfg.reps, cfg.horizon,
                           RngStream(cfg.seed), collected=collected)
    header = ("a", "calibrated", "horizon", "reps", "theta", "rejection_rate",
              "se_rejection", "mean_t_rejected", "se_t_rejected")
    rows = [[res.a, calibrated, res.horizon, res.reps, res.theta,
             res.rejection_rate, res.se_rejection, res.mean_t_rejected,
             res.se_t_rejected]]
    return RunOutput(header, rows, None, [], None)


_RUNNERS = {
    "simulate": _run_simulate,
    "constants": _run_constants,
    "verify-thm1": _run_thm1,
    "verify-thm3": _run_thm3,
    "verify-thm4": _run_thm4,
    "diag-lemma1": _run_lemma1,
    "diag-lemma3": _run_lemma3,
    "example-fwci": _run_example_fwci,
    "example-rst": _run_example_rst,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment; write `<kind>.csv` and `manifest.json`
    under cfg.out.  Returns the process exit code."""
    validate_for_kind(cfg)
    started = time.monotonic()
    out = _RUNNERS[cfg.kind](cfg, cfg.to_dict())
    wall = time.monotonic() - started
    os.makedirs(cfg.out, exist_ok=True)
    table = os.path.join(cfg.out, f"{cfg.kind}.csv")
    _write_csv(table, out.header, out.rows)
    manifest = {
        "kind": cfg.kind,
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "replications": cfg.reps,
        "toolkit_version": __version__,
        "wall_time_seconds": wall,
        "non_crossing_rate": out.non_crossing_rate,
        "passed": out.passed,
        "flags": out.flags,
        "table": os.path.basename(table),
    }
    manifest.update(out.extra)
    with open(os.path.join(cfg.out, "manifest.json"), "w",
              encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    status = "ok" if out.exit_code == 0 else "FAILED"
    print(f"{cfg.kind}: {len(out.rows)} row(s) -> {table} [{status}]")
    return out.exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="renewalsim",
        description="Run a perturbed-walk experiment described by a config "
                    "file; flags override the matching config fields.")
    parser.add_argument("--config", required=True, help="path to YAML config")
    parser.add_argument("--seed", type=int, default=None,
                        help="64-bit experiment seed")
    parser.add_argument("--reps", type=int, default=None,
                        help="Monte Carlo replications")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (does not affect results)")
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        d = cfg.to_dict()
        for name in ("seed", "reps", "out", "workers"):
            v = getattr(args, name)
            if v is not None:
                d[name] = v
        cfg = ExperimentConfig.from_dict(d)
        return run(cfg)
    except RenewalSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
