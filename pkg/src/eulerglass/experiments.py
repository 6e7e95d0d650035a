"""Experiment orchestration: sample once per rung of the log T ladder, evaluate
every parameter point on those replicas, write tidy CSVs and a JSON envelope.

Floats are written with ``repr`` so a rerun with the same config and seed
reproduces every CSV byte for byte, whatever the worker count.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import theory as th
from .config import ExperimentConfig
from .field import FieldBatch, FieldConfig, sample_fields, write_replica_dump
from .gibbs import (
    default_bin_edges, free_energy_from_batch, gibbs_weights, merge_histograms,
    overlap_cdf_integral, sample_overlap_pairs,
)
from .oracle import measure_from_batch
from .primes import prime_table
from .validation import report_bytes, run_validation

RESULT_FILE = "result.json"
INCOMPLETE_MARKER = "INCOMPLETE"

SCHEMAS = {
    "free_energy.csv": ["beta", "alpha", "u", "log_T", "mean", "se", "normalized", "target"],
    "overlap.csv": ["beta", "u", "log_T", "bin_lo", "bin_hi", "mass", "target_p0", "target_p1"],
    "overlap_summary.csv": [
        "beta", "alpha", "u", "log_T", "replicas", "pairs", "mass_middle",
        "p_below_half", "cdf_integral", "target_cdf_integral",
    ],
    "high_points.csv": [
        "log_T", "alpha", "u", "gamma", "estimate", "target", "replicas", "inconclusive",
    ],
    "theory.csv": [
        "beta", "alpha", "u", "V", "free_energy", "variational", "argmax_gamma",
        "gamma_star", "gamma_c", "du_free_energy", "rem_free_energy", "target_cdf_integral",
    ],
    "theory_gamma.csv": ["alpha", "u", "gamma", "lambda_star", "exponent"],
}


@dataclass
class ExperimentResult:
    config: dict
    seed: int
    version: str
    started_at: str
    runtime_seconds: float
    outputs: list[str]
    targets: dict = field(default_factory=dict)
    complete: bool = True
    passed: bool | None = None
    error: str | None = None

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return repr(float(x))


class _Table:
    """CSV writer that flushes after every row so partial runs keep their data."""

    def __init__(self, directory: Path, name: str, outputs: list[str]):
        self.path = directory / name
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(SCHEMAS[name])
        self._fh.flush()
        outputs.append(name)

    def row(self, values) -> None:
        self._w.writerow([_fmt(v) for v in values])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def pair_key(seed: int, replica: int, point: int) -> int:
    """128-bit Philox key for the pair draws of one (replica, parameter point)."""
    a, b = np.random.SeedSequence([seed, 0x6F76, point, replica]).generate_state(2, np.uint64)
    return int(a) | (int(b) << 64)


class _Ladder:
    def __init__(self, cfg: ExperimentConfig, outputs: list[str], out_dir: Path):
        self.cfg, self.outputs, self.out_dir = cfg, outputs, out_dir

    def batches(self):
        for log_T in self.cfg.logT:
            fc = FieldConfig(log_T, self.cfg.alpha, oversample=self.cfg.grid_oversample,
                             seed=self.cfg.seed)
            table = prime_table(fc.cutoff)
            batch = sample_fields(fc, table, range(self.cfg.replicas), self.cfg.workers)
            if self.cfg.dump_replicas:
                name = f"replicas_logT_{log_T:.6f}.csv"
                write_replica_dump(self.out_dir / name, batch)
                self.outputs.append(name)
            yield fc, table, batch


def _free_energy(cfg, out_dir, outputs, targets):
    t = _Table(out_dir, "free_energy.csv", outputs)
    for fc, _table, batch in _Ladder(cfg, outputs, out_dir).batches():
        for beta in cfg.beta:
            for u in cfg.u:
                est = free_energy_from_batch(batch, beta, u)
                target = th.limiting_free_energy(th.TheoryPoint(beta, cfg.alpha, u))
                targets[f"free_energy[beta={beta},u={u}]"] = target
                t.row([beta, cfg.alpha, u, fc.log_T, est.mean, est.std_error, est.normalized, target])
    t.close()


def overlap_histogram(batch: FieldBatch, table, beta: float, u: float, pairs: int, point: int):
    fc = batch.config
    vals = batch.perturbed(u)
    hists = []
    for r in range(len(batch)):
        gw = gibbs_weights(vals[r], beta)
        key = pair_key(fc.seed, int(batch.replica_ids[r]), point)
        hists.append(sample_overlap_pairs(gw, fc.grid, pairs, table, fc.log_T, key, u))
    return merge_histograms(hists)


def _overlap(cfg, out_dir, outputs, targets):
    hist_t = _Table(out_dir, "overlap.csv", outputs)
    sum_t = _Table(out_dir, "overlap_summary.csv", outputs)
    edges = default_bin_edges()
    for fc, table, batch in _Ladder(cfg, outputs, out_dir).batches():
        point = 0
        for beta in cfg.beta:
            for u in cfg.u:
                h = overlap_histogram(batch, table, beta, u, cfg.pairs_per_replica, point)
                point += 1
                p0 = 2.0 / beta if beta > 2 else None
                p1 = 1.0 - 2.0 / beta if beta > 2 else None
                for lo, hi, m in zip(edges[:-1], edges[1:], h.masses):
                    hist_t.row([beta, u, fc.log_T, lo, hi, m, p0, p1])
                cdf_target = th.overlap_cdf_limit(beta, cfg.alpha) if beta > 2 else None
                targets[f"overlap[beta={beta}]"] = {"p0": p0, "p1": p1, "cdf_integral": cdf_target}
                sum_t.row([
                    beta, cfg.alpha, u, fc.log_T, len(batch), h.pair_count,
                    h.mass_between(0.25, 0.75), h.mass_between(-math.inf, 0.5),
                    overlap_cdf_integral(h, cfg.alpha), cdf_target,
                ])
    hist_t.close()
    sum_t.close()


def _high_points(cfg, out_dir, outputs, targets):
    t = _Table(out_dir, "high_points.csv", outputs)
    for fc, _table, batch in _Ladder(cfg, outputs, out_dir).batches():
        for u in cfg.u:
            p = th.TheoryPoint(1.0, cfg.alpha, u)
            for g in cfg.gamma:
                est = measure_from_batch(batch, u, g)
                target = th.high_points_exponent(g, p)
                targets[f"exponent[u={u},gamma={g}]"] = target
                t.row([fc.log_T, cfg.alpha, u, g, est.normalized_log_measure, target,
                       est.replicas, est.inconclusive])
    t.close()


def _theory(cfg, out_dir, outputs, targets):
    t = _Table(out_dir, "theory.csv", outputs)
    for beta in cfg.beta:
        for u in cfg.u:
            p = th.TheoryPoint(beta, cfg.alpha, u)
            var, arg = th.variational_free_energy(p)
            t.row([
                beta, cfg.alpha, u, p.V, th.limiting_free_energy(p), var, arg,
                th.gamma_star(cfg.alpha, u), th.gamma_c(cfg.alpha, u) if u >= 0 else None,
                th.du_limiting_free_energy(p), th.rem_free_energy(beta),
                th.overlap_cdf_limit(beta, cfg.alpha) if beta > 2 else None,
            ])
    t.close()
    if cfg.gamma:
        g_t = _Table(out_dir, "theory_gamma.csv", outputs)
        for u in cfg.u:
            gs = th.gamma_star(cfg.alpha, u)
            for g in cfg.gamma:
                if not 0 < g < gs:
                    continue
                p = th.TheoryPoint(1.0, cfg.alpha, u)
                g_t.row([cfg.alpha, u, g, th.lambda_star(g, cfg.alpha, u),
                         th.high_points_exponent(g, p)])
        g_t.close()


def _validate(cfg, out_dir, outputs, targets):
    report = run_validation(cfg.seed, cfg.workers)
    (out_dir / "validate.json").write_bytes(report_bytes(report))
    outputs.append("validate.json")
    return report["passed"]


RUNNERS = {
    "free-energy": _free_energy,
    "overlap": _overlap,
    "high-points": _high_points,
    "theory": _theory,
    "validate": _validate,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg.experiment`` and write its files plus ``result.json`` into output_dir.

    On an exception the envelope is still written with ``complete = false``, an
    INCOMPLETE marker file appears next to it, and the exception propagates.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    marker = out_dir / INCOMPLETE_MARKER
    marker.unlink(missing_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    outputs: list[str] = []
    targets: dict = {}
    result = ExperimentResult(cfg.to_dict(), cfg.seed, __version__, started, 0.0, outputs, targets)
    try:
        passed = RUNNERS[cfg.experiment](cfg, out_dir, outputs, targets)
        result.passed = passed
        if cfg.plot:
            from .plotting import render_outputs

            outputs.extend(render_outputs(cfg.experiment, out_dir))
    except BaseException as exc:
        result.complete = False
        result.error = f"{type(exc).__name__}: {exc}"
        marker.write_text(result.error + "\n")
        raise
    finally:
        result.runtime_seconds = round(time.perf_counter() - t0, 3)
        (out_dir / RESULT_FILE).write_text(result.to_json())
    return result


def read_csv(path) -> list[dict]:
    """Parse an emitted CSV back into dicts of floats (booleans stay strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (v if v in ("true", "false") else float(v)) for k, v in r.items()})
    return out
