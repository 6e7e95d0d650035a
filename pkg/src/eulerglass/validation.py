"""The oracle suite behind ``eulerglass validate``.

Every check is small enough for a laptop, runs from fixed seeds derived from
the suite seed, and reports each measured number next to its threshold.  The
report holds no timestamps, so two runs with the same seed are byte-identical
whatever the worker count.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import theory as th
from .field import FieldConfig, WindowSampler, covariance_exact, sample_fields
from .gibbs import (
    ConsistencyError, gibbs_weights, log_partition, merge_histograms,
    overlap_cdf_integral, sample_overlap_pairs,
)
from .oracle import (
    SMOOTHING_FACTOR, integration_by_parts_report, max_exceed_probability,
    mgf_monte_carlo, mgf_product_formula, single_prime_derivative_check,
    smoothing_ratio, tail_report_from_values,
)
from .primes import PrimeWindow, ScaleRange, _small_sieve, prime_reciprocal_sum, prime_table
from .primes import sieve_primes

MERTENS = 0.2614972128476428
THEORY_BETAS = tuple(0.5 * k for k in range(1, 13))
THEORY_ALPHAS = (0.2, 0.5, 0.8)
THEORY_US = (-0.5, -0.2, 0.0, 0.2, 0.5)


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


# --- closed forms ------------------------------------------------------------


def theory_grid_check() -> dict:
    worst = 0.0
    for b in THEORY_BETAS:
        for a in THEORY_ALPHAS:
            for u in THEORY_US:
                p = th.TheoryPoint(b, a, u)
                v, _ = th.variational_free_energy(p)
                worst = max(worst, abs(v - th.limiting_free_energy(p)))
    return {"max_abs_error": worst, "threshold": 1e-6, "passed": worst <= 1e-6}


def _one_sided_du(b: float, a: float, side: str, h: float = 1e-4) -> float:
    # second-order one-sided difference at u = 0
    f = lambda u: th.limiting_free_energy(th.TheoryPoint(b, a, u))
    s = 1.0 if side == "right" else -1.0
    return s * (-3 * f(0.0) + 4 * f(s * h) - f(2 * s * h)) / (2 * h)


def theory_branch_check() -> dict:
    eps = 1e-8
    jumps = []
    for a in THEORY_ALPHAS:
        for sigma in (0.5, 1.0, 1.5):
            b0 = 2.0 / sigma
            jumps.append(abs(th.f_sigma(b0 + eps, sigma) - th.f_sigma(b0 - eps, sigma)))
        for b in THEORY_BETAS:
            lf = lambda u: th.limiting_free_energy(th.TheoryPoint(b, a, u))
            jumps.append(abs(lf(eps) - lf(-eps)))
        for u in (0.2, 0.5):
            gc = th.gamma_c(a, u)
            p = th.TheoryPoint(1.0, a, u)
            jumps.append(abs(th.high_points_exponent(gc + eps, p) - th.high_points_exponent(gc - eps, p)))
            jumps.append(abs(th.lambda_star(gc + eps, a, u) - th.lambda_star(gc - eps, a, u)))
    diff_gap = 0.0
    for a in THEORY_ALPHAS:
        for b in THEORY_BETAS:
            left, right = _one_sided_du(b, a, "left"), _one_sided_du(b, a, "right")
            expect = a * b * b / 2 if b < 2 else a * b
            diff_gap = max(diff_gap, abs(left - right), abs(right - expect))
    edge = 0.0
    for a in THEORY_ALPHAS:
        for u in THEORY_US:
            gs = th.gamma_star(a, u)
            edge = max(edge, abs(float(th._exponent(gs, a, u)) + 1.0))
    ok = max(jumps) <= 1e-6 and diff_gap <= 1e-6 and edge <= 1e-9
    return {
        "max_jump": max(jumps), "max_derivative_gap": diff_gap,
        "max_exponent_edge_error": edge, "passed": ok,
    }


def pipeline_identity_check() -> dict:
    worst = 0.0
    for b in (3.0, 4.0, 6.0):
        for a in THEORY_ALPHAS:
            lhs = (2 / b**2) * th.du_limiting_free_energy(th.TheoryPoint(b, a, 0.0))
            worst = max(worst, abs(lhs - 2 * a / b))
    return {"max_abs_error": worst, "threshold": 1e-9, "passed": worst <= 1e-9}


# --- primes and field ----------------------------------------------------------


def sieve_check() -> dict:
    table = sieve_primes(10**6)
    plain = _small_sieve(10**6)
    s = prime_reciprocal_sum(table, PrimeWindow(1, 10**6))
    mertens = math.log(math.log(1e6)) + MERTENS
    ok = len(table) == 78498 and np.array_equal(table.primes, plain) and abs(s - mertens) <= 0.05
    return {"count": len(table), "reciprocal_sum": s, "mertens": mertens, "passed": ok}


def fast_direct_check(seed: int) -> dict:
    c = FieldConfig(math.log(1e5), seed=seed)
    t = prime_table(c.cutoff)
    bounds = [1, c.split, c.cutoff]
    fast, direct = WindowSampler(c, t, bounds), WindowSampler(c, t, bounds, method="direct")
    worst = max(float(np.max(np.abs(fast(r) - direct(r)))) for r in range(3))
    return {"max_abs_diff": worst, "threshold": 1e-9, "passed": worst <= 1e-9}


def covariance_check(seed: int, workers: int, replicas: int = 4000) -> dict:
    c = FieldConfig(math.log(1e4), grid_size=128, seed=seed)
    t = prime_table(c.cutoff)
    x = sample_fields(c, t, range(replicas), workers).full
    grid = c.grid
    full = PrimeWindow(1, c.cutoff)
    pairs = [(0, j) for j in (0, 1, 2, 4, 8, 16, 32, 64, 127)] + [(i, i + 7) for i in range(0, 120, 5)]
    hits = 0
    for i, j in pairs:
        prod = x[:, i] * x[:, j]
        se = np.std(prod, ddof=1) / math.sqrt(replicas)
        hits += abs(prod.mean() - covariance_exact(grid[i], grid[j], t, full)) <= 3 * se
    frac = hits / len(pairs)
    return {"pairs": len(pairs), "fraction_within_3se": frac, "threshold": 0.95, "passed": frac >= 0.95}


def mgf_check(seed: int, draws: int = 200_000) -> dict:
    t = prime_table(10)
    w = PrimeWindow(1, 10)
    h, h2 = 0.2, 0.7
    gen = np.random.Generator(np.random.Philox(key=seed))
    theta = 2 * np.pi * gen.random((draws, len(t)))
    inv = t.inv_sqrt_p
    xh = np.cos(theta - h * t.log_p) @ inv
    xh2 = np.cos(theta - h2 * t.log_p) @ inv
    worst = 0.0
    ok = True
    for lam in (0.0, 0.5, 1.0):
        for lam2 in (0.0, 0.5, 1.0):
            exact = mgf_product_formula(lam, lam2, h, h2, t, w)
            mc, se = mgf_monte_carlo(lam, lam2, xh, xh2)
            z = abs(mc - exact) / se if se > 0 else (0.0 if mc == exact else math.inf)
            worst = max(worst, z)
            ok &= z <= 3
    return {"max_z": worst, "threshold_z": 3.0, "passed": bool(ok)}


def ibp_check() -> dict:
    out = {}
    ok = True
    for name in ("linear", "polynomial", "exponential"):
        res, m, e3 = integration_by_parts_report(name, 0.5)
        limit = 1e-12 if name != "exponential" else m * e3
        out[name] = {"residual": res, "bound": limit}
        ok &= res <= limit
    out["passed"] = bool(ok)
    return out


def prime_derivative_check(seed: int, workers: int, replicas: int = 20_000) -> dict:
    c = FieldConfig(math.log(1e3), seed=seed)
    t = prime_table(c.cutoff)
    batch = sample_fields(c, t, range(replicas), workers)
    out = {}
    ok = True
    for p in (2, 3, 5):
        r = single_prime_derivative_check(p, 2.0, c, replicas, t, batch=batch)
        limit = 3 * r.combined_se + p**-1.5
        out[f"p{p}"] = {"difference": r.difference, "limit": limit, "lhs": r.lhs, "rhs": r.rhs}
        ok &= r.difference <= limit
    out["passed"] = bool(ok)
    return out


def tail_check(seed: int, workers: int, replicas: int = 500) -> dict:
    c = FieldConfig(math.log(1e6), seed=seed)
    t = prime_table(c.cutoff)

    def window_values(lo: float):
        w = ScaleRange(lo, 1.0, c.log_T).window()
        return WindowSampler(c, t, [w.lo, w.hi]).batch(range(replicas), workers)[:, 0, :]

    vals = window_values(0.5)
    rep = tail_report_from_values(vals, 0.5, 1.0, 0.5, c.log_T, c.grid)
    small = tail_report_from_values(vals, 0.5, 1.0, 1e-9, c.log_T, c.grid)
    sm = smoothing_ratio(vals, c.grid, c.log_T**-1.0, rep.threshold)
    # factorization needs |h - h'| log P well above 1; here 0.5 * 13.8^0.7 = 3.1
    pair = tail_report_from_values(window_values(0.7), 0.7, 1.0, 0.3, c.log_T, c.grid)
    ratio_ok = (
        pair.joint_ratio is not None
        and pair.joint_ratio - 3 * pair.joint_ratio_se <= 2.0
        and pair.joint_ratio + 3 * pair.joint_ratio_se >= 0.5
    )
    ok = rep.within_bound and not rep.inconclusive and ratio_ok and sm <= SMOOTHING_FACTOR
    return {
        "empirical_prob": rep.empirical_prob, "bound": rep.bound, "samples": rep.samples,
        "joint_ratio": pair.joint_ratio, "joint_ratio_se": pair.joint_ratio_se,
        "small_gamma_prob": small.empirical_prob, "smoothing_ratio": sm,
        "smoothing_limit": SMOOTHING_FACTOR, "passed": bool(ok),
    }


def gibbs_check(seed: int, workers: int) -> dict:
    gen = np.random.Generator(np.random.Philox(key=seed))
    norm_err = 0.0
    deriv_err = 0.0
    mono = True
    for beta in np.geomspace(0.1, 64, 12):
        v = gen.normal(size=64)
        g = gibbs_weights(v, beta)
        norm_err = max(norm_err, abs(g.weights.sum() - 1.0))
        db = 1e-5 * beta
        fd = (gibbs_weights(v, beta + db).log_Z - gibbs_weights(v, beta - db).log_Z) / (2 * db)
        deriv_err = max(deriv_err, abs(fd - g.weights @ v) / max(1.0, abs(g.weights @ v)))
        k = int(np.argmax(v))
        mono &= gibbs_weights(v, beta * 1.5).weights[k] >= g.weights[k] - 1e-15
    c = FieldConfig(math.log(1e4), seed=seed)
    t = prime_table(c.cutoff)
    b = sample_fields(c, t, range(50), workers)
    us = np.linspace(-0.9, 0.9, 19)
    lz = np.array([log_partition(b.perturbed(u), 3.0) for u in us])
    second = float(np.min(lz[2:] - 2 * lz[1:-1] + lz[:-2]))
    # Fubini routes on a real sampled histogram
    hists = []
    for r in range(len(b)):
        gw = gibbs_weights(b.perturbed(0.0)[r], 3.0)
        hists.append(sample_overlap_pairs(gw, c.grid, 64, t, c.log_T, rng_key=seed + 1000 + r))
    try:
        overlap_cdf_integral(merge_histograms(hists), 0.5)
        fubini_ok = True
    except ConsistencyError:
        fubini_ok = False
    eps_far = max_exceed_probability(b, 0.0, 10.0)
    ok = norm_err <= 1e-12 and deriv_err <= 1e-6 and mono and second >= -1e-9 and fubini_ok
    ok = ok and eps_far == 0.0
    return {
        "normalization_error": norm_err, "beta_derivative_rel_error": deriv_err,
        "argmax_weight_monotone": bool(mono), "min_second_difference_u": second,
        "fubini_consistent": fubini_ok, "max_exceed_prob_eps10": eps_far, "passed": bool(ok),
    }


CHECKS = (
    ("theory_grid", lambda s, w: theory_grid_check()),
    ("theory_branches", lambda s, w: theory_branch_check()),
    ("pipeline_identity", lambda s, w: pipeline_identity_check()),
    ("sieve", lambda s, w: sieve_check()),
    ("fast_vs_direct", lambda s, w: fast_direct_check(s)),
    ("covariance", covariance_check),
    ("mgf", lambda s, w: mgf_check(s)),
    ("integration_by_parts", lambda s, w: ibp_check()),
    ("single_prime_derivative", prime_derivative_check),
    ("tails", tail_check),
    ("gibbs", gibbs_check),
)


def run_validation(seed: int = 0, workers: int = 1) -> dict:
    checks = {name: _clean(fn(seed, workers)) for name, fn in CHECKS}
    return {
        "seed": seed,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode()
