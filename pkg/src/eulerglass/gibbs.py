"""Discrete Gibbs measures on the grid, free energies and two-overlap laws.

The integral over [0, 1] is the grid mean, so log_Z = log((1/N) sum exp(beta v_i))
and log_Z = 0 at beta = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError
from .field import FieldBatch, FieldConfig, overlap_rho, rho_by_lag, sample_fields
from .primes import PrimeTable, prime_table

N_NEG_BINS = 20
N_POS_BINS = 21


class ConsistencyError(AssertionError):
    """Two routes to the same quantity disagree beyond their stated error."""


@dataclass(frozen=True, eq=False)
class GibbsWeights:
    weights: np.ndarray
    log_Z: float
    beta: float


@dataclass(frozen=True, eq=False)
class OverlapHistogram:
    bin_edges: np.ndarray
    masses: np.ndarray
    pair_count: int
    beta: float
    u: float
    log_T: float
    # pair-level rho values and their weights in the averaged law, when known
    samples: np.ndarray | None = field(default=None, repr=False)
    sample_weights: np.ndarray | None = field(default=None, repr=False)

    def mass_between(self, lo: float, hi: float) -> float:
        """Mass of the open band (lo, hi), from pair samples when available."""
        if self.samples is None:
            raise InvalidArgumentError("band masses need pair-level samples")
        inside = (self.samples > lo) & (self.samples < hi)
        return float(np.sum(self.sample_weights[inside]))


@dataclass(frozen=True)
class FreeEnergyEstimate:
    mean: float
    std_error: float
    replicas: int
    beta: float
    alpha: float
    u: float
    log_T: float

    @property
    def normalized(self) -> float:
        return self.mean / math.log(self.log_T)


def _check_beta(beta: float, allow_zero: bool = False) -> None:
    ok = beta >= 0 if allow_zero else beta > 0
    if not (ok and math.isfinite(beta)):
        raise InvalidArgumentError(f"beta={beta} must be positive and finite")


def gibbs_weights(values, beta: float) -> GibbsWeights:
    """Normalized exp(beta v_i) with a log-sum-exp shift by max(beta v)."""
    _check_beta(beta)
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("values must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("values must be finite")
    bv = beta * v
    m = float(np.max(bv))
    e = np.exp(bv - m)
    s = float(np.sum(e))
    return GibbsWeights(e / s, m + math.log(s / v.size), float(beta))


def log_partition(values: np.ndarray, beta: float) -> np.ndarray:
    """Row-wise log((1/N) sum_i exp(beta v_i)) for an (R, N) array."""
    v = np.atleast_2d(values)
    return logsumexp(beta * v, axis=1) - math.log(v.shape[1])


def weight_matrix(values: np.ndarray, beta: float) -> np.ndarray:
    bv = beta * np.atleast_2d(values)
    e = np.exp(bv - bv.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _replica_ids(replicas: int, offset: int = 0) -> range:
    return range(offset, offset + replicas)


def free_energy_from_batch(batch: FieldBatch, beta: float, u: float) -> FreeEnergyEstimate:
    _check_beta(beta)
    lz = log_partition(batch.perturbed(u), beta)
    r = len(lz)
    se = float(np.std(lz, ddof=1) / math.sqrt(r)) if r > 1 else float("nan")
    c = batch.config
    return FreeEnergyEstimate(float(np.mean(lz)), se, r, float(beta), c.alpha, float(u), c.log_T)


def free_energy_estimate(
    config: FieldConfig,
    beta: float,
    u: float,
    replicas: int,
    table: PrimeTable | None = None,
    workers: int = 1,
) -> FreeEnergyEstimate:
    """Monte Carlo E[log (1/N) sum exp(beta * ((1+u) low + high))] over replicas."""
    _check_beta(beta)
    if not -1.0 < u < 1.0:
        raise InvalidArgumentError(f"u={u} must lie in (-1, 1)")
    if replicas < 2:
        raise InvalidArgumentError("need at least 2 replicas for a standard error")
    table = table or prime_table(config.cutoff)
    batch = sample_fields(config, table, _replica_ids(replicas), workers)
    return free_energy_from_batch(batch, beta, u)


def du_quotients(batch: FieldBatch, beta: float, step: float) -> np.ndarray:
    """Per-replica central difference quotient of log_Z in u at u = 0."""
    if not 0.0 < step <= 0.1:
        raise InvalidArgumentError(f"step={step} must lie in (0, 0.1]")
    _check_beta(beta)
    plus = log_partition(batch.perturbed(step), beta)
    minus = log_partition(batch.perturbed(-step), beta)
    return (plus - minus) / (2.0 * step)


def du_free_energy(
    config: FieldConfig,
    beta: float,
    step: float,
    replicas: int = 256,
    table: PrimeTable | None = None,
    workers: int = 1,
    batch: FieldBatch | None = None,
) -> float:
    """Central difference of F_T in u at 0, same replicas on both sides."""
    if not 0.0 < step <= 0.1:
        raise InvalidArgumentError(f"step={step} must lie in (0, 0.1]")
    if batch is None:
        table = table or prime_table(config.cutoff)
        batch = sample_fields(config, table, _replica_ids(replicas), workers)
    return float(np.mean(du_quotients(batch, beta, step)))


def default_bin_edges() -> np.ndarray:
    """20 bins on [-1, 0] and 21 on [0, 1]; 0 and +-1 are edges exactly."""
    neg = np.linspace(-1.0, 0.0, N_NEG_BINS + 1)
    pos = np.linspace(0.0, 1.0, N_POS_BINS + 1)
    return np.concatenate([neg, pos[1:]])


def bin_index(rho: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bins are [e_k, e_{k+1}) except the last, which is closed at 1."""
    idx = np.searchsorted(edges, rho, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _is_midpoint_grid(grid: np.ndarray) -> bool:
    n = len(grid)
    return np.array_equal(grid, (np.arange(n) + 0.5) / n)


def _pair_rho(i, j, grid, table, log_T) -> np.ndarray:
    if _is_midpoint_grid(grid):
        return rho_by_lag(table, log_T, len(grid))[np.abs(i - j)]
    out = np.empty(len(i))
    cache = {}
    for k, (a, b) in enumerate(zip(i, j)):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = overlap_rho(grid[key[0]], grid[key[1]], table, log_T)
        out[k] = cache[key]
    return out


def sample_overlap_pairs(
    weights: GibbsWeights,
    grid,
    n_pairs: int,
    table: PrimeTable,
    log_T: float,
    rng_key: int,
    u: float = 0.0,
    edges: np.ndarray | None = None,
) -> OverlapHistogram:
    """Draw i.i.d. (h, h') from G x G and histogram rho(h, h')."""
    if n_pairs < 1:
        raise InvalidArgumentError("n_pairs must be >= 1")
    grid = np.asarray(grid, dtype=np.float64)
    w = np.asarray(weights.weights)
    if len(w) != len(grid):
        raise InvalidArgumentError("weights and grid differ in length")
    edges = default_bin_edges() if edges is None else np.asarray(edges, dtype=np.float64)
    gen = np.random.Generator(np.random.Philox(key=int(rng_key)))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    draws = gen.random((2, n_pairs))
    i = np.minimum(np.searchsorted(cdf, draws[0], side="right"), len(w) - 1)
    j = np.minimum(np.searchsorted(cdf, draws[1], side="right"), len(w) - 1)
    rho = _pair_rho(i, j, grid, table, log_T)
    masses = np.bincount(bin_index(rho, edges), minlength=len(edges) - 1) / n_pairs
    sw = np.full(n_pairs, 1.0 / n_pairs)
    return OverlapHistogram(edges, masses, n_pairs, weights.beta, u, log_T, rho, sw)


def merge_histograms(hists) -> OverlapHistogram:
    """Average of the per-replica pair laws, in the given order."""
    hists = list(hists)
    if not hists:
        raise InvalidArgumentError("nothing to merge")
    first = hists[0]
    for h in hists[1:]:
        if not np.array_equal(h.bin_edges, first.bin_edges):
            raise InvalidArgumentError("histograms use different bin edges")
    k = len(hists)
    masses = np.sum([h.masses for h in hists], axis=0) / k
    samples = weights = None
    if all(h.samples is not None for h in hists):
        samples = np.concatenate([h.samples for h in hists])
        weights = np.concatenate([h.sample_weights for h in hists]) / k
    return OverlapHistogram(
        first.bin_edges, masses, sum(h.pair_count for h in hists),
        first.beta, first.u, first.log_T, samples, weights,
    )


def exact_pair_law(
    weights: np.ndarray, rho_lag: np.ndarray, edges: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """E over replicas of G x G on rho, by enumerating all grid pairs.

    Returns (masses per bin, mass per lag) where lag d covers |i - j| = d.
    """
    w = np.atleast_2d(weights)
    n = w.shape[1]
    lag_mass = np.empty(n)
    lag_mass[0] = np.mean(np.sum(w * w, axis=1))
    for d in range(1, n):
        lag_mass[d] = 2.0 * np.mean(np.sum(w[:, :-d] * w[:, d:], axis=1))
    edges = default_bin_edges() if edges is None else edges
    masses = np.bincount(bin_index(rho_lag, edges), weights=lag_mass, minlength=len(edges) - 1)
    return masses, lag_mass


def fubini_routes(hist: OverlapHistogram, alpha: float) -> tuple[float, float | None, float]:
    """(CDF route, pair route or None, binning error bound) for int_0^alpha P(rho <= y) dy.

    The CDF route integrates the piecewise-linear CDF through the bin edges.
    The pair route averages alpha - max(rho, 0) over pairs with rho <= alpha,
    which is the Fubini rewrite, extended to negative rho.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha={alpha} must lie in (0, 1)")
    edges = hist.bin_edges
    cdf = np.concatenate([[0.0], np.cumsum(hist.masses)])
    xs = np.concatenate([edges[(edges > 0) & (edges < alpha)], [0.0, alpha]])
    xs = np.unique(xs)
    ys = np.interp(xs, edges, cdf)
    cdf_route = float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))
    widths = np.diff(edges)
    touching = (edges[1:] > 0) & (edges[:-1] < alpha)
    err = float(widths[touching].max()) if touching.any() else 0.0
    pair_route = None
    if hist.samples is not None:
        r = hist.samples
        below = r <= alpha
        pair_route = float(np.sum(hist.sample_weights[below] * (alpha - np.maximum(r[below], 0.0))))
    return cdf_route, pair_route, err


def overlap_cdf_integral(hist: OverlapHistogram, alpha: float) -> float:
    """int_0^alpha P(rho <= y) dy; both routes must agree within one bin width."""
    cdf_route, pair_route, err = fubini_routes(hist, alpha)
    if pair_route is None:
        return cdf_route
    if abs(cdf_route - pair_route) > err + 1e-12:
        raise ConsistencyError(
            f"CDF route {cdf_route:.6g} and pair route {pair_route:.6g} differ by more than {err:.3g}"
        )
    return pair_route
