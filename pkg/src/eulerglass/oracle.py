"""Independent numerical checks of the model's probabilistic estimates.

Each check pits a closed form or bound against a separate numerical route
(series, quadrature, Monte Carlo) so neither side is derived from the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .field import FieldBatch, FieldConfig, WindowSampler, replica_uniforms, sample_fields
from .gibbs import log_partition, weight_matrix
from .primes import PrimeTable, PrimeWindow, as_window, prime_table
from .theory import gamma_star

# |lambda| bound for the MGF product; the tail constant and smoothing factor
# are fixed up front and never tuned per run.
LAMBDA_BOUND = 8.0
TAIL_CONSTANT = 5.0
SMOOTHING_FACTOR = 10.0
QUADRATURE_ANGLES = 2**14


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class TailReport:
    gamma: float
    threshold: float
    empirical_prob: float
    bound: float
    samples: int
    inconclusive: bool = False
    joint_ratio: float | None = None
    joint_ratio_se: float | None = None

    @property
    def within_bound(self) -> bool:
        return self.empirical_prob <= self.bound


@dataclass(frozen=True)
class MeasureEstimate:
    gamma: float
    u: float
    alpha: float
    log_T: float
    normalized_log_measure: float
    replicas: int
    inconclusive: bool = False


@dataclass(frozen=True)
class DerivativeCheck:
    """Both sides of the single-prime derivative identity, per-replica averaged."""

    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    paired_se: float
    replicas: int

    @property
    def difference(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        return float(np.mean(x)), float("nan")
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(len(x)))


# --- moment generating function -------------------------------------------


def mgf_prime_factors(lam: float, lam2: float, delta: float, primes: np.ndarray) -> np.ndarray:
    """Per-prime E[exp(...)] minus 1: sum_{m>=1} a^m / (m!)^2, a = |.|^2 / (4p).

    Summed term by term until every remaining term is below 1e-15 of its sum.
    """
    p = np.asarray(primes, dtype=np.float64)
    a = (lam * lam + lam2 * lam2 + 2 * lam * lam2 * np.cos(delta * np.log(p))) / (4.0 * p)
    term = a.copy()
    tail = a.copy()
    for m in range(2, 400):
        term = term * a / (m * m)
        tail += term
        if np.all(term <= 1e-15 * (1.0 + tail)):
            return tail
    raise OracleError("per-prime MGF series failed to converge")


def mgf_product_formula(
    lam: float, lam2: float, h: float, h2: float, table: PrimeTable, window
) -> float:
    """E[exp(lam X_h + lam2 X_h')] over the window as an exact product over primes."""
    for x in (lam, lam2):
        if not abs(x) <= LAMBDA_BOUND:
            raise InvalidArgumentError(f"|lambda|={abs(x)} exceeds the bound {LAMBDA_BOUND}")
    i0, i1 = table.index_range(window)
    tails = mgf_prime_factors(lam, lam2, abs(h - h2), table.primes[i0:i1])
    return math.exp(math.fsum(np.log1p(tails)))


def mgf_monte_carlo(
    lam: float, lam2: float, values_h: np.ndarray, values_h2: np.ndarray
) -> tuple[float, float]:
    """Sample mean and standard error of exp(lam X_h + lam2 X_h')."""
    return _mean_se(np.exp(lam * np.asarray(values_h) + lam2 * np.asarray(values_h2)))


# --- complex integration by parts ------------------------------------------

TEST_FUNCTIONS = ("linear", "polynomial", "exponential")


def _ibp_parts(test_fn_id: str, lam: complex, z: np.ndarray):
    zb = np.conj(z)
    lb = np.conj(lam)
    if test_fn_id == "linear":
        return lam * zb, np.full_like(z, lam), 0.0
    if test_fn_id == "polynomial":
        return zb * zb, 2.0 * zb, 2.0
    if test_fn_id == "exponential":
        f = np.exp(lam * z + lb * zb)
        # second derivatives lam^2 F and conj(lam)^2 F
        m = float(np.max(np.abs(lam) ** 2 * np.abs(f)))
        return f, lb * f, m
    raise InvalidArgumentError(f"unknown test function {test_fn_id!r}; use one of {TEST_FUNCTIONS}")


def integration_by_parts_residual(
    test_fn_id: str, lam: complex = 0.5, n_angles: int = QUADRATURE_ANGLES
) -> float:
    """|E[xi F] - E|xi|^2 E[dF/dzbar]| for xi uniform on the unit circle (trapezoid rule)."""
    return integration_by_parts_report(test_fn_id, lam, n_angles)[0]


def integration_by_parts_report(
    test_fn_id: str, lam: complex = 0.5, n_angles: int = QUADRATURE_ANGLES
) -> tuple[float, float, float]:
    """(residual, M, E|xi|^3) where M bounds the second derivatives on the circle."""
    phi = 2.0 * np.pi * np.arange(n_angles) / n_angles
    xi = np.exp(1j * phi)
    f, dzbar, m = _ibp_parts(test_fn_id, complex(lam), xi)
    abs2 = float(np.mean(np.abs(xi) ** 2))
    abs3 = float(np.mean(np.abs(xi) ** 3))
    lhs = np.mean(xi * f)
    rhs = abs2 * np.mean(dzbar)
    return float(abs(lhs - rhs)), m, abs3


# --- single-prime derivative identity ----------------------------------------


def prime_derivative_terms(
    values: np.ndarray, term: np.ndarray, p: int, grid: np.ndarray, beta: float, step: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per-replica (finite-difference side, Gibbs two-point side).

    values: (R, N) full field; term: (R, N) values of Re(U_p p^{-ih}) / sqrt(p).
    """
    v = np.atleast_2d(values)
    t = np.atleast_2d(term)
    lhs = (log_partition(v + step * t, beta) - log_partition(v - step * t, beta)) / (2 * step)
    w = weight_matrix(v, beta)
    phase = np.exp(1j * np.asarray(grid) * math.log(p))
    coherence = np.abs(w @ phase) ** 2
    rhs = 0.5 * beta * beta * (1.0 - coherence) / p
    return lhs, rhs


def single_prime_derivative_check(
    p: int,
    beta: float,
    config: FieldConfig,
    replicas: int,
    table: PrimeTable | None = None,
    step: float = 1e-4,
    workers: int = 1,
    batch: FieldBatch | None = None,
) -> DerivativeCheck:
    """Derivative in u of E log Z when U_p's term is scaled by (1+u), against its Gibbs form.

    Both sides use the same replicas; ``batch`` may be shared across primes.
    The Gibbs side carries beta^2/2: the derivative of log Z brings one beta
    and the integration by parts a second.
    """
    table = table or prime_table(config.cutoff)
    if p > config.cutoff or p < 2 or table.count_upto(p) == table.count_upto(p - 1):
        raise InvalidArgumentError(f"p={p} is not a prime covered by the field")
    idx = table.count_upto(p) - 1
    if batch is None:
        batch = sample_fields(config, table, range(replicas), workers)
    grid = config.grid
    theta = np.array(
        [2 * math.pi * replica_uniforms(config.seed, int(r), idx + 1)[idx] for r in batch.replica_ids]
    )
    term = np.cos(theta[:, None] - grid[None, :] * math.log(p)) / math.sqrt(p)
    lhs, rhs = prime_derivative_terms(batch.full, term, p, grid, beta, step)
    lm, ls = _mean_se(lhs)
    rm, rs = _mean_se(rhs)
    _, ps = _mean_se(lhs - rhs)
    return DerivativeCheck(lm, rm, ls, rs, ps, len(batch))


# --- tails, maxima and high points -----------------------------------------


def window_batch(config: FieldConfig, table: PrimeTable, window, replicas: int, workers: int = 1):
    """(R, N) samples of the field restricted to one prime window."""
    w = as_window(window)
    return WindowSampler(config, table, [w.lo, w.hi]).batch(range(replicas), workers)[:, 0, :]


def tail_report_from_values(
    values: np.ndarray,
    alpha_lo: float,
    alpha_hi: float,
    gamma: float,
    log_T: float,
    grid: np.ndarray,
    constant: float = TAIL_CONSTANT,
) -> TailReport:
    if not 0.0 < gamma <= 1.0:
        raise InvalidArgumentError(f"gamma={gamma} must lie in (0, 1]")
    lll = math.log(log_T)
    thr = gamma * lll
    exceed = values > thr
    n = exceed.size
    prob = float(np.mean(exceed))
    shape = log_T ** (-gamma * gamma / (alpha_hi - alpha_lo))
    bound = constant * shape
    inconclusive = n * shape < 10

    ratio = ratio_se = None
    sep = 0.5
    if alpha_lo > 0 and sep > log_T ** (-alpha_lo):
        n_grid = len(grid)
        k = int(round(sep * n_grid))
        a, b = exceed[:, : n_grid - k], exceed[:, k:]
        joint = float(np.mean(a & b))
        pa, pb = float(np.mean(a)), float(np.mean(b))
        if pa > 0 and pb > 0 and joint > 0:
            ratio = joint / (pa * pb)
            # rough delta method, counting each (replica, pair) as one draw
            m = a.size
            ratio_se = ratio * math.sqrt(1.0 / (m * joint) + 1.0 / (m * pa) + 1.0 / (m * pb))
    return TailReport(gamma, thr, prob, bound, n, inconclusive, ratio, ratio_se)


def tail_bound_check(
    window_range, gamma: float, config: FieldConfig, replicas: int,
    table: PrimeTable | None = None, workers: int = 1,
) -> TailReport:
    """Empirical P(X_h(a1, a2) > gamma loglog T) against C (log T)^(-gamma^2/(a2 - a1))."""
    table = table or prime_table(config.cutoff)
    vals = window_batch(config, table, window_range, replicas, workers)
    return tail_report_from_values(
        vals, window_range.alpha_lo, window_range.alpha_hi, gamma, config.log_T, config.grid
    )


def max_exceed_probability(batch: FieldBatch, u: float, epsilon: float) -> float:
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    c = batch.config
    thr = (1.0 + epsilon) * gamma_star(c.alpha, u) * c.loglog_T
    return float(np.mean(batch.perturbed(u).max(axis=1) > thr))


def max_field_check(
    config: FieldConfig, u: float, epsilon: float, replicas: int,
    table: PrimeTable | None = None, workers: int = 1,
) -> float:
    """P(max over the grid of the perturbed field > (1+eps) gamma_star loglog T)."""
    table = table or prime_table(config.cutoff)
    batch = sample_fields(config, table, range(replicas), workers)
    return max_exceed_probability(batch, u, epsilon)


def measure_from_batch(batch: FieldBatch, u: float, gamma: float) -> MeasureEstimate:
    c = batch.config
    gs = gamma_star(c.alpha, u)
    if not 0.0 < gamma < gs:
        raise InvalidArgumentError(f"gamma={gamma} must lie in (0, gamma_star={gs:.6g})")
    vals = batch.perturbed(u)
    leb = np.mean(vals > gamma * c.loglog_T, axis=1)
    med = float(np.median(leb))
    if med > 0:
        est, inconclusive = math.log(med) / c.loglog_T, False
    else:
        est, inconclusive = float("-inf"), True
    if not np.any(leb > 0):
        inconclusive = True
    return MeasureEstimate(gamma, u, c.alpha, c.log_T, est, len(vals), inconclusive)


def high_points_measure_estimate(
    config: FieldConfig, u: float, gamma: float, replicas: int,
    table: PrimeTable | None = None, workers: int = 1,
) -> MeasureEstimate:
    """log of the replica-median Lebesgue measure of gamma-high points, over loglog T."""
    table = table or prime_table(config.cutoff)
    batch = sample_fields(config, table, range(replicas), workers)
    return measure_from_batch(batch, u, gamma)


def smoothing_ratio(values: np.ndarray, grid: np.ndarray, width: float, threshold: float):
    """P(max over a window of ``width`` around a point > thr) / P(single point > thr).

    Windows are the grid points within width of the centre point grid[n//2].
    """
    centre = len(grid) // 2
    near = np.abs(grid - grid[centre]) <= width
    single = float(np.mean(values[:, centre] > threshold))
    windowed = float(np.mean(values[:, near].max(axis=1) > threshold))
    if single == 0:
        return float("inf") if windowed > 0 else 1.0
    return windowed / single
