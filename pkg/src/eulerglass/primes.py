"""Prime sieving and the prime sums that set every covariance of the model.

All sums run over primes in ascending order with Neumaier-compensated
accumulation, so a given window always produces the same float.
"""

from __future__ import annotations

import functools
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import CoverageError, InvalidArgumentError, ResourceLimitError

# Largest prime cutoff scale_cutoff will hand out (about 50.8M primes).
MAX_CUTOFF = 10**9
# Memory budget for one sieved table; override with EULERGLASS_MEMORY_BUDGET (bytes).
MEMORY_BUDGET_BYTES = int(os.environ.get("EULERGLASS_MEMORY_BUDGET", 3 * 2**30))
# int64 prime + float64 log + float64 inverse square root
BYTES_PER_PRIME = 24

CACHE_MAGIC = b"EGPRIMES"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIQQ")


@dataclass(frozen=True, eq=False)
class PrimeTable:
    limit: int
    primes: np.ndarray
    log_p: np.ndarray
    inv_sqrt_p: np.ndarray

    def __len__(self) -> int:
        return len(self.primes)

    def count_upto(self, x: int) -> int:
        """Number of primes <= x (x must not exceed ``limit``)."""
        return int(np.searchsorted(self.primes, x, side="right"))

    def index_range(self, window) -> tuple[int, int]:
        """Half-open index range [i0, i1) of the primes inside ``window``."""
        w = as_window(window)
        if w.hi > self.limit:
            raise CoverageError(
                f"window reaches p <= {w.hi} but the table only covers p <= {self.limit}"
            )
        return self.count_upto(w.lo), self.count_upto(w.hi)


@dataclass(frozen=True)
class PrimeWindow:
    """Primes p with lo < p <= hi."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidArgumentError(f"empty-ordered window lo={self.lo} > hi={self.hi}")


@dataclass(frozen=True)
class ScaleRange:
    """Scale window (log T)^alpha_lo < log p <= (log T)^alpha_hi.

    ``alpha_lo == 0`` starts the window at p = 2.  Equal exponents give an
    empty window.
    """

    alpha_lo: float
    alpha_hi: float
    log_T: float

    def __post_init__(self):
        if not 0.0 < self.alpha_hi <= 1.0:
            raise InvalidArgumentError(f"alpha_hi={self.alpha_hi} must lie in (0, 1]")
        if not 0.0 <= self.alpha_lo <= self.alpha_hi:
            raise InvalidArgumentError(
                f"alpha_lo={self.alpha_lo} must lie in [0, alpha_hi={self.alpha_hi}]"
            )
        if not self.log_T > math.e:
            raise InvalidArgumentError(f"log_T={self.log_T} must exceed e")

    def window(self) -> PrimeWindow:
        lo = 1 if self.alpha_lo == 0 else scale_cutoff(self.log_T, self.alpha_lo)
        hi = scale_cutoff(self.log_T, self.alpha_hi)
        return PrimeWindow(min(lo, hi), hi)


def as_window(window) -> PrimeWindow:
    if isinstance(window, PrimeWindow):
        return window
    if isinstance(window, ScaleRange):
        return window.window()
    lo, hi = window
    return PrimeWindow(int(lo), int(hi))


def scale_cutoff(log_T: float, alpha: float, cap: int = MAX_CUTOFF) -> int:
    """floor(exp((log T)^alpha)), the largest integer p with log p <= (log T)^alpha."""
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError(f"alpha={alpha} must lie in (0, 1]")
    if not log_T > 1.0:
        raise InvalidArgumentError(f"log_T={log_T} must exceed 1")
    x = log_T**alpha
    if x > math.log(cap) + 1e-9:
        raise ResourceLimitError(f"cutoff exp({x:.6g}) exceeds the hard cap {cap}")
    # absorb the rounding of exp(log(n)) just below an integer n
    return min(int(math.floor(math.exp(x) * (1.0 + 1e-12))), cap)


def _small_sieve(n: int) -> np.ndarray:
    mark = np.ones(n + 1, dtype=bool)
    mark[:2] = False
    for p in range(2, math.isqrt(n) + 1):
        if mark[p]:
            mark[p * p :: p] = False
    return np.flatnonzero(mark)


def estimated_table_bytes(limit: int) -> int:
    if limit < 17:
        return BYTES_PER_PRIME * 8
    # Rosser-Schoenfeld upper bound on pi(x)
    return int(BYTES_PER_PRIME * 1.25506 * limit / math.log(limit))


def sieve_primes(
    limit: int, segment_size: int = 1 << 18, memory_budget: int | None = None
) -> PrimeTable:
    """Segmented odd-only sieve of Eratosthenes for all primes <= ``limit``."""
    if isinstance(limit, bool) or int(limit) != limit:
        raise InvalidArgumentError(f"limit must be an integer, got {limit!r}")
    limit = int(limit)
    if limit < 2:
        raise InvalidArgumentError(f"limit={limit} must be at least 2")
    budget = MEMORY_BUDGET_BYTES if memory_budget is None else memory_budget
    need = estimated_table_bytes(limit)
    if need > budget:
        raise ResourceLimitError(
            f"a table up to {limit} needs about {need} bytes, budget is {budget}"
        )

    base = _small_sieve(math.isqrt(limit))[1:]  # odd base primes
    chunks = [np.array([2], dtype=np.int64)]
    span = 2 * segment_size
    low = 3
    while low <= limit:
        high = min(low + span, limit + 1)  # exclusive
        n_odd = (high - low + 1) // 2
        mask = np.ones(n_odd, dtype=bool)
        for p in base:
            p = int(p)
            sq = p * p
            if sq >= high:
                break
            start = max(sq, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start < high:
                mask[(start - low) // 2 :: p] = False
        chunks.append(low + 2 * np.flatnonzero(mask).astype(np.int64))
        low = high
    return _make_table(limit, np.concatenate(chunks))


def _make_table(limit: int, primes: np.ndarray) -> PrimeTable:
    primes = np.ascontiguousarray(primes, dtype=np.int64)
    pf = primes.astype(np.float64)
    log_p = np.log(pf)
    inv_sqrt_p = 1.0 / np.sqrt(pf)
    for a in (primes, log_p, inv_sqrt_p):
        a.setflags(write=False)
    return PrimeTable(limit, primes, log_p, inv_sqrt_p)


@functools.lru_cache(maxsize=4)
def prime_table(limit: int) -> PrimeTable:
    """Shared, memoized table; read from EULERGLASS_CACHE when that directory is set."""
    cache_dir = os.environ.get("EULERGLASS_CACHE")
    if cache_dir:
        path = Path(cache_dir) / f"primes_{limit}.bin"
        if path.exists():
            return load_table(path)
        table = sieve_primes(limit)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_table(table, path)
        return table
    return sieve_primes(limit)


def save_table(table: PrimeTable, path) -> None:
    """Write header (magic, version, limit, count) then uint16 prime gaps."""
    gaps = np.diff(table.primes, prepend=0)
    if len(gaps) and gaps.max() > np.iinfo(np.uint16).max:
        raise ResourceLimitError("prime gap does not fit the uint16 cache encoding")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, table.limit, len(table)))
        fh.write(gaps.astype("<u2").tobytes())


def load_table(path) -> PrimeTable:
    with open(path, "rb") as fh:
        magic, version, limit, count = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: not a prime table cache file")
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        gaps = np.frombuffer(fh.read(2 * count), dtype="<u2")
    if len(gaps) != count:
        raise ValueError(f"{path}: truncated cache file")
    return _make_table(limit, np.cumsum(gaps, dtype=np.int64))


@numba.njit(cache=True, nogil=True)
def _cos_sum(primes, log_p, i0, i1, delta):
    s = 0.0
    comp = 0.0
    for i in range(i0, i1):
        if delta == 0.0:
            x = 1.0 / primes[i]
        else:
            x = math.cos(delta * log_p[i]) / primes[i]
        t = s + x
        if abs(s) >= abs(x):
            comp += (s - t) + x
        else:
            comp += (x - t) + s
        s = t
    return s + comp


@numba.njit(cache=True, nogil=True)
def _cos_sums(primes, log_p, i0, i1, deltas):
    out = np.empty(len(deltas))
    for k in range(len(deltas)):
        out[k] = _cos_sum(primes, log_p, i0, i1, deltas[k])
    return out


def prime_reciprocal_sum(table: PrimeTable, window) -> float:
    """Sum of 1/p over the window."""
    i0, i1 = table.index_range(window)
    return float(_cos_sum(table.primes, table.log_p, i0, i1, 0.0))


def cosine_prime_sum(table: PrimeTable, window, delta: float) -> float:
    """Sum of cos(delta * log p) / p over the window."""
    if not math.isfinite(delta) or delta < 0:
        raise InvalidArgumentError(f"delta={delta} must be finite and >= 0")
    i0, i1 = table.index_range(window)
    return float(_cos_sum(table.primes, table.log_p, i0, i1, float(delta)))


def cosine_prime_sums(table: PrimeTable, window, deltas) -> np.ndarray:
    """Vector form of :func:`cosine_prime_sum`, bit-identical entry by entry."""
    deltas = np.ascontiguousarray(deltas, dtype=np.float64)
    if deltas.ndim != 1 or not np.all(np.isfinite(deltas)) or np.any(deltas < 0):
        raise InvalidArgumentError("deltas must be a 1-d array of finite values >= 0")
    i0, i1 = table.index_range(window)
    return _cos_sums(table.primes, table.log_p, i0, i1, deltas)
