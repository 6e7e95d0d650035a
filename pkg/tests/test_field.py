import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import LN
from eulerglass.errors import CoverageError, InvalidArgumentError
from eulerglass.field import (
    FieldConfig, WindowSampler, covariance_exact, overlap_rho, perturb, read_replica_dump,
    replica_angles, rho_by_lag, sample_field, sample_fields, write_replica_dump,
)
from eulerglass.primes import PrimeWindow, ScaleRange, prime_reciprocal_sum, prime_table, sieve_primes


@pytest.fixture(scope="module")
def cfg4():
    return FieldConfig(LN(1e4), seed=11)


@pytest.fixture(scope="module")
def batch4(cfg4):
    return sample_fields(cfg4, prime_table(cfg4.cutoff), range(3000))


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        FieldConfig(2.0)
    with pytest.raises(InvalidArgumentError):
        FieldConfig(10.0, alpha=1.0)
    with pytest.raises(InvalidArgumentError):
        FieldConfig(10.0, grid_size=79)
    assert FieldConfig(10.0).grid_size == 80
    assert FieldConfig(10.0, oversample=2).grid_size == 20


def test_grid_midpoints():
    c = FieldConfig(3.0, oversample=1, grid_size=4)
    assert np.allclose(c.grid, [0.125, 0.375, 0.625, 0.875])


def test_single_prime_field():
    c = FieldConfig(3.0, oversample=1, grid_size=4, seed=5)
    t = sieve_primes(2)
    for method in ("fast", "direct"):
        x = WindowSampler(c, t, [1, 2], method)(7)[0]
        theta = replica_angles(5, 7, 1)[0]
        expect = [math.cos(theta - h * math.log(2)) / math.sqrt(2) for h in c.grid]
        assert np.allclose(x, expect, atol=1e-14)


def test_empty_window_zero(cfg4):
    t = prime_table(cfg4.cutoff)
    x = WindowSampler(cfg4, t, [100, 100, cfg4.cutoff])(0)
    assert np.all(x[0] == 0.0)


def test_coverage(cfg4):
    with pytest.raises(CoverageError):
        sample_field(cfg4, sieve_primes(100), 0)


def test_replica_is_independent_of_batch_and_workers(cfg4):
    t = prime_table(cfg4.cutoff)
    a = sample_fields(cfg4, t, range(10), workers=1)
    b = sample_fields(cfg4, t, range(10), workers=4)
    assert np.array_equal(a.low, b.low) and np.array_equal(a.high, b.high)
    s = sample_field(cfg4, t, 6)
    assert np.array_equal(s.low, a.low[6]) and np.array_equal(s.high, a.high[6])


def test_angles_do_not_depend_on_table_size():
    assert np.array_equal(replica_angles(3, 9, 1000)[:10], replica_angles(3, 9, 10))


def test_fast_matches_direct():
    c = FieldConfig(LN(1e5), seed=2)
    t = prime_table(c.cutoff)
    for r in range(3):
        f = sample_field(c, t, r)
        d = sample_field(c, t, r, method="direct")
        assert np.max(np.abs(f.low - d.low)) <= 1e-9
        assert np.max(np.abs(f.high - d.high)) <= 1e-9


def test_scale_additivity(cfg4):
    t = prime_table(cfg4.cutoff)
    s = sample_field(cfg4, t, 4)
    assert np.array_equal(s.full, s.low + s.high)
    whole = WindowSampler(cfg4, t, [1, cfg4.cutoff])(4)[0]
    assert np.allclose(s.full, whole, atol=1e-12)


def test_perturb():
    c = FieldConfig(LN(1e3))
    s = sample_field(c, prime_table(c.cutoff), 0)
    assert np.array_equal(perturb(s, 0.0).values, s.low + s.high)
    assert np.allclose(perturb(s, -0.999).values, s.high + 0.001 * s.low, atol=1e-15)
    for bad in (-1.0, 1.0, 1.5):
        with pytest.raises(InvalidArgumentError):
            perturb(s, bad)


@given(st.floats(-0.45, 0.45), st.floats(-0.45, 0.45))
def test_perturb_linearity(u1, u2):
    c = FieldConfig(LN(1e3))
    s = sample_field(c, prime_table(c.cutoff), 1)
    lhs = perturb(s, u1 + u2).values
    rhs = perturb(s, u1).values + u2 * s.low
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-14)


def test_variance_1e6(bank_1e6_n256, table_1e6):
    x = bank_1e6_n256.full
    target = 0.5 * prime_reciprocal_sum(table_1e6, PrimeWindow(1, 10**6))
    for i in (0, 100, 255):
        v = x[:, i] ** 2
        assert abs(v.mean() - target) <= 3 * v.std(ddof=1) / math.sqrt(len(v))


def test_zero_mean(batch4, cfg4):
    t = prime_table(cfg4.cutoff)
    var = covariance_exact(0.5, 0.5, t, PrimeWindow(1, cfg4.cutoff))
    m = batch4.full.mean(axis=0)
    assert np.all(np.abs(m) <= 4 * math.sqrt(var / len(batch4)))


def test_covariance_matrix(batch4, cfg4):
    t = prime_table(cfg4.cutoff)
    x = batch4.full
    g = cfg4.grid
    w = PrimeWindow(1, cfg4.cutoff)
    misses = 0
    pairs = [(0, j) for j in range(0, len(g), 5)]
    for i, j in pairs:
        prod = x[:, i] * x[:, j]
        se = prod.std(ddof=1) / math.sqrt(len(prod))
        misses += abs(prod.mean() - covariance_exact(g[i], g[j], t, w)) > 3 * se
    assert misses <= 1


def test_scales_independent(batch4):
    r = len(batch4)
    for i, j in [(0, 0), (10, 40), (70, 3)]:
        c = np.corrcoef(batch4.low[:, i], batch4.high[:, j])[0, 1]
        assert abs(c) <= 3 / math.sqrt(r)


def test_covariance_small_example():
    t = sieve_primes(10)
    w = PrimeWindow(1, 10)
    expect = 0.5 * math.fsum(math.cos(math.log(p)) / p for p in (2, 3, 5, 7))
    assert covariance_exact(0.0, 1.0, t, w) == pytest.approx(expect, abs=1e-15)
    assert covariance_exact(0.0, 1.0, t, w) == pytest.approx(0.238, abs=5e-4)
    assert covariance_exact(0.3, 0.3, t, w) == 0.5 * prime_reciprocal_sum(t, w)
    with pytest.raises(InvalidArgumentError):
        covariance_exact(-0.1, 0.5, t, w)


def test_covariance_log_band(table_1e6):
    lt = LN(1e6)
    w = PrimeWindow(1, 10**6)
    for d in np.geomspace(1 / lt, 1.0, 25):
        c = covariance_exact(0.0, float(d), table_1e6, w)
        assert abs(c - 0.5 * math.log(1 / d)) <= 4


def test_rho_basics(table_1e6):
    lt = LN(1e6)
    assert overlap_rho(0.3, 0.3, table_1e6, lt) == 1.0
    gen = np.random.default_rng(0)
    for h, h2 in gen.random((10, 2)):
        assert overlap_rho(h, h2, table_1e6, lt) == overlap_rho(h2, h, table_1e6, lt)


def test_rho_log_band(table_1e8):
    lt = LN(1e8)
    llt = math.log(lt)
    for d in np.geomspace(1 / lt, 1.0, 20):
        r = overlap_rho(0.0, float(d), table_1e8, lt)
        assert abs(r - math.log(1 / d) / llt) <= 4 / llt


def test_rho_by_lag_matches_pointwise(table_1e6):
    lt = LN(1e6)
    r = rho_by_lag(table_1e6, lt, 111)
    for k in (0, 1, 50, 110):
        assert r[k] == pytest.approx(overlap_rho(0.5 / 111, (k + 0.5) / 111, table_1e6, lt), abs=1e-14)


def test_replica_dump_round_trip(tmp_path, cfg4):
    b = sample_fields(cfg4, prime_table(cfg4.cutoff), [3, 8])
    path = tmp_path / "dump.csv"
    write_replica_dump(path, b)
    back = read_replica_dump(path, cfg4)
    assert back.replica_ids.tolist() == [3, 8]
    assert np.array_equal(back.low, b.low) and np.array_equal(back.high, b.high)


def test_scale_range_window_matches_sampler_split(cfg4):
    w = ScaleRange(0, cfg4.alpha, cfg4.log_T).window()
    assert w.hi == cfg4.split


@given(st.integers(2, 3000), st.integers(1, 3000), st.integers(4, 64), st.integers(0, 2**32))
def test_fast_direct_random_windows(limit, lo, n, rid):
    c = FieldConfig(3.0, oversample=1, grid_size=n, seed=1)
    t = sieve_primes(limit)
    b = [min(lo, limit), limit]
    fast = WindowSampler(c, t, b)(rid)
    direct = WindowSampler(c, t, b, "direct")(rid)
    assert np.max(np.abs(fast - direct)) <= 1e-12
