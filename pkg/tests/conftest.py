import math

import pytest
from hypothesis import settings

from eulerglass.primes import prime_table

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

LN = math.log


@pytest.fixture(scope="session")
def table_1e6():
    return prime_table(10**6)


@pytest.fixture(scope="session")
def table_1e8():
    return prime_table(10**8)


def trial_division_primes(n: int) -> list[int]:
    """Independent prime list for small n (no sieve)."""
    out = []
    for k in range(2, n + 1):
        if all(k % d for d in range(2, math.isqrt(k) + 1)):
            out.append(k)
    return out


def _source_digest() -> str:
    import hashlib
    import eulerglass.field as f

    return hashlib.sha256(open(f.__file__, "rb").read()).hexdigest()[:12]


def cached_batch(pytestconfig, config, replicas: int):
    """sample_fields for replicas 0..R-1, memoized on disk in the pytest cache.

    The key covers the config and a digest of the sampler source, so edits to
    the sampler invalidate old banks.
    """
    import numpy as np

    from eulerglass.field import FieldBatch, sample_fields

    key = (
        f"{config.log_T!r}-{config.alpha!r}-{config.grid_size}-{config.seed}-{replicas}"
        f"-{_source_digest()}"
    )
    d = pytestconfig.cache.mkdir("eulerglass-banks")
    path = d / (key.replace(".", "p") + ".npz")
    if path.exists():
        z = np.load(path)
        return FieldBatch(z["low"], z["high"], config, z["ids"])
    batch = sample_fields(config, prime_table(config.cutoff), range(replicas))
    np.savez(path, low=batch.low, high=batch.high, ids=batch.replica_ids)
    return batch


@pytest.fixture(scope="session")
def bank_1e6_n256(pytestconfig):
    from eulerglass.field import FieldConfig

    return cached_batch(pytestconfig, FieldConfig(LN(1e6), grid_size=256), 10**4)


LADDER = (LN(1e4), LN(1e6), LN(1e8))


@pytest.fixture(scope="session")
def ladder_banks(pytestconfig):
    """2000 replicas at each rung, default grid; the 10^8 rung takes about 5 minutes cold."""
    from eulerglass.field import FieldConfig

    return [cached_batch(pytestconfig, FieldConfig(lt), 2000) for lt in LADDER]


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
