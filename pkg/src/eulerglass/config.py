"""Flat ``key=value`` experiment configuration.

One key per line, ``#`` starts a comment, lists are comma separated.  A value
``ln(x)`` is read as the natural log of x, so ``logT=ln(1e8)`` works.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .primes import MAX_CUTOFF
from .theory import gamma_star

EXPERIMENTS = ("overlap", "free-energy", "high-points", "theory", "validate")

REQUIRED = {
    "overlap": ("logT", "beta"),
    "free-energy": ("logT", "beta"),
    "high-points": ("logT", "gamma"),
    "theory": ("beta",),
    "validate": (),
}

MAX_LOG_T = math.log(MAX_CUTOFF)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    logT: tuple[float, ...] = ()
    beta: tuple[float, ...] = ()
    alpha: float = 0.5
    u: tuple[float, ...] = (0.0,)
    gamma: tuple[float, ...] = ()
    replicas: int = 200
    pairs_per_replica: int = 64
    grid_oversample: int = 8
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    plot: bool = False
    dump_replicas: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass(frozen=True)
class _Key:
    kind: str  # float, floats, int, bool, str
    accepted: str
    check: callable = field(default=lambda v: True)


def _all(pred):
    return lambda vs: len(vs) > 0 and all(pred(v) for v in vs)


KEYS = {
    "experiment": _Key("str", "one of " + ", ".join(EXPERIMENTS), lambda v: v in EXPERIMENTS),
    "logT": _Key(
        "floats", f"strictly increasing reals in (e, {MAX_LOG_T:.4f}]",
        lambda vs: _all(lambda x: math.e < x <= MAX_LOG_T + 1e-9)(vs)
        and all(a < b for a, b in zip(vs, vs[1:])),
    ),
    "beta": _Key("floats", "reals in (0, 64]", _all(lambda x: 0 < x <= 64)),
    "alpha": _Key("float", "(0, 1)", lambda x: 0 < x < 1),
    "u": _Key("floats", "reals in (-1, 1)", _all(lambda x: -1 < x < 1)),
    "gamma": _Key("floats", "reals in (0, gamma_star(alpha, u))", _all(lambda x: x > 0)),
    "replicas": _Key("int", "integer >= 2", lambda x: x >= 2),
    "pairs_per_replica": _Key("int", "integer >= 1", lambda x: x >= 1),
    "grid_oversample": _Key("int", "integer >= 1", lambda x: x >= 1),
    "seed": _Key("int", "integer in [0, 2^64)", lambda x: 0 <= x < 2**64),
    "output_dir": _Key("str", "a directory path", lambda v: len(v) > 0),
    "workers": _Key("int", "integer >= 1", lambda x: x >= 1),
    "plot": _Key("bool", "true or false"),
    "dump_replicas": _Key("bool", "true or false"),
}

_LN = re.compile(r"^ln\((.+)\)$")


def _float(text: str) -> float:
    m = _LN.match(text.strip())
    if m:
        return math.log(float(m.group(1)))
    x = float(text)
    if not math.isfinite(x):
        raise ValueError("not finite")
    return x


def _convert(kind: str, text: str):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "float":
        return _float(text)
    if kind == "floats":
        return tuple(_float(t) for t in text.split(",") if t.strip())
    if kind == "int":
        return int(text, 0)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("not a boolean")
    raise AssertionError(kind)


def parse_pairs(source: str) -> list[tuple[int, str, str]]:
    """(line number, key, raw value) for every non-blank, non-comment line."""
    out = []
    for n, line in enumerate(source.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            out.append((n, line, None))
            continue
        k, v = line.split("=", 1)
        out.append((n, k.strip(), v.strip()))
    return out


def parse_config(source: str = "", overrides: dict | None = None) -> ExperimentConfig:
    """Validate the file text plus ``overrides`` (CLI flags, which win).

    Raises ConfigError carrying every violation found, not just the first.
    """
    raw: dict[str, str] = {}
    problems: list[str] = []
    for n, k, v in parse_pairs(source):
        if v is None:
            problems.append(f"line {n}: expected key=value, got {k!r}")
        else:
            raw[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v if isinstance(v, str) else _to_text(v)

    values = {}
    for k, text in raw.items():
        spec = KEYS.get(k)
        if spec is None:
            problems.append(f"unknown key {k!r}; known keys: {', '.join(KEYS)}")
            continue
        try:
            val = _convert(spec.kind, text)
        except ValueError:
            problems.append(f"{k}={text!r} does not parse; accepted: {spec.accepted}")
            continue
        if not spec.check(val):
            problems.append(f"{k}={text} out of range; accepted: {spec.accepted}")
            continue
        values[k] = val

    exp = values.get("experiment")
    required = REQUIRED.get(exp, ("experiment", "logT", "beta")) if exp else ("experiment", "logT", "beta")
    for k in required:
        if k not in raw:
            problems.append(f"missing required key {k!r} ({KEYS[k].accepted})")

    if exp == "high-points" and "gamma" in values:
        alpha = values.get("alpha", 0.5)
        for u in values.get("u", (0.0,)):
            gs = gamma_star(alpha, u)
            bad = [g for g in values["gamma"] if g >= gs]
            if bad:
                problems.append(
                    f"gamma={bad} out of range for u={u}; accepted: (0, gamma_star={gs:.6g})"
                )

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**values)


def _to_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(repr(float(x)) for x in v)
    return str(v)
