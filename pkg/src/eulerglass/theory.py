"""Closed-form limits: free energies, maximal levels, high-point exponents, overlap law.

Conventions: ``f_sigma`` takes the standard deviation sigma, never sigma**2, and
every caller converts explicitly.  V = (1+u)^2 alpha + (1 - alpha) is the
variance multiplier of the perturbed field (1+u) X(alpha) + X(alpha, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class TheoryPoint:
    beta: float
    alpha: float
    u: float = 0.0
    gamma: float | None = None

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidArgumentError(f"beta={self.beta} must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha={self.alpha} must lie in (0, 1)")
        if not -1.0 < self.u < 1.0:
            raise InvalidArgumentError(f"u={self.u} must lie in (-1, 1)")
        if self.gamma is not None and not self.gamma >= 0:
            raise InvalidArgumentError(f"gamma={self.gamma} must be >= 0")

    @property
    def V(self) -> float:
        return variance_factor(self.alpha, self.u)


def variance_factor(alpha: float, u: float) -> float:
    return (1.0 + u) ** 2 * alpha + (1.0 - alpha)


def f_sigma(beta: float, sigma: float) -> float:
    """beta^2 sigma^2 / 4 below beta = 2/sigma, beta*sigma - 1 above."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma={sigma} must be positive")
    if not beta > 0:
        raise InvalidArgumentError(f"beta={beta} must be positive")
    if beta <= 2.0 / sigma:
        return beta * beta * sigma * sigma / 4.0
    return beta * sigma - 1.0


def _df_dsigma(beta: float, sigma: float) -> float:
    # both one-sided derivatives equal beta at beta = 2/sigma
    return beta * beta * sigma / 2.0 if beta <= 2.0 / sigma else beta


def limiting_free_energy(p: TheoryPoint) -> float:
    """lim F_T(beta; alpha, u) / loglog T."""
    if p.u < 0:
        return f_sigma(p.beta, math.sqrt(p.V))
    return p.alpha * f_sigma(p.beta, 1.0 + p.u) + (1.0 - p.alpha) * f_sigma(p.beta, 1.0)


def du_limiting_free_energy(p: TheoryPoint, side: str = "right") -> float:
    """Analytic u-derivative of :func:`limiting_free_energy`.

    At u = 0 ``side`` picks the branch: "left" differentiates the u < 0
    formula, "right" the u >= 0 one.
    """
    if side not in ("left", "right"):
        raise InvalidArgumentError("side must be 'left' or 'right'")
    use_left = p.u < 0 or (p.u == 0 and side == "left")
    if use_left:
        sigma = math.sqrt(p.V)
        return _df_dsigma(p.beta, sigma) * (1.0 + p.u) * p.alpha / sigma
    return p.alpha * _df_dsigma(p.beta, 1.0 + p.u)


def gamma_star(alpha: float, u: float) -> float:
    """Maximal level of the perturbed field in units of loglog T."""
    if u <= 0:
        return math.sqrt(variance_factor(alpha, u))
    return (1.0 + u) * alpha + (1.0 - alpha)


def gamma_c(alpha: float, u: float) -> float:
    """Level above which the coarse scales saturate (u >= 0 only)."""
    if u < 0:
        raise InvalidArgumentError("gamma_c is only defined for u >= 0")
    return variance_factor(alpha, u) / (1.0 + u)


def _check_gamma(gamma: float, alpha: float, u: float) -> None:
    gs = gamma_star(alpha, u)
    if not 0.0 < gamma < gs:
        raise InvalidArgumentError(f"gamma={gamma} must lie in (0, gamma_star={gs:.6g})")


def lambda_star(gamma: float, alpha: float, u: float) -> float:
    """Optimal coarse-scale level for gamma-high points."""
    _check_gamma(gamma, alpha, u)
    V = variance_factor(alpha, u)
    if u >= 0 and gamma >= gamma_c(alpha, u):
        return (1.0 + u) * alpha
    return gamma * (1.0 + u) ** 2 * alpha / V


def _exponent(gamma, alpha: float, u: float):
    """Vectorized log-measure exponent on gamma in [0, gamma_star]."""
    g = np.asarray(gamma, dtype=np.float64)
    V = variance_factor(alpha, u)
    out = -(g * g) / V
    if u >= 0:
        upper = g >= gamma_c(alpha, u)
        out = np.where(upper, -alpha - (g - (1.0 + u) * alpha) ** 2 / (1.0 - alpha), out)
    return out


def high_points_exponent(gamma: float, p: TheoryPoint) -> float:
    """lim (1/loglog T) log Leb{h : perturbed field > gamma loglog T}."""
    _check_gamma(gamma, p.alpha, p.u)
    return float(_exponent(gamma, p.alpha, p.u))


def variational_grid(alpha: float, u: float, grid_size: int) -> np.ndarray:
    """[0, gamma_star] uniformly, plus geometric clusters at gamma_c and gamma_star (unsorted)."""
    gs = gamma_star(alpha, u)
    pts = [np.linspace(0.0, gs, grid_size), [gs]]
    offsets = gs * np.geomspace(1e-12, 1e-2, 200)
    kinks = [gs]
    if u >= 0:
        kinks.append(gamma_c(alpha, u))
    for k in kinks:
        pts.append(k - offsets)
        pts.append(k + offsets)
        pts.append([k])
    g = np.concatenate(pts)
    return g[(g >= 0.0) & (g <= gs)]


@lru_cache(maxsize=32)
def _grid_and_exponent(alpha: float, u: float, grid_size: int):
    # shared by every beta at the same (alpha, u)
    g = variational_grid(alpha, u, grid_size)
    e = _exponent(g, alpha, u)
    g.flags.writeable = e.flags.writeable = False
    return g, e


def variational_free_energy(p: TheoryPoint, grid_size: int = 10**6) -> tuple[float, float]:
    """(max, argmax) of beta*gamma + exponent(gamma) over a gamma grid on [0, gamma_star].

    The exponent at gamma_star is its left limit, -1.
    """
    if grid_size < 10**3:
        raise InvalidArgumentError("grid_size must be at least 1000")
    g, e = _grid_and_exponent(p.alpha, p.u, grid_size)
    vals = p.beta * g + e
    k = int(np.argmax(vals))
    return float(vals[k]), float(g[k])


def limiting_overlap_law(beta: float, interval) -> float:
    """Mass the Bernoulli(2/beta) overlap limit puts on ``interval`` = [lo, hi]."""
    if not beta > 2:
        raise InvalidArgumentError(f"beta={beta} must exceed 2")
    lo, hi = interval
    if lo > hi:
        raise InvalidArgumentError("interval must satisfy lo <= hi")
    return (2.0 / beta) * (lo <= 0.0 <= hi) + (1.0 - 2.0 / beta) * (lo <= 1.0 <= hi)


def overlap_cdf_limit(beta: float, alpha: float) -> float:
    """int_0^alpha of the limiting P(rho <= s) ds, i.e. 2 alpha / beta."""
    if not beta > 2:
        raise InvalidArgumentError(f"beta={beta} must exceed 2")
    return 2.0 * alpha / beta


def rem_free_energy(beta: float) -> float:
    """REM-type free energy: 1 + beta^2/4 below beta = 2, beta above."""
    if not beta > 0:
        raise InvalidArgumentError(f"beta={beta} must be positive")
    return 1.0 + beta * beta / 4.0 if beta < 2 else float(beta)
