"""Explicit convergence-rate formulas and empirical exponential-rate fitting.

Collects every closed-form rate constant of the two model families (granular
and kinetic) together with the machinery that turns a log-Harnack constant
plus a Talagrand constant into a two-sided entropy/W2 decay envelope, and a
least-squares fitter for empirical decay curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "kappa",
    "theta_pair",
    "twist_constants",
    "uniform_lsi_rate",
    "combine_rates",
    "DecayBound",
    "BoundValue",
    "fit_exp_rate",
    "RateFit",
    "RateConstants",
]


def _require_positive_beta(beta: float) -> None:
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")


def kappa(beta: float, theta1: float, theta2: float) -> float:
    """Kinetic contraction rate ``2 (beta - theta1 - theta2) / (2 + 2 beta + beta^2 + sqrt(beta^4 + 4))``.

    Positive exactly when ``theta1 + theta2 < beta``; a nonpositive value
    means the hypocoercive contraction is not guaranteed.
    """
    _require_positive_beta(beta)
    denom = 2.0 + 2.0 * beta + beta * beta + math.sqrt(beta**4 + 4.0)
    return 2.0 * (beta - theta1 - theta2) / denom


def theta_pair(beta: float, theta: float) -> tuple[float, float]:
    """Split a Lipschitz interaction strength into its two curvature-like constants.

    ``theta1 = theta (1/2 + sqrt(2 + 2 beta + beta^2))`` and
    ``theta2 = (theta / 2) sqrt(2 + 2 beta + beta^2)``; feeding the pair into
    :func:`kappa` reproduces the direct kinetic-rate formula
    ``(2 beta - theta (1 + 3 sqrt(2 + 2 beta + beta^2))) / (2 + 2 beta + beta^2 + sqrt(beta^4 + 4))``.
    """
    _require_positive_beta(beta)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    root = math.sqrt(2.0 + 2.0 * beta + beta * beta)
    return theta * (0.5 + root), 0.5 * theta * root


def twist_constants(beta: float) -> tuple[float, float, float]:
    """Constants (a, r, c) of the twisted position-velocity metric.

    ``a = sqrt((1 + beta + beta^2)/(1 + beta))``, ``r = a - beta/a``
    (equivalently ``1/sqrt((1 + beta)(1 + beta + beta^2))``, always in (0, 1)),
    and ``c = (2 + 2 beta + beta^2 + sqrt(beta^4 + 4)) / (2 (1 + beta))`` is the
    sharp factor by which the squared twisted metric exceeds the untwisted one.
    """
    _require_positive_beta(beta)
    a = math.sqrt((1.0 + beta + beta * beta) / (1.0 + beta))
    r = a - beta / a
    c = (2.0 + 2.0 * beta + beta * beta + math.sqrt(beta**4 + 4.0)) / (2.0 * (1.0 + beta))
    return a, r, c


def uniform_lsi_rate(lambda_a: float, beta_ls: float, r0: float) -> float:
    """Decay rate ``lambda_a * beta_ls * (1 - r0)^2`` from a uniform log-Sobolev constant.

    ``lambda_a`` is the diffusion ellipticity floor, ``beta_ls`` the uniform
    log-Sobolev constant of the conditional Gibbs measures, and ``r0`` the
    interaction-smallness constant, which must satisfy ``r0 < 1``.
    """
    if lambda_a <= 0:
        raise ValueError("lambda_a must be positive")
    if beta_ls <= 0:
        raise ValueError("beta_ls must be positive")
    if not 0 <= r0 < 1:
        raise ValueError(
            f"r0 = {r0} outside [0, 1): the interaction-smallness condition r0 < 1 fails"
        )
    return lambda_a * beta_ls * (1.0 - r0) ** 2


@dataclass(frozen=True)
class BoundValue:
    """One evaluation of a decay envelope."""

    t: float
    in_range: bool
    coefficient: Optional[float] = None
    w2_sq_bound: Optional[float] = None
    entropy_bound: Optional[float] = None


@dataclass(frozen=True)
class DecayBound:
    """Two-sided exponential envelope built from one-sided decay plus the two inequalities.

    Direction ``"w2_to_entropy"``: a W2 contraction valid from ``t1`` is
    upgraded through the log-Harnack constant ``c0`` (burn-in ``t0``) and the
    Talagrand constant ``big_c`` to

    ``max{Ent_t / c0, W2_t^2} <= c1 e^{-lam (t - t0)} min{W2_0^2, big_c Ent_0}``

    for ``t >= t0 + t1``.  Direction ``"entropy_to_w2"`` starts from an
    entropy decay and gives

    ``max{Ent_t, W2_t^2 / big_c} <= c1 e^{-lam (t - t0)} min{c0 W2_0^2, Ent_0}``.
    """

    c0: float
    t0: float
    big_c: float
    c1: float
    lam: float
    t1: float
    direction: str

    def __post_init__(self):
        for name in ("c0", "big_c", "c1", "lam"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t0 < 0 or self.t1 < 0:
            raise ValueError("t0 and t1 must be nonnegative")
        if self.direction not in ("w2_to_entropy", "entropy_to_w2"):
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def valid_from(self) -> float:
        return self.t0 + self.t1

    def __call__(self, t: float, w2_sq_0: float = math.inf,
                 entropy_0: float = math.inf) -> BoundValue:
        """Evaluate the envelope at time ``t`` given initial W2^2 and entropy.

        Below the validity threshold the bound is flagged out-of-range and
        not evaluated.
        """
        if t < self.valid_from:
            return BoundValue(t=t, in_range=False)
        coeff = self.c1 * math.exp(-self.lam * (t - self.t0))
        if self.direction == "w2_to_entropy":
            start = min(w2_sq_0, self.big_c * entropy_0)
            return BoundValue(
                t=t,
                in_range=True,
                coefficient=coeff,
                w2_sq_bound=coeff * start,
                entropy_bound=self.c0 * coeff * start,
            )
        start = min(self.c0 * w2_sq_0, entropy_0)
        return BoundValue(
            t=t,
            in_range=True,
            coefficient=coeff,
            w2_sq_bound=self.big_c * coeff * start,
            entropy_bound=coeff * start,
        )


def combine_rates(c0: float, t0: float, big_c: float, c1: float, lam: float,
                  t1: float, direction: str = "w2_to_entropy") -> DecayBound:
    """Assemble a :class:`DecayBound` from its constants; see the class docstring."""
    return DecayBound(c0=c0, t0=t0, big_c=big_c, c1=c1, lam=lam, t1=t1, direction=direction)


@dataclass(frozen=True)
class RateFit:
    """Least-squares exponential fit on a log scale."""

    rate: float
    intercept: float
    residual: float
    window: tuple[float, float]
    n_points: int = 0

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "intercept": self.intercept,
            "residual": self.residual,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def fit_exp_rate(times, values, window: Optional[tuple[float, float]] = None) -> RateFit:
    """Fit ``values ~ exp(intercept - rate * t)`` by least squares on the log.

    Only strictly positive values inside the window enter the fit; at least
    three are required.  When no window is given, the first 20% of the time
    span is discarded as transient.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("times and values must be 1-d arrays of equal length")
    if window is None:
        t0, t1 = float(times.min()), float(times.max())
        window = (t0 + 0.2 * (t1 - t0), t1)
    lo, hi = window
    mask = (times >= lo) & (times <= hi)
    if np.any(mask & ~(values > 0)):
        bad = times[mask & ~(values > 0)][0]
        raise ValueError(f"nonpositive value inside fit window at t = {bad:.6g}")
    t = times[mask]
    if t.size < 3:
        raise ValueError(f"need at least 3 points inside window {window}, got {t.size}")
    logv = np.log(values[mask])
    slope, intercept = np.polyfit(t, logv, 1)
    resid = logv - (slope * t + intercept)
    return RateFit(
        rate=float(-slope),
        intercept=float(intercept),
        residual=float(np.sqrt(np.mean(resid**2))),
        window=(float(lo), float(hi)),
        n_points=int(t.size),
    )


@dataclass(frozen=True)
class RateConstants:
    """Bundle of theoretical constants for one parameter point (JSON-friendly).

    ``rate_nondegenerate_sq`` is the exponent governing squared-W2/entropy
    decay for the nondegenerate family (difference of the two one-sided
    monotonicity constants); ``rate_nondegenerate_w2`` is the corresponding
    unsquared-W2 exponent, half of it.  Both variants are reported on purpose.
    """

    kappa: Optional[float] = None
    a_twist: Optional[float] = None
    r_twist: Optional[float] = None
    ac3_const: Optional[float] = None
    theta1: Optional[float] = None
    theta2: Optional[float] = None
    rate_granular: Optional[float] = None
    rate_nondegenerate_sq: Optional[float] = None
    rate_nondegenerate_w2: Optional[float] = None
    rate_uniform_lsi: Optional[float] = None
    talagrand_const: Optional[float] = None
    c0: Optional[float] = None
    big_c: Optional[float] = None
    c1: Optional[float] = None
    lam: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}
