"""Closed-form Gaussian reference solutions for the linear model families.

For quadratic confinement with quadratic pair interaction (granular) and for
the mean-attraction kinetic system, the time-marginal laws started from a
Gaussian stay Gaussian.  This module provides the moment flows, stationary
measures, and the Gaussian W2/relative-entropy formulas used as oracles by
the particle experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import rng
from .models import GranularModel, KineticModel, MeanAttraction, QuadraticPair, QuadraticPotential

__all__ = [
    "GaussianMeasure",
    "sample_gaussian",
    "ou_granular_moments",
    "kinetic_moments",
    "kinetic_moment_curve",
    "gaussian_w2",
    "gaussian_entropy",
    "stationary_measure",
]

# Eigenvalue floor (relative to the trace) applied inside matrix square roots.
_SQRT_EIG_FLOOR = 1e-12


@dataclass(eq=False)
class GaussianMeasure:
    """Mean vector plus symmetric positive-definite covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (d, d):
            raise ValueError(f"mean shape {self.mean.shape} and cov shape {self.cov.shape} disagree")
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.cov)):
            raise ValueError("non-finite Gaussian parameters")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10 * max(1.0, float(np.abs(self.cov).max()))):
            raise ValueError("covariance must be symmetric")
        self.cov = 0.5 * (self.cov + self.cov.T)
        if np.linalg.eigvalsh(self.cov)[0] <= 0:
            raise ValueError("covariance must be positive definite")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def sample_gaussian(measure: GaussianMeasure, n: int, seed: int, stream: int,
                    step: int = 0) -> np.ndarray:
    """Draw an (n, d) sample keyed by (seed, stream, step)."""
    z = rng.normals(seed, stream, step, (n, measure.dim))
    chol = np.linalg.cholesky(measure.cov)
    return measure.mean + z @ chol.T


def _sqrtm_spd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    floor = _SQRT_EIG_FLOOR * max(float(np.trace(m)), 0.0)
    w = np.clip(w, floor, None)
    return (v * np.sqrt(w)) @ v.T


def ou_granular_moments(lam: float, delta: float, m0: float, var0: float, t):
    """Moments of the 1-d granular flow with quadratic V and pair interaction.

    With unit diffusion, the mean satisfies ``m' = -lam m`` (the interaction
    force cancels against the mean itself) and the variance satisfies
    ``v' = 2 - 2 (lam + delta) v``, so

    ``m_t = m0 exp(-lam t)``,
    ``v_t = 1/(lam+delta) + (var0 - 1/(lam+delta)) exp(-2 (lam+delta) t)``.

    Requires ``lam + delta > 0`` (otherwise no stationary variance exists).
    ``t`` may be a scalar or an array.
    """
    k = lam + delta
    if k <= 0:
        raise ValueError(f"lam + delta = {k:.6g} <= 0: stationary variance undefined")
    if var0 <= 0:
        raise ValueError("var0 must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    mean = m0 * np.exp(-lam * t)
    var = 1.0 / k + (var0 - 1.0 / k) * np.exp(-2.0 * k * t)
    if t.ndim == 0:
        return float(mean), float(var)
    return mean, var


def _kinetic_matrices(model: KineticModel):
    """State matrices of the linearized kinetic flow.

    Returns ``(f_mean, f_fluct, source)``: the mean evolves by ``f_mean``
    (the mean-attraction force cancels along the mean), fluctuations evolve
    by ``f_fluct`` which keeps the interaction curvature, and ``source`` is
    the constant covariance production ``2 diag(0, I)``.
    """
    d1, d2 = model.d1, model.d2
    b = model.b_matrix
    dim = d1 + d2
    f_mean = np.zeros((dim, dim))
    f_mean[:d1, d1:] = b
    f_mean[d1:, :d1] = -model.pull_matrix
    f_mean[d1:, d1:] = -np.eye(d2)
    f_fluct = f_mean.copy()
    f_fluct[d1:, :d1] -= model.interaction.strength * b.T
    source = np.zeros((dim, dim))
    source[d1:, d1:] = 2.0 * np.eye(d2)
    return f_mean, f_fluct, source


def kinetic_moment_curve(model: KineticModel, init: GaussianMeasure,
                         times: Sequence[float], max_step: float = 0.005) -> list[GaussianMeasure]:
    """Gaussian law of the kinetic flow at each requested time.

    The mean is propagated by the exact matrix exponential.  The covariance
    solves the Lyapunov ODE ``S' = F S + S F^T + 2 diag(0, I)`` and is
    integrated by classical fixed-step RK4; each inter-time interval is cut
    into steps of length at most ``max_step`` (local error O(h^5), far below
    the tolerances used anywhere in this package).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d sequence")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    if init.dim != model.dimension:
        raise ValueError(f"init dimension {init.dim} != model dimension {model.dimension}")

    f_mean, f_fluct, source = _kinetic_matrices(model)

    def rhs(s):
        return f_fluct @ s + s @ f_fluct.T + source

    out = []
    t_cur = 0.0
    mean = init.mean.copy()
    cov = init.cov.copy()
    trace_scale = max(float(np.trace(cov)), 1.0)
    for t_next in times:
        span = t_next - t_cur
        if span > 0:
            n_sub = max(1, math.ceil(span / max_step))
            h = span / n_sub
            step_mat = expm(h * f_mean)
            for _ in range(n_sub):
                mean = step_mat @ mean
                k1 = rhs(cov)
                k2 = rhs(cov + 0.5 * h * k1)
                k3 = rhs(cov + 0.5 * h * k2)
                k4 = rhs(cov + h * k3)
                cov = cov + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                cov = 0.5 * (cov + cov.T)
            if np.linalg.eigvalsh(cov)[0] <= -1e-10 * trace_scale:
                raise RuntimeError(
                    f"covariance lost positive definiteness near t = {t_next:.6g}; "
                    "reduce max_step"
                )
            t_cur = t_next
        out.append(GaussianMeasure(mean=mean.copy(), cov=cov.copy()))
    return out


def kinetic_moments(model: KineticModel, init: GaussianMeasure, t: float,
                    max_step: float = 0.005) -> GaussianMeasure:
    """Gaussian law of the kinetic flow at a single time ``t >= 0``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return GaussianMeasure(mean=init.mean.copy(), cov=init.cov.copy())
    return kinetic_moment_curve(model, init, [t], max_step=max_step)[0]


def gaussian_w2(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Quadratic Wasserstein distance between two Gaussians.

    ``W2^2 = |m_p - m_q|^2 + tr(S_p + S_q - 2 (S_q^{1/2} S_p S_q^{1/2})^{1/2})``.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    dm = p.mean - q.mean
    rq = _sqrtm_spd(q.cov)
    cross = _sqrtm_spd(rq @ p.cov @ rq)
    bures = float(np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
    return math.sqrt(float(dm @ dm) + max(bures, 0.0))


def gaussian_entropy(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Relative entropy ``Ent(p | q)`` between two Gaussians.

    ``Ent = (tr(S_q^-1 S_p) - d + (m_q - m_p)^T S_q^-1 (m_q - m_p)
    + ln det S_q - ln det S_p) / 2``.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    d = p.dim
    dm = q.mean - p.mean
    sol = np.linalg.solve(q.cov, p.cov)
    maha = float(dm @ np.linalg.solve(q.cov, dm))
    _, logdet_q = np.linalg.slogdet(q.cov)
    _, logdet_p = np.linalg.slogdet(p.cov)
    return 0.5 * (float(np.trace(sol)) - d + maha + logdet_q - logdet_p)


def stationary_measure(model) -> GaussianMeasure:
    """Stationary Gaussian of a quadratic granular or mean-attraction kinetic model.

    Granular (quadratic V with curvature ``lam``, pair strength ``delta``):
    ``N(0, I / (lam + delta))``.  Kinetic: the invariant density is the Gibbs
    measure ``exp(-(theta/2)|x|^2 - (beta/2)|(B B^T)^{-1/2} x|^2 - |y|^2/2)``
    up to normalization, i.e. ``N(0, diag((theta I + beta (B B^T)^-1)^-1, I))``.
    """
    if isinstance(model, GranularModel):
        if not isinstance(model.potential, QuadraticPotential) or not isinstance(
            model.interaction, QuadraticPair
        ):
            raise ValueError("closed-form stationary measure needs the quadratic family")
        k = model.potential.curvature + model.interaction.strength
        if k <= 0:
            raise ValueError(f"effective curvature {k:.6g} <= 0: no stationary measure")
        d = model.dimension
        return GaussianMeasure(mean=np.zeros(d), cov=np.eye(d) / k)
    if isinstance(model, KineticModel):
        if not isinstance(model.interaction, MeanAttraction):
            raise ValueError("kinetic stationary measure needs the mean-attraction family")
        b = model.b_matrix
        precision_x = model.interaction.strength * np.eye(model.d1) + model.friction * np.linalg.inv(
            b @ b.T
        )
        cov = np.zeros((model.dimension, model.dimension))
        cov[: model.d1, : model.d1] = np.linalg.inv(precision_x)
        cov[model.d1 :, model.d1 :] = np.eye(model.d2)
        return GaussianMeasure(mean=np.zeros(model.dimension), cov=cov)
    raise TypeError(f"unsupported model type {type(model).__name__}")
