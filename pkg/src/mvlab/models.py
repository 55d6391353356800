"""Drift/diffusion model families and their parameter conditions.

Two families are covered:

* granular (overdamped): ``dX = -a grad(V + W (*) mu)(X) dt + sqrt(2a) dB``
  with a constant diffusion matrix ``a``, confinement ``V`` and pair
  interaction ``W`` convolved against the law ``mu``;
* kinetic (position-velocity): ``dX = B Y dt``,
  ``dY = sqrt(2) dW - {B^T grad_x V(X, mu) + beta B^T (B B^T)^-1 X + Y} dt``.

Interaction families are restricted to the quadratic/mean-attraction cases,
which have closed-form stationary measures; arbitrary pair potentials are
accepted only through callbacks and are never condition-checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "QuadraticPotential",
    "DoubleWellPotential",
    "QuadraticPair",
    "MeanAttraction",
    "PairwiseInteraction",
    "GranularModel",
    "KineticModel",
    "AssumptionReport",
    "drift_granular",
    "drift_kinetic",
    "granular_rate_condition",
    "kinetic_rate_condition",
    "kinetic_interaction_bound",
    "compute_r0",
    "R0Estimate",
]


def _finite(name, value) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class QuadraticPotential:
    """Isotropic quadratic well ``(curvature/2) |x|^2``."""

    curvature: float

    def __post_init__(self):
        _finite("curvature", self.curvature)

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.curvature * np.sum(x * x, axis=-1)

    def grad(self, x) -> np.ndarray:
        return self.curvature * np.asarray(x, dtype=float)

    @property
    def hessian_lower(self) -> float:
        return self.curvature


@dataclass(frozen=True)
class DoubleWellPotential:
    """Radial double well ``quartic |x|^4 - quadratic |x|^2`` with quartic > 0."""

    quartic: float
    quadratic: float

    def __post_init__(self):
        _finite("quartic", self.quartic)
        _finite("quadratic", self.quadratic)
        if self.quartic <= 0:
            raise ValueError("quartic coefficient must be positive")

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return self.quartic * r2 * r2 - self.quadratic * r2

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return (4.0 * self.quartic * r2 - 2.0 * self.quadratic) * x

    @property
    def hessian_lower(self) -> float:
        # Hess = (4 a4 |x|^2 - 2 a2) I + 8 a4 x x^T >= -2 a2 I everywhere.
        return -2.0 * self.quadratic


PotentialSpec = Union[QuadraticPotential, DoubleWellPotential]


@dataclass(frozen=True)
class QuadraticPair:
    """Pair potential ``W(x, y) = (strength/2) |x - y|^2``.

    Its mean-field gradient depends on the measure only through the mean:
    ``grad_x (W (*) mu)(x) = strength (x - mean(mu))``.
    """

    strength: float

    def __post_init__(self):
        _finite("strength", self.strength)

    def pair_value(self, x, y) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return 0.5 * self.strength * np.sum(d * d, axis=-1)

    def mean_field_grad(self, x, mu_mean) -> np.ndarray:
        return self.strength * (np.asarray(x, dtype=float) - mu_mean)

    @property
    def hessian_lower(self) -> float:
        # Hessian on R^{2d} has eigenvalues {0, 2*strength}.
        return min(0.0, 2.0 * self.strength)

    @property
    def hessian_norm(self) -> float:
        return 2.0 * abs(self.strength)


@dataclass(frozen=True)
class MeanAttraction:
    """Kinetic interaction ``V(x, mu) = (strength/2) |x - mean_x(mu)|^2``.

    ``strength`` doubles as the Lipschitz constant of ``grad_x V``.
    """

    strength: float

    def __post_init__(self):
        _finite("strength", self.strength)
        if self.strength < 0:
            raise ValueError("mean-attraction strength must be nonnegative")


@dataclass(frozen=True, eq=False)
class PairwiseInteraction:
    """Generic symmetric pair potential supplied as callbacks.

    ``grad(x, y)`` must return ``grad_x W(x, y)``.  This path costs O(N^2)
    per step and is never checked against any convergence condition.
    """

    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    value: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    lipschitz: Optional[float] = None


InteractionSpec = Union[QuadraticPair, MeanAttraction, PairwiseInteraction]


def _as_spd_matrix(a, dim: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = float(a) * np.eye(dim)
    if a.shape != (dim, dim):
        raise ValueError(f"{name} must be scalar or ({dim}, {dim}), got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    if not np.allclose(a, a.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    return 0.5 * (a + a.T)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


@dataclass(eq=False)
class GranularModel:
    """Overdamped mean-field model on R^d with constant diffusion matrix.

    ``diffusion`` may be a scalar (isotropic) or a d x d symmetric PSD
    matrix.  A singular diffusion (smallest eigenvalue 0) is allowed for
    noise-free experiments, but violates the uniform-ellipticity requirement
    of the convergence theory; ``lambda_a`` records the margin.
    """

    potential: PotentialSpec
    interaction: InteractionSpec
    diffusion: np.ndarray
    dimension: int

    lambda_a: float = field(init=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if isinstance(self.interaction, MeanAttraction):
            raise ValueError("mean-attraction interactions belong to the kinetic family")
        self.diffusion = _as_spd_matrix(self.diffusion, self.dimension, "diffusion")
        eigs = np.linalg.eigvalsh(self.diffusion)
        if eigs[0] < -1e-12 * max(1.0, eigs[-1]):
            raise ValueError("diffusion must be positive semidefinite")
        self.lambda_a = float(max(eigs[0], 0.0))
        self._noise_scale = _psd_sqrt(2.0 * self.diffusion)

    @property
    def noise_scale(self) -> np.ndarray:
        """Matrix ``sqrt(2 a)`` multiplying standard normal increments."""
        return self._noise_scale


@dataclass(eq=False)
class KineticModel:
    """Position-velocity model with degenerate noise (velocity block only)."""

    d1: int
    d2: int
    b_matrix: np.ndarray
    friction: float
    interaction: MeanAttraction

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("d1 and d2 must be >= 1")
        b = np.asarray(self.b_matrix, dtype=float)
        if b.shape != (self.d1, self.d2):
            raise ValueError(f"b_matrix must be ({self.d1}, {self.d2}), got {b.shape}")
        bbt = b @ b.T
        if np.linalg.matrix_rank(bbt) < self.d1:
            raise ValueError("B B^T must be invertible")
        self.friction = _finite("friction", self.friction)
        if self.friction <= 0:
            raise ValueError("friction must be positive")
        if not isinstance(self.interaction, MeanAttraction):
            raise ValueError("kinetic models use the mean-attraction interaction")
        self.b_matrix = b
        # beta B^T (B B^T)^{-1}, the restoring pull on the velocity block
        self._pull = self.friction * np.linalg.solve(bbt, b).T

    @property
    def dimension(self) -> int:
        return self.d1 + self.d2

    @property
    def pull_matrix(self) -> np.ndarray:
        return self._pull


def _measure_mean(mu) -> np.ndarray:
    mean = getattr(mu, "mean", None)
    if mean is None:
        raise TypeError(f"measure of type {type(mu).__name__} has no mean")
    return np.asarray(mean, dtype=float)


def drift_granular(model: GranularModel, x, mu) -> np.ndarray:
    """Drift ``-a (grad V(x) + grad (W (*) mu)(x))`` of the granular model.

    Parameters
    ----------
    x : array, shape (d,) or (N, d)
        Evaluation point(s).
    mu : EmpiricalMeasure or GaussianMeasure
        Current law.  Only its mean enters for the quadratic pair family;
        a :class:`PairwiseInteraction` averages its gradient over the
        support of an empirical ``mu``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dimension:
        raise ValueError(f"point dimension {x.shape[-1]} != model dimension {model.dimension}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite evaluation point")
    g = model.potential.grad(x)
    inter = model.interaction
    if isinstance(inter, QuadraticPair):
        g = g + inter.mean_field_grad(x, _measure_mean(mu))
    elif isinstance(inter, PairwiseInteraction):
        pts = getattr(mu, "points", None)
        if pts is None:
            raise TypeError("pairwise interaction needs an empirical measure")
        acc = np.zeros_like(x)
        for p in np.asarray(pts, dtype=float):
            acc = acc + inter.grad(x, p)
        g = g + acc / len(pts)
    else:  # pragma: no cover - constructor rejects other kinds
        raise TypeError(f"unsupported interaction {type(inter).__name__}")
    return -(g @ model.diffusion.T)


def drift_kinetic(model: KineticModel, state, mu) -> tuple[np.ndarray, np.ndarray]:
    """Drift of the kinetic model, split into position and velocity parts.

    ``state`` is a pair ``(x, y)`` with shapes (..., d1) and (..., d2).
    Returns ``(B y, -B^T grad_x V(x, mu) - beta B^T (B B^T)^-1 x - y)``.
    """
    x, y = state
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != model.d1 or y.shape[-1] != model.d2:
        raise ValueError(
            f"state dims ({x.shape[-1]}, {y.shape[-1]}) != model dims ({model.d1}, {model.d2})"
        )
    mean_x = _measure_mean(mu)[: model.d1]
    b = model.b_matrix
    grad_v = model.interaction.strength * (x - mean_x)
    dx = y @ b.T
    dy = -(grad_v @ b) - x @ model.pull_matrix.T - y
    return dx, dy


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of a parameter-condition check.

    ``margin`` is the signed distance to the decisive boundary; it is
    positive when ``satisfied`` and nonpositive otherwise.
    """

    satisfied: bool
    margin: float
    detail: str

    def to_dict(self) -> dict:
        return {"satisfied": self.satisfied, "margin": self.margin, "detail": self.detail}


def granular_rate_condition(curvature_lower: float, interaction_lower: float,
                            interaction_norm: float) -> AssumptionReport:
    """Check the convexity-vs-interaction balance of the granular family.

    The guaranteed decay rate is ``curvature_lower + interaction_lower -
    interaction_norm`` (confinement Hessian lower bound, interaction Hessian
    lower bound, interaction Hessian norm); convergence requires it to be
    positive.
    """
    if interaction_norm < 0:
        raise ValueError("interaction_norm must be nonnegative")
    margin = curvature_lower + interaction_lower - interaction_norm
    detail = (
        f"rate = curvature_lower + interaction_lower - interaction_norm = {margin:.6g}; "
        + ("positive, exponential decay guaranteed" if margin > 0 else "not positive, no guarantee")
    )
    return AssumptionReport(satisfied=margin > 0, margin=margin, detail=detail)


def kinetic_interaction_bound(beta: float) -> float:
    """Largest admissible mean-attraction strength ``2 beta / (1 + 3 sqrt(2 + 2 beta + beta^2))``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 2.0 * beta / (1.0 + 3.0 * math.sqrt(2.0 + 2.0 * beta + beta * beta))


def kinetic_rate_condition(beta: float, theta: float) -> AssumptionReport:
    """Check that the kinetic interaction strength sits inside its admissible open interval.

    Convergence of the kinetic family requires ``0 < theta < bound(beta)``
    with ``bound`` from :func:`kinetic_interaction_bound`.  For ``theta > 0``
    the margin is ``bound - theta``; at the open endpoint ``theta = 0`` the
    margin is 0 (distance to the violated boundary).
    """
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    bound = kinetic_interaction_bound(beta)
    if theta <= 0:
        return AssumptionReport(
            satisfied=False,
            margin=0.0,
            detail=f"theta must be strictly positive (admissible interval (0, {bound:.6g}))",
        )
    margin = bound - theta
    detail = f"theta = {theta:.6g} vs admissible interval (0, {bound:.6g}); margin {margin:.6g}"
    return AssumptionReport(satisfied=margin > 0, margin=margin, detail=detail)


@dataclass(frozen=True)
class R0Estimate:
    """Quadrature value of the interaction-smallness constant r0 and its tail bound."""

    value: float
    tail_bound: float
    radius: float

    @property
    def satisfied(self) -> bool:
        """Whether r0 < 1 holds with the tail bound included."""
        return self.value + self.tail_bound < 1.0


def compute_r0(hess_w_norm: float, b0: Callable[[np.ndarray], np.ndarray],
               step: float = 1e-3, radius: float = 50.0) -> R0Estimate:
    """Evaluate ``r0 = (hess_w_norm / 4) * int_0^inf exp((1/4) int_0^t b0(s) ds) dt``.

    The inner integral is accumulated by the trapezoid rule on a uniform grid
    of spacing ``step`` up to ``radius``; the outer integral uses the same
    grid.  The tail beyond ``radius`` is bounded geometrically from the decay
    observed over the last grid cells, and the bound is reported separately
    rather than added to the value.

    Raises
    ------
    ValueError
        If the outer integrand is not decaying at the truncation radius
        (divergent tail), or on invalid parameters.
    """
    hess_w_norm = _finite("hess_w_norm", hess_w_norm)
    if hess_w_norm < 0:
        raise ValueError("hess_w_norm must be nonnegative")
    if hess_w_norm == 0.0:
        return R0Estimate(value=0.0, tail_bound=0.0, radius=radius)
    if step <= 0 or radius <= step:
        raise ValueError("need 0 < step < radius")

    t = np.arange(0.0, radius + 0.5 * step, step)
    bvals = np.asarray(b0(t), dtype=float)
    if bvals.shape != t.shape:
        bvals = np.broadcast_to(bvals, t.shape)
    if not np.all(np.isfinite(bvals)):
        raise ValueError("b0 produced non-finite values on the quadrature grid")
    inner = np.concatenate([[0.0], np.cumsum(0.5 * (bvals[1:] + bvals[:-1]) * step)])
    integrand = np.exp(0.25 * inner)
    outer = float(np.trapezoid(integrand, dx=step))

    # Geometric tail bound from the decay rate over the last grid cell.
    g_end, g_prev = integrand[-1], integrand[-2]
    if not g_end < g_prev:
        raise ValueError(
            f"integrand not decreasing at truncation radius {radius}; "
            "increase radius or check that b0 drives the exponent to -inf"
        )
    decay = -math.log(g_end / g_prev) / step
    tail = g_end / decay

    quarter_norm = 0.25 * hess_w_norm
    return R0Estimate(value=quarter_norm * outer, tail_bound=quarter_norm * tail, radius=radius)
