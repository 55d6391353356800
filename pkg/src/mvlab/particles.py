"""N-particle mean-field simulation with deterministic, counter-based noise.

The interacting system is advanced by explicit Euler-Maruyama; mean-field
terms always use the pre-step particle snapshot, so the per-particle updates
within one step are independent and parallelizable.  Noise for step ``k`` is
the (seed, stream, k) block from :mod:`mvlab.rng` with row ``i`` owned by
particle ``i``, which makes trajectories reproducible bit-for-bit and
exchangeable under matched permutations of particles and noise rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng
from .models import GranularModel, KineticModel, drift_granular, drift_kinetic

__all__ = [
    "EmpiricalMeasure",
    "SimConfig",
    "Trajectory",
    "ParticleBlowUp",
    "em_step",
    "simulate",
    "simulate_pair",
    "moment_summary",
    "snapshot_to_csv",
]


class ParticleBlowUp(RuntimeError):
    """A particle reached a non-finite state (drift blow-up)."""

    def __init__(self, particle: int, step: Optional[int] = None):
        self.particle = particle
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite state for particle {particle}{where}")


@dataclass(eq=False)
class EmpiricalMeasure:
    """Equal-weight cloud of N points in R^d, stored as an (N, d) array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError(f"points must be (N, d) with N >= 1, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.argwhere(~np.isfinite(pts).all(axis=1))[0, 0])
            raise ParticleBlowUp(bad)
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def cov(self) -> np.ndarray:
        if self.n < 2:
            raise ValueError("need at least 2 particles for a covariance")
        return np.atleast_2d(np.cov(self.points, rowvar=False, ddof=1))


@dataclass(frozen=True)
class SimConfig:
    """Time stepping and seeding; the particle count lives in the initial cloud."""

    dt: float
    horizon: float
    seed: int
    record_every: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if self.horizon < self.dt:
            raise ValueError("horizon must be >= dt")
        rng.check_seed(self.seed)
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.horizon / self.dt - 1e-12)


@dataclass(eq=False)
class Trajectory:
    """Recorded snapshots of one simulation run."""

    times: np.ndarray
    snapshots: list[EmpiricalMeasure]
    seed: int

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size != len(self.snapshots):
            raise ValueError("times and snapshots disagree in length")
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")

    @property
    def final(self) -> EmpiricalMeasure:
        return self.snapshots[-1]


def em_step(model, state: EmpiricalMeasure, dt: float, noise: np.ndarray) -> EmpiricalMeasure:
    """One explicit Euler-Maruyama step of the N-particle system.

    ``noise`` must be an (N, d) block of standard normals matching the state;
    the kinetic model feeds noise into the velocity block only, its position
    columns are ignored.  Mean-field quantities come from the pre-step state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pts = state.points
    noise = np.asarray(noise, dtype=float)
    if noise.shape != pts.shape:
        raise ValueError(f"noise shape {noise.shape} != state shape {pts.shape}")

    if isinstance(model, GranularModel):
        drift = drift_granular(model, pts, state)
        new = pts + drift * dt + math.sqrt(dt) * (noise @ model.noise_scale.T)
    elif isinstance(model, KineticModel):
        d1 = model.d1
        x, y = pts[:, :d1], pts[:, d1:]
        dx, dy = drift_kinetic(model, (x, y), state)
        new_x = x + dx * dt
        new_y = y + dy * dt + math.sqrt(2.0 * dt) * noise[:, d1:]
        new = np.hstack([new_x, new_y])
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")

    finite = np.isfinite(new).all(axis=1)
    if not finite.all():
        raise ParticleBlowUp(int(np.argmin(finite)))
    return EmpiricalMeasure(new)


def _check_init(model, init: EmpiricalMeasure) -> None:
    dim = model.dimension
    if init.dim != dim:
        raise ValueError(f"initial cloud dimension {init.dim} != model dimension {dim}")


def _record_steps(cfg: SimConfig) -> list[int]:
    steps = list(range(0, cfg.n_steps + 1, cfg.record_every))
    if steps[-1] != cfg.n_steps:
        steps.append(cfg.n_steps)
    return steps


def simulate(model, init: EmpiricalMeasure, cfg: SimConfig) -> Trajectory:
    """March the particle system to the horizon, recording periodic snapshots.

    The result is a deterministic function of ``(seed, cfg, model, init)``.
    """
    _check_init(model, init)
    record = set(_record_steps(cfg))
    times, snaps = [0.0], [init]
    state = init
    for k in range(cfg.n_steps):
        noise = rng.normals(cfg.seed, rng.STREAM_SIM, k, state.points.shape)
        try:
            state = em_step(model, state, cfg.dt, noise)
        except ParticleBlowUp as exc:
            raise ParticleBlowUp(exc.particle, step=k) from None
        if (k + 1) in record:
            times.append((k + 1) * cfg.dt)
            snaps.append(state)
    return Trajectory(times=np.asarray(times), snapshots=snaps, seed=cfg.seed)


def simulate_pair(model, init1: EmpiricalMeasure, init2: EmpiricalMeasure,
                  cfg: SimConfig) -> tuple[Trajectory, Trajectory]:
    """Synchronous coupling: two copies driven by the identical noise stream.

    Paired-particle distances between the returned trajectories are the raw
    material for contraction-rate fits.
    """
    _check_init(model, init1)
    _check_init(model, init2)
    if init1.n != init2.n:
        raise ValueError("paired clouds must have equal particle counts")
    record = set(_record_steps(cfg))
    times = [0.0]
    snaps1, snaps2 = [init1], [init2]
    s1, s2 = init1, init2
    for k in range(cfg.n_steps):
        noise = rng.normals(cfg.seed, rng.STREAM_SIM, k, s1.points.shape)
        try:
            s1 = em_step(model, s1, cfg.dt, noise)
            s2 = em_step(model, s2, cfg.dt, noise)
        except ParticleBlowUp as exc:
            raise ParticleBlowUp(exc.particle, step=k) from None
        if (k + 1) in record:
            times.append((k + 1) * cfg.dt)
            snaps1.append(s1)
            snaps2.append(s2)
    t = np.asarray(times)
    return (
        Trajectory(times=t, snapshots=snaps1, seed=cfg.seed),
        Trajectory(times=t.copy(), snapshots=snaps2, seed=cfg.seed),
    )


def moment_summary(measure: EmpiricalMeasure) -> dict:
    """JSON-compatible first/second moment record of a cloud."""
    out = {
        "n": measure.n,
        "dim": measure.dim,
        "mean": measure.mean.tolist(),
    }
    if measure.n >= 2:
        out["cov"] = measure.cov().tolist()
    return out


def snapshot_to_csv(measure: EmpiricalMeasure, path) -> None:
    """Write one row per particle with columns x_1..x_d."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{j + 1}" for j in range(measure.dim)])
        for row in measure.points:
            writer.writerow([format(v, ".17g") for v in row])
