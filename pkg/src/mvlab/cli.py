"""Config-driven experiment runner.

Subcommands
-----------
``simulate``          particle run with oracle/metric time series and rate fits
``coupled``           steering-coupling entropy-bound checks over horizon/shift grids
``rates``             table of every closed-form rate constant for given parameters
``energy``            free-energy report and grid minimization for a Gaussian input
``metrics-selftest``  internal consistency battery for the metric estimators

All commands take ``--config PATH`` (JSON, ``"schema": 1``) plus optional
``--seed`` and ``--out`` overrides.  Outputs are CSV (header row, 17
significant digits, LF line endings) and JSON reports embedding the seed and
a hash of the effective config; reruns with identical config and seed are
byte-identical.  Exit codes: 0 pass, 2 assumption-gate failure, 1 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from . import rng
from .coupling import NotControllable, kalman_rank, kinetic_linear_system, log_harnack_check
from .energy import free_energy, mean_field_entropy
from .gaussian import (
    GaussianMeasure,
    gaussian_entropy,
    gaussian_w2,
    sample_gaussian,
    stationary_measure,
)
from .metrics import Euclidean, PsiB, PsiBar, entropy_knn, psi_bar, w2_brute, w2_empirical
from .models import (
    GranularModel,
    KineticModel,
    MeanAttraction,
    QuadraticPair,
    QuadraticPotential,
    DoubleWellPotential,
    granular_rate_condition,
    kinetic_rate_condition,
)
from .particles import EmpiricalMeasure, SimConfig, simulate, simulate_pair
from .rates import RateConstants, fit_exp_rate, kappa, theta_pair, twist_constants, uniform_lsi_rate

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_GATE = 2

_METRICS = ("w2", "entropy_knn", "psi_bar", "energy")


class ConfigError(ValueError):
    """Invalid experiment config; message lists offending field paths."""


# ---------------------------------------------------------------------------
# config loading / validation


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _get(cfg: dict, path: str, key: str, kind, required=True, default=None):
    if key not in cfg:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required field")
        return default
    val = cfg[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is not None and not isinstance(val, kind):
        _fail(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return val


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if cfg.get("schema") != 1:
        _fail("schema", f"unsupported schema version {cfg.get('schema')!r} (expected 1)")
    return cfg


def _gaussian_from(cfg: dict, path: str, dim: int) -> GaussianMeasure:
    mean = _get(cfg, path, "mean", list)
    cov = _get(cfg, path, "cov", list)
    try:
        g = GaussianMeasure(mean=np.asarray(mean, dtype=float), cov=np.asarray(cov, dtype=float))
    except (ValueError, TypeError) as exc:
        _fail(path, str(exc))
    if g.dim != dim:
        _fail(path, f"dimension {g.dim} != model dimension {dim}")
    return g


def build_model(cfg: dict):
    mcfg = _get(cfg, "", "model", dict)
    kind = _get(mcfg, "model", "kind", str)
    if kind == "granular":
        dim = _get(mcfg, "model", "dimension", int)
        pot = _get(mcfg, "model", "potential", dict)
        pkind = _get(pot, "model.potential", "kind", str)
        if pkind == "quadratic":
            potential = QuadraticPotential(_get(pot, "model.potential", "curvature", float))
        elif pkind == "double_well":
            potential = DoubleWellPotential(
                quartic=_get(pot, "model.potential", "quartic", float),
                quadratic=_get(pot, "model.potential", "quadratic", float),
            )
        else:
            _fail("model.potential.kind", f"unknown potential {pkind!r}")
        icfg = _get(mcfg, "model", "interaction", dict)
        ikind = _get(icfg, "model.interaction", "kind", str)
        if ikind != "quadratic_pair":
            _fail("model.interaction.kind", f"granular models take 'quadratic_pair', got {ikind!r}")
        interaction = QuadraticPair(_get(icfg, "model.interaction", "strength", float))
        diffusion = mcfg.get("diffusion", 1.0)
        try:
            return GranularModel(
                potential=potential,
                interaction=interaction,
                diffusion=np.asarray(diffusion, dtype=float),
                dimension=dim,
            )
        except ValueError as exc:
            _fail("model", str(exc))
    elif kind == "kinetic":
        d1 = _get(mcfg, "model", "d1", int)
        d2 = _get(mcfg, "model", "d2", int)
        b = _get(mcfg, "model", "b_matrix", list)
        beta = _get(mcfg, "model", "friction", float)
        icfg = _get(mcfg, "model", "interaction", dict)
        ikind = _get(icfg, "model.interaction", "kind", str)
        if ikind != "mean_attraction":
            _fail("model.interaction.kind", f"kinetic models take 'mean_attraction', got {ikind!r}")
        theta = _get(icfg, "model.interaction", "strength", float)
        try:
            return KineticModel(
                d1=d1,
                d2=d2,
                b_matrix=np.asarray(b, dtype=float),
                friction=beta,
                interaction=MeanAttraction(theta),
            )
        except ValueError as exc:
            _fail("model", str(exc))
    _fail("model.kind", f"unknown model kind {kind!r}")


def effective_config(cfg: dict, seed_override: Optional[int], out_override: Optional[str]) -> dict:
    eff = dict(cfg)
    if seed_override is not None:
        eff["seed"] = seed_override
    if "seed" not in eff:
        _fail("seed", "missing required field (mandatory seed)")
    rng.check_seed(_get(eff, "", "seed", int))
    if out_override is not None:
        eff["out_dir"] = out_override
    if "out_dir" not in eff:
        _fail("out_dir", "missing required field (or pass --out)")
    return eff


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "out_dir"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# deterministic writers


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _atomic_write(path: str, data: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_svg_chart(path: str, times, values, title: str) -> None:
    """Minimal static line chart (600x380 viewBox, linear axes)."""
    pts = [(t, v) for t, v in zip(times, values) if v is not None and math.isfinite(v)]
    width, height, margin = 600.0, 380.0, 50.0
    if len(pts) < 2:
        _atomic_write(path, f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:g} {height:g}"/>\n')
        return
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    xspan = (x1 - x0) or 1.0
    yspan = (y1 - y0) or 1.0

    def sx(x):
        return margin + (x - x0) / xspan * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / yspan * (height - 2 * margin)

    poly = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in pts)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:g} {height:g}">',
        f'<text x="{margin:g}" y="24" font-size="14">{title}</text>',
        f'<line x1="{margin:g}" y1="{height - margin:g}" x2="{width - margin:g}" '
        f'y2="{height - margin:g}" stroke="black"/>',
        f'<line x1="{margin:g}" y1="{margin:g}" x2="{margin:g}" y2="{height - margin:g}" '
        'stroke="black"/>',
        f'<text x="{margin:g}" y="{height - margin + 18:g}" font-size="10">{x0:.6g}</text>',
        f'<text x="{width - margin:g}" y="{height - margin + 18:g}" font-size="10" '
        f'text-anchor="end">{x1:.6g}</text>',
        f'<text x="{margin - 4:g}" y="{height - margin:g}" font-size="10" '
        f'text-anchor="end">{y0:.6g}</text>',
        f'<text x="{margin - 4:g}" y="{margin:g}" font-size="10" text-anchor="end">{y1:.6g}</text>',
        f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="1.5"/>',
        "</svg>",
    ]
    _atomic_write(path, "\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# theory helpers


def _theory_granular(model: GranularModel):
    lam = model.potential.hessian_lower
    inter = model.interaction
    gate = granular_rate_condition(lam, inter.hessian_lower, inter.hessian_norm)
    constants = RateConstants(rate_granular=gate.margin)
    return gate, constants


def _theory_kinetic(model: KineticModel):
    beta = model.friction
    theta = model.interaction.strength
    gate = kinetic_rate_condition(beta, theta)
    th1, th2 = theta_pair(beta, theta)
    a, r, ac3 = twist_constants(beta)
    constants = RateConstants(
        kappa=kappa(beta, th1, th2),
        a_twist=a,
        r_twist=r,
        ac3_const=ac3,
        theta1=th1,
        theta2=th2,
    )
    return gate, constants


def _try_fit(times, values, window):
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v) & (v > 0)
    if window is not None:
        keep &= (t >= window[0]) & (t <= window[1])
    if keep.sum() < 3:
        return None, f"only {int(keep.sum())} positive points in window"
    try:
        fit = fit_exp_rate(t[keep], v[keep], window=(float(t[keep].min()), float(t[keep].max())))
    except ValueError as exc:
        return None, str(exc)
    return fit, None


# ---------------------------------------------------------------------------
# simulate subcommand


def run_convergence(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    seed = cfg["seed"]
    model = build_model(cfg)
    scfg = _get(cfg, "", "sim", dict)
    n_particles = _get(scfg, "sim", "particles", int)
    if n_particles < 2:
        _fail("sim.particles", "interacting models need at least 2 particles")
    try:
        sim_cfg = SimConfig(
            dt=_get(scfg, "sim", "dt", float),
            horizon=_get(scfg, "sim", "horizon", float),
            seed=seed,
            record_every=_get(scfg, "sim", "record_every", int, required=False, default=1),
        )
    except ValueError as exc:
        _fail("sim", str(exc))

    metrics = _get(cfg, "", "metrics", list, required=False, default=["w2"])
    for m in metrics:
        if m not in _METRICS:
            _fail("metrics", f"unknown metric {m!r} (choose from {_METRICS})")
    pair_mode = "init_pair" in cfg
    if "psi_bar" in metrics:
        if not isinstance(model, KineticModel):
            _fail("metrics", "psi_bar applies to kinetic models only")
        if not pair_mode:
            _fail("metrics", "psi_bar needs an init_pair block (synchronous pair run)")
    if "energy" in metrics and not isinstance(model, GranularModel):
        _fail("metrics", "energy applies to granular quadratic models only")

    dim = model.dimension
    init_spec = _gaussian_from(_get(cfg, "", "init", dict), "init", dim)
    init = EmpiricalMeasure(sample_gaussian(init_spec, n_particles, seed, rng.STREAM_INIT))

    use_oracle = bool(cfg.get("oracle", True))
    gate, constants = (
        _theory_granular(model) if isinstance(model, GranularModel) else _theory_kinetic(model)
    )

    try:
        stationary = stationary_measure(model)
    except (ValueError, TypeError) as exc:
        stationary = None
        stationary_note = str(exc)
    else:
        stationary_note = None

    reference = None
    if stationary is not None:
        reference = EmpiricalMeasure(
            sample_gaussian(stationary, n_particles, seed, rng.STREAM_REFERENCE)
        )

    if pair_mode:
        pair_spec = _gaussian_from(_get(cfg, "", "init_pair", dict), "init_pair", dim)
        init2 = EmpiricalMeasure(
            sample_gaussian(pair_spec, n_particles, seed, rng.STREAM_PAIR_INIT)
        )
        traj, traj2 = simulate_pair(model, init, init2, sim_cfg)
    else:
        traj, traj2 = simulate(model, init, sim_cfg), None

    w2_cap = _get(cfg, "", "w2_subsample", int, required=False, default=512)
    knn_k = _get(cfg, "", "knn_k", int, required=False, default=5)

    header = ["t"]
    if "w2" in metrics:
        header.append("w2_emp")
        if use_oracle and stationary is not None:
            header.append("w2_oracle")
    if "entropy_knn" in metrics:
        header.append("ent_knn")
        if use_oracle and stationary is not None:
            header.append("ent_oracle")
    if pair_mode and "psi_bar" in metrics:
        header.append("psi_bar_sq_mean")
    if "energy" in metrics:
        header.append("mf_entropy")

    if isinstance(model, KineticModel):
        a_tw, r_tw, _ = twist_constants(model.friction)

    rows = []
    for idx, t in enumerate(traj.times):
        snap = traj.snapshots[idx]
        row = [float(t)]
        fitted = None
        if use_oracle or "energy" in metrics:
            fitted = GaussianMeasure(mean=snap.mean, cov=snap.cov())
        if "w2" in metrics:
            if reference is not None:
                k = min(snap.n, w2_cap)
                sub_p = EmpiricalMeasure(snap.points[:k])
                sub_q = EmpiricalMeasure(reference.points[:k])
                row.append(w2_empirical(sub_p, sub_q))
            else:
                row.append(None)
            if use_oracle and stationary is not None:
                row.append(gaussian_w2(fitted, stationary))
        if "entropy_knn" in metrics:
            row.append(entropy_knn(snap, reference, k=knn_k) if reference is not None else None)
            if use_oracle and stationary is not None:
                row.append(gaussian_entropy(fitted, stationary))
        if pair_mode and "psi_bar" in metrics:
            d1 = model.d1
            p1, p2 = snap.points, traj2.snapshots[idx].points
            vals = psi_bar(
                (p1[:, :d1], p1[:, d1:]),
                (p2[:, :d1], p2[:, d1:]),
                model.b_matrix,
                a_tw,
                r_tw,
            )
            row.append(float(np.mean(vals**2)))
        if "energy" in metrics:
            row.append(mean_field_entropy(fitted, model.potential, model.interaction))
        rows.append(row)

    window = cfg.get("fit_window")
    if window is not None:
        window = (float(window[0]), float(window[1]))
    tol = _get(cfg, "", "rate_tolerance", float, required=False, default=0.1)

    columns = {name: [r[i] for r in rows] for i, name in enumerate(header)}
    fits, notes = {}, {}
    for name in header[1:]:
        fit, note = _try_fit(columns["t"], columns[name], window)
        if fit is not None:
            fits[name] = fit.to_dict()
        else:
            notes[name] = note

    # Reference decay exponents per column: unsquared distances decay at the
    # gate rate, squared quantities and entropies at twice it (kinetic pair
    # contraction: 2 kappa for the squared twisted metric).
    comparisons = {}
    if gate.satisfied:
        refs = {}
        if isinstance(model, GranularModel):
            refs = {
                "w2_emp": gate.margin,
                "w2_oracle": gate.margin,
                "ent_knn": gate.margin,
                "ent_oracle": gate.margin,
                "mf_entropy": gate.margin,
            }
        else:
            refs = {"psi_bar_sq_mean": 2.0 * constants.kappa}
        for name, ref in refs.items():
            if name in fits:
                fitted_rate = fits[name]["rate"]
                comparisons[name] = {
                    "fitted_rate": fitted_rate,
                    "reference_rate": ref,
                    "margin": fitted_rate - ref,
                    "pass": bool(fitted_rate >= ref * (1.0 - tol)),
                }

    report = {
        "schema": 1,
        "command": "simulate",
        "config_hash": config_hash(cfg),
        "seed": seed,
        "gate": gate.to_dict(),
        "no_theoretical_guarantee": not gate.satisfied,
        "theory": constants.to_dict(),
        "stationary_note": stationary_note,
        "fits": fits,
        "fit_notes": notes,
        "comparisons": comparisons,
        "final_moments": {
            "mean": traj.final.mean.tolist(),
            "cov": traj.final.cov().tolist(),
        },
    }
    write_csv(os.path.join(out_dir, "convergence.csv"), header, rows)
    write_json(os.path.join(out_dir, "report.json"), report)
    if cfg.get("plots", False):
        for name in header[1:]:
            write_svg_chart(
                os.path.join(out_dir, f"plot_{name}.svg"), columns["t"], columns[name], name
            )
    return EXIT_PASS if gate.satisfied else EXIT_GATE


# ---------------------------------------------------------------------------
# coupled subcommand


def run_coupling(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    seed = cfg["seed"]
    model = build_model(cfg)
    if not isinstance(model, KineticModel):
        _fail("model.kind", "the coupled command needs a kinetic model")
    ccfg = _get(cfg, "", "coupling", dict)
    horizons = [float(v) for v in _get(ccfg, "coupling", "horizons", list)]
    shifts = [float(v) for v in _get(ccfg, "coupling", "mean_shifts", list)]
    dt = _get(ccfg, "coupling", "dt", float)
    n_paths = _get(ccfg, "coupling", "n_paths", int)
    system = kinetic_linear_system(model)

    try:
        rank, depth = kalman_rank(system.a_matrix, system.b_matrix)
    except NotControllable as exc:
        write_json(
            os.path.join(out_dir, "coupling_report.json"),
            {
                "schema": 1,
                "command": "coupled",
                "config_hash": config_hash(cfg),
                "seed": seed,
                "gate": {"satisfied": False, "detail": str(exc)},
            },
        )
        return EXIT_GATE

    if "base" in ccfg:
        base = _gaussian_from(ccfg["base"], "coupling.base", model.dimension)
    else:
        base = stationary_measure(model)

    runs = []
    for horizon in horizons:
        for shift in shifts:
            mean_mu = base.mean.copy()
            mean_mu[0] += shift
            mu = GaussianMeasure(mean=mean_mu, cov=base.cov.copy())
            rep = log_harnack_check(system, mu, base, horizon, dt, seed, n_paths)
            record = {"horizon": horizon, "mean_shift": shift}
            record.update(rep.to_dict())
            runs.append(record)
            write_csv(
                os.path.join(out_dir, f"xi_T{horizon:g}_shift{shift:g}.csv"),
                ["t", "xi_sq_mean"],
                [[t, v] for t, v in zip(rep.run.xi_times, rep.run.xi_sq_mean)],
            )

    scaling = {}
    if len(horizons) >= 2:
        for shift in shifts:
            if shift == 0.0:
                continue
            pts = [(r["horizon"], r["rhs_cost"]) for r in runs if r["mean_shift"] == shift]
            if all(c > 0 for _, c in pts):
                logt = np.log([p[0] for p in pts])
                logc = np.log([p[1] for p in pts])
                slope = float(np.polyfit(logt, logc, 1)[0])
                scaling[f"shift_{shift:g}"] = {
                    "exponent": slope,
                    "reference_exponent": -(4 * depth - 1),
                }

    report = {
        "schema": 1,
        "command": "coupled",
        "config_hash": config_hash(cfg),
        "seed": seed,
        "gate": {"satisfied": True, "rank": rank, "depth": depth},
        "runs": runs,
        "t_scaling": scaling,
        "all_passed": all(r["passed"] for r in runs),
    }
    write_json(os.path.join(out_dir, "coupling_report.json"), report)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# rates subcommand


def run_rates(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    rcfg = _get(cfg, "", "rates", dict)
    table: dict = {}
    gates: dict = {}

    beta = rcfg.get("beta")
    theta = rcfg.get("theta")
    th1, th2 = rcfg.get("theta1"), rcfg.get("theta2")
    if beta is not None:
        a, r, ac3 = twist_constants(float(beta))
        table.update({"a_twist": a, "r_twist": r, "ac3_const": ac3})
        if theta is not None:
            th1, th2 = theta_pair(float(beta), float(theta))
            gate = kinetic_rate_condition(float(beta), float(theta))
            gates["kinetic_interaction"] = gate.to_dict()
        if th1 is not None and th2 is not None:
            k_val = kappa(float(beta), float(th1), float(th2))
            table.update(
                {"theta1": th1, "theta2": th2, "kappa": k_val, "kappa_positive": k_val > 0}
            )

    if all(k in rcfg for k in ("lambda", "delta1", "delta2")):
        gate = granular_rate_condition(
            float(rcfg["lambda"]), float(rcfg["delta1"]), float(rcfg["delta2"])
        )
        gates["granular_rate"] = gate.to_dict()
        table["rate_granular"] = gate.margin

    if "k1" in rcfg and "k2" in rcfg:
        diff = float(rcfg["k2"]) - float(rcfg["k1"])
        table["rate_nondegenerate_sq"] = diff
        table["rate_nondegenerate_w2"] = 0.5 * diff

    if "r0" in rcfg:
        r0 = float(rcfg["r0"])
        lam_a = float(rcfg.get("lambda_a", 1.0))
        beta_ls = float(rcfg.get("beta_ls", 1.0))
        try:
            rate = uniform_lsi_rate(lam_a, beta_ls, r0)
        except ValueError as exc:
            write_json(
                os.path.join(out_dir, "rates.json"),
                {
                    "schema": 1,
                    "command": "rates",
                    "config_hash": config_hash(cfg),
                    "seed": cfg["seed"],
                    "gate": {"satisfied": False, "detail": str(exc)},
                    "constants": table,
                },
            )
            print(f"assumption gate: {exc}", file=sys.stderr)
            return EXIT_GATE
        table["rate_uniform_lsi"] = rate
        table["talagrand_const"] = 2.0 / (beta_ls * (1.0 - r0) ** 2)

    report = {
        "schema": 1,
        "command": "rates",
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "constants": table,
        "gates": gates,
    }
    write_json(os.path.join(out_dir, "rates.json"), report)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# energy subcommand


def run_energy(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    model = build_model(cfg)
    if not isinstance(model, GranularModel) or not isinstance(model.potential, QuadraticPotential):
        _fail("model", "the energy command needs a granular model with quadratic potential")
    mu = _gaussian_from(_get(cfg, "", "init", dict), "init", model.dimension)
    rep = free_energy(mu, model.potential, model.interaction)
    mfe = mean_field_entropy(mu, model.potential, model.interaction)

    k = model.potential.curvature + model.interaction.strength
    sigma_star = 1.0 / k
    gcfg = cfg.get("energy_grid", {})
    lo = float(gcfg.get("min", 0.2 * sigma_star))
    hi = float(gcfg.get("max", 3.0 * sigma_star))
    points = int(gcfg.get("points", 241))
    grid = np.linspace(lo, hi, points)
    totals = []
    for s2 in grid:
        g = GaussianMeasure(mean=np.zeros(model.dimension), cov=s2 * np.eye(model.dimension))
        totals.append(free_energy(g, model.potential, model.interaction).total)
    argmin = float(grid[int(np.argmin(totals))])

    stationary = stationary_measure(model)
    report = {
        "schema": 1,
        "command": "energy",
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "input": rep.to_dict(),
        "mean_field_entropy": mfe,
        "grid": {"min": lo, "max": hi, "points": points, "argmin_variance": argmin},
        "stationary_variance": sigma_star,
        "mean_field_entropy_at_stationary": mean_field_entropy(
            stationary, model.potential, model.interaction
        ),
    }
    write_json(os.path.join(out_dir, "energy.json"), report)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# metrics-selftest subcommand


def run_selftest(seed: int, out_dir: str) -> int:
    checks = []
    gen = rng.generator(seed, rng.STREAM_SELFTEST)

    exact, trials = 0, 60
    for _ in range(trials):
        n = int(gen.integers(2, 8))
        d = int(gen.integers(1, 4))
        p = EmpiricalMeasure(gen.standard_normal((n, d)))
        q = EmpiricalMeasure(gen.standard_normal((n, d)))
        if w2_empirical(p, q) == w2_brute(p, q):
            exact += 1
    checks.append(
        {
            "name": "w2_assignment_equals_bruteforce",
            "passed": exact == trials,
            "detail": f"{exact}/{trials} exact matches",
        }
    )

    worst = 0.0
    for _ in range(20):
        clouds = [EmpiricalMeasure(gen.standard_normal((6, 2))) for _ in range(3)]
        dpq = w2_empirical(clouds[0], clouds[1])
        dqr = w2_empirical(clouds[1], clouds[2])
        dpr = w2_empirical(clouds[0], clouds[2])
        worst = max(worst, dpr - (dpq + dqr))
    checks.append(
        {
            "name": "w2_triangle_inequality",
            "passed": worst <= 1e-9,
            "detail": f"worst violation {worst:.3e}",
        }
    )

    worst_ratio = 0.0
    for beta in (0.5, 1.0, 2.0):
        a, r, c = twist_constants(beta)
        dx = gen.standard_normal((2000, 1))
        dy = gen.standard_normal((2000, 1))
        zero = np.zeros_like(dx)
        tw = psi_bar((dx, dy), (zero, zero), np.eye(1), a, r) ** 2
        plain = dx[:, 0] ** 2 + dy[:, 0] ** 2
        worst_ratio = max(worst_ratio, float(np.max(tw / (c * plain))))
    checks.append(
        {
            "name": "twisted_metric_dominated_by_constant",
            "passed": worst_ratio <= 1.0 + 1e-12,
            "detail": f"max ratio {worst_ratio:.12f}",
        }
    )

    n = 4000
    p = EmpiricalMeasure(gen.standard_normal((n, 1)) + 1.0)
    q = EmpiricalMeasure(gen.standard_normal((n, 1)))
    est = entropy_knn(p, q, k=5)
    checks.append(
        {
            "name": "knn_entropy_mean_shift",
            "passed": abs(est - 0.5) <= 0.12,
            "detail": f"estimate {est:.4f} vs 0.5",
        }
    )

    ok = True
    for m in np.linspace(-2, 2, 9):
        for s2 in np.linspace(0.25, 4.0, 9):
            pg = GaussianMeasure(mean=[m], cov=[[s2]])
            ref = GaussianMeasure(mean=[0.0], cov=[[1.0]])
            if gaussian_w2(pg, ref) ** 2 > 2.0 * gaussian_entropy(pg, ref) + 1e-12:
                ok = False
    checks.append({"name": "gaussian_talagrand", "passed": ok, "detail": "W2^2 <= 2 Ent grid"})

    report = {
        "schema": 1,
        "command": "metrics-selftest",
        "seed": seed,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }
    write_json(os.path.join(out_dir, "selftest.json"), report)
    return EXIT_PASS if report["all_passed"] else EXIT_ERROR


# ---------------------------------------------------------------------------
# entry point


def _add_common(sub):
    sub.add_argument("--config", required=True, help="path to the JSON experiment config")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default=None, help="override the config output directory")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mvlab", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "coupled", "rates", "energy"):
        _add_common(subs.add_parser(name))
    st = subs.add_parser("metrics-selftest")
    st.add_argument("--seed", type=int, required=True)
    st.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    try:
        if args.command == "metrics-selftest":
            return run_selftest(rng.check_seed(args.seed), args.out)
        cfg = effective_config(load_config(args.config), args.seed, args.out)
        if args.command == "simulate":
            return run_convergence(cfg)
        if args.command == "coupled":
            return run_coupling(cfg)
        if args.command == "rates":
            return run_rates(cfg)
        if args.command == "energy":
            return run_energy(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, RuntimeError, NotControllable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
