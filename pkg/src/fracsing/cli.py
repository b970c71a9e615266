"""Experiment harness: JSON configs in, CSV tables and SVG/PNG plots out.

Each experiment validates its configuration against the library
preconditions, runs the corresponding module, writes delimited tables with
fixed headers, renders every plot twice (a hand-emitted SVG and a
matplotlib PNG next to it), and serializes an ExperimentReport to
report.json.  Reruns with the same config and seed produce byte-identical
CSV files.  Exit codes: 0 all checks pass, 1 a check failed, 2 config or
runtime error.
"""

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .params import FracParams, critical_exponents
from .kernels import martin_ball
from .sphere_ops import LatGrid, b_const, b_kernel, c35, radial_kernel_K
from .eigen import lambda_sweep
from .separable import (constant_profile, hemisphere_profile,
                        nonexistence_check, profile_beta)
from .ball_solver import (DEFAULT_PROBES, DiscMesh, GreenOperator, Z_ATOM,
                          k_sweep, solve_uk)
from .trace_diag import gmp_bound_check, level_set_integral, strace_fit

__all__ = ["ConfigError", "ExperimentReport", "emit_svg", "run", "main"]

EXPERIMENTS = ("kernels", "eigen-sweep", "profile", "solve-ball", "k-sweep",
               "trace-check", "gmp-check")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


class ConfigError(ValueError):
    """Config rejected before dispatch; carries field-level messages."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


@dataclass
class ExperimentReport:
    """Everything one run produced, serialized losslessly to report.json."""

    experiment: str
    config: dict
    results: dict
    checks: dict
    passed: bool
    wall_clock_s: float
    artifacts: list

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(**data)


# ----------------------------------------------------------------------
# plot emission


def emit_svg(curves, axes=("linear", "linear"), title="", xlabel="x",
             ylabel="y") -> str:
    """Self-contained SVG line chart of labeled curves.

    Parameters
    ----------
    curves : sequence of (label, points)
        At least one curve; each points entry is an (n, 2) array-like with
        n >= 2 rows of finite (x, y).
    axes : (str, str) or str, optional
        Scale per axis, "linear" or "log"; a single string applies to both.
    title, xlabel, ylabel : str, optional

    Returns
    -------
    str
        SVG document with one polyline per curve, axis ticks, and a legend.

    Raises
    ------
    ValueError
        No curves, a curve with fewer than two points, a non-finite
        coordinate (reported with its index), or a non-positive coordinate
        on a log axis (reported with its point).
    """
    curves = list(curves)
    if not curves:
        raise ValueError("emit_svg needs at least one curve")
    if isinstance(axes, str):
        axes = (axes, axes)
    for ax in axes:
        if ax not in ("linear", "log"):
            raise ValueError(
                f"axis scale must be 'linear' or 'log', got {ax!r}")
    parsed = []
    for label, pts in curves:
        arr = np.asarray(pts, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"curve {label!r} must be (n, 2) points")
        if arr.shape[0] < 2:
            raise ValueError(f"curve {label!r} needs at least two points, "
                             f"got {arr.shape[0]}")
        bad = np.nonzero(~np.all(np.isfinite(arr), axis=1))[0]
        if bad.size:
            raise ValueError(
                f"curve {label!r} point {int(bad[0])} is not finite")
        for scale, col, name in ((axes[0], 0, "x"), (axes[1], 1, "y")):
            if scale == "log":
                neg = np.nonzero(arr[:, col] <= 0.0)[0]
                if neg.size:
                    i = int(neg[0])
                    raise ValueError(
                        f"curve {label!r} point {i} has {name} = "
                        f"{arr[i, col]:g}, which a log axis cannot show")
        parsed.append((str(label), arr))

    def coords(arr, col, scale):
        v = arr[:, col]
        return np.log10(v) if scale == "log" else v

    xs = [coords(arr, 0, axes[0]) for _, arr in parsed]
    ys = [coords(arr, 1, axes[1]) for _, arr in parsed]
    lo = [min(v.min() for v in xs), min(v.min() for v in ys)]
    hi = [max(v.max() for v in xs), max(v.max() for v in ys)]
    for d in (0, 1):
        if hi[d] <= lo[d]:
            lo[d], hi[d] = lo[d] - 0.5, hi[d] + 0.5
    width, height = 640, 420
    x0, x1, y0, y1 = 72.0, width - 18.0, height - 52.0, 34.0

    def sx(v):
        return x0 + (v - lo[0]) / (hi[0] - lo[0]) * (x1 - x0)

    def sy(v):
        return y0 - (v - lo[1]) / (hi[1] - lo[1]) * (y0 - y1)

    def ticks(d, scale):
        if scale == "log":
            decades = np.arange(math.ceil(lo[d] - 1e-9),
                                math.floor(hi[d] + 1e-9) + 1)
            step = max(1, int(math.ceil(decades.size / 6.0)))
            picked = decades[::step]
            if picked.size >= 2:
                return [(float(t), f"1e{int(t)}") for t in picked]
        vals = np.linspace(lo[d], hi[d], 5)
        if scale == "log":
            return [(float(t), f"{10.0 ** t:.3g}") for t in vals]
        return [(float(t), f"{t:.4g}") for t in vals]

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           '<g font-family="sans-serif" font-size="12" fill="#222">']
    if title:
        out.append(f'<text x="{0.5 * (x0 + x1):.1f}" y="20" '
                   f'text-anchor="middle">{title}</text>')
    out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0:.1f}" '
               f'height="{y0 - y1:.1f}" fill="none" stroke="#444"/>')
    for t, lab in ticks(0, axes[0]):
        px = sx(t)
        out.append(f'<line x1="{px:.1f}" y1="{y0:.1f}" x2="{px:.1f}" '
                   f'y2="{y0 + 5:.1f}" stroke="#444"/>')
        out.append(f'<text x="{px:.1f}" y="{y0 + 18:.1f}" '
                   f'text-anchor="middle">{lab}</text>')
    for t, lab in ticks(1, axes[1]):
        py = sy(t)
        out.append(f'<line x1="{x0 - 5:.1f}" y1="{py:.1f}" x2="{x0:.1f}" '
                   f'y2="{py:.1f}" stroke="#444"/>')
        out.append(f'<text x="{x0 - 8:.1f}" y="{py + 4:.1f}" '
                   f'text-anchor="end">{lab}</text>')
    out.append(f'<text x="{0.5 * (x0 + x1):.1f}" y="{height - 12}" '
               f'text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="16" y="{0.5 * (y0 + y1):.1f}" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{0.5 * (y0 + y1):.1f})">{ylabel}</text>')
    for i, (label, arr) in enumerate(parsed):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{sx(px):.2f},{sy(py):.2f}"
                       for px, py in zip(xs[i], ys[i]))
        out.append(f'<polyline fill="none" stroke="{color}" '
                   f'stroke-width="1.6" points="{pts}"/>')
        ly = y1 + 14 + 16 * i
        out.append(f'<line x1="{x1 - 120:.1f}" y1="{ly}" x2="{x1 - 96:.1f}" '
                   f'y2="{ly}" stroke="{color}" stroke-width="1.6"/>')
        out.append(f'<text x="{x1 - 90:.1f}" y="{ly + 4}">{label}</text>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


def _render_png(path, curves, axes, title, xlabel, ylabel):
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt
    if isinstance(axes, str):
        axes = (axes, axes)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=100)
    for i, (label, pts) in enumerate(curves):
        arr = np.asarray(pts, dtype=float)
        ax.plot(arr[:, 0], arr[:, 1], color=_PALETTE[i % len(_PALETTE)],
                label=str(label))
    ax.set_xscale(axes[0])
    ax.set_yscale(axes[1])
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _emit_plot(out, stem, curves, axes, title, xlabel, ylabel):
    svg = emit_svg(curves, axes=axes, title=title, xlabel=xlabel,
                   ylabel=ylabel)
    (out / f"{stem}.svg").write_text(svg)
    _render_png(out / f"{stem}.png", curves, axes, title, xlabel, ylabel)
    return [f"{stem}.svg", f"{stem}.png"]


def _native(obj):
    """Recursive numpy-to-builtin conversion for JSON serialization."""
    if isinstance(obj, dict):
        return {key: _native(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_native(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return [_native(val) for val in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _write_csv(out, name, header, columns):
    rows = np.column_stack([np.asarray(c, dtype=float).ravel()
                            for c in columns])
    lines = [header]
    for row in rows:
        lines.append(",".join("%.17g" % v for v in row))
    (out / name).write_text("\n".join(lines) + "\n")
    return [name]


# ----------------------------------------------------------------------
# config validation


class _Fields:
    """Collects typed fields from a raw config dict with per-field errors."""

    def __init__(self, raw):
        self.raw = dict(raw)
        self.errors = []
        self.clean = {}
        self.seen = {"experiment", "out", "seed"}

    def take(self, name, expect, conv, check=None, default=None,
             required=False):
        self.seen.add(name)
        if name not in self.raw or self.raw[name] is None:
            if required:
                self.errors.append(f"{name}: required field is missing "
                                   f"({expect})")
                return None
            self.clean[name] = default
            return default
        val = self.raw[name]
        try:
            val = conv(val)
            ok = check is None or check(val)
        except (TypeError, ValueError):
            ok = False
        if not ok:
            self.errors.append(f"{name}: expected {expect}, "
                               f"got {self.raw[name]!r}")
            return None
        self.clean[name] = val
        return val

    def reject_unknown(self):
        for key in sorted(set(self.raw) - self.seen):
            self.errors.append(f"{key}: unknown field for this experiment")


def _as_int(v):
    if isinstance(v, bool) or (isinstance(v, float)
                               and not float(v).is_integer()):
        raise ValueError(v)
    return int(v)


def _mesh_config(fields):
    fields.seen.add("mesh")
    raw = fields.raw.get("mesh", {})
    if not isinstance(raw, dict):
        fields.errors.append("mesh: expected an object with n_r, n_theta, "
                             "grading")
        return None
    sub = _Fields(raw)
    sub.seen = set()
    n_r = sub.take("n_r", "an integer >= 8", _as_int, lambda v: v >= 8,
                   default=32)
    n_theta = sub.take("n_theta", "an even integer >= 16", _as_int,
                       lambda v: v >= 16 and v % 2 == 0, default=64)
    grading = sub.take("grading", "a number >= 1", float, lambda v: v >= 1.0,
                       default=7.0)
    sub.reject_unknown()
    fields.errors.extend(f"mesh.{msg}" for msg in sub.errors)
    fields.clean["mesh"] = sub.clean
    return (n_r, n_theta, grading) if not sub.errors else None


def _take_params(fields, dims, s_lo):
    n = fields.take("n", f"an integer in {sorted(dims)}", _as_int,
                    lambda v: v in dims, default=2)
    s = fields.take("s", f"a number in ({s_lo}, 1)", float,
                    lambda v: s_lo < v < 1.0, default=0.75)
    if fields.errors or n is None or s is None:
        return None
    return FracParams(n=n, s=s)


def _take_solver_p(fields, params, default=None, required=False):
    if params is None:
        return fields.take("p", "a number", float, required=required,
                           default=default)
    p2 = critical_exponents(params).p2
    return fields.take(
        "p", f"a number in (0, {p2:.6g}) for this (N, s)", float,
        lambda v: 0.0 < v < p2, default=default, required=required)


def validate_config(config: dict) -> dict:
    """Typed, defaulted copy of a raw config dict.

    Raises
    ------
    ConfigError
        With one message per offending field.
    """
    if not isinstance(config, dict):
        raise ConfigError(["config: expected a JSON object"])
    experiment = config.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(
            [f"experiment: unknown experiment {experiment!r}; choose one "
             f"of {', '.join(EXPERIMENTS)}"])
    fields = _Fields(config)
    seed = fields.take("seed", "an integer in [0, 2**64)", _as_int,
                       lambda v: 0 <= v < 2 ** 64, default=0)
    out = config.get("out", f"out-{experiment}")
    if not isinstance(out, str) or not out:
        fields.errors.append("out: expected a nonempty path string")

    if experiment == "kernels":
        params = _take_params(fields, {2, 3}, 0.0)
        if params is not None:
            lo, hi = params.n - 2.0 * params.s, float(params.n)
            fields.take("beta", f"a number in ({lo:.6g}, {hi:.6g})", float,
                        lambda v: lo < v < hi, default=params.n - params.s)
        fields.take("n_samples", "an integer >= 16", _as_int,
                    lambda v: v >= 16, default=128)
    elif experiment == "eigen-sweep":
        params = _take_params(fields, {2, 3}, 0.0)
        fields.take("n_beta", "an integer >= 2", _as_int, lambda v: v >= 2,
                    default=20)
        fields.take("m", "an integer >= 3 (positive latitude nodes)",
                    _as_int, lambda v: v >= 3, default=48)
        fields.take("grading", "a number >= 1", float, lambda v: v >= 1.0,
                    default=2.0)
    elif experiment == "profile":
        params = _take_params(fields, {2, 3}, 0.0)
        if params is not None:
            crit = critical_exponents(params)
            fields.take(
                "p", f"a number in ({crit.p1:.6g}, {crit.p3:.6g}) for a "
                "profile classification", float,
                lambda v: crit.p1 < v < crit.p3, required=True)
        else:
            fields.take("p", "a number", float, required=True)
        fields.take("m", "an integer >= 3 (positive latitude nodes)",
                    _as_int, lambda v: v >= 3, default=48)
        fields.take("grading", "a number >= 1", float, lambda v: v >= 1.0,
                    default=2.0)
    elif experiment == "solve-ball":
        params = _take_params(fields, {2}, 0.5)
        _take_solver_p(fields, params, required=True)
        fields.take("k", "a nonnegative number", float, lambda v: v >= 0.0,
                    default=1.0)
        fields.take("theta", "a number in (0, 1]", float,
                    lambda v: 0.0 < v <= 1.0, default=0.5)
        fields.take("tol", "a positive number", float, lambda v: v > 0.0,
                    default=1e-6)
        _mesh_config(fields)
    elif experiment == "k-sweep":
        params = _take_params(fields, {2}, 0.5)
        _take_solver_p(fields, params, required=True)
        ks = fields.take(
            "ks", "a nonempty strictly increasing list of positive numbers",
            lambda v: [float(x) for x in v],
            lambda v: len(v) > 0 and all(x > 0.0 for x in v)
            and all(b > a for a, b in zip(v, v[1:])), required=True)
        fields.take("theta", "a number in (0, 1]", float,
                    lambda v: 0.0 < v <= 1.0, default=0.5)
        _mesh_config(fields)
    elif experiment == "trace-check":
        params = _take_params(fields, {2}, 0.5)
        _take_solver_p(fields, params, default=2.0)
        fields.take("k", "a positive number", float, lambda v: v > 0.0,
                    default=2.0)
        fields.take("n_beta", "an integer >= 3", _as_int, lambda v: v >= 3,
                    default=9)
        fields.take("bound_ratio", "a number > 1", float, lambda v: v > 1.0,
                    default=4.0)
        fields.take("fit_rtol", "a positive number", float,
                    lambda v: v > 0.0, default=0.05)
        _mesh_config(fields)
    elif experiment == "gmp-check":
        params = _take_params(fields, {2}, 0.5)
        _take_solver_p(fields, params, required=True)
        d_lo = fields.take("d_lo", "a positive number", float,
                           lambda v: v > 0.0, default=1e-5)
        fields.take("d_hi", "a number > d_lo", float,
                    lambda v: v > (d_lo or 0.0), default=0.05)
        fields.take("expect", "one of power, logarithmic, bounded", str,
                    lambda v: v in ("power", "logarithmic", "bounded"),
                    default=None)
        _mesh_config(fields)

    fields.reject_unknown()
    if fields.errors:
        raise ConfigError(fields.errors)
    clean = dict(fields.clean)
    clean["experiment"] = experiment
    clean["seed"] = seed
    clean["out"] = out
    return clean


# ----------------------------------------------------------------------
# experiments


def _run_kernels(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    beta = cfg["beta"]
    u = np.linspace(-1.0, 1.0, cfg["n_samples"] + 1)[:-1]
    kvals = radial_kernel_K(params, u)
    bvals = b_kernel(params, beta, u)
    artifacts = _write_csv(out, "radial_kernel.csv", "x1,value", (u, kvals))
    artifacts += _write_csv(out, "b_kernel.csv", "x1,value", (u, bvals))
    artifacts += _emit_plot(
        out, "kernels",
        [("K", np.column_stack([u, kvals])),
         (f"B at beta={beta:g}", np.column_stack([u, bvals]))],
        ("linear", "linear"), "Zonal kernels", "inner product", "kernel")
    results = {"c35": c35(params, beta), "b_const": b_const(params),
               "beta": beta}
    checks = {
        "values_finite": bool(np.all(np.isfinite(kvals))
                              and np.all(np.isfinite(bvals))),
        "radial_kernel_positive": bool(np.all(kvals > 0.0)),
    }
    return results, checks, artifacts


def _run_eigen_sweep(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    grid = LatGrid.make(params.n, cfg["m"], cfg["grading"])
    lo, hi = params.n - 2.0 * params.s, float(params.n)
    n_beta = cfg["n_beta"]
    betas = lo + (hi - lo) * (np.arange(n_beta) + 0.5) / n_beta
    betas, lams, residuals = lambda_sweep(params, grid, betas)
    artifacts = _write_csv(out, "eigen_sweep.csv", "beta,lambda,residual",
                           (betas, lams, residuals))
    artifacts += _emit_plot(
        out, "eigen_sweep", [("lambda", np.column_stack([betas, lams]))],
        ("linear", "linear"), "Principal eigenvalue sweep", "beta",
        "lambda")
    results = {"lambda_first": float(lams[0]), "lambda_last": float(lams[-1]),
               "max_residual": float(np.max(residuals))}
    checks = {
        "lambda_strictly_decreasing": bool(np.all(np.diff(lams) < 0.0)),
        "residuals_below_tol": bool(np.all(
            residuals <= 1e-8 * np.maximum(1.0, lams))),
    }
    return results, checks, artifacts


def _run_profile(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    p = cfg["p"]
    grid = LatGrid.make(params.n, cfg["m"], cfg["grading"])
    crit = critical_exponents(params)
    if p < crit.p2:
        prof = hemisphere_profile(params, p, grid, seed=cfg["seed"])
        omega = prof.omega.values
        energy, residual = prof.energy, prof.residual
        classification = prof.classification
    else:
        classification = nonexistence_check(params, p, grid,
                                            seed=cfg["seed"])
        omega = np.zeros(grid.nodes.size)
        energy, residual = 0.0, 0.0
    artifacts = _write_csv(out, "profile.csv", "phi,omega",
                           (grid.nodes, omega))
    artifacts += _emit_plot(
        out, "profile", [("omega", np.column_stack([grid.nodes, omega]))],
        ("linear", "linear"), f"Separable profile at p={p:g}", "phi",
        "omega")
    results = {"classification": classification, "energy": energy,
               "residual": residual, "ell": constant_profile(params, p),
               "beta_p": profile_beta(params, p),
               "sup_omega": float(np.max(omega))}
    checks = {
        "nonnegative": bool(np.min(omega) >= -1e-12),
        "classified": classification in ("nontrivial", "trivial"),
        "energy_sign_consistent": (classification == "nontrivial")
        == (energy < 0.0),
    }
    return results, checks, artifacts


def _polar_grid(cfg):
    mesh_cfg = cfg["mesh"]
    return DiscMesh(mesh_cfg["n_r"], mesh_cfg["n_theta"],
                    mesh_cfg["grading"])


def _ray_curves(mesh, values, targets=(math.pi, 0.5 * math.pi)):
    vals = values.reshape(mesh.n_r, mesh.n_theta)
    curves = []
    for target in targets:
        j = int(np.argmin(np.abs(mesh.th_centers - target)))
        curves.append((f"theta={mesh.th_centers[j]:.3f}",
                       np.column_stack([mesh.r_centers, vals[:, j]])))
    return curves


def _run_solve_ball(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    mesh = _polar_grid(cfg)
    green = GreenOperator(params, mesh)
    fld, rep = solve_uk(mesh, params, cfg["p"], cfg["k"], theta=cfg["theta"],
                        tol=cfg["tol"], green=green)
    r = np.repeat(mesh.r_centers, mesh.n_theta)
    th = np.tile(mesh.th_centers, mesh.n_r)
    artifacts = _write_csv(out, "solution.csv", "r,theta,u",
                           (r, th, fld.values))
    probe_vals = np.array(
        [fld.values[mesh.node_nearest(q)] for q in DEFAULT_PROBES])
    artifacts += _write_csv(
        out, "probes.csv", "x1,x2,value",
        (DEFAULT_PROBES[:, 0], DEFAULT_PROBES[:, 1], probe_vals))
    artifacts += _emit_plot(
        out, "solution_rays", _ray_curves(mesh, fld.values),
        ("linear", "linear"),
        f"u along rays at p={cfg['p']:g}, k={cfg['k']:g}", "r", "u")
    results = {"iterations": rep.iterations,
               "final_update": rep.final_update,
               "sandwich_violations": rep.sandwich_violations,
               "probe_values": probe_vals.tolist()}
    checks = {
        "sandwich_holds": rep.sandwich_violations == 0,
        "converged": rep.final_update <= cfg["tol"],
        "nonnegative": rep.nonnegative,
    }
    return results, checks, artifacts


def _run_k_sweep(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    mesh = _polar_grid(cfg)
    green = GreenOperator(params, mesh)
    sweep = k_sweep(mesh, params, cfg["p"], cfg["ks"], theta=cfg["theta"],
                    green=green)
    n_probes = sweep.probe_values.shape[1]
    header = "k," + ",".join(f"probe{i + 1}" for i in range(n_probes))
    artifacts = _write_csv(
        out, "ksweep.csv", header,
        (sweep.ks, *(sweep.probe_values[:, i] for i in range(n_probes))))
    curves = [(f"probe{i + 1}",
               np.column_stack([sweep.ks, sweep.probe_values[:, i]]))
              for i in range(n_probes)]
    artifacts += _emit_plot(
        out, "ksweep", curves, ("log", "linear"),
        f"Probe values along k at p={cfg['p']:g}", "k", "u")
    results = {"classification": sweep.classification,
               "last_probe_values": sweep.probe_values[-1].tolist()}
    checks = {
        "probes_nondecreasing": True,
        "classified": sweep.classification in ("saturates", "diverges"),
    }
    return results, checks, artifacts


def _run_trace_check(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    mesh = _polar_grid(cfg)
    green = GreenOperator(params, mesh)
    betas = np.geomspace(1e-3, 1e-1, cfg["n_beta"])
    martin = [level_set_integral(
        mesh, params, lambda pts: martin_ball(params, pts, Z_ATOM), b)
        for b in betas]
    torsion = green.apply(np.ones(mesh.n_nodes))
    beta0 = 1.0 - mesh.r_centers[0]
    gbetas = [0.45 * beta0 * 2.0 ** (-j) for j in range(cfg["n_beta"])]
    gcurve = [level_set_integral(mesh, params, torsion, b) for b in gbetas]
    fld, _ = solve_uk(mesh, params, cfg["p"], cfg["k"], green=green)
    fit = strace_fit(mesh, params, fld, [Z_ATOM])
    weight = float(fit.weights[0])

    artifacts = _write_csv(out, "martin_trace.csv", "beta,raw,scaled",
                           (betas, [v.raw for v in martin],
                            [v.scaled for v in martin]))
    artifacts += _write_csv(out, "green_trace.csv", "beta,raw,scaled",
                           (gbetas, [v.raw for v in gcurve],
                            [v.scaled for v in gcurve]))
    artifacts += _emit_plot(
        out, "martin_trace",
        [("scaled Martin trace",
          np.column_stack([betas, [v.scaled for v in martin]]))],
        ("log", "linear"), "Scaled Martin trace", "beta", "scaled integral")
    artifacts += _emit_plot(
        out, "green_trace",
        [("scaled Green trace",
          np.column_stack([gbetas, [v.scaled for v in gcurve]]))],
        ("log", "log"), "Scaled Green trace", "beta", "scaled integral")
    mscaled = np.array([v.scaled for v in martin])
    gscaled = np.array([v.scaled for v in gcurve])
    results = {"martin_ratio": float(mscaled.max() / mscaled.min()),
               "fitted_weight": weight, "fit_accepted": fit.accepted,
               "k": cfg["k"]}
    checks = {
        "martin_bounded": bool(mscaled.max() / mscaled.min()
                               <= cfg["bound_ratio"]),
        "green_tail_decreasing": bool(gscaled[-3] > gscaled[-2]
                                      > gscaled[-1]),
        "fit_recovered": abs(weight - cfg["k"]) <= cfg["fit_rtol"] * cfg["k"],
        "fit_accepted": fit.accepted,
    }
    return results, checks, artifacts


def _run_gmp_check(cfg, out):
    params = FracParams(n=cfg["n"], s=cfg["s"])
    mesh = _polar_grid(cfg)
    green = GreenOperator(params, mesh)
    chk = gmp_bound_check(mesh, params, cfg["p"], green=green,
                          d_lo=cfg["d_lo"], d_hi=cfg["d_hi"])
    slope_col = np.full(chk.dists.size, chk.slope)
    artifacts = _write_csv(out, "gmp.csv", "dist,ratio,slope",
                           (chk.dists, chk.ratios, slope_col))
    artifacts += _emit_plot(
        out, "gmp", [("G[M^p] / rho^s",
                      np.column_stack([chk.dists, chk.ratios]))],
        ("log", "log"), f"Kernel-image growth at p={cfg['p']:g}",
        "distance to z", "ratio")
    results = {"slope": chk.slope, "classification": chk.classification}
    checks = {"classified": chk.classification in ("power", "logarithmic",
                                                   "bounded")}
    if cfg["expect"] is not None:
        checks["expected_class"] = chk.classification == cfg["expect"]
    return results, checks, artifacts


_RUNNERS = {
    "kernels": _run_kernels,
    "eigen-sweep": _run_eigen_sweep,
    "profile": _run_profile,
    "solve-ball": _run_solve_ball,
    "k-sweep": _run_k_sweep,
    "trace-check": _run_trace_check,
    "gmp-check": _run_gmp_check,
}


def run(config: dict) -> ExperimentReport:
    """Validate a config, run its experiment, and write all artifacts.

    Parameters
    ----------
    config : dict
        Raw configuration; see validate_config for the per-experiment
        fields.  Must name the experiment and may set "out" and "seed".

    Returns
    -------
    ExperimentReport
        Config echo, scalar results, per-check pass/fail flags, wall-clock
        seconds, and the list of files written (also saved to report.json
        in the output directory).

    Raises
    ------
    ConfigError
        Invalid configuration, with field-level messages.
    """
    cfg = validate_config(config)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    results, checks, artifacts = _RUNNERS[cfg["experiment"]](cfg, out)
    results, checks = _native(results), _native(checks)
    report = ExperimentReport(
        experiment=cfg["experiment"],
        config=cfg,
        results=results,
        checks=checks,
        passed=all(checks.values()),
        wall_clock_s=time.perf_counter() - start,
        artifacts=sorted(artifacts) + ["report.json"],
    )
    (out / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def main(argv=None) -> int:
    """Command-line entry point; returns the process exit code."""
    parser = argparse.ArgumentParser(
        prog="fracsing",
        description="Run one experiment from a JSON config and write CSV "
                    "tables, SVG/PNG plots, and a JSON report.")
    parser.add_argument("--config", type=Path,
                        help="JSON config file; flags below override it")
    parser.add_argument("--experiment", choices=EXPERIMENTS)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="RNG seed (u64)")
    args = parser.parse_args(argv)
    config = {}
    try:
        if args.config is not None:
            config = json.loads(args.config.read_text())
            if not isinstance(config, dict):
                raise ConfigError(["config: expected a JSON object"])
        if args.experiment is not None:
            config["experiment"] = args.experiment
        if args.out is not None:
            config["out"] = args.out
        if args.seed is not None:
            config["seed"] = args.seed
        report = run(config)
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in sorted(report.checks):
        state = "pass" if report.checks[name] else "FAIL"
        print(f"check {name}: {state}")
    print(f"report: {Path(report.config['out']) / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
