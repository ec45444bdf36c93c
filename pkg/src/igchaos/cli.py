"""Command-line front end.

    igchaos geometry --model gaussian-product --l 1 --point 0 1 0 1 0 1
    igchaos ige --model integrable --mu-a 1 --mu-b 1 --tau-max 50
    igchaos spectrum --preset chaotic --n 10

Every run writes ``manifest.json`` (resolved configuration and version),
``report.json`` and one CSV per trace into ``--out-dir``. Flags override values
read from ``--config``; a manifest is itself a valid config file.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import geometry as geo
from . import ige as ig
from . import models as mdl
from . import spectra as spc
from .errors import ConfigError, DomainError, IGChaosError, NumericalError, UnsupportedError
from .io import read_json, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

COMMON_DEFAULTS = {"out_dir": "out", "seed": 0, "threads": 1}

DEFAULTS = {
    "geometry": {"model": "gaussian-product", "l": 1, "r": 0.0, "shape_n": 2.0, "point": None,
                 "metric": "analytic", "fd_step": 1e-5, "random_planes": 0},
    "geodesic": {"model": "gaussian", "l": 1, "r": 0.0, "shape_n": 2.0, "point": None,
                 "velocity": None, "xi": None, "lam": None, "tau_max": 5.0, "points": 201,
                 "rtol": 1e-9, "atol": 1e-9},
    "jacobi": {"l": 1, "xi": 1.0, "lam": [0.3, 0.5], "tau_max": None, "points": 400,
               "rtol": 1e-9, "atol": 1e-9, "tail_fraction": 0.5},
    "ige": {"model": "gaussian-product", "l": 1, "xi": 1.0, "lam": [0.5], "mu_a": 1.0,
            "mu_b": 1.0, "rate_a": 1.0, "rate_b": 1.0, "mu_a_p": 1.0, "mu_b_p": 0.0,
            "sigma_b_p": 1.0, "tau_max": None, "points": 1024, "tail_fraction": 0.5},
    "spectrum": {"preset": None, "n": 10, "hx": None, "hy": None, "method": "staircase",
                 "trim": 0.1, "sector": "auto"},
}


def _common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON config file (a previous manifest.json also works)")
    p.add_argument("--out-dir", dest="out_dir", default=S, help="output directory")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--threads", type=int, default=S, help="worker threads for sweeps")


def build_parser():
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="igchaos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"igchaos {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("geometry", help="curvature report at a point")
    _common(g)
    g.add_argument("--model", default=S)
    g.add_argument("--l", type=int, default=S)
    g.add_argument("--r", type=float, default=S)
    g.add_argument("--shape-n", dest="shape_n", type=float, default=S)
    g.add_argument("--point", type=float, nargs="+", default=S)
    g.add_argument("--metric", choices=["analytic", "quadrature"], default=S)
    g.add_argument("--fd-step", dest="fd_step", type=float, default=S)
    g.add_argument("--random-planes", dest="random_planes", type=int, default=S)

    d = sub.add_parser("geodesic", help="integrate a geodesic")
    _common(d)
    d.add_argument("--model", default=S)
    d.add_argument("--l", type=int, default=S)
    d.add_argument("--r", type=float, default=S)
    d.add_argument("--shape-n", dest="shape_n", type=float, default=S)
    d.add_argument("--point", type=float, nargs="+", default=S)
    d.add_argument("--velocity", type=float, nargs="+", default=S)
    d.add_argument("--xi", type=float, default=S, help="closed-form start (Gaussian models)")
    d.add_argument("--lam", type=float, default=S, help="closed-form rate (Gaussian models)")
    d.add_argument("--tau-max", dest="tau_max", type=float, default=S)
    d.add_argument("--points", type=int, default=S)
    d.add_argument("--rtol", type=float, default=S)
    d.add_argument("--atol", type=float, default=S)

    j = sub.add_parser("jacobi", help="Jacobi field growth on the Gaussian manifold")
    _common(j)
    j.add_argument("--l", type=int, default=S)
    j.add_argument("--xi", type=float, default=S)
    j.add_argument("--lam", type=float, nargs="+", default=S)
    j.add_argument("--tau-max", dest="tau_max", type=float, default=S)
    j.add_argument("--points", type=int, default=S)
    j.add_argument("--rtol", type=float, default=S)
    j.add_argument("--atol", type=float, default=S)
    j.add_argument("--tail-fraction", dest="tail_fraction", type=float, default=S)

    e = sub.add_parser("ige", help="volume trace, IGE growth fit and regime")
    _common(e)
    e.add_argument("--model", choices=["gaussian-product", "integrable", "chaotic"], default=S)
    e.add_argument("--l", type=int, default=S)
    e.add_argument("--xi", type=float, default=S)
    e.add_argument("--lam", type=float, nargs="+", default=S)
    e.add_argument("--mu-a", dest="mu_a", type=float, default=S)
    e.add_argument("--mu-b", dest="mu_b", type=float, default=S)
    e.add_argument("--rate-a", dest="rate_a", type=float, default=S)
    e.add_argument("--rate-b", dest="rate_b", type=float, default=S)
    e.add_argument("--mu-a-p", dest="mu_a_p", type=float, default=S)
    e.add_argument("--mu-b-p", dest="mu_b_p", type=float, default=S)
    e.add_argument("--sigma-b-p", dest="sigma_b_p", type=float, default=S)
    e.add_argument("--tau-max", dest="tau_max", type=float, default=S)
    e.add_argument("--points", type=int, default=S)
    e.add_argument("--tail-fraction", dest="tail_fraction", type=float, default=S)

    s = sub.add_parser("spectrum", help="Ising-chain level statistics")
    _common(s)
    s.add_argument("--preset", choices=sorted(spc.PRESETS), default=S)
    s.add_argument("--n", type=int, default=S)
    s.add_argument("--hx", type=float, default=S)
    s.add_argument("--hy", type=float, default=S)
    s.add_argument("--method", choices=["mean", "staircase"], default=S)
    s.add_argument("--trim", type=float, default=S)
    s.add_argument("--sector", choices=["auto", "even", "odd"], default=S)
    return parser


def resolve_config(args):
    """defaults <- config file <- explicit flags."""
    sub = args.subcommand
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[sub])
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "subcommand")}
    if args.config:
        try:
            data = read_json(args.config)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        if data.get("subcommand", sub) != sub:
            raise ConfigError(f"config is for {data['subcommand']!r}, not {sub!r}")
        unknown = set(data) - set(cfg) - {"subcommand"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in data.items() if k != "subcommand"})
    cfg.update(flags)
    cfg["subcommand"] = sub
    for key in ("lam",):
        if sub in ("jacobi", "ige") and not isinstance(cfg[key], list):
            cfg[key] = [cfg[key]]
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in ("rtol", "atol", "fd_step", "tail_fraction"):
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if "trim" in cfg and not 0 <= cfg["trim"] < 0.5:
        raise ConfigError("trim must lie in [0, 0.5)")
    if "points" in cfg and cfg["points"] < 2:
        raise ConfigError("the tau grid needs at least two points")
    if cfg.get("tau_max") is not None and not cfg["tau_max"] > 0:
        raise ConfigError("tau_max must be positive")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    if "lam" in cfg and cfg["lam"] is not None:
        lams = cfg["lam"] if isinstance(cfg["lam"], list) else [cfg["lam"]]
        if not lams or any(not v > 0 for v in lams):
            raise ConfigError("lam values must be positive")


# ---------------------------------------------------------------------------

def _family(cfg):
    model = cfg["model"]
    if isinstance(model, dict):
        return mdl.family_from_dict(model)
    name = mdl.canonical_family_name(model)
    if name == "gaussian_product":
        fam = mdl.GaussianProduct(cfg["l"])
    elif name == "correlated_gaussian":
        fam = mdl.CorrelatedGaussian(cfg["r"])
    elif name == "weibull":
        fam = mdl.Weibull(cfg["shape_n"])
    else:
        fam = mdl.families_by_name()[name]()
    if cfg.get("point") is None:
        lo, _ = fam.bounds()
        point = mdl.ParamPoint(np.where(lo == 0.0, 1.0, 0.0) if not isinstance(fam, mdl.Brody)
                               else [0.5])
    else:
        point = mdl.ParamPoint(cfg["point"])
    fam.check(point)
    return fam, point


def run_geometry(cfg, out):
    fam, point = _family(cfg)
    field = geo.analytic_metric(fam) if cfg["metric"] == "analytic" else geo.quadrature_metric(fam)
    policy = geo.FDPolicy(rel_step=cfg["fd_step"])
    report = geo.curvature_report(field, point, policy)
    if cfg["random_planes"] > 0 and field.chart_dim >= 2:
        rng = np.random.default_rng(cfg["seed"])
        bundle = geo.curvature(field, point, policy)
        for _ in range(cfg["random_planes"]):
            a, b = rng.standard_normal((2, field.chart_dim))
            report["sectional_samples"].append(
                {"a": a.tolist(), "b": b.tolist(),
                 "K": geo.sectional_curvature(field, point, a, b, bundle=bundle)})
    report["family"] = mdl.family_to_dict(fam, point)
    report["provenance"] = field.provenance
    write_json(out / "report.json", report)
    return report


def run_geodesic(cfg, out):
    fam, point = _family(cfg)
    field = geo.analytic_metric(fam)
    tol = dyn.Tolerances(cfg["rtol"], cfg["atol"])
    closed = None
    if cfg["xi"] is not None or cfg["lam"] is not None:
        if not isinstance(fam, (mdl.Gaussian, mdl.GaussianProduct)):
            raise ConfigError("--xi/--lam set closed-form starts for Gaussian models only")
        if cfg["xi"] is None or cfg["lam"] is None:
            raise ConfigError("--xi and --lam must be given together")
        closed = dyn.GaussianGeodesicParams(cfg["xi"], cfg["lam"])
        blocks = fam.chart_dim // 2
        state = dyn.gaussian_initial_family(1, closed.xi)(closed.lam)
        x0 = np.tile(state.point.as_array()[:2], blocks)
        v0 = np.tile(state.velocity[:2], blocks)
    else:
        x0 = point.as_array()
        if cfg["velocity"] is None:
            raise ConfigError("geodesic needs --velocity (or --xi and --lam)")
        v0 = np.asarray(cfg["velocity"], dtype=float)
    grid = np.linspace(0.0, cfg["tau_max"], cfg["points"])
    traj = dyn.integrate_geodesic(field, dyn.GeodesicState(0.0, x0, v0), cfg["tau_max"], tol, grid)
    speeds = np.array([dyn.speed(field, x, v) for x, v in zip(traj.points, traj.velocities)])
    header, data = traj.csv_columns()
    write_csv(out / "trajectory.csv", header, data)
    report = {
        "family": fam.name,
        "initial_point": x0.tolist(),
        "initial_velocity": v0.tolist(),
        "final_point": traj.points[-1].tolist(),
        "speed_drift": float(np.max(np.abs(speeds - speeds[0])) / speeds[0]) if speeds[0] > 0 else 0.0,
    }
    if closed is not None:
        mu, sigma = dyn.analytic_gaussian_geodesic(closed, grid)
        ref = np.tile(np.stack([mu, sigma], axis=-1), (1, fam.chart_dim // 2))
        report["closed_form_max_error"] = float(np.max(np.abs(traj.points - ref)))
    write_json(out / "report.json", report)
    return report


def _jacobi_one(cfg, lam):
    l, xi = cfg["l"], cfg["xi"]
    field = geo.analytic_metric(mdl.GaussianProduct(l))
    tau_max = cfg["tau_max"] if cfg["tau_max"] is not None else 10.0 / lam
    grid = np.linspace(0.0, tau_max, cfg["points"])
    base = dyn.gaussian_product_trajectory(l, dyn.GaussianGeodesicParams(xi, lam), grid)
    jt = dyn.integrate_jlc(field, base, dyn.special_jacobi_initial(l, xi, lam),
                           dyn.Tolerances(cfg["rtol"], cfg["atol"]))
    est = dyn.estimate_lambda_j(grid, jt.intensity, cfg["tail_fraction"])
    return lam, jt, {"lam": lam, "tau_max": tau_max, "lambda_j": est,
                     "relative_error": abs(est - lam) / lam}


def _sweep(cfg, fn):
    with ThreadPoolExecutor(max_workers=cfg["threads"]) as pool:
        return list(pool.map(lambda lam: fn(cfg, lam), cfg["lam"]))


def run_jacobi(cfg, out):
    results = _sweep(cfg, _jacobi_one)
    runs = []
    for lam, jt, summary in results:
        name = f"jacobi_lam{lam:g}.csv"
        header, data = jt.csv_columns()
        write_csv(out / name, header, data)
        summary["csv"] = name
        runs.append(summary)
    report = {"l": cfg["l"], "xi": cfg["xi"], "runs": runs}
    write_json(out / "report.json", report)
    return report


def _ige_one(cfg, lam):
    model = cfg["model"]
    if model == "gaussian-product":
        field, traj, trace = ig.gaussian_scenario(cfg["l"], lam, cfg["xi"], cfg["tau_max"], cfg["points"])
        expected = {"slope": 3 * cfg["l"] * lam}
    elif model == "integrable":
        tau_max = 50.0 if cfg["tau_max"] is None else cfg["tau_max"]
        field, traj, trace = ig.integrable_scenario(cfg["mu_a"], cfg["mu_b"], cfg["rate_a"],
                                                    cfg["rate_b"], tau_max, cfg["points"])
        expected = {"coefficient": 2.0}
    else:
        field, traj, trace = ig.chaotic_scenario(cfg["mu_a_p"], cfg["mu_b_p"], cfg["sigma_b_p"], lam,
                                                 None, cfg["tau_max"], cfg["points"])
        expected = {"slope": lam}
    fit = ig.fit_growth(trace, cfg["tail_fraction"])
    return lam, trace, {"lam": lam, "fit": fit.to_json(), "expected": expected}


def run_ige(cfg, out):
    if cfg["model"] == "integrable":
        cfg = dict(cfg, lam=cfg["lam"][:1])
    results = _sweep(cfg, _ige_one)
    runs = []
    for lam, trace, summary in results:
        name = "trace.csv" if cfg["model"] == "integrable" else f"trace_lam{lam:g}.csv"
        header, data = trace.csv_columns()
        write_csv(out / name, header, data)
        summary["csv"] = name
        runs.append(summary)
    report = {"model": cfg["model"], "runs": runs}
    if len(runs) == 1:
        report["classification"] = runs[0]["fit"]["classification"]
    write_json(out / "report.json", report)
    return report


def run_spectrum(cfg, out):
    if cfg["preset"] is not None:
        if cfg["hx"] is not None or cfg["hy"] is not None:
            raise ConfigError("give either --preset or --hx/--hy, not both")
        spec = spc.SpinChainSpec.preset(cfg["preset"], cfg["n"])
    else:
        spec = spc.SpinChainSpec(cfg["n"], cfg["hx"] or 0.0, cfg["hy"] or 0.0)
    reports, samples, spectra, selected = spc.analyze_chain(
        spec, cfg["method"], cfg["trim"], cfg["threads"])
    if cfg["sector"] != "auto":
        selected = f"parity-{cfg['sector']}"
        if selected not in reports:
            raise ConfigError(f"sector {selected} is empty")
    for k in sorted(spectra):
        write_csv(out / f"spectrum_{k}.csv", ["eigenvalue"], spectra[k].eigenvalues[:, None])
        write_csv(out / f"spacings_{k}.csv", ["spacing"], samples[k].spacings[:, None])
    report = dict(reports[selected])
    report["sectors"] = [reports[k] for k in sorted(reports)]
    report["preset"] = cfg["preset"]
    write_json(out / "report.json", report)
    return report


RUNNERS = {"geometry": run_geometry, "geodesic": run_geodesic, "jacobi": run_jacobi,
           "ige": run_ige, "spectrum": run_spectrum}


def run(cfg):
    """Execute a resolved config; returns (exit status, report or diagnostic)."""
    out = Path(cfg["out_dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return EXIT_CONFIG, {"error": f"cannot create {out}: {exc}"}
    try:
        report = RUNNERS[cfg["subcommand"]](cfg, out)
    except (ConfigError, DomainError, UnsupportedError, ValueError) as exc:
        return EXIT_CONFIG, {"error": str(exc), "kind": type(exc).__name__}
    except (NumericalError, IGChaosError, ArithmeticError) as exc:
        return EXIT_NUMERICAL, {"error": str(exc), "kind": type(exc).__name__}
    outputs = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    write_json(out / "manifest.json", {"tool": "igchaos", "version": __version__,
                                       "config": cfg, "outputs": outputs})
    return EXIT_OK, report


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, DomainError, ValueError, TypeError) as exc:
        print(f"igchaos: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status, result = run(cfg)
    if status != EXIT_OK:
        label = "invalid configuration" if status == EXIT_CONFIG else "numerical failure"
        print(f"igchaos: {label}: {result['error']}", file=sys.stderr)
    else:
        print(f"igchaos: wrote {cfg['out_dir']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
