"""Command line entry point: ``telegraphnet <mode> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import families, inverse, io
from .carleman import (
    DEFAULT_S,
    build_weights,
    check_assumption1,
    check_d1_geometry,
    compatibility_errors,
    evaluate_estimate,
)
from .dynamics import (
    CoefficientField,
    GridSpec,
    ProblemData,
    TravelingWave,
    energy_bound_report,
    energy_series,
    kirchhoff_residuals,
    manufacture_homogeneous_field,
    solve,
)
from .errors import AssumptionError, ConfigFileError, TelegraphNetError

log = logging.getLogger("telegraphnet")


# -- config helpers -------------------------------------------------------------------

def _grid(cfg, topology, coefficients_spec=None):
    g = cfg.get("grid", {})
    try:
        grid = GridSpec.build(topology, g.get("cells", 100), float(g["T"]), float(g.get("cfl", 0.8)))
    except KeyError as exc:
        raise ConfigFileError(f"grid needs {exc}") from exc
    p = CoefficientField.from_functions(topology, grid, coefficients_spec or io.coefficient_spec(cfg))
    return grid.refit(p), p


def _problem_data(topology, spec: dict) -> ProblemData:
    boundary = {int(k): io.time_signal(v) for k, v in (spec.get("boundary") or {}).items()}
    data = ProblemData.uniform(topology, spec.get("current", 0.0), spec.get("voltage", 0.0),
                               current_scale=spec.get("current_scale"))
    data.boundary.update(boundary)
    return data


def _experiments(cfg, topology) -> inverse.ExperimentPair:
    spec = cfg.get("experiments", "default")
    if spec == "default":
        return inverse.default_experiments(topology)
    if not isinstance(spec, dict) or set(spec) != {"first", "second"}:
        raise ConfigFileError("experiments must be 'default' or a mapping with 'first' and 'second'")
    return inverse.ExperimentPair(_problem_data(topology, spec["first"]), _problem_data(topology, spec["second"]))


def _theta(cfg, topology, key="perturbation") -> np.ndarray:
    spec = cfg.get(key)
    if spec is None:
        raise ConfigFileError(f"config needs a '{key}' entry")
    N = topology.edge_count
    theta = np.zeros((N, 4))
    if isinstance(spec, dict):
        for j, vals in spec.items():
            theta[topology.edge_ids.index(int(j))] = vals
    else:
        theta[:] = np.asarray(spec, dtype=float).reshape(N, 4)
    return theta


def _weights(cfg, topology, T):
    w = cfg.get("weights")
    if w is None:
        raise ConfigFileError("config needs a 'weights' entry")
    return build_weights(topology, float(w["root_alpha"]), float(w["root_xstar"]), float(w["beta"]), T)


def _mean_constants(p: CoefficientField) -> dict:
    return {j: v.mean(axis=1) for j, v in p.values.items()}


# -- modes ------------------------------------------------------------------------------

def run_simulate(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    data = _problem_data(topo, cfg.get("data", {}))
    traj = solve(topo, p, data, grid, cfg.get("direction", "forward"))
    io.write_trajectory(out / "trajectory.csv", traj, int(cfg.get("output_every", 1)))
    volt, curr = kirchhoff_residuals(traj, topo)
    rows, summary = [], f"simulate: {len(traj.t)} levels, max Kirchhoff residual {max(volt.max(), curr.max()):.3g}"
    reference = None
    ref = cfg.get("reference")
    if ref is not None:
        if ref.get("type") != "traveling_wave":
            raise ConfigFileError("reference.type must be 'traveling_wave'")
        c = p.values[topo.edge_ids[0]]
        wave = TravelingWave(families.from_spec(ref.get("right")), families.from_spec(ref.get("left", 0.0)),
                             float(c[0, 0]), float(c[1, 0]))
        t = traj.t[-1]
        err1 = err2 = norm = 0.0
        for j in traj.edge_ids:
            x = traj.x[j]
            e = wave.evaluate(j, x, t)
            err1 += np.trapezoid((traj.u1[j][-1] - e[0]) ** 2, x)
            err2 += np.trapezoid((traj.u2[j][-1] - e[1]) ** 2, x)
            norm += np.trapezoid(e[1] ** 2, x)
        rows.append((t, math.sqrt(err1), math.sqrt(err2), math.sqrt(err2 / norm)))
        io.write_csv(out / "simulate.csv", ("t", "l2_error_u1", "l2_error_u2", "relative_l2_error_u2"), rows)
        summary += f"; final-time L2 error (voltage) {math.sqrt(err2):.3e}"
        reference = lambda j, x: wave.evaluate(j, x, t)[:2]
    if plot:
        from . import plotting
        plotting.profiles(out / "simulate.svg", traj, -1, reference)
    return summary


def run_energy(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    data = _problem_data(topo, cfg.get("data", {}))
    traj = solve(topo, p, data, grid, "forward")
    E = energy_series(traj, p)
    volt, curr = kirchhoff_residuals(traj, topo)
    io.write_csv(out / "energy.csv", ("t", "energy", "voltage_jump", "current_imbalance"),
                 zip(traj.t, E, volt, curr))
    drift = abs(E[-1] - E[0]) / E[0]
    rise = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
    bound = energy_bound_report(traj)
    summary = (f"energy-check: relative drift {drift:.3e}, largest step increase {rise:.3e}, "
               f"empirical derivative bound {bound.M_hat:.4g}")
    if plot:
        from . import plotting
        plotting.series(out / "energy.svg", traj.t, {"energy": E}, "t", "energy")
    return summary


def run_carleman(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    weights = _weights(cfg, topo, grid.T)
    check = check_assumption1(weights, p, grid)
    if not check.passed:
        raise AssumptionError(check.message())
    cont, slope = compatibility_errors(weights, topo)
    field = manufacture_homogeneous_field(topo, grid, **(cfg.get("field") or {}))
    traj = field.sample(grid, p)
    s_grid = cfg.get("weights", {}).get("s_grid", list(DEFAULT_S))
    report = evaluate_estimate(traj, topo, weights, p, grid, s_grid=s_grid)
    io.write_csv(out / "carleman.csv", ("s", "lhs_log", "rhs_source_log", "btilde_log", "ratio"), report.rows())
    summary = (f"carleman-check: {check.message()}; weight compatibility {max(cont, slope):.2e}; "
               f"empirical C = {report.C_hat:.6g}, ratio(s_max)/ratio(s_2) = {report.ratio[-1] / report.ratio[1]:.4g}")
    if plot:
        from . import plotting
        plotting.series(out / "carleman.svg", report.s, {"ratio": report.ratio}, "s",
                        "LHS / (RHS + boundary)", logx=True, marker="o")
    return summary


def _perturbation_rows(topo, truth, estimate):
    for i, j in enumerate(topo.edge_ids):
        for c, name in enumerate(inverse.COMPONENTS):
            yield j, name, truth[i, c], estimate[i, c]


def run_direct(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    exps = _experiments(cfg, topo)
    a2 = inverse.check_assumption2(exps, grid)
    if not a2.passed:
        raise AssumptionError(f"Assumption 2 fails: min |det| = {a2.min_abs_det:.3g} at edge/x {a2.location}")
    theta = _theta(cfg, topo)
    rho = inverse.piecewise_perturbation(topo, grid, theta)
    q = p.perturbed(rho)
    dtw = {}
    for m, data in ((1, exps.first), (2, exps.second)):
        du = inverse.dt_at_zero(solve(topo, p, data, grid, "both"))
        dv = inverse.dt_at_zero(solve(topo, q, data, grid, "both"))
        dtw[m] = {j: (du[j][0] - dv[j][0], du[j][1] - dv[j][1]) for j in du}
    rec = inverse.direct_reconstruct_t0(dtw, exps, grid, p, piecewise=True,
                                        cond_limit=float(cfg.get("cond_limit", 1e8)))
    est = np.array([rec.constants[j] for j in topo.edge_ids])
    err = inverse.relative_l2_error(rec.as_perturbation(grid, topo), rho, grid)
    io.write_csv(out / "reconstruct_direct.csv", ("edge", "component", "truth", "estimate"),
                 _perturbation_rows(topo, theta, est))
    base = _mean_constants(p)
    io.write_coefficients(out / "coefficients_direct.yaml",
                          {j: base[j] + est[i] for i, j in enumerate(topo.edge_ids)})
    if plot:
        from . import plotting
        plotting.coefficient_bars(out / "reconstruct_direct.svg", topo.edge_ids, theta, est)
    return (f"reconstruct-direct: relative L2 error {err:.3e}, "
            f"min |det| {a2.min_abs_det:.3g}, flagged points {rec.flagged_count}")


def run_lsq(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    exps = _experiments(cfg, topo)
    a2 = inverse.check_assumption2(exps, grid)
    if not a2.passed:
        raise AssumptionError(f"Assumption 2 fails: min |det| = {a2.min_abs_det:.3g} at edge/x {a2.location}")
    theta = _theta(cfg, topo)
    opts = cfg.get("lsq") or {}
    q = p.perturbed(inverse.piecewise_perturbation(topo, grid, theta))
    meas = inverse.simulate_measurements(topo, p, q, exps, grid, threads)
    noise = float(opts.get("noise", 0.0))
    if noise > 0:
        meas = meas.with_noise(noise, np.random.default_rng(int(cfg.get("seed", 0))))
    mask = opts.get("mask")
    res = inverse.least_squares_reconstruct(
        meas, exps, topo, grid, p, lam=float(opts.get("lam", 0.0)), mask=mask,
        max_iter=int(opts.get("max_iter", 20)), fd_step=float(opts.get("fd_step", 1e-6)), threads=threads)
    io.write_csv(out / "lsq_history.csv", ("iteration", "misfit", "step", "damping"), res.history)
    io.write_csv(out / "reconstruct_lsq.csv", ("edge", "component", "truth", "estimate"),
                 _perturbation_rows(topo, theta, res.theta))
    base = _mean_constants(p)
    io.write_coefficients(out / "coefficients_lsq.yaml",
                          {j: base[j] + res.theta[i] for i, j in enumerate(topo.edge_ids)})
    scale = np.abs(theta).max()
    err = float(np.abs(res.theta - theta).max() / scale) if scale > 0 else float(np.abs(res.theta).max())
    if plot:
        from . import plotting
        its = [h[0] for h in res.history]
        plotting.series(out / "lsq_history.svg", its, {"misfit": [max(h[1], 1e-300) for h in res.history]},
                        "iteration", "misfit", logy=True, marker="o")
    state = "converged" if res.converged else "NOT converged"
    return f"reconstruct-lsq: {state} in {res.iterations} iterations, max relative error {err:.3e}"


def run_stability(cfg, out, plot, threads):
    topo = io.resolve_network(cfg)
    grid, p = _grid(cfg, topo)
    exps = _experiments(cfg, topo)
    weights = _weights(cfg, topo, grid.T) if cfg.get("weights") else None
    if "profile" in cfg:
        rho = inverse.perturbation_from_functions(topo, grid, io.coefficient_spec(cfg, "profile"))
    else:
        rho = inverse.piecewise_perturbation(topo, grid, _theta(cfg, topo))
    eps = [float(e) for e in cfg.get("epsilons", (0.01, 0.02, 0.05, 0.1))]
    table = inverse.stability_experiment(topo, grid, p, rho, eps, exps, weights, threads)
    io.write_csv(out / "stability.csv", ("epsilon", "lhs", "rhs", "ratio", "flags", "rhs_l0"),
                 ((r.epsilon, r.lhs, r.rhs, r.ratio, ";".join(r.flags), r.rhs_l0) for r in table.rows))
    ratios = table.ratios()
    spread = float(np.nanmax(ratios) / np.nanmin(ratios)) if np.isfinite(ratios).any() else math.nan
    if plot:
        from . import plotting
        plotting.series(out / "stability.svg", eps, {"ratio": ratios}, "epsilon", "LHS / RHS",
                        logx=True, marker="o")
    flags = sorted({f for r in table.rows for f in r.flags})
    note = f" (flags: {', '.join(flags)})" if flags else ""
    return f"stability: empirical Lipschitz constant {table.lipschitz:.6g}, ratio spread {spread:.4g}{note}"


RUNNERS = {
    "simulate": run_simulate,
    "energy-check": run_energy,
    "carleman-check": run_carleman,
    "reconstruct-direct": run_direct,
    "reconstruct-lsq": run_lsq,
    "stability": run_stability,
}


def run(mode, config_path, out, plot=False, threads=None) -> str:
    cfg = io.load_config(config_path)
    if cfg.get("mode", mode) != mode:
        raise ConfigFileError(f"config is for mode {cfg['mode']!r}, not {mode!r}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    n = io.threads_from(threads, cfg)
    try:
        return RUNNERS[mode](cfg, out, plot, n)
    except KeyError as exc:
        raise ConfigFileError(f"missing config entry {exc}") from exc


def build_parser():
    ap = argparse.ArgumentParser(prog="telegraphnet", description=__doc__)
    ap.add_argument("mode", choices=io.MODES)
    ap.add_argument("--config", required=True, help="YAML config document")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--plot", action="store_true", help="also write SVG figures")
    ap.add_argument("--threads", type=int, default=None,
                    help="parallel forward solves (default: $TELEGRAPHNET_THREADS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        summary = run(args.mode, args.config, args.out, args.plot, args.threads)
    except TelegraphNetError as exc:
        print(f"telegraphnet: {exc.module} error: {exc}", file=sys.stderr)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
