"""Two-experiment coefficient recovery and the stability experiment.

``p`` is the reference coefficient set, ``q = p + rho`` the perturbed one;
``u`` solves with ``p`` and ``v`` with ``q`` from identical data, and
``w = u - v`` is their difference. Only leaf-terminal currents of ``w``
are observed.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import families
from .carleman import WeightFamily, check_d1_geometry
from .dynamics import (
    BoundaryTraces,
    CoefficientField,
    FieldTrajectory,
    GridSpec,
    ProblemData,
    apply_operator,
    boundary_trace,
    enforce_vertex_consistency,
    solve,
)
from .errors import AdmissibilityError, AssumptionError, GridMismatchError
from .network import NetworkTopology, conserved_flows

log = logging.getLogger(__name__)

COMPONENTS = ("L", "C", "R", "G")


@dataclass(frozen=True)
class ExperimentPair:
    first: ProblemData
    second: ProblemData

    def __iter__(self):
        return iter((self.first, self.second))

    def __getitem__(self, m):
        """Experiments are numbered 1 and 2."""
        return (self.first, self.second)[m - 1]


def default_experiments(topology: NetworkTopology) -> ExperimentPair:
    """Flow-balanced data satisfying the determinant condition on every edge.

    Experiment 1: current ``g_j``, voltage ``exp(x/2)``.
    Experiment 2: current ``g_j (x + 1)``, voltage ``1``.
    Boundary voltages are held at their t = 0 values.
    """
    flows = conserved_flows(topology)
    ex = families.Exponential(1.0, 0.5)
    lin = families.Polynomial((1.0, 1.0))
    one = families.Constant(1.0)
    d1 = ProblemData({j: (families.Constant(flows[j]), ex) for j in topology.edge_ids})
    d2 = ProblemData({j: (families.Scaled(lin, flows[j]), one) for j in topology.edge_ids})
    for k in topology.Pi1:
        x = topology.coordinates[k]
        d1.boundary[k] = families.Constant(float(ex(x)))
        d2.boundary[k] = families.Constant(1.0)
    return ExperimentPair(d1, d2)


# -- perturbations -----------------------------------------------------------------

def piecewise_perturbation(topology, grid, theta, consistent=True) -> dict:
    """Per-edge constant perturbation from ``theta`` of shape ``(N, 4)`` in edge order.

    With ``consistent`` the endpoint samples of the L and C components are
    averaged at interior vertices, matching what the coefficient builder
    does to ``p``.
    """
    theta = np.asarray(theta, dtype=float).reshape(topology.edge_count, 4)
    rho = {j: np.repeat(theta[i][:, None], grid.cells[j] + 1, axis=1)
           for i, j in enumerate(topology.edge_ids)}
    if consistent:
        rho, _ = enforce_vertex_consistency(topology, rho)
    return rho


def perturbation_from_functions(topology, grid, spec) -> dict:
    """Sampled perturbation profiles; ``spec`` as for ``CoefficientField.from_functions``."""
    return CoefficientField.from_functions(topology, grid, spec, enforce_consistency=True).values


def perturbation_norm(rho: dict, grid: GridSpec) -> float:
    """Sum over edges and components of the integral of ``rho^2``."""
    return float(sum(np.trapezoid(rho[j] ** 2, grid.x[j], axis=1).sum() for j in rho))


def relative_l2_error(estimate: dict, truth: dict, grid: GridSpec) -> float:
    diff = {j: estimate[j] - truth[j] for j in truth}
    return math.sqrt(perturbation_norm(diff, grid) / perturbation_norm(truth, grid))


# -- determinant condition ------------------------------------------------------------

def assumption2_matrix(z, dz):
    """Stack the 4x4 matrices pointwise.

    ``z[m] = (z_m1, z_m2)`` and ``dz[m]`` their x-derivatives, m = 0, 1 for
    experiments 1, 2. Unknown order is (rho1, rho2, rho3, rho4).
    """
    shape = np.broadcast(z[0][0], z[0][1], z[1][0], z[1][1]).shape
    M = np.zeros(shape + (4, 4))
    for m in (0, 1):
        M[..., 2 * m, 0] = dz[m][1]
        M[..., 2 * m, 2] = z[m][0]
        M[..., 2 * m + 1, 1] = dz[m][0]
        M[..., 2 * m + 1, 3] = z[m][1]
    return M


@dataclass(frozen=True)
class Assumption2Result:
    passed: bool
    min_abs_det: float
    location: tuple  # (edge, x)
    per_edge: dict
    threshold: float


def _initial_samples(experiments, grid):
    z, dz = [], []
    for data in experiments:
        z.append(data.sample_initial(grid))
        dz.append(data.sample_initial_derivative(grid))
    return z, dz


def check_assumption2_samples(x: dict, z, dz, threshold=None) -> Assumption2Result:
    """Determinant check on explicit samples.

    ``x`` maps edge -> nodes; ``z[m]`` and ``dz[m]`` are pairs of
    edge -> array mappings (current, voltage) for experiments m = 0, 1.
    """
    per_edge, scale, best = {}, 0.0, (math.inf, None)
    for j in sorted(x):
        M = assumption2_matrix([(z[m][0][j], z[m][1][j]) for m in (0, 1)],
                               [(dz[m][0][j], dz[m][1][j]) for m in (0, 1)])
        M = np.broadcast_to(M, np.shape(x[j]) + (4, 4))
        det = np.abs(np.linalg.det(M))
        scale = max(scale, float(np.abs(M).max()))
        i = int(np.argmin(det))
        per_edge[j] = float(det[i])
        if det[i] < best[0]:
            best = (float(det[i]), (j, float(x[j][i])))
    thr = 1e-8 * scale**4 if threshold is None else threshold
    return Assumption2Result(best[0] > thr, best[0], best[1], per_edge, thr)


def check_assumption2(experiments: ExperimentPair, grid: GridSpec, threshold=None) -> Assumption2Result:
    z, dz = _initial_samples(experiments, grid)
    return check_assumption2_samples(grid.x, z, dz, threshold)


# -- algebra at t = 0 ---------------------------------------------------------------------

def t0_forward_map(p: dict, q: dict, z, dz):
    """Exact ``dw/dt`` at t = 0 from the relations obtained by subtracting
    the two systems; returns ``{m: {j: (dw1, dw2)}}`` for m = 1, 2."""
    out = {}
    for m in (0, 1):
        out[m + 1] = {}
        for j in p:
            rho = q[j] - p[j]
            z1, z2 = z[m][0][j], z[m][1][j]
            d1, d2 = dz[m][0][j], dz[m][1][j]
            a = (-rho[0] * (d2 + q[j][2] * z1) / q[j][0] + rho[2] * z1) / p[j][0]
            b = (-rho[1] * (d1 + q[j][3] * z2) / q[j][1] + rho[3] * z2) / p[j][1]
            out[m + 1][j] = (a, b)
    return out


def dt_at_zero(trajectory: FieldTrajectory) -> dict:
    """Fourth-order centred time derivative at t = 0 from five levels."""
    i = trajectory.level(0.0)
    if i < 2 or i + 2 >= len(trajectory.t):
        raise GridMismatchError("need two stored levels on each side of t = 0")
    h = trajectory.dt
    out = {}
    for j in trajectory.edge_ids:
        pair = []
        for a in (trajectory.u1[j], trajectory.u2[j]):
            pair.append((a[i - 2] - 8 * a[i - 1] + 8 * a[i + 1] - a[i + 2]) / (12 * h))
        out[j] = tuple(pair)
    return out


@dataclass
class DirectReconstruction:
    profile: dict            # j -> (4, n+1) pointwise estimate
    flagged: dict            # j -> bool mask of near-singular points
    constants: dict = None   # j -> (4,) per-edge medians, piecewise mode only

    @property
    def flagged_count(self) -> int:
        return int(sum(m.sum() for m in self.flagged.values()))

    def as_perturbation(self, grid, topology=None) -> dict:
        """Per-node perturbation; piecewise estimates are expanded and, given
        the topology, vertex-averaged the same way as the truth."""
        if self.constants is None:
            return self.profile
        if topology is not None:
            theta = np.array([self.constants[j] for j in topology.edge_ids])
            return piecewise_perturbation(topology, grid, theta)
        return {j: np.repeat(c[:, None], grid.cells[j] + 1, axis=1) for j, c in self.constants.items()}


def direct_reconstruct_t0(dtw, experiments: ExperimentPair, grid: GridSpec, p: CoefficientField,
                          q: CoefficientField = None, piecewise: bool = True,
                          cond_limit: float = 1e8) -> DirectReconstruction:
    """Pointwise 4x4 solve for ``rho`` from ``dw/dt`` at t = 0 of both experiments.

    ``dtw`` is ``{m: {j: (dw1, dw2)}}`` (m = 1, 2). Without ``q`` the
    coefficient of ``rho1`` is ``dv1/dt = du1/dt - dw1/dt`` with ``du/dt``
    taken from the reference system, which keeps the system linear; with
    ``q`` it is ``-(dz2/dx + q3 z1)/q1``. In piecewise mode each edge
    also gets the median of its pointwise values, which is insensitive to
    the few cells next to a vertex.
    """
    z, dz = _initial_samples(experiments, grid)
    profile, flagged, constants = {}, {}, {} if piecewise else None
    for j in sorted(grid.x):
        P = p.values[j]
        rows_dv, rhs = [], []
        for m in (0, 1):
            z1, z2 = z[m][0][j], z[m][1][j]
            d1, d2 = dz[m][0][j], dz[m][1][j]
            w1, w2 = dtw[m + 1][j]
            if q is None:
                dv1 = -(d2 + P[2] * z1) / P[0] - w1
                dv2 = -(d1 + P[3] * z2) / P[1] - w2
            else:
                Q = q.values[j]
                dv1 = -(d2 + Q[2] * z1) / Q[0]
                dv2 = -(d1 + Q[3] * z2) / Q[1]
            rows_dv.append((dv1, dv2))
            rhs.extend([P[0] * w1, P[1] * w2])
        # the matrix has the determinant-condition layout with dv in place of dz
        M = assumption2_matrix([(z[m][0][j], z[m][1][j]) for m in (0, 1)],
                               [(rows_dv[m][1], rows_dv[m][0]) for m in (0, 1)])
        b = np.stack(rhs, axis=-1)
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(M)
        bad = ~np.isfinite(cond) | (cond > cond_limit)
        rho = np.full((len(grid.x[j]), 4), np.nan)
        if (~bad).any():
            rho[~bad] = np.linalg.solve(M[~bad], b[~bad][..., None])[..., 0]
        if bad.any() and (~bad).any():
            idx = np.arange(len(bad))
            for n in range(4):
                rho[bad, n] = np.interp(idx[bad], idx[~bad], rho[~bad, n])
        profile[j] = rho.T
        flagged[j] = bad
        if piecewise:
            good = rho[~bad] if (~bad).any() else rho
            constants[j] = np.median(good, axis=0)
    n_bad = sum(int(m.sum()) for m in flagged.values())
    if n_bad:
        log.warning("direct reconstruction: %d near-singular points interpolated", n_bad)
    return DirectReconstruction(profile, flagged, constants)


# -- difference system --------------------------------------------------------------------

@dataclass(frozen=True)
class DifferenceField:
    w: FieldTrajectory
    f: dict           # j -> (f1, f2)
    residual: float   # relative L2 norm of L(p) w - f, nan when p not given


def _same_grid(u: FieldTrajectory, v: FieldTrajectory):
    if len(u.t) != len(v.t) or not np.allclose(u.t, v.t) or set(u.x) != set(v.x):
        raise GridMismatchError("trajectories live on different time grids or networks")
    for j in u.x:
        if u.x[j].shape != v.x[j].shape or not np.allclose(u.x[j], v.x[j]):
            raise GridMismatchError(f"edge {j}: spatial grids differ")


def difference_field(u: FieldTrajectory, v: FieldTrajectory, rho: dict, p: CoefficientField = None) -> DifferenceField:
    """``w = u - v`` and the source ``(rho1 dv1/dt + rho3 v1, rho2 dv2/dt + rho4 v2)``."""
    _same_grid(u, v)
    w1 = {j: np.asarray(u.u1[j]) - v.u1[j] for j in u.x}
    w2 = {j: np.asarray(u.u2[j]) - v.u2[j] for j in u.x}
    f = {}
    for j in u.x:
        v1, v2 = np.asarray(v.u1[j]), np.asarray(v.u2[j])
        v1t = np.gradient(v1, v.t, axis=0, edge_order=2)
        v2t = np.gradient(v2, v.t, axis=0, edge_order=2)
        r = rho[j]
        f[j] = (r[0] * v1t + r[2] * v1, r[1] * v2t + r[3] * v2)
    w = FieldTrajectory(u.t, dict(u.x), w1, w2)
    residual = math.nan
    if p is not None:
        Lw = apply_operator(p, w)
        num = den = 0.0
        for j in u.x:
            for a, b in zip(Lw[j], f[j]):
                # interior nodes and levels: one-sided ends carry the vertex kinks
                num += float(np.sum((a - b)[1:-1, 1:-1] ** 2))
                den += float(np.sum(b[1:-1, 1:-1] ** 2))
        residual = math.sqrt(num / den) if den > 0 else math.sqrt(num)
    return DifferenceField(w, f, residual)


# -- measurements ---------------------------------------------------------------------

@dataclass(frozen=True)
class MeasurementSet:
    """Leaf current traces of ``w`` per experiment; ``traces[m]`` is a ``BoundaryTraces``."""

    t: np.ndarray
    traces: dict

    @classmethod
    def from_difference(cls, u_traces: dict, v_traces: dict) -> "MeasurementSet":
        out = {}
        for m, ut in u_traces.items():
            vt = v_traces[m]
            out[m] = BoundaryTraces(ut.t, {j: ut.values[j] - vt.values[j] for j in ut.values}, dict(ut.vertex))
        t = next(iter(out.values())).t
        return cls(t, out)

    @classmethod
    def from_trajectories(cls, w_by_m: dict, topology) -> "MeasurementSet":
        traces = {m: boundary_trace(w, topology) for m, w in w_by_m.items()}
        return cls(next(iter(traces.values())).t, traces)

    def norm(self, orders=(1, 2)) -> float:
        return float(sum(tr.norm(orders) for tr in self.traces.values()))

    def vector(self, orders=(1, 2)) -> np.ndarray:
        """Flattened traces scaled so the squared 2-norm equals ``norm(orders)``."""
        wts = np.full(len(self.t), self.t[1] - self.t[0])
        wts[0] = wts[-1] = 0.5 * wts[0]
        sw = np.sqrt(wts)
        parts = []
        for m in sorted(self.traces):
            tr = self.traces[m]
            for j in sorted(tr.values):
                for l in orders:
                    parts.append(tr.values[j][l] * sw)
        return np.concatenate(parts)

    def with_noise(self, level: float, rng: np.random.Generator) -> "MeasurementSet":
        """Additive Gaussian noise on every stored trace, scaled by its RMS."""
        out = {}
        for m in sorted(self.traces):
            tr = self.traces[m]
            vals = {}
            for j in sorted(tr.values):
                v = tr.values[j]
                rms = np.sqrt(np.mean(v**2, axis=1, keepdims=True))
                vals[j] = v + level * rms * rng.standard_normal(v.shape)
            out[m] = BoundaryTraces(tr.t, vals, dict(tr.vertex))
        return MeasurementSet(self.t, out)


def _solve_pair(topology, coefficients, experiments, grid, threads=1):
    jobs = [(coefficients, data) for data in experiments]
    return _map_solves(topology, grid, jobs, threads)


def _map_solves(topology, grid, jobs, threads):
    run = lambda job: boundary_trace(solve(topology, job[0], job[1], grid, "both"), topology)
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def simulate_measurements(topology, p: CoefficientField, q: CoefficientField, experiments, grid,
                          threads=1) -> MeasurementSet:
    u = _solve_pair(topology, p, experiments, grid, threads)
    v = _solve_pair(topology, q, experiments, grid, threads)
    return MeasurementSet.from_difference({1: u[0], 2: u[1]}, {1: v[0], 2: v[1]})


# -- stability experiment -------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityRow:
    epsilon: float
    lhs: float
    rhs: float
    ratio: float
    flags: tuple = ()
    rhs_l0: float = math.nan


@dataclass(frozen=True)
class StabilityTable:
    rows: list
    lipschitz: float
    geometry: object = None

    def ratios(self):
        return np.array([r.ratio for r in self.rows])


def _noise_floor(traces_list, T):
    eps = 100 * np.finfo(float).eps
    total = 0.0
    for tr in traces_list:
        for v in tr.values.values():
            dt = tr.t[1] - tr.t[0]
            peak = np.abs(v[0]).max()
            total += 2 * T * ((eps * peak / dt) ** 2 + (4 * eps * peak / dt**2) ** 2)
    return total


def trace_roughness(meas: MeasurementSet) -> float:
    """Largest ``dt * |d/dt (second derivative)| / |second derivative|`` over the traces.

    A second derivative resolved by the time grid gives a value of order
    ``dt``; values of order one mean the content sits at grid scale (kinks
    in the traces), so its norm depends on the resolution.
    """
    worst = 0.0
    for tr in meas.traces.values():
        dt = tr.t[1] - tr.t[0]
        for v in tr.values.values():
            d2 = v[2]
            den = np.sqrt(np.sum(d2**2))
            if den > 0:
                worst = max(worst, float(np.sqrt(np.sum(np.diff(d2) ** 2)) / den))
    return worst


def _d2_unresolved(meas: MeasurementSet, tol=0.2) -> bool:
    return trace_roughness(meas) > tol


def stability_experiment(topology, grid: GridSpec, p: CoefficientField, rho: dict, scales,
                         experiments: ExperimentPair, weights: WeightFamily = None,
                         threads: int = 1) -> StabilityTable:
    """Tabulate ``sum int |eps rho|^2 dx`` against the leaf data norm for each scale.

    The data norm sums the first and second time derivatives of the leaf
    currents of ``w`` over both experiments; the norm without derivatives is
    kept as ``rhs_l0``.
    """
    a2 = check_assumption2(experiments, grid)
    if not a2.passed:
        raise AssumptionError(f"Assumption 2 fails: min |det| = {a2.min_abs_det:.3g} at edge/x {a2.location}")
    geometry = None
    if weights is not None:
        geometry = check_d1_geometry(weights, topology)
        if not geometry.ok:
            raise AssumptionError(
                f"weight geometry: beta T^2 = {geometry.beta_T2:.6g} must exceed the spread "
                f"{geometry.spread:.6g} of alpha (x - xstar)^2")
    qs = []
    for eps in scales:
        q = p.perturbed(rho, eps)
        bad = q.violations(topology, lower=p.lower)
        if bad:
            raise AdmissibilityError(f"epsilon = {eps}: " + "; ".join(bad))
        qs.append(q)
    jobs = [(p, d) for d in experiments] + [(q, d) for q in qs for d in experiments]
    traces = _map_solves(topology, grid, jobs, threads)
    u = {1: traces[0], 2: traces[1]}
    floor = _noise_floor(traces[:2], grid.T)
    rows = []
    for i, eps in enumerate(scales):
        v = {1: traces[2 + 2 * i], 2: traces[3 + 2 * i]}
        meas = MeasurementSet.from_difference(u, v)
        lhs = perturbation_norm({j: eps * rho[j] for j in rho}, grid)
        rhs = meas.norm((1, 2))
        flags = []
        if rhs == 0.0:
            flags.append("zero-data")
            ratio = math.nan
        else:
            ratio = lhs / rhs
            if rhs < 10 * floor:
                flags.append("below-noise-floor")
            if _d2_unresolved(meas):
                flags.append("d2-unresolved")
        rows.append(StabilityRow(float(eps), lhs, rhs, ratio, tuple(flags), meas.norm((0,))))
    reliable = [r.ratio for r in rows if not {"zero-data", "below-noise-floor"} & set(r.flags)]
    return StabilityTable(rows, max(reliable) if reliable else math.nan, geometry)


# -- least squares -------------------------------------------------------------------------------

@dataclass
class LeastSquaresResult:
    theta: np.ndarray          # (N, 4) per-edge constants in edge order
    history: list = field(default_factory=list)  # (iteration, misfit, step norm, damping)
    converged: bool = False
    iterations: int = 0
    misfit: float = math.nan

    def constants(self, topology) -> dict:
        return {j: self.theta[i] for i, j in enumerate(topology.edge_ids)}


def least_squares_reconstruct(measured: MeasurementSet, experiments: ExperimentPair, topology, grid: GridSpec,
                              p: CoefficientField, lam: float = 0.0, theta0=None, mask=None,
                              max_iter: int = 20, fd_step: float = 1e-6, threads: int = 1,
                              rtol: float = 1e-10, floor: float = None) -> LeastSquaresResult:
    """Gauss-Newton over per-edge constant perturbations.

    Minimises the squared mismatch of the first and second time derivatives
    of leaf currents plus ``lam * |theta|^2``. ``mask`` (shape ``(N, 4)``,
    boolean) selects the free unknowns.
    """
    N = topology.edge_count
    theta = np.zeros((N, 4)) if theta0 is None else np.array(theta0, dtype=float).reshape(N, 4)
    mask = np.ones((N, 4), bool) if mask is None else np.asarray(mask, bool).reshape(N, 4)
    free = np.flatnonzero(mask.ravel())
    u_traces = _solve_pair(topology, p, experiments, grid, threads)
    u = {1: u_traces[0], 2: u_traces[1]}
    data = measured.vector()
    if floor is None:
        floor = (1e-12 * max(1.0, float(np.abs(data).max()))) ** 2 * len(data)

    def model_vectors(thetas):
        jobs = []
        for th in thetas:
            q = p.perturbed(piecewise_perturbation(topology, grid, th))
            jobs.extend((q, d) for d in experiments)
        tr = _map_solves(topology, grid, jobs, threads)
        out = []
        for i in range(len(thetas)):
            meas = MeasurementSet.from_difference(u, {1: tr[2 * i], 2: tr[2 * i + 1]})
            out.append(meas.vector())
        return out

    def objective(r, th):
        return float(r @ r + lam * np.sum(th.ravel()[free] ** 2))

    (model,) = model_vectors([theta])
    r = model - data
    misfit = objective(r, theta)
    result = LeastSquaresResult(theta.copy(), [(0, misfit, 0.0, 1.0)], misfit=misfit)
    if misfit <= floor:
        result.converged = True
        return result
    failures = 0
    best_theta, best = theta.copy(), misfit
    for it in range(1, max_iter + 1):
        probes = []
        for k in free:
            th = theta.ravel().copy()
            th[k] += fd_step * max(1.0, abs(th[k]))
            probes.append(th.reshape(N, 4))
        cols = model_vectors(probes)
        J = np.column_stack([(c - model) / (probes[i].ravel()[k] - theta.ravel()[k])
                             for i, (c, k) in enumerate(zip(cols, free))])
        A, b = J, -r
        if lam > 0:
            A = np.vstack([J, math.sqrt(lam) * np.eye(len(free))])
            b = np.concatenate([-r, -math.sqrt(lam) * theta.ravel()[free]])
        delta = np.linalg.lstsq(A, b, rcond=None)[0]
        accepted = False
        damping = 1.0
        for _ in range(3):
            trial = theta.ravel().copy()
            trial[free] += damping * delta
            trial = trial.reshape(N, 4)
            q = p.perturbed(piecewise_perturbation(topology, grid, trial))
            if q.violations(lower=p.lower):
                damping *= 0.5
                failures += 1
                continue
            (m_trial,) = model_vectors([trial])
            r_trial = m_trial - data
            f_trial = objective(r_trial, trial)
            if f_trial < misfit:
                accepted = True
                break
            damping *= 0.5
            failures += 1
        if not accepted:
            result.history.append((it, misfit, 0.0, damping))
            result.iterations = it
            log.warning("least squares: misfit stalled for 3 damped steps; returning best iterate")
            break
        failures = 0
        step = float(np.linalg.norm(damping * delta))
        decrease = misfit - f_trial
        theta, model, r, misfit = trial, m_trial, r_trial, f_trial
        result.history.append((it, misfit, step, damping))
        result.iterations = it
        if misfit < best:
            best_theta, best = theta.copy(), misfit
        if misfit <= floor or decrease <= rtol * misfit or step <= rtol * max(1.0, np.linalg.norm(theta)):
            result.converged = True
            break
    result.theta = best_theta
    result.misfit = best
    return result


def discrepancy_lambda(measured: MeasurementSet, noise_norm: float, solver, lambdas, tau: float = 1.1):
    """Largest ``lam`` whose data misfit stays within ``tau * noise_norm``.

    ``solver(lam)`` must return a ``LeastSquaresResult``; ``noise_norm`` is
    the squared norm of the noise in ``measured``.
    """
    best = None
    for lam in sorted(lambdas, reverse=True):
        res = solver(lam)
        data_misfit = res.misfit - lam * float(np.sum(res.theta**2))
        if data_misfit <= tau * noise_norm:
            return lam, res
        best = (lam, res)
    return best
