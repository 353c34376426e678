"""Weight functions ``phi_j = alpha_j (x - xstar_j)^2 - beta t^2`` and weighted estimates."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, ConfigurationError
from .network import NetworkTopology

DEFAULT_S = (5.0, 10.0, 20.0, 40.0)


@dataclass(frozen=True)
class WeightFamily:
    alpha: dict
    xstar: dict
    beta: float
    T: float

    def phi(self, j, x, t):
        return self.alpha[j] * (x - self.xstar[j]) ** 2 - self.beta * t**2

    def phi_x(self, j, x):
        return 2.0 * self.alpha[j] * (x - self.xstar[j])

    def phi_t(self, t):
        return -2.0 * self.beta * t

    def spatial(self, j, x):
        return self.alpha[j] * (x - self.xstar[j]) ** 2


def build_weights(topology: NetworkTopology, root_alpha: float, root_xstar: float,
                  beta: float, T: float) -> WeightFamily:
    """Propagate weight parameters from the root so they match at every vertex.

    For an interior vertex with incoming edge i and ``n = |S_I|`` outgoing
    edges, ``xstar_j = ((n - 1) x(V) + xstar_i) / n`` and
    ``alpha_j = n^2 alpha_i``.
    """
    if not root_alpha > 0:
        raise ConfigurationError("root_alpha must be positive")
    if beta < 0:
        raise ConfigurationError("beta must be non-negative")
    if not root_xstar < topology.coordinates[topology.root]:
        raise ConfigurationError("root_xstar must lie before the root vertex")
    alpha, xstar = {}, {}
    stack = []
    for j in topology.S_I[topology.root]:
        alpha[j], xstar[j] = float(root_alpha), float(root_xstar)
        stack.append(j)
    while stack:
        i = stack.pop()
        k = topology.edge(i).head
        out = sorted(topology.S_I[k])
        n = len(out)
        xv = topology.coordinates[k]
        for j in out:
            xstar[j] = ((n - 1) * xv + xstar[i]) / n
            alpha[j] = n * n * alpha[i]
            stack.append(j)
    return WeightFamily(alpha, xstar, float(beta), float(T))


def compatibility_errors(weights: WeightFamily, topology: NetworkTopology):
    """Max relative error of value continuity and of the slope ratio over interior vertices."""
    cont = slope = 0.0
    for k in topology.Pi2:
        xv = topology.coordinates[k]
        (i,) = topology.S_T[k]
        n = len(topology.S_I[k])
        vi = weights.spatial(i, xv)
        si = n * weights.phi_x(i, xv)
        for j in topology.S_I[k]:
            vj = weights.spatial(j, xv)
            sj = weights.phi_x(j, xv)
            cont = max(cont, abs(vi - vj) / max(abs(vi), abs(vj), 1e-300))
            slope = max(slope, abs(si - sj) / max(abs(si), abs(sj), 1e-300))
    return cont, slope


@dataclass(frozen=True)
class GeometryCheck:
    ok: bool
    beta_T2: float
    spread: float
    d1: float


def check_d1_geometry(weights: WeightFamily, topology: NetworkTopology) -> GeometryCheck:
    """``beta T^2 > max alpha (x - xstar)^2 - min alpha (x - xstar)^2``.

    When it holds, ``d1 = min_x phi(x, 0)`` exceeds ``max_x phi(x, +-T)``.
    """
    hi = max(weights.spatial(j, topology.x_end(j)) for j in topology.edge_ids)
    lo = min(weights.spatial(j, topology.x_start(j)) for j in topology.edge_ids)
    bt2 = weights.beta * weights.T**2
    return GeometryCheck(bt2 > hi - lo, bt2, hi - lo, lo)


@dataclass(frozen=True)
class Assumption1Result:
    passed: bool
    min_abs: float
    location: tuple  # (edge, x, t) of min |D|
    sign: int
    sufficient: dict  # edge -> bool for sqrt(p1 p2) beta T < alpha (x(I) - xstar)

    def message(self) -> str:
        j, x, t = self.location
        state = "holds" if self.passed else "violated"
        return (f"Assumption 1 {state}: min |p1 p2 phi_t^2 - phi_x^2| = {self.min_abs:.6g} "
                f"at edge {j}, x = {x:.6g}, t = {t:.6g}")


def check_assumption1(weights: WeightFamily, coefficients, grid, times=None) -> Assumption1Result:
    """Evaluate ``D = 4 p1 p2 beta^2 t^2 - 4 alpha^2 (x - xstar)^2`` on the grid nodes."""
    t = grid.times("both") if times is None else np.asarray(times)
    best = (math.inf, None)
    signs = set()
    sufficient = {}
    for j in sorted(grid.x):
        x = grid.x[j]
        p = coefficients.values[j]
        pp = p[0] * p[1]
        D = pp[None, :] * weights.phi_t(t)[:, None] ** 2 - weights.phi_x(j, x)[None, :] ** 2
        absD = np.abs(D)
        i = np.unravel_index(np.argmin(absD), D.shape)
        if absD[i] < best[0]:
            best = (float(absD[i]), (j, float(x[i[1]]), float(t[i[0]])))
        signs.update(np.unique(np.sign(D)).astype(int).tolist())
        sufficient[j] = bool(np.sqrt(pp).max() * weights.beta * np.abs(t).max()
                             < weights.alpha[j] * (x[0] - weights.xstar[j]))
    passed = len(signs) == 1 and 0 not in signs and best[0] > 0
    sign = signs.pop() if len(signs) == 1 else 0
    return Assumption1Result(passed, best[0], best[1], sign, sufficient)


@dataclass(frozen=True)
class CarlemanReport:
    s: np.ndarray
    lhs_log: np.ndarray
    rhs_source_log: np.ndarray
    btilde_log: np.ndarray
    ratio: np.ndarray
    C_hat: float

    def rows(self):
        for i in range(len(self.s)):
            yield (self.s[i], self.lhs_log[i], self.rhs_source_log[i], self.btilde_log[i], self.ratio[i])


def _log_weighted(s, terms):
    """log of sum over ``(values, phi, integrate)`` of integrate(values * exp(2 s phi)).

    The largest exponent is factored out so ``2 s phi`` never overflows.
    """
    if not terms:
        return -math.inf
    offset = max(2.0 * s * float(phi.max()) for _, phi, _ in terms)
    total = 0.0
    for values, phi, integrate in terms:
        total += integrate(values * np.exp(2.0 * s * phi - offset))
    return offset + math.log(total) if total > 0 else -math.inf


def default_s_grid(weights: WeightFamily, trajectory) -> np.ndarray:
    phimax = max(np.abs(weights.phi(j, trajectory.x[j][None, :], trajectory.t[:, None])).max()
                 for j in trajectory.edge_ids)
    return np.array(DEFAULT_S) / phimax


def evaluate_estimate(trajectory, topology, weights: WeightFamily, coefficients, grid=None,
                      s_grid=None, homogeneity_tol: float = 1e-8) -> CarlemanReport:
    """Both sides of the weighted estimate for each ``s``.

    ``trajectory`` must carry the source samples ``f1``/``f2``. Integrals
    use the trapezoidal rule on the stored grid, with the weight evaluated
    pointwise.
    """
    if trajectory.f1 is None:
        raise ConfigurationError("trajectory carries no source samples")
    if grid is not None:
        check = check_assumption1(weights, coefficients, grid, times=trajectory.t)
        if not check.passed:
            raise AssumptionError(check.message())
    _warn_inhomogeneous(trajectory, topology, homogeneity_tol)
    s_grid = default_s_grid(weights, trajectory) if s_grid is None else np.asarray(s_grid, dtype=float)
    t = trajectory.t
    integrate2 = {j: (lambda a, x=trajectory.x[j]: float(np.trapezoid(np.trapezoid(a, x, axis=1), t)))
                  for j in trajectory.edge_ids}
    phi = {j: weights.phi(j, trajectory.x[j][None, :], t[:, None]) for j in trajectory.edge_ids}
    usq = {j: np.asarray(trajectory.u1[j]) ** 2 + np.asarray(trajectory.u2[j]) ** 2 for j in trajectory.edge_ids}
    fsq = {j: np.asarray(trajectory.f1[j]) ** 2 + np.asarray(trajectory.f2[j]) ** 2 for j in trajectory.edge_ids}
    leaves = [j for _, j in topology.leaf_terminals()]
    bsq = {j: np.asarray(trajectory.u1[j][:, -1]) ** 2 for j in leaves}
    bphi = {j: weights.phi(j, trajectory.x[j][-1], t) for j in leaves}
    integrate1 = lambda a: float(np.trapezoid(a, t))

    lhs, rhs, btl = [], [], []
    for s in s_grid:
        lhs.append(2 * math.log(s) + _log_weighted(s, [(usq[j], phi[j], integrate2[j]) for j in usq]))
        rhs.append(_log_weighted(s, [(fsq[j], phi[j], integrate2[j]) for j in fsq]))
        btl.append(math.log(s) + _log_weighted(s, [(bsq[j], bphi[j], integrate1) for j in leaves]))
    lhs, rhs, btl = map(np.array, (lhs, rhs, btl))
    denom = np.logaddexp(rhs, btl)
    with np.errstate(invalid="ignore"):
        ratio = np.where(np.isneginf(lhs), 0.0, np.exp(lhs - denom))
    return CarlemanReport(s_grid, lhs, rhs, btl, ratio, float(np.nanmax(ratio)) if len(ratio) else math.nan)


def _warn_inhomogeneous(trajectory, topology, tol):
    scale = max(max(np.abs(trajectory.u1[j]).max(), np.abs(trajectory.u2[j]).max()) for j in trajectory.edge_ids)
    if scale == 0:
        return
    worst = 0.0
    for j in trajectory.edge_ids:
        for lev in (0, -1):
            worst = max(worst, np.abs(trajectory.u1[j][lev]).max(), np.abs(trajectory.u2[j][lev]).max())
    for k in topology.Pi1:
        for j, end in topology.incident(k):
            worst = max(worst, np.abs(trajectory.u2[j][:, -1 if end == "T" else 0]).max())
    if worst > tol * scale:
        warnings.warn(f"trajectory violates homogeneous conditions by {worst / scale:.3g} (relative)", stacklevel=3)
