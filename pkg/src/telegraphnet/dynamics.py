"""Telegrapher's equations on a tree with Kirchhoff coupling.

Per edge the unknowns are current ``u1`` and voltage ``u2`` with

    p1 du1/dt + p3 u1 + du2/dx = f1
    p2 du2/dt + p4 u2 + du1/dx = f2

The semi-discretisation is node based. The spatial term is split along the
local characteristics (speed ``c = 1/sqrt(p1 p2)``, impedance
``Z = sqrt(p1/p2)``) and each half is differenced with an upwind-biased
second-order stencil (Fromm in the interior, one-sided at edge ends). Time
integration is SSP-RK3. After every stage the value of the incoming
characteristic at each edge end is replaced by the exact solution of the
vertex coupling problem, so voltage continuity and current balance hold to
rounding at every stored level.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import families
from .errors import ConfigurationError, DomainError, StencilError
from .network import NetworkTopology, conserved_flows

DIRECTIONS = ("forward", "backward", "both")


# -- grid ----------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Node grid per edge plus a uniform time step on ``[-T, T]``."""

    cells: dict
    T: float
    dt: float
    cfl: float
    x: dict

    @classmethod
    def build(cls, topology: NetworkTopology, cells, T: float, cfl: float = 0.8, speed: float = 1.0):
        """``cells`` is an int (same on every edge) or a mapping edge -> int.

        ``dt`` is the largest step with ``dt <= cfl * min(dx) / speed`` that
        divides ``T`` exactly.
        """
        if not 0 < cfl <= 1:
            raise ConfigurationError(f"CFL number must lie in (0, 1], got {cfl}")
        if T <= 0:
            raise ConfigurationError(f"horizon T must be positive, got {T}")
        if isinstance(cells, (int, np.integer)):
            cells = {j: int(cells) for j in topology.edge_ids}
        cells = {int(j): int(n) for j, n in cells.items()}
        if set(cells) != set(topology.edge_ids):
            raise ConfigurationError("cell counts must cover every edge")
        if min(cells.values()) < 2:
            raise ConfigurationError("every edge needs at least 2 cells")
        x = {
            j: topology.x_start(j) + np.linspace(0.0, topology.edge(j).length, cells[j] + 1)
            for j in topology.edge_ids
        }
        dxmin = min(topology.edge(j).length / cells[j] for j in cells)
        steps = max(1, math.ceil(T * speed / (cfl * dxmin) - 1e-12))
        return cls(cells=cells, T=float(T), dt=T / steps, cfl=float(cfl), x=x)

    @property
    def nt(self) -> int:
        return int(round(self.T / self.dt))

    def dx(self, j: int) -> float:
        return self.x[j][1] - self.x[j][0]

    def times(self, direction: str = "both") -> np.ndarray:
        n = np.arange(self.nt + 1)
        if direction == "forward":
            return n * self.dt
        if direction == "backward":
            return -n[::-1] * self.dt
        return np.arange(-self.nt, self.nt + 1) * self.dt

    def refit(self, coefficients: "CoefficientField") -> "GridSpec":
        """Same spatial grid, ``dt`` adjusted to the actual wave speeds."""
        dxmin = min(self.dx(j) * np.sqrt(coefficients.values[j][0] * coefficients.values[j][1]).min()
                    for j in self.cells)
        steps = max(1, math.ceil(self.T / (self.cfl * dxmin) - 1e-12))
        return GridSpec(self.cells, self.T, self.T / steps, self.cfl, self.x)


# -- coefficients ----------------------------------------------------------------

def _sample(item, x):
    if callable(item):
        return np.broadcast_to(np.asarray(item(x), dtype=float), x.shape).copy()
    if isinstance(item, dict):
        return families.from_spec(item)(x)
    return np.full_like(x, float(item))


@dataclass(frozen=True)
class CoefficientField:
    """Per-edge samples of (L, C, R, G) at the grid nodes, shape ``(4, n_j + 1)``.

    ``adjustment`` records the largest change made when endpoint samples of
    ``p1``/``p2`` were averaged across incident edges at interior vertices.
    """

    values: dict
    lower: tuple = None
    upper: tuple = None
    adjustment: float = 0.0

    @classmethod
    def from_functions(cls, topology, grid, spec, enforce_consistency=True, lower=None, upper=None):
        """``spec`` is a 4-sequence applied to every edge or a mapping edge -> 4-sequence.

        Items may be numbers, callables of ``x`` or family mappings.
        """
        per_edge = spec if isinstance(spec, dict) else {j: spec for j in topology.edge_ids}
        values = {}
        for j in topology.edge_ids:
            items = per_edge[j]
            if len(items) != 4:
                raise ConfigurationError(f"edge {j}: need four coefficient profiles (L, C, R, G)")
            values[j] = np.vstack([_sample(item, grid.x[j]) for item in items])
        adjustment = 0.0
        if enforce_consistency:
            values, adjustment = enforce_vertex_consistency(topology, values)
        return cls(values, lower, upper, adjustment)

    @classmethod
    def constant(cls, topology, grid, p):
        return cls.from_functions(topology, grid, tuple(float(v) for v in p))

    def bounds(self):
        lo = self.lower or tuple(min(v[i].min() for v in self.values.values()) for i in (0, 1))
        up = self.upper or tuple(max(np.abs(v[i]).max() for v in self.values.values()) for i in range(4))
        return lo, up

    def violations(self, topology=None, lower=None, tol=1e-12) -> list:
        """Membership problems for the admissible class; empty when admissible."""
        lo = lower or self.lower or (0.0, 0.0)
        out = []
        for j, v in self.values.items():
            for i in (0, 1):
                if v[i].min() <= 0 or v[i].min() < lo[i]:
                    out.append(f"edge {j}: p{i + 1} min {v[i].min():.6g} below bound {lo[i]:.6g}")
            for i in (2, 3):
                if v[i].min() < -tol:
                    out.append(f"edge {j}: p{i + 1} negative ({v[i].min():.6g})")
            if self.upper is not None:
                for i in range(4):
                    if np.abs(v[i]).max() > self.upper[i] + tol:
                        out.append(f"edge {j}: p{i + 1} exceeds bound {self.upper[i]:.6g}")
        if topology is not None:
            gap = vertex_inconsistency(topology, self.values)
            if gap > 1e-12 * max(1.0, max(np.abs(v[:2]).max() for v in self.values.values())):
                out.append(f"p1/p2 inconsistent at an interior vertex by {gap:.3g}")
        return out

    def perturbed(self, rho: dict, eps: float = 1.0) -> "CoefficientField":
        return CoefficientField({j: self.values[j] + eps * rho[j] for j in self.values},
                                self.lower, self.upper, 0.0)


def _end_slices(topology):
    """Yield (vertex, [(edge, index into node array)]) for interior vertices."""
    for k in sorted(topology.Pi2):
        yield k, [(j, -1) for j in sorted(topology.S_T[k])] + [(j, 0) for j in sorted(topology.S_I[k])]


def enforce_vertex_consistency(topology, values):
    values = {j: v.copy() for j, v in values.items()}
    adjustment = 0.0
    for _, ends in _end_slices(topology):
        for i in (0, 1):
            samples = np.array([values[j][i, idx] for j, idx in ends])
            mean = samples.mean()
            adjustment = max(adjustment, float(np.abs(samples - mean).max()))
            for j, idx in ends:
                values[j][i, idx] = mean
    return values, adjustment


def vertex_inconsistency(topology, values) -> float:
    gap = 0.0
    for _, ends in _end_slices(topology):
        for i in (0, 1):
            samples = [values[j][i, idx] for j, idx in ends]
            gap = max(gap, max(samples) - min(samples))
    return gap


# -- problem data ----------------------------------------------------------------

@dataclass
class ProblemData:
    """Initial data, boundary voltages and optional sources.

    ``initial`` maps edge -> (current, voltage), each a family object with
    ``__call__`` and ``derivative``. ``boundary`` maps exterior vertex ->
    callable of ``t`` (missing vertices are held at zero). ``source`` is a
    callable ``(edge, x, t) -> (f1, f2)`` or None.
    """

    initial: dict
    boundary: dict = field(default_factory=dict)
    source: Callable = None

    @classmethod
    def uniform(cls, topology, current=0.0, voltage=0.0, boundary=None, current_scale=None, source=None):
        """Same families on every edge; ``current_scale="flow"`` multiplies the
        current by the conserved flow of each edge so that it balances at
        interior vertices."""
        cur, vol = families.from_spec(current), families.from_spec(voltage)
        flows = conserved_flows(topology) if current_scale == "flow" else None
        initial = {}
        for j in topology.edge_ids:
            c = families.Scaled(cur, flows[j]) if flows else cur
            initial[j] = (c, vol)
        bnd = {}
        for k, sig in (boundary or {}).items():
            bnd[int(k)] = sig if callable(sig) else families.from_spec(sig)
        return cls(initial, bnd, source)

    def boundary_value(self, k, t) -> float:
        sig = self.boundary.get(k)
        return 0.0 if sig is None else float(sig(t))

    def sample_initial(self, grid):
        z1 = {j: np.asarray(self.initial[j][0](grid.x[j]), dtype=float) * np.ones_like(grid.x[j])
              for j in grid.x}
        z2 = {j: np.asarray(self.initial[j][1](grid.x[j]), dtype=float) * np.ones_like(grid.x[j])
              for j in grid.x}
        return z1, z2

    def sample_initial_derivative(self, grid):
        d1 = {j: self.initial[j][0].derivative(grid.x[j]) * np.ones_like(grid.x[j]) for j in grid.x}
        d2 = {j: self.initial[j][1].derivative(grid.x[j]) * np.ones_like(grid.x[j]) for j in grid.x}
        return d1, d2

    def scaled(self, factor: float) -> "ProblemData":
        initial = {j: (families.Scaled(a, factor), families.Scaled(b, factor)) for j, (a, b) in self.initial.items()}
        boundary = {k: (lambda t, s=s: factor * s(t)) for k, s in self.boundary.items()}
        source = None
        if self.source is not None:
            src = self.source

            def source(j, x, t):
                f1, f2 = src(j, x, t)
                return factor * np.asarray(f1), factor * np.asarray(f2)
        return ProblemData(initial, boundary, source)


def corner_mismatch(topology, data: ProblemData, grid) -> float:
    """Largest violation of the t = 0 compatibility conditions."""
    z1, z2 = data.sample_initial(grid)
    worst = 0.0
    for k in topology.Pi1:
        for j, end in topology.incident(k):
            v = z2[j][-1 if end == "T" else 0]
            worst = max(worst, abs(v - data.boundary_value(k, 0.0)))
    for k in topology.Pi2:
        ends = topology.incident(k)
        volts = [z2[j][-1 if e == "T" else 0] for j, e in ends]
        worst = max(worst, max(volts) - min(volts))
        balance = sum(z1[j][0] for j, e in ends if e == "I") - sum(z1[j][-1] for j, e in ends if e == "T")
        worst = max(worst, abs(balance))
    return worst


# -- trajectories ----------------------------------------------------------------

@dataclass(frozen=True)
class FieldTrajectory:
    """Space-time samples per edge; arrays have shape ``(len(t), n_j + 1)``."""

    t: np.ndarray
    x: dict
    u1: dict
    u2: dict
    f1: dict = None
    f2: dict = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def edge_ids(self):
        return sorted(self.x)

    def level(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise KeyError(f"t = {t} is not a stored level")
        return i

    def with_source(self, f1, f2) -> "FieldTrajectory":
        return FieldTrajectory(self.t, self.x, self.u1, self.u2, f1, f2)


# -- vertex coupling -----------------------------------------------------------

def couple_vertex(topology, k, incoming: dict, impedance: dict):
    """Solve the local junction problem at interior vertex ``k``.

    ``incoming`` maps each incident edge to the amplitude of the
    characteristic travelling into the vertex, expressed as a voltage
    (``(u2 + Z u1)/2`` at a terminal end, ``(u2 - Z u1)/2`` at an initial
    end). Returns ``(V, currents, outgoing)`` where ``currents[j]`` is
    ``u1`` of edge j at the vertex and ``outgoing[j]`` the amplitude sent
    back into edge j.
    """
    if k not in topology.Pi2:
        raise KeyError(f"vertex {k} is not interior")
    ends = topology.incident(k)
    n = len(ends)
    # unknowns: V, i_1..i_n
    A = np.zeros((n + 1, n + 1))
    b = np.zeros(n + 1)
    for r, (j, end) in enumerate(ends):
        sign = 1.0 if end == "T" else -1.0
        A[r, 0] = 1.0
        A[r, r + 1] = sign * impedance[j]
        b[r] = 2.0 * incoming[j]
        A[n, r + 1] = -sign  # sum over S_I minus sum over S_T
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:  # impossible for positive impedances
        raise RuntimeError(f"singular junction system at vertex {k}") from exc
    V = float(sol[0])
    currents, outgoing = {}, {}
    for r, (j, end) in enumerate(ends):
        sign = 1.0 if end == "T" else -1.0
        currents[j] = float(sol[r + 1])
        outgoing[j] = 0.5 * (V - sign * impedance[j] * sol[r + 1])
    return V, currents, outgoing


# -- solver ----------------------------------------------------------------------

def _stencils(n: int, dx: float):
    """Upwind-biased first-derivative matrices for right- and left-moving parts."""
    Dm = sp.lil_matrix((n + 1, n + 1))
    Dp = sp.lil_matrix((n + 1, n + 1))
    for i in range(1, n + 1):
        if i == 1:
            Dm[i, 0], Dm[i, 2] = -0.5, 0.5
        elif i == n:
            Dm[i, n], Dm[i, n - 1], Dm[i, n - 2] = 1.5, -2.0, 0.5
        else:
            Dm[i, i - 2], Dm[i, i - 1], Dm[i, i], Dm[i, i + 1] = 0.25, -1.25, 0.75, 0.25
    for i in range(0, n):
        if i == n - 1:
            Dp[i, n], Dp[i, n - 2] = 0.5, -0.5
        elif i == 0:
            Dp[i, 0], Dp[i, 1], Dp[i, 2] = -1.5, 2.0, -0.5
        else:
            Dp[i, i + 2], Dp[i, i + 1], Dp[i, i], Dp[i, i - 1] = -0.25, 1.25, -0.75, -0.25
    return Dm.tocsr() / dx, Dp.tocsr() / dx


class _Assembly:
    """Concatenated node vectors and coupling index arrays for one solve."""

    def __init__(self, topology, grid, coefficients, sign34=1.0):
        self.topology = topology
        self.edges = topology.edge_ids
        self.offsets = {}
        off = 0
        for j in self.edges:
            self.offsets[j] = off
            off += grid.cells[j] + 1
        self.size = off
        P = np.hstack([coefficients.values[j] for j in self.edges])
        self.p1, self.p2 = P[0], P[1]
        self.p3, self.p4 = sign34 * P[2], sign34 * P[3]
        self.Z = np.sqrt(self.p1 / self.p2)
        self.half_inv_p1 = 0.5 / self.p1
        self.half_c = 0.5 / np.sqrt(self.p1 * self.p2)
        blocks = [_stencils(grid.cells[j], grid.dx(j)) for j in self.edges]
        self.Dm = sp.block_diag([b[0] for b in blocks], format="csr")
        self.Dp = sp.block_diag([b[1] for b in blocks], format="csr")
        self.x = np.hstack([grid.x[j] for j in self.edges])

        nodes, signs, verts = [], [], []
        for k in sorted(topology.coordinates):
            for j, end in topology.incident(k):
                o = self.offsets[j]
                nodes.append(o + grid.cells[j] if end == "T" else o)
                signs.append(1.0 if end == "T" else -1.0)
                verts.append(k)
        self.end_node = np.array(nodes)
        self.end_sign = np.array(signs)
        self.end_vertex = np.array(verts)
        self.end_Z = self.Z[self.end_node]
        self.interior_mask = np.isin(self.end_vertex, sorted(topology.Pi2))
        self.exterior_vertices = sorted(topology.Pi1)
        self.n_vertices = topology.vertex_count
        self.inv_Z_sum = np.bincount(self.end_vertex, weights=1.0 / self.end_Z, minlength=self.n_vertices)

    def rhs(self, u1, u2, f1, f2):
        rp = self.Z * (self.Dm @ u1) + self.Dm @ u2
        lm = -self.Z * (self.Dp @ u1) + self.Dp @ u2
        du1 = -self.half_inv_p1 * (rp + lm) - self.p3 * u1 / self.p1
        du2 = -self.half_c * (rp - lm) - self.p4 * u2 / self.p2
        if f1 is not None:
            du1 += f1 / self.p1
            du2 += f2 / self.p2
        return du1, du2

    def couple(self, u1, u2, boundary_values):
        """Overwrite edge-end values with the junction / boundary solution."""
        n = self.end_node
        w = 0.5 * (u2[n] + self.end_sign * self.end_Z * u1[n])
        V = 2.0 * np.bincount(self.end_vertex, weights=w / self.end_Z, minlength=self.n_vertices) / self.inv_Z_sum
        for k, val in boundary_values.items():
            V[k] = val
        Vend = V[self.end_vertex]
        u2[n] = Vend
        u1[n] = self.end_sign * (2.0 * w - Vend) / self.end_Z


def check_cfl(grid: GridSpec, coefficients: CoefficientField):
    limit = min(grid.dx(j) * np.sqrt(coefficients.values[j][0] * coefficients.values[j][1]).min()
                for j in grid.cells)
    if grid.dt > grid.cfl * limit * (1 + 1e-12):
        raise ConfigurationError(
            f"CFL violation: dt = {grid.dt:.6g} exceeds {grid.cfl} * min(dx sqrt(p1 p2)) = {grid.cfl * limit:.6g}"
        )


def _march(asm: _Assembly, u1, u2, steps, dt, boundary, source):
    """SSP-RK3 march; ``boundary(s)`` maps exterior vertices to voltages at march time s."""
    out1 = np.empty((steps + 1, asm.size))
    out2 = np.empty((steps + 1, asm.size))
    out1[0], out2[0] = u1, u2
    f = source if source is not None else (lambda s: (None, None))
    for n in range(steps):
        s = n * dt
        a1, a2 = asm.rhs(u1, u2, *f(s))
        v1, v2 = u1 + dt * a1, u2 + dt * a2
        asm.couple(v1, v2, boundary(s + dt))
        a1, a2 = asm.rhs(v1, v2, *f(s + dt))
        w1 = 0.75 * u1 + 0.25 * (v1 + dt * a1)
        w2 = 0.75 * u2 + 0.25 * (v2 + dt * a2)
        asm.couple(w1, w2, boundary(s + 0.5 * dt))
        a1, a2 = asm.rhs(w1, w2, *f(s + 0.5 * dt))
        u1 = u1 / 3.0 + (2.0 / 3.0) * (w1 + dt * a1)
        u2 = u2 / 3.0 + (2.0 / 3.0) * (w2 + dt * a2)
        asm.couple(u1, u2, boundary(s + dt))
        out1[n + 1], out2[n + 1] = u1, u2
    return out1, out2


def solve(topology, coefficients: CoefficientField, data: ProblemData, grid: GridSpec,
          direction: str = "forward", compat_tol: float = 1e-6) -> FieldTrajectory:
    """Discrete solution on ``[0, T]``, ``[-T, 0]`` or ``[-T, T]``.

    The backward half solves the time-reversed system (current and damping
    terms change sign) forward from ``t = 0``.
    """
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"direction must be one of {DIRECTIONS}")
    for j, v in coefficients.values.items():
        if v[0].min() <= 0 or v[1].min() <= 0:
            raise DomainError(f"edge {j}: p1 and p2 must be positive")
    check_cfl(grid, coefficients)
    mismatch = corner_mismatch(topology, data, grid)
    if mismatch > compat_tol:
        warnings.warn(f"initial data incompatible at t=0 corners (mismatch {mismatch:.3g})", stacklevel=2)

    z1, z2 = data.sample_initial(grid)
    edges = topology.edge_ids
    Z1 = np.hstack([z1[j] for j in edges])
    Z2 = np.hstack([z2[j] for j in edges])
    steps = grid.nt
    parts = []

    def make_source(asm, sign):
        # reversed time s = -t: the source becomes (f1, -f2) evaluated at -s
        if data.source is None:
            return None

        def src(s):
            f1 = np.empty(asm.size)
            f2 = np.empty(asm.size)
            for j in edges:
                o = asm.offsets[j]
                sl = slice(o, o + grid.cells[j] + 1)
                a, b = data.source(j, grid.x[j], sign * s)
                f1[sl], f2[sl] = a, sign * np.asarray(b)
            return f1, f2
        return src

    if direction in ("backward", "both"):
        asm = _Assembly(topology, grid, coefficients, sign34=-1.0)
        bnd = lambda s: {k: data.boundary_value(k, -s) for k in asm.exterior_vertices}
        b1, b2 = _march(asm, -Z1, Z2.copy(), steps, grid.dt, bnd, make_source(asm, -1.0))
        parts.append((-b1[::-1], b2[::-1]))
    if direction in ("forward", "both"):
        asm = _Assembly(topology, grid, coefficients)
        bnd = lambda s: {k: data.boundary_value(k, s) for k in asm.exterior_vertices}
        f1, f2 = _march(asm, Z1.copy(), Z2.copy(), steps, grid.dt, bnd, make_source(asm, 1.0))
        parts.append((f1, f2))
    if len(parts) == 2:
        U1 = np.vstack([parts[0][0], parts[1][0][1:]])
        U2 = np.vstack([parts[0][1], parts[1][1][1:]])
    else:
        U1, U2 = parts[0]
    t = grid.times(direction)
    u1, u2 = {}, {}
    for j in edges:
        o = asm.offsets[j]
        sl = slice(o, o + grid.cells[j] + 1)
        u1[j] = U1[:, sl]
        u2[j] = U2[:, sl]
        u1[j].flags.writeable = False
        u2[j].flags.writeable = False
    return FieldTrajectory(t, dict(grid.x), u1, u2)


# -- diagnostics -----------------------------------------------------------------

def kirchhoff_residuals(trajectory: FieldTrajectory, topology: NetworkTopology):
    """Per stored level: max voltage jump and max current imbalance over interior vertices."""
    volt = np.zeros(len(trajectory.t))
    curr = np.zeros(len(trajectory.t))
    for k in topology.Pi2:
        ends = topology.incident(k)
        V = np.column_stack([trajectory.u2[j][:, -1 if e == "T" else 0] for j, e in ends])
        volt = np.maximum(volt, V.max(axis=1) - V.min(axis=1))
        bal = sum(trajectory.u1[j][:, 0] for j, e in ends if e == "I") - \
            sum(trajectory.u1[j][:, -1] for j, e in ends if e == "T")
        curr = np.maximum(curr, np.abs(bal))
    return volt, curr


def energy_series(trajectory: FieldTrajectory, coefficients: CoefficientField) -> np.ndarray:
    total = np.zeros(len(trajectory.t))
    for j in trajectory.edge_ids:
        p = coefficients.values[j]
        dens = p[0] * trajectory.u1[j] ** 2 + p[1] * trajectory.u2[j] ** 2
        total += np.trapezoid(dens, trajectory.x[j], axis=1)
    return total


def energy(trajectory: FieldTrajectory, coefficients: CoefficientField, t: float) -> float:
    """Sum over edges of the trapezoidal integral of ``p1 u1^2 + p2 u2^2``."""
    i = trajectory.level(t)
    total = 0.0
    for j in trajectory.edge_ids:
        p = coefficients.values[j]
        dens = p[0] * trajectory.u1[j][i] ** 2 + p[1] * trajectory.u2[j][i] ** 2
        total += float(np.trapezoid(dens, trajectory.x[j]))
    return total


@dataclass(frozen=True)
class EnergyBoundReport:
    t: np.ndarray
    values: np.ndarray
    M_hat: float
    t_max: float


def time_derivatives(a: np.ndarray, dt: float):
    """Derivatives of order 0..3 along axis 0 at levels 2..L-3 (5-point third difference)."""
    if a.shape[0] < 5:
        raise StencilError(f"need at least 5 stored levels for third differences, have {a.shape[0]}")
    c = a[2:-2]
    d1 = (a[3:-1] - a[1:-3]) / (2 * dt)
    d2 = (a[3:-1] - 2 * c + a[1:-3]) / dt**2
    d3 = (a[4:] - 2 * a[3:-1] + 2 * a[1:-3] - a[:-4]) / (2 * dt**3)
    return c, d1, d2, d3


def energy_bound_report(trajectory: FieldTrajectory, coefficients=None, data=None) -> EnergyBoundReport:
    """Empirical bound on the sum over k = 0..3 of the L2 norms of time derivatives."""
    dt = trajectory.dt
    total = np.zeros(len(trajectory.t) - 4)
    for j in trajectory.edge_ids:
        for arr in (trajectory.u1[j], trajectory.u2[j]):
            for d in time_derivatives(arr, dt):
                total += np.trapezoid(d**2, trajectory.x[j], axis=1)
    i = int(np.argmax(total))
    t = trajectory.t[2:-2]
    return EnergyBoundReport(t, total, float(total[i]), float(t[i]))


@dataclass(frozen=True)
class BoundaryTraces:
    """Current at each leaf terminal; ``values[j]`` has rows l = 0, 1, 2."""

    t: np.ndarray
    values: dict
    vertex: dict

    def norm(self, orders=(1, 2)) -> float:
        return float(sum(np.trapezoid(v[l] ** 2, self.t) for v in self.values.values() for l in orders))


def _trace_derivatives(s, t):
    d1 = np.gradient(s, t, edge_order=2)
    d2 = np.gradient(d1, t, edge_order=2)
    # second difference directly where possible for a compact stencil
    dt = t[1] - t[0]
    d2[1:-1] = (s[2:] - 2 * s[1:-1] + s[:-2]) / dt**2
    return np.vstack([s, d1, d2])


def boundary_trace(trajectory: FieldTrajectory, topology: NetworkTopology) -> BoundaryTraces:
    """Leaf-terminal current traces (root excluded) and their first two time derivatives."""
    values, vertex = {}, {}
    for k, j in topology.leaf_terminals():
        values[j] = _trace_derivatives(np.asarray(trajectory.u1[j][:, -1]), trajectory.t)
        vertex[j] = k
    return BoundaryTraces(trajectory.t, values, vertex)


# -- operator and analytic fields --------------------------------------------------

class AnalyticField:
    """Closed-form field. Subclasses implement ``evaluate(j, x, t)`` returning
    ``(u1, u2, u1_x, u2_x, u1_t, u2_t)`` broadcast over ``x`` and ``t``."""

    def evaluate(self, j, x, t):
        raise NotImplementedError

    def sample(self, grid: GridSpec, coefficients: CoefficientField = None, direction="both"):
        """Sample on the grid; with coefficients also attach ``f = L(p) u``."""
        t = grid.times(direction)
        u1, u2, f1, f2 = {}, {}, {}, {}
        for j in grid.x:
            vals = self.evaluate(j, grid.x[j][None, :], t[:, None])
            shape = (len(t), len(grid.x[j]))
            u1[j] = np.broadcast_to(vals[0], shape).copy()
            u2[j] = np.broadcast_to(vals[1], shape).copy()
            if coefficients is not None:
                f1[j], f2[j] = _operator_from_derivatives(coefficients.values[j], vals, shape)
        traj = FieldTrajectory(t, dict(grid.x), u1, u2)
        return traj.with_source(f1, f2) if coefficients is not None else traj


def _operator_from_derivatives(p, vals, shape):
    u1, u2, u1x, u2x, u1t, u2t = (np.broadcast_to(v, shape) for v in vals)
    f1 = p[0] * u1t + p[2] * u1 + u2x
    f2 = p[1] * u2t + p[3] * u2 + u1x
    return f1, f2


def apply_operator(coefficients: CoefficientField, field, grid: GridSpec = None, direction="both"):
    """``f = L(p) u`` per edge as ``{j: (f1, f2)}``.

    Analytic fields use exact derivatives; sampled trajectories use
    second-order centred differences in x and t.
    """
    out = {}
    if isinstance(field, AnalyticField):
        t = grid.times(direction)
        for j in grid.x:
            shape = (len(t), len(grid.x[j]))
            vals = field.evaluate(j, grid.x[j][None, :], t[:, None])
            out[j] = _operator_from_derivatives(coefficients.values[j], vals, shape)
        return out
    for j in field.edge_ids:
        x, t = field.x[j], field.t
        u1, u2 = np.asarray(field.u1[j]), np.asarray(field.u2[j])
        u1t = np.gradient(u1, t, axis=0, edge_order=2)
        u2t = np.gradient(u2, t, axis=0, edge_order=2)
        u1x = np.gradient(u1, x, axis=1, edge_order=2)
        u2x = np.gradient(u2, x, axis=1, edge_order=2)
        out[j] = _operator_from_derivatives(coefficients.values[j], (u1, u2, u1x, u2x, u1t, u2t), u1.shape)
    return out


class TravelingWave(AnalyticField):
    """Lossless constant-coefficient solution on a single line:
    ``u2 = F(x - c t) + G(x + c t)``, ``u1 = (F(x - c t) - G(x + c t)) / Z``."""

    def __init__(self, right, left=None, p1=1.0, p2=1.0):
        self.F = right
        self.G = left or families.Constant(0.0)
        self.c = 1.0 / math.sqrt(p1 * p2)
        self.Z = math.sqrt(p1 / p2)

    def evaluate(self, j, x, t):
        a, b = x - self.c * t, x + self.c * t
        F, G = self.F(a), self.G(b)
        Fp, Gp = self.F.derivative(a), self.G.derivative(b)
        u1, u2 = (F - G) / self.Z, F + G
        return (u1, u2, (Fp - Gp) / self.Z, Fp + Gp,
                -self.c * (Fp + Gp) / self.Z, self.c * (Gp - Fp))


class ManufacturedField(AnalyticField):
    """Smooth field meeting every homogeneous condition of the source problem.

    With ``xi`` the local coordinate in [0, 1] and ``B(t) = (T^2 - t^2)^2``:

        u2_j = B(t) (1 + a sin(pi t / T)) * (psi_I (1 - xi) + psi_T xi + b_j sin(pi xi))
        u1_j = B(t) cos(pi t / (2 T)) * (g_j + c_j sin(pi xi))

    ``psi`` is 1 on interior vertices and 0 on exterior ones, ``g`` the
    conserved flow obtained from ``leaf_flow`` (zero by default, so the
    current vanishes at every vertex). Voltage is continuous and current balances at interior
    vertices; voltage vanishes at exterior vertices and everything vanishes
    at ``t = +-T``.
    """

    def __init__(self, topology: NetworkTopology, T: float, leaf_flow: float = 0.0,
                 voltage_bump: float = 0.5, current_bump: float = 0.3, modulation: float = 0.5):
        self.topology = topology
        self.T = float(T)
        self.flows = conserved_flows(topology, leaf_flow)
        self.psi = {k: (1.0 if k in topology.Pi2 else 0.0) for k in topology.coordinates}
        self.vb = voltage_bump
        self.cb = current_bump
        self.mod = modulation

    def evaluate(self, j, x, t):
        e = self.topology.edge(j)
        x0, l = self.topology.coordinates[e.tail], e.length
        xi = (x - x0) / l
        T = self.T
        B = (T * T - t * t) ** 2
        Bt = -4.0 * t * (T * T - t * t)
        m = 1.0 + self.mod * np.sin(np.pi * t / T)
        mt = self.mod * np.pi / T * np.cos(np.pi * t / T)
        n = np.cos(0.5 * np.pi * t / T)
        nt = -0.5 * np.pi / T * np.sin(0.5 * np.pi * t / T)
        psi_i, psi_t = self.psi[e.tail], self.psi[e.head]
        P = psi_i * (1 - xi) + psi_t * xi + self.vb * np.sin(np.pi * xi)
        Px = (psi_t - psi_i) / l + self.vb * np.pi / l * np.cos(np.pi * xi)
        Q = self.flows[j] + self.cb * np.sin(np.pi * xi)
        Qx = self.cb * np.pi / l * np.cos(np.pi * xi)
        u2 = B * m * P
        u1 = B * n * Q
        return (u1, u2, B * n * Qx, B * m * Px, (Bt * n + B * nt) * Q, (Bt * m + B * mt) * P)


def manufacture_homogeneous_field(topology, grid=None, T=None, **kwargs) -> ManufacturedField:
    return ManufacturedField(topology, T if T is not None else grid.T, **kwargs)
