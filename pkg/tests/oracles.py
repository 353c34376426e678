"""Independent reference computations used by the tests.

Nothing here calls the quadrature, stencil or linear-algebra code of the
package; fields are only evaluated pointwise through their value outputs.
"""
import math

import numpy as np


def gauss_panels(a, b, panels, order):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    h = np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + 0.5 * h[:, None] * g[None, :]).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _values(field, j, x, t):
    u = field.evaluate(j, x, t)
    return np.asarray(u[0], float), np.asarray(u[1], float)


def operator_by_differences(field, j, x, t, p, h=1e-4):
    """``L(p) u`` from fourth-order central differences of the field values only."""
    def d(fun, shift):
        a = fun(2 * shift)
        b = fun(shift)
        c = fun(-shift)
        e = fun(-2 * shift)
        return [(-a[k] + 8 * b[k] - 8 * c[k] + e[k]) / (12 * h) for k in (0, 1)]

    u1, u2 = _values(field, j, x, t)
    u1x, u2x = d(lambda s: _values(field, j, x + s, t), h)
    u1t, u2t = d(lambda s: _values(field, j, x, t + s), h)
    f1 = p[0] * u1t + p[2] * u1 + u2x
    f2 = p[1] * u2t + p[3] * u2 + u1x
    return u1, u2, f1, f2


def carleman_terms(field, topology, weights, p, s_values, x_panels, t_panels, order=3):
    """Brute-force logs of s^2 int |u|^2 e^{2 s phi}, int |f|^2 e^{2 s phi}
    and s int u1(leaf)^2 e^{2 s phi} for constant coefficients ``p``."""
    T = weights.T
    tn, tw = gauss_panels(-T, T, t_panels, order)
    out = {}
    parts = {s: [] for s in s_values}
    for e in topology.edges:
        j = e.id
        x0 = topology.coordinates[e.tail]
        xn, xw = gauss_panels(x0, x0 + e.length, x_panels, order)
        X, Tt = np.meshgrid(xn, tn)
        W = np.outer(tw, xw)
        u1, u2, f1, f2 = operator_by_differences(field, j, X, Tt, p)
        phi = weights.alpha[j] * (X - weights.xstar[j]) ** 2 - weights.beta * Tt**2
        for s in s_values:
            parts[s].append((W, u1**2 + u2**2, f1**2 + f2**2, phi))
    leaves = [j for _, j in topology.leaf_terminals()]
    for s in s_values:
        m = max(2 * s * float(ph.max()) for *_, ph in parts[s])
        lhs = sum(float(np.sum(W * a * np.exp(2 * s * ph - m))) for W, a, _, ph in parts[s])
        rhs = sum(float(np.sum(W * b * np.exp(2 * s * ph - m))) for W, _, b, ph in parts[s])
        bnd = 0.0
        for j in leaves:
            xe = topology.x_end(j)
            u1, _ = _values(field, j, np.full_like(tn, xe), tn)
            ph = weights.alpha[j] * (xe - weights.xstar[j]) ** 2 - weights.beta * tn**2
            bnd += float(np.sum(tw * u1**2 * np.exp(2 * s * ph - m)))
        log = lambda v: m + math.log(v) if v > 0 else -math.inf
        out[s] = (2 * math.log(s) + log(lhs), log(rhs), math.log(s) + log(bnd))
    return out


def junction_closed_form(Z_in, Z_out):
    """Voltage reflection and transmission of a wave on an edge of impedance
    ``Z_in`` meeting parallel edges of impedances ``Z_out``."""
    load = 1.0 / sum(1.0 / z for z in Z_out)
    r = (load - Z_in) / (load + Z_in)
    return r, 1.0 + r


def assumption1_grid_min(p1p2, alpha, xstar, beta, x, t):
    """min |4 p1 p2 beta^2 t^2 - 4 alpha^2 (x - xstar)^2| by brute force."""
    X, Tt = np.meshgrid(x, t)
    return float(np.abs(4 * p1p2 * beta**2 * Tt**2 - 4 * alpha**2 * (X - xstar) ** 2).min())
