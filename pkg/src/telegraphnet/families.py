"""Named analytic function families with exact first derivatives.

Each family is a small callable object; ``derivative`` returns the exact
first derivative. Config documents describe them as mappings such as
``{family: gaussian, amplitude: 1, center: 0.3, width: 0.05}``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Constant:
    value: float = 0.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def derivative(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Polynomial:
    """``sum(coefficients[k] * (x - shift)**k)``."""

    coefficients: tuple = (0.0,)
    shift: float = 0.0

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float) - self.shift, self.coefficients)

    def derivative(self, x):
        d = np.polynomial.polynomial.polyder(self.coefficients)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float) - self.shift, d)


@dataclass(frozen=True)
class Sine:
    amplitude: float = 1.0
    wavenumber: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, x):
        return self.offset + self.amplitude * np.sin(self.wavenumber * np.asarray(x, dtype=float) + self.phase)

    def derivative(self, x):
        return self.amplitude * self.wavenumber * np.cos(self.wavenumber * np.asarray(x, dtype=float) + self.phase)


@dataclass(frozen=True)
class GaussianBump:
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 0.1
    offset: float = 0.0

    def __call__(self, x):
        r = (np.asarray(x, dtype=float) - self.center) / self.width
        return self.offset + self.amplitude * np.exp(-0.5 * r * r)

    def derivative(self, x):
        r = (np.asarray(x, dtype=float) - self.center) / self.width
        return -self.amplitude * r / self.width * np.exp(-0.5 * r * r)

    def nth_derivative(self, x, n):
        # Hermite recursion for d^n/dx^n exp(-r^2/2)
        r = (np.asarray(x, dtype=float) - self.center) / self.width
        h_prev, h = np.zeros_like(r), np.ones_like(r)
        for k in range(n):
            h_prev, h = h, r * h - k * h_prev
        value = (-1) ** n * h * np.exp(-0.5 * r * r) * self.amplitude / self.width**n
        return value + (self.offset if n == 0 else 0.0)


@dataclass(frozen=True)
class Exponential:
    amplitude: float = 1.0
    rate: float = 1.0
    offset: float = 0.0

    def __call__(self, x):
        return self.offset + self.amplitude * np.exp(self.rate * np.asarray(x, dtype=float))

    def derivative(self, x):
        return self.amplitude * self.rate * np.exp(self.rate * np.asarray(x, dtype=float))


class Samples:
    """Piecewise-linear interpolation of inline sample arrays."""

    def __init__(self, x, values):
        self.x = np.asarray(x, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.x.shape != self.values.shape or self.x.ndim != 1 or len(self.x) < 2:
            raise ConfigurationError("samples need matching 1-D x and values of length >= 2")
        if np.any(np.diff(self.x) <= 0):
            raise ConfigurationError("sample abscissae must be strictly increasing")
        self._slope = np.gradient(self.values, self.x, edge_order=2)

    def __call__(self, x):
        return np.interp(x, self.x, self.values)

    def derivative(self, x):
        return np.interp(x, self.x, self._slope)


class Scaled:
    """``factor * inner``; used for per-edge current scaling."""

    def __init__(self, inner, factor: float):
        self.inner = inner
        self.factor = float(factor)

    def __call__(self, x):
        return self.factor * self.inner(x)

    def derivative(self, x):
        return self.factor * self.inner.derivative(x)


FAMILIES = {
    "constant": Constant,
    "polynomial": Polynomial,
    "sine": Sine,
    "gaussian": GaussianBump,
    "exponential": Exponential,
}


def from_spec(spec):
    """Build a family from a number or a mapping with a ``family`` key."""
    if spec is None:
        return Constant(0.0)
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigurationError(f"cannot interpret function spec {spec!r}")
    params = {k: v for k, v in spec.items() if k != "family"}
    name = spec["family"]
    if name == "samples":
        return Samples(params["x"], params["values"])
    if name not in FAMILIES:
        raise ConfigurationError(f"unknown family {name!r}; choose from {sorted(FAMILIES) + ['samples']}")
    if name == "polynomial":
        params["coefficients"] = tuple(float(c) for c in params.get("coefficients", (0.0,)))
    try:
        return FAMILIES[name](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from exc
