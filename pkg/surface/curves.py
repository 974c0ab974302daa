"""
Boundary curves module for the two prescribed Jordan curves Γ^+ and Γ^-.

Curves are closed periodic cubic splines through control points sampled at
equally spaced parameters on [0, 2π). The module also covers the distance
δ_Γ between the curves, plain-text curve files and the built-in presets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from common_utils.errors import ConfigError, CurvesNotDisjointError, ParameterError
from common_utils.utils import get_curve_preset_by_name

TWO_PI = 2.0 * np.pi
MIN_DISTANCE = 1e-9


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Closed curve α: S^1 -> R^n given by its control points at θ_k = 2πk/m."""

    control_points: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        if points.shape[0] < 4:
            raise ParameterError("a boundary curve needs at least 4 control points")
        if not np.all(np.isfinite(points)):
            raise ParameterError("control points must be finite")
        object.__setattr__(self, "control_points", points)
        m = points.shape[0]
        params = TWO_PI * np.arange(m + 1) / m
        closed = np.vstack([points, points[:1]])
        object.__setattr__(self, "_spline", CubicSpline(params, closed, bc_type="periodic", axis=0))
        speed = np.linalg.norm(self.derivative(np.linspace(0.0, TWO_PI, 8 * m, endpoint=False)), axis=1)
        if np.min(speed) <= 1e-12:
            raise ParameterError("boundary curve is not regular (vanishing derivative)")

    @classmethod
    def from_function(cls, func, n_points: int = 64) -> "BoundaryCurve":
        theta = TWO_PI * np.arange(n_points) / n_points
        return cls(np.asarray(func(theta), dtype=float))

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    def __call__(self, theta) -> np.ndarray:
        return self._spline(np.mod(np.asarray(theta, dtype=float), TWO_PI))

    def derivative(self, theta) -> np.ndarray:
        return self._spline(np.mod(np.asarray(theta, dtype=float), TWO_PI), 1)

    def sample(self, n: int = 256) -> np.ndarray:
        """n points on the closed loop, endpoint included (first == last)."""
        theta = np.linspace(0.0, TWO_PI, n)
        points = self(theta)
        points[-1] = points[0]
        return points

    def length(self, n: int = 4096) -> float:
        theta = np.linspace(0.0, TWO_PI, n, endpoint=False)
        return float(np.mean(np.linalg.norm(self.derivative(theta), axis=1)) * TWO_PI)


def delta_gamma(c1: BoundaryCurve, c2: BoundaryCurve, n_samples: int = 2048, n_candidates: int = 8) -> float:
    """
    Distance between the two curves.

    A KD-tree search over dense samples picks candidate parameter pairs, each
    refined by a local minimisation of |α1(t1) - α2(t2)|^2.
    """
    t = TWO_PI * np.arange(n_samples) / n_samples
    p1, p2 = c1(t), c2(t)
    dist, idx = cKDTree(p2).query(p1)
    order = np.argsort(dist)[:n_candidates]
    best = float(dist[order[0]])

    def objective(z):
        diff = c1(z[0]) - c2(z[1])
        return float(diff @ diff)

    def gradient(z):
        diff = c1(z[0]) - c2(z[1])
        return np.array([2.0 * diff @ c1.derivative(z[0]), -2.0 * diff @ c2.derivative(z[1])])

    for k in order:
        result = minimize(objective, np.array([t[k], t[idx[k]]]), jac=gradient, method="BFGS", options={"gtol": 1e-14})
        best = min(best, float(np.sqrt(max(result.fun, 0.0))))
    if best < MIN_DISTANCE:
        raise CurvesNotDisjointError(f"boundary curves intersect (distance {best:.3e})")
    return best


def read_curve_file(path: str | Path) -> BoundaryCurve:
    """Parse a curve file: header "n=<dim> period=2pi", then one control point per line."""
    path = Path(path)
    with open(path, "r") as f:
        lines = f.readlines()
    header = lines[0].split() if lines else []
    fields = dict(item.split("=", 1) for item in header if "=" in item)
    if "n" not in fields or fields.get("period") != "2pi":
        raise ConfigError(f"bad curve header in {path}", key="header", line=1)
    try:
        dim = int(fields["n"])
    except ValueError:
        raise ConfigError(f"bad dimension in {path}", key="n", line=1)
    points = []
    for number, line in enumerate(lines[1:], start=2):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            values = [float(v) for v in stripped.split()]
        except ValueError:
            raise ConfigError(f"non-numeric control point in {path}", line=number)
        if len(values) != dim:
            raise ConfigError(f"expected {dim} coordinates in {path}", line=number)
        points.append(values)
    logging.debug(f"Read {len(points)} control points from {path}")
    return BoundaryCurve(np.array(points))


def write_curve_file(curve: BoundaryCurve, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w") as f:
        f.write(f"n={curve.dim} period=2pi\n")
        for point in curve.control_points:
            f.write(" ".join(repr(float(v)) for v in point) + "\n")


def coaxial_circles(radius: float, separation: float, n_points: int = 64) -> tuple[BoundaryCurve, BoundaryCurve]:
    """Two circles of equal radius in the planes z = ±separation/2, same orientation."""

    def circle(height):
        return lambda t: np.column_stack([radius * np.cos(t), radius * np.sin(t), np.full_like(t, height)])

    return (
        BoundaryCurve.from_function(circle(0.5 * separation), n_points),
        BoundaryCurve.from_function(circle(-0.5 * separation), n_points),
    )


def offset_circles(radius: float, separation: float, offset: float, n_points: int = 64):
    """Coaxial-type circles whose upper circle is shifted by `offset` along the x axis."""

    def circle(height, shift):
        return lambda t: np.column_stack([shift + radius * np.cos(t), radius * np.sin(t), np.full_like(t, height)])

    return (
        BoundaryCurve.from_function(circle(0.5 * separation, offset), n_points),
        BoundaryCurve.from_function(circle(-0.5 * separation, 0.0), n_points),
    )


def planar_ellipses(semi_a: float, semi_b: float, separation: float, n_points: int = 64):
    def ellipse(height):
        return lambda t: np.column_stack([semi_a * np.cos(t), semi_b * np.sin(t), np.full_like(t, height)])

    return (
        BoundaryCurve.from_function(ellipse(0.5 * separation), n_points),
        BoundaryCurve.from_function(ellipse(-0.5 * separation), n_points),
    )


def curves_from_preset(preset: dict) -> tuple[BoundaryCurve, BoundaryCurve]:
    """Build (Γ^+, Γ^-) from a preset dictionary of curve_presets.json."""
    kind = preset.get("kind")
    n_points = int(preset.get("n_points", 64))
    if kind == "coaxial_circles":
        return coaxial_circles(preset["radius"], preset["separation"], n_points)
    if kind == "offset_circles":
        return offset_circles(preset["radius"], preset["separation"], preset["offset"], n_points)
    if kind == "ellipses":
        return planar_ellipses(preset["semi_a"], preset["semi_b"], preset["separation"], n_points)
    raise ConfigError(f"unknown curve preset kind '{kind}'", key="kind")


def load_curve_preset(name: str) -> tuple[BoundaryCurve, BoundaryCurve]:
    preset = get_curve_preset_by_name(name)
    if preset is None:
        raise ConfigError(f"unknown curve preset '{name}'", key="preset")
    return curves_from_preset(preset)
