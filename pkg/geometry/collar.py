"""
Hyperbolic collar geometry on the fixed cylinder C0 = [-1, 1] x S^1.

This module collects the closed-form expressions for the horizontal family
of collar metrics G_ℓ = f_ℓ^*(ρ_ℓ^2 (ds^2 + dθ^2)), its ℓ-derivative, the cusp
limit ℓ -> 0, the norms of dz^2 and the description of the thin part. All
functions are pure and vectorised over numpy arrays.

Writing c(x) = ℓ0 tan(ℓ0 x / 2π), the collar chart satisfies
tan(ℓ s_ℓ(x) / 2π) = c(x) / ℓ, which gives the compact forms

    G_xx = c'(x)^2 / (ℓ^2 + c(x)^2),     G_θθ = (ℓ^2 + c(x)^2) / 4π^2,

and in particular d/dℓ G_θθ = ℓ / 2π^2 independently of x.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import bisect, brentq

from common_utils.errors import DomainError, ParameterError

TWO_PI = 2.0 * np.pi
ARSINH_ONE = float(np.arcsinh(1.0))


@lru_cache(maxsize=64)
def ell0(eta: float) -> float:
    """Root ℓ0 of Y(ℓ0) = 1, computed once per η by bisection to 1e-12."""
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")

    def residual(ell: float) -> float:
        return _half_length(eta, ell) - 1.0

    lo, hi = 0.1, 10.0
    while residual(lo) < 0:
        lo *= 0.5
    while residual(hi) > 0:
        hi *= 2.0
    root = bisect(residual, lo, hi, xtol=1e-12, maxiter=200)
    logging.debug(f"ell0(eta={eta}) = {root:.15f}")
    return float(root)


def _half_length(eta: float, ell):
    ell = np.asarray(ell, dtype=float)
    return TWO_PI / ell * (0.5 * np.pi - np.arctan(eta * ell))


@dataclass(frozen=True)
class CollarParams:
    """The fixed family parameter η and the length ℓ of the central geodesic."""

    eta: float = 1.0
    ell: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta <= 0:
            raise ParameterError(f"eta must be positive, got {self.eta}")
        if not np.isfinite(self.ell) or self.ell <= 0:
            raise ParameterError(f"ell must be positive, got {self.ell}")

    @property
    def ell0(self) -> float:
        return ell0(self.eta)

    def with_ell(self, ell: float) -> "CollarParams":
        return CollarParams(eta=self.eta, ell=ell)


@dataclass(frozen=True)
class CollarChart:
    """
    The diffeomorphism f_ℓ(x, θ) = (s_ℓ(x), θ) from C0 onto [-Y, Y] x S^1.

    s_ℓ is odd and strictly increasing with s_ℓ(±1) = ±Y and s_ℓ0 = id.
    """

    ell: float
    ell0: float
    half_length: float

    def _c(self, x):
        x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        a = self.ell0 * x / TWO_PI
        return self.ell0 * np.tan(a), self.ell0**2 / TWO_PI / np.cos(a) ** 2

    def s_of_x(self, x):
        c, _ = self._c(x)
        return TWO_PI / self.ell * np.arctan(c / self.ell)

    def ds_dx(self, x):
        c, dc = self._c(x)
        return TWO_PI * dc / (self.ell**2 + c**2)

    def conformal_factor(self, x):
        """ρ_ℓ(s_ℓ(x)), the collar conformal factor read in the fixed coordinate x."""
        c, _ = self._c(x)
        return np.sqrt(self.ell**2 + c**2) / TWO_PI


def rho(params: CollarParams, s):
    """ρ_ℓ(s) = ℓ / (2π cos(ℓ s / 2π)); defined for |s| < π^2 / ℓ."""
    s = np.asarray(s, dtype=float)
    arg = params.ell * s / TWO_PI
    if np.any(np.abs(arg) >= 0.5 * np.pi):
        raise DomainError(f"rho undefined for |s| >= pi^2/ell = {np.pi**2 / params.ell}")
    return params.ell / (TWO_PI * np.cos(arg))


def half_length_Y(params: CollarParams) -> float:
    """Y(ℓ) = (2π/ℓ)(π/2 - atan(ηℓ)), strictly decreasing in ℓ."""
    return float(_half_length(params.eta, params.ell))


def collar_chart(params: CollarParams) -> CollarChart:
    return CollarChart(
        ell=params.ell,
        ell0=params.ell0,
        half_length=half_length_Y(params),
    )


def metric_G(params: CollarParams, x):
    """Diagonal components (G_xx, G_θθ) of G_ℓ at x in [-1, 1]; θ-independent."""
    chart = collar_chart(params)
    c, dc = chart._c(x)
    q = params.ell**2 + c**2
    return dc**2 / q, q / TWO_PI**2


def dG_dell(params: CollarParams, x):
    """
    Analytic ∂G_ℓ/∂ℓ at fixed x.

    The result is -(ℓ/2π^2) times the pullback of ds^2 - dθ^2, i.e. the real
    part of a multiple of dz^2 (the family is horizontal).
    """
    chart = collar_chart(params)
    c, dc = chart._c(x)
    q = params.ell**2 + c**2
    d_xx = -2.0 * params.ell * dc**2 / q**2
    d_tt = np.full_like(np.asarray(c, dtype=float), params.ell / (2.0 * np.pi**2))
    return d_xx, d_tt


def dz2_norms(params: CollarParams) -> tuple[float, float]:
    """Closed-form (‖dz²‖_L∞, ‖dz²‖²_L²) on the collar of length ℓ."""
    ell = params.ell
    a = np.arctan(params.eta * ell)
    sup_norm = 8.0 * np.pi**2 / ell**2
    l2_norm_sq = 64.0 * np.pi**4 / ell**3 * (np.sin(a) * np.cos(a) + (0.5 * np.pi - a))
    return float(sup_norm), float(l2_norm_sq)


def dz2_norm_quadrature(params: CollarParams, n_nodes: int = 10001) -> float:
    """‖dz²‖²_L² by composite Simpson quadrature of |dz²|²_g = 4ρ^{-4} over the collar."""
    y = half_length_Y(params)
    s = np.linspace(-y, y, n_nodes)
    integrand = 4.0 / rho(params, s) ** 2
    return float(TWO_PI * simpson(integrand, x=s))


def cusp_rho0(eta: float, s):
    """Conformal factor ρ0(s) = 1/(2πη + s) of the hyperbolic cusp."""
    return 1.0 / (TWO_PI * eta + np.asarray(s, dtype=float))


def cusp_metric_G0(eta: float, x):
    """
    Limit metric G0 = f_±^*(ρ0^2 (ds^2 + dθ^2)) on C_± as ℓ -> 0.

    f_±(x) = (2π/ℓ0) tan(π/2 ∓ ℓ0 x/2π) - 2πη maps x = ±1 to the cusp end s = 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x == 0.0):
        raise DomainError("the cusp metric is not defined on the central circle x = 0")
    l0 = ell0(eta)
    a = l0 * np.abs(np.clip(x, -1.0, 1.0)) / TWO_PI
    sigma = TWO_PI / l0 / np.tan(a) - TWO_PI * eta
    dsigma = 1.0 / np.sin(a) ** 2
    r0 = cusp_rho0(eta, sigma)
    return r0**2 * dsigma**2, r0**2


def thin_part_X(ell: float, delta: float) -> float:
    """
    Half width X_δ(ℓ) of the δ-thin part in collar coordinates.

    Zero for δ < ℓ/2; only defined for 0 < δ <= arsinh(1).
    """
    if delta <= 0 or delta > ARSINH_ONE:
        raise DomainError(f"delta must lie in (0, arsinh(1)], got {delta}")
    if delta < 0.5 * ell:
        return 0.0
    ratio = min(1.0, np.sinh(0.5 * ell) / np.sinh(delta))
    return float(TWO_PI / ell * (0.5 * np.pi - np.arcsin(ratio)))


def injectivity_radius(params: CollarParams, s):
    """inj(s) on the collar: sinh(inj) = sinh(ℓ/2) / cos(ℓ s / 2π)."""
    s = np.asarray(s, dtype=float)
    arg = params.ell * s / TWO_PI
    if np.any(np.abs(arg) >= 0.5 * np.pi):
        raise DomainError("collar coordinate outside of the collar")
    return np.arcsinh(np.sinh(0.5 * params.ell) / np.cos(arg))


def width(params: CollarParams) -> float:
    """Distance between the two boundary circles of (C0, G_ℓ)."""
    arg = params.ell * half_length_Y(params) / (2.0 * TWO_PI) + 0.25 * np.pi
    return float(2.0 * np.log(np.tan(arg)))


def gauss_curvature(params: CollarParams, x, step: float = 1e-3):
    """
    Second-order finite-difference Gauss curvature of G_ℓ at x.

    For E dx^2 + G dθ^2 with θ-independent coefficients,
    K = -(E G)^{-1/2} d/dx( (√G)_x / √E ).
    """
    x = np.asarray(x, dtype=float)

    def sqrt_parts(y):
        g_xx, g_tt = metric_G(params, y)
        return np.sqrt(g_xx), np.sqrt(g_tt)

    def flux(y):
        sqrt_e, _ = sqrt_parts(y)
        _, up = sqrt_parts(y + 0.5 * step)
        _, down = sqrt_parts(y - 0.5 * step)
        return (up - down) / step / sqrt_e

    sqrt_e, sqrt_g = sqrt_parts(x)
    dflux = (flux(x + 0.5 * step) - flux(x - 0.5 * step)) / step
    return -dflux / (sqrt_e * sqrt_g)


def ell_upper_bound(eta: float, energy: float, delta: float) -> float:
    """
    Largest ℓ compatible with E >= (π/2) δ^2 / Y(ℓ).

    Since Y is decreasing this is the root of Y(ℓ) = π δ^2 / (2E).
    """
    if energy <= 0 or delta <= 0:
        raise ParameterError("energy and delta must be positive")
    y_min = 0.5 * np.pi * delta**2 / energy

    def residual(ell: float) -> float:
        return float(_half_length(eta, ell)) - y_min

    lo, hi = 1e-3, 1.0
    while residual(lo) < 0:
        lo *= 0.5
    while residual(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            return float("inf")
    return float(brentq(residual, lo, hi, xtol=1e-14))
