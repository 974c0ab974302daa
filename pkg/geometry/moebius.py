"""
Boundary diffeomorphisms h_{b,φ} of the cylinder built from Möbius transforms.

On each boundary circle h restricts to the circle map induced by
M_{b,φ}(z) = e^{iφ} (z + b) / (1 + b̄ z); the two boundary maps are blended
into the identity by cut-off functions so that h is the identity on
|x| <= 1/2. The six real parameters (Re b^±, Im b^±, φ^±) move the metric
g = h^* G_ℓ through pullback; their generating tensors ∂g/∂p are computed
here together with the diagnostics on their mutual orthogonality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from common_utils.errors import NumericalFailure, ParameterError
from geometry.collar import CollarParams, dG_dell, metric_G
from geometry.tensors import TensorField

PARAMETER_NAMES = ("re_b_plus", "im_b_plus", "re_b_minus", "im_b_minus", "phi_plus", "phi_minus")
POLAR_NAMES = ("abs_b_plus", "arg_b_plus", "abs_b_minus", "arg_b_minus", "phi_plus", "phi_minus")
FD_STEP = 1e-5


@dataclass(frozen=True)
class DiffeoParams:
    """b^± in the open unit disc and the unbounded windings φ^±."""

    b_plus: complex = 0j
    b_minus: complex = 0j
    phi_plus: float = 0.0
    phi_minus: float = 0.0

    def __post_init__(self):
        for name in ("b_plus", "b_minus"):
            value = complex(getattr(self, name))
            if not np.isfinite(value.real) or not np.isfinite(value.imag) or abs(value) >= 1.0:
                raise ParameterError(f"{name} must satisfy |b| < 1, got {value}")
        for name in ("phi_plus", "phi_minus"):
            if not np.isfinite(getattr(self, name)):
                raise ParameterError(f"{name} must be finite")

    def as_vector(self) -> np.ndarray:
        bp, bm = complex(self.b_plus), complex(self.b_minus)
        return np.array([bp.real, bp.imag, bm.real, bm.imag, self.phi_plus, self.phi_minus])

    @classmethod
    def from_vector(cls, v) -> "DiffeoParams":
        return cls(
            b_plus=complex(v[0], v[1]),
            b_minus=complex(v[2], v[3]),
            phi_plus=float(v[4]),
            phi_minus=float(v[5]),
        )

    def unwound(self) -> "DiffeoParams":
        """Compose with h_{0,-2πn}: reduce φ^± to [0, 2π) without changing g on the boundary."""
        return replace(
            self,
            phi_plus=float(np.mod(self.phi_plus, 2.0 * np.pi)),
            phi_minus=float(np.mod(self.phi_minus, 2.0 * np.pi)),
        )


def _bump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dbump(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def smoothstep(t):
    """C^∞ step: 0 for t <= 0, 1 for t >= 1."""
    a, b = _bump(t), _bump(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def dsmoothstep(t):
    t = np.asarray(t, dtype=float)
    a, b = _bump(t), _bump(1.0 - t)
    da, db = _dbump(t), _dbump(1.0 - t)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffPair:
    """
    λ1 ≡ 0 on [-1, 3/4], ≡ 1 on [7/8, 1]; λ2 ≡ 0 on [-1, 1/2], ≡ 1 on [5/8, 1].
    """

    lambda1_start: float = 0.75
    lambda1_end: float = 0.875
    lambda2_start: float = 0.5
    lambda2_end: float = 0.625

    def lambda1(self, x):
        return smoothstep((np.asarray(x) - self.lambda1_start) / (self.lambda1_end - self.lambda1_start))

    def lambda2(self, x):
        return smoothstep((np.asarray(x) - self.lambda2_start) / (self.lambda2_end - self.lambda2_start))

    def dlambda1(self, x):
        width = self.lambda1_end - self.lambda1_start
        return dsmoothstep((np.asarray(x) - self.lambda1_start) / width) / width

    def dlambda2(self, x):
        width = self.lambda2_end - self.lambda2_start
        return dsmoothstep((np.asarray(x) - self.lambda2_start) / width) / width

    def violations(self, n_samples: int = 2001) -> list[str]:
        """Names of the plateau/support conditions this pair breaks."""
        x = np.linspace(-1.0, 1.0, n_samples)
        l1, l2 = self.lambda1(x), self.lambda2(x)
        found = []
        if np.any(l1[x <= 0.75] != 0.0):
            found.append("lambda1 not zero on [-1, 3/4]")
        if np.any(np.abs(l1[x >= 0.875] - 1.0) > 1e-15):
            found.append("lambda1 not one on [7/8, 1]")
        if np.any(l2[x <= 0.5] != 0.0):
            found.append("lambda2 not zero on [-1, 1/2]")
        if np.any(np.abs(l2[x >= 0.625] - 1.0) > 1e-15):
            found.append("lambda2 not one on [5/8, 1]")
        if np.any((l1 < 0) | (l1 > 1) | (l2 < 0) | (l2 > 1)):
            found.append("cut-off values outside [0, 1]")
        return found


def _check_b(b: complex) -> complex:
    b = complex(b)
    if abs(b) >= 1.0:
        raise ParameterError(f"Möbius parameter must satisfy |b| < 1, got {b}")
    return b


def mobius_angle(b: complex, phi: float, theta):
    """
    Lift f_{b,φ} of the circle map induced by M_{b,φ}, with f_{0,0} = id.

    Because 1 + b e^{-iθ} has positive real part for |b| < 1,
    f_{b,φ}(θ) = θ + 2 Arg(1 + b e^{-iθ}) + φ is already continuous in θ.
    """
    b = _check_b(b)
    theta = np.asarray(theta, dtype=float)
    w = 1.0 + b * np.exp(-1j * theta)
    return theta + 2.0 * np.angle(w) + phi


def mobius_angle_derivatives(b: complex, theta):
    """(∂_θ f_b, ∂_{Re b} f_b, ∂_{Im b} f_b) at θ."""
    b = _check_b(b)
    theta = np.asarray(theta, dtype=float)
    e = np.exp(-1j * theta)
    w = 1.0 + b * e
    d_theta = (1.0 - abs(b) ** 2) / np.abs(w) ** 2
    ratio = e / w
    return d_theta, 2.0 * ratio.imag, 2.0 * ratio.real


def mobius_mixed_derivative(a: float, theta):
    """∂_a ∂_θ f_a for real a."""
    theta = np.asarray(theta, dtype=float)
    mod_sq = (1.0 + a * np.cos(theta)) ** 2 + (a * np.sin(theta)) ** 2
    bracket = 2.0 * a * np.sin(theta) ** 2 + 2.0 * (1.0 + a * np.cos(theta)) * (a + np.cos(theta))
    return -bracket / mod_sq**2


def _side_terms(p: DiffeoParams, x):
    x = np.asarray(x, dtype=float)
    upper = x >= 0
    sign = np.where(upper, 1.0, -1.0)
    return upper, sign, np.abs(x)


def h_map(p: DiffeoParams, cutoffs: CutoffPair, x, theta):
    """h_{b,φ}(x, θ) = (x, θ'); the identity on |x| <= 1/2."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x, theta = np.broadcast_arrays(x, theta)
    upper, _, ax = _side_terms(p, x)
    l1, l2 = cutoffs.lambda1(ax), cutoffs.lambda2(ax)
    shift_plus = mobius_angle(p.b_plus, 0.0, theta) - theta
    shift_minus = mobius_angle(p.b_minus, 0.0, theta) - theta
    shift = np.where(upper, shift_plus, shift_minus)
    phi = np.where(upper, p.phi_plus, p.phi_minus)
    return x.copy(), theta + l1 * shift + l2 * phi


def h_jacobian(p: DiffeoParams, cutoffs: CutoffPair, x, theta):
    """(∂θ'/∂x, ∂θ'/∂θ); the x-component of h is the identity."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x, theta = np.broadcast_arrays(x, theta)
    upper, sign, ax = _side_terms(p, x)
    l1 = cutoffs.lambda1(ax)
    dl1, dl2 = cutoffs.dlambda1(ax), cutoffs.dlambda2(ax)
    shift = np.where(
        upper,
        mobius_angle(p.b_plus, 0.0, theta) - theta,
        mobius_angle(p.b_minus, 0.0, theta) - theta,
    )
    dtheta_f = np.where(
        upper,
        mobius_angle_derivatives(p.b_plus, theta)[0],
        mobius_angle_derivatives(p.b_minus, theta)[0],
    )
    phi = np.where(upper, p.phi_plus, p.phi_minus)
    d_x = sign * (dl1 * shift + dl2 * phi)
    d_theta = 1.0 + l1 * (dtheta_f - 1.0)
    return d_x, d_theta


def h_inverse(p: DiffeoParams, cutoffs: CutoffPair, x, theta_image, tol: float = 1e-12):
    """
    Solve h(x, θ) = (x, θ') for θ by bracketed bisection and Newton polishing.

    θ ↦ θ' is strictly increasing and θ' - θ - λ2 φ lies in (-π, π), which
    gives the initial bracket.
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(theta_image, dtype=float)
    x, target = np.broadcast_arrays(x, target)
    upper, _, ax = _side_terms(p, x)
    phi = np.where(upper, p.phi_plus, p.phi_minus)
    base = target - cutoffs.lambda2(ax) * phi
    lo, hi = base - np.pi, base + np.pi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        _, value = h_map(p, cutoffs, x, mid)
        below = value < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    theta = 0.5 * (lo + hi)
    for _ in range(2):
        _, value = h_map(p, cutoffs, x, theta)
        _, slope = h_jacobian(p, cutoffs, x, theta)
        theta = theta - (value - target) / slope
    _, value = h_map(p, cutoffs, x, theta)
    residual = float(np.max(np.abs(value - target))) if value.size else 0.0
    if not np.isfinite(residual) or residual > max(tol, 1e-9):
        raise NumericalFailure(f"h_inverse did not converge (residual {residual:.3e})")
    return theta


def pullback_metric(params: CollarParams, p: DiffeoParams, cutoffs: CutoffPair, x, theta) -> TensorField:
    """
    g = h^* G_ℓ sampled at the points (x, θ).

    Because h keeps x and G is θ-independent, G(h(x, θ)) = G(x) and the
    Jacobian is lower triangular: det g = det G · (∂θ'/∂θ)^2.
    """
    g_xx, g_tt = metric_G(params, x)
    d_x, d_theta = h_jacobian(p, cutoffs, x, theta)
    one, zero = np.ones_like(d_x), np.zeros_like(d_x)
    metric = TensorField.diagonal(g_xx * one, g_tt * one).congruence(one, zero, d_x, d_theta)
    if not np.all(metric.det() > 0):
        raise NumericalFailure("pullback metric lost positive definiteness")
    return metric


def tangent_tensors(params: CollarParams, p: DiffeoParams, cutoffs: CutoffPair, x, theta) -> list[TensorField]:
    """
    T0 = ∂g/∂ℓ (the horizontal direction) and T1..T6 = ∂g/∂p for
    p in (Re b^+, Im b^+, Re b^-, Im b^-, φ^+, φ^-).

    T0 is analytic; T1..T6 are central differences of the pullback metric.
    """
    d_xx, d_tt = dG_dell(params, x)
    d_x, d_theta = h_jacobian(p, cutoffs, x, theta)
    one, zero = np.ones_like(d_x), np.zeros_like(d_x)
    tensors = [TensorField.diagonal(d_xx * one, d_tt * one).congruence(one, zero, d_x, d_theta)]

    base = p.as_vector()
    for i in range(6):
        step = FD_STEP * (max(1.0, abs(base[i])) if i >= 4 else 1.0)
        up, down = base.copy(), base.copy()
        up[i] += step
        down[i] -= step
        g_up = pullback_metric(params, DiffeoParams.from_vector(up), cutoffs, x, theta)
        g_down = pullback_metric(params, DiffeoParams.from_vector(down), cutoffs, x, theta)
        tensors.append((g_up - g_down) / (2.0 * step))
    return tensors


def polar_tangent_tensors(tensors: list[TensorField], p: DiffeoParams) -> list[TensorField]:
    """Re-express T1..T6 in the (|b|, Arg b, φ) basis; degenerate at b = 0."""
    polar = []
    for b, t_re, t_im in ((p.b_plus, tensors[1], tensors[2]), (p.b_minus, tensors[3], tensors[4])):
        b = complex(b)
        psi = np.angle(b)
        polar.append(t_re * np.cos(psi) + t_im * np.sin(psi))
        polar.append(t_re * (-abs(b) * np.sin(psi)) + t_im * (abs(b) * np.cos(psi)))
    return [polar[0], polar[1], polar[2], polar[3], tensors[5], tensors[6]]


def tensor_quadrature(n_x: int = 96, n_theta: int = 512):
    """Gauss–Legendre in x, uniform (spectrally accurate) in θ; returns x, θ, weights."""
    nodes, weights = np.polynomial.legendre.leggauss(n_x)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    xx, tt = np.meshgrid(nodes, theta, indexing="ij")
    ww = np.repeat(weights[:, None], n_theta, axis=1) * (2.0 * np.pi / n_theta)
    return xx.ravel(), tt.ravel(), ww.ravel()


@dataclass(frozen=True)
class OrthogonalityReport:
    """L²(g) inner products of the six parameter tangents in the polar basis."""

    labels: tuple[str, ...]
    gram: np.ndarray

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(np.diag(self.gram))

    def relative(self) -> np.ndarray:
        norms = self.norms
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.gram / np.outer(norms, norms)
        return np.nan_to_num(out)

    def value(self, first: str, second: str, relative: bool = True) -> float:
        i, j = self.labels.index(first), self.labels.index(second)
        return float((self.relative() if relative else self.gram)[i, j])


def gram_orthogonality_report(
    p: DiffeoParams,
    params: CollarParams,
    cutoffs: CutoffPair | None = None,
    quadrature=None,
) -> OrthogonalityReport:
    """
    Inner products ⟨T_i, T_j⟩_{L²(C0, g)} of the parameter tangents in the
    (|b^±|, Arg b^±, φ^±) basis; requires b^± ≠ 0.
    """
    cutoffs = cutoffs or CutoffPair()
    if abs(complex(p.b_plus)) == 0.0 or abs(complex(p.b_minus)) == 0.0:
        raise ParameterError("the polar basis degenerates at b = 0")
    x, theta, weights = quadrature if quadrature is not None else tensor_quadrature()
    metric = pullback_metric(params, p, cutoffs, x, theta)
    polar = polar_tangent_tensors(tangent_tensors(params, p, cutoffs, x, theta), p)
    dv = weights * metric.sqrt_det()
    gram = np.empty((6, 6))
    for i in range(6):
        for j in range(i, 6):
            gram[i, j] = gram[j, i] = float(np.sum(polar[i].pairing(polar[j], metric) * dv))
    logging.debug(f"Orthogonality gram at b+={p.b_plus}, b-={p.b_minus}: {np.diag(gram)}")
    return OrthogonalityReport(labels=POLAR_NAMES, gram=gram)


def generating_field_matrix(p: DiffeoParams, cutoffs: CutoffPair | None = None) -> np.ndarray:
    """
    Values ∂θ'/∂p_j of the six generating fields at the anchors (±1, 2πk/3).

    Rows are the anchor points (+1, θ_0..θ_2, -1, θ_0..θ_2), columns the
    parameters in PARAMETER_NAMES order.
    """
    cutoffs = cutoffs or CutoffPair()
    anchors = 2.0 * np.pi * np.arange(3) / 3.0
    matrix = np.zeros((6, 6))
    for row_offset, (b, cols, x) in enumerate(((p.b_plus, (0, 1, 4), 1.0), (p.b_minus, (2, 3, 5), -1.0))):
        _, d_re, d_im = mobius_angle_derivatives(b, anchors)
        l1 = cutoffs.lambda1(abs(x))
        l2 = cutoffs.lambda2(abs(x))
        rows = slice(3 * row_offset, 3 * row_offset + 3)
        matrix[rows, cols[0]] = l1 * d_re
        matrix[rows, cols[1]] = l1 * d_im
        matrix[rows, cols[2]] = l2
    return matrix
