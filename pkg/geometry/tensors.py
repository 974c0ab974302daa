"""
Symmetric 2-tensors sampled per quadrature point (per triangle on the mesh).

Metrics, Lie-derivative variations of metrics and the real part of the Hopf
differential are all stored as TensorField in the fixed coordinates (x, θ)
of the cylinder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from common_utils.errors import NumericalFailure


@dataclass(frozen=True)
class TensorField:
    """Components (xx, xθ, θθ) of a symmetric 2-tensor, one entry per sample."""

    xx: np.ndarray
    xt: np.ndarray
    tt: np.ndarray

    @classmethod
    def diagonal(cls, xx, tt) -> "TensorField":
        xx = np.asarray(xx, dtype=float)
        return cls(xx, np.zeros_like(xx), np.asarray(tt, dtype=float))

    @classmethod
    def zeros(cls, n: int) -> "TensorField":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    @classmethod
    def from_matrices(cls, mats: np.ndarray) -> "TensorField":
        return cls(mats[:, 0, 0].copy(), 0.5 * (mats[:, 0, 1] + mats[:, 1, 0]), mats[:, 1, 1].copy())

    def __len__(self) -> int:
        return len(self.xx)

    def __add__(self, other: "TensorField") -> "TensorField":
        return TensorField(self.xx + other.xx, self.xt + other.xt, self.tt + other.tt)

    def __sub__(self, other: "TensorField") -> "TensorField":
        return TensorField(self.xx - other.xx, self.xt - other.xt, self.tt - other.tt)

    def __mul__(self, factor) -> "TensorField":
        return TensorField(self.xx * factor, self.xt * factor, self.tt * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor) -> "TensorField":
        return TensorField(self.xx / factor, self.xt / factor, self.tt / factor)

    def matrices(self) -> np.ndarray:
        out = np.empty((len(self.xx), 2, 2))
        out[:, 0, 0] = self.xx
        out[:, 0, 1] = self.xt
        out[:, 1, 0] = self.xt
        out[:, 1, 1] = self.tt
        return out

    def det(self) -> np.ndarray:
        return self.xx * self.tt - self.xt**2

    def trace(self) -> np.ndarray:
        return self.xx + self.tt

    def is_positive_definite(self) -> bool:
        return bool(np.all(self.xx > 0) and np.all(self.det() > 0))

    def inverse(self) -> "TensorField":
        det = self.det()
        if np.any(det <= 0):
            raise NumericalFailure("metric with non-positive determinant")
        return TensorField(self.tt / det, -self.xt / det, self.xx / det)

    def sqrt_det(self) -> np.ndarray:
        det = self.det()
        if np.any(det <= 0):
            raise NumericalFailure("metric with non-positive determinant")
        return np.sqrt(det)

    def congruence(self, j11, j12, j21, j22) -> "TensorField":
        """Jᵀ A J for the per-sample Jacobian J = [[j11, j12], [j21, j22]]."""
        a, b, c = self.xx, self.xt, self.tt
        xx = j11 * (a * j11 + b * j21) + j21 * (b * j11 + c * j21)
        xt = j11 * (a * j12 + b * j22) + j21 * (b * j12 + c * j22)
        tt = j12 * (a * j12 + b * j22) + j22 * (b * j12 + c * j22)
        return TensorField(xx, xt, tt)

    def pairing(self, other: "TensorField", metric: "TensorField") -> np.ndarray:
        """Pointwise ⟨A, B⟩_g = g^{ik} g^{jl} A_ij B_kl."""
        inv = metric.inverse().matrices()
        left = inv @ self.matrices()
        right = inv @ other.matrices()
        return np.einsum("nij,nji->n", left, right)

    def norm_sq(self, metric: "TensorField") -> np.ndarray:
        return self.pairing(self, metric)

    def trace_with(self, metric: "TensorField") -> np.ndarray:
        """tr_g A = g^{ij} A_ij."""
        inv = metric.inverse()
        return inv.xx * self.xx + 2.0 * inv.xt * self.xt + inv.tt * self.tt
