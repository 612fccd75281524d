"""Field containers and Sobolev norms.

Norms are pure coefficient sums, ||u||_{Hs}^2 = sum <n>^{2s} |c(n)|^2 (and
|n|^{2s} for the homogeneous version), with no volume factor. Fields are
treated as immutable snapshots: operations return new instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ModeGrid, make_grid
from .kernels import ops


@dataclass(frozen=True)
class SobolevIndex:
    """Smoothness exponent; homogeneous uses |n|^{2s}, else <n>^{2s}."""

    s: float
    homogeneous: bool = True


class VorticityField2D:
    """Scalar vorticity on the 2-torus, complex coefficients in FFT layout."""

    def __init__(self, grid: ModeGrid, coeffs: np.ndarray):
        if grid.dim != 2:
            raise ValueError("vorticity fields are two-dimensional")
        if coeffs.shape != grid.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} != {grid.shape}")
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zero(cls, grid: ModeGrid) -> "VorticityField2D":
        return cls(grid, grid.zeros())

    @classmethod
    def from_coeffs(cls, grid: ModeGrid, coeffs: np.ndarray) -> "VorticityField2D":
        """Validating constructor: masks the dealias band, checks symmetry."""
        if not grid.is_hermitian(coeffs):
            raise ValueError("coefficients are not Hermitian-symmetric")
        return cls(grid, np.where(grid.active, coeffs, 0.0))

    @classmethod
    def from_physical(cls, grid: ModeGrid, values: np.ndarray) -> "VorticityField2D":
        c = grid.from_physical(values - np.mean(values))
        return cls(grid, np.where(grid.active, c, 0.0))

    def copy(self) -> "VorticityField2D":
        return VorticityField2D(self.grid, self.coeffs.copy())

    def to_physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def check_invariants(self, tol: float = 1e-12) -> None:
        g = self.grid
        assert g.is_hermitian(self.coeffs, tol), "not Hermitian"
        off = np.abs(self.coeffs[~g.active])
        scale = max(float(np.max(np.abs(self.coeffs))), 1.0)
        assert float(off.max(initial=0.0)) <= tol * scale, "mass outside dealias band"


class VelocityField:
    """Divergence-free d-component velocity, coefficients shaped (d, M, ..., M)."""

    def __init__(self, grid: ModeGrid, coeffs: np.ndarray):
        if coeffs.shape != (grid.dim,) + grid.shape:
            raise ValueError(f"coefficient shape {coeffs.shape} invalid for d={grid.dim}")
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def zero(cls, grid: ModeGrid) -> "VelocityField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape, dtype=np.complex128))

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, self.coeffs.copy())

    def to_physical(self) -> np.ndarray:
        return self.grid.to_physical(self.coeffs)

    def divergence_max(self) -> float:
        g = self.grid
        div = sum(1j * g.k[i] * self.coeffs[i] for i in range(g.dim))
        return float(np.max(np.abs(div)))

    def check_invariants(self, tol: float = 1e-12) -> None:
        g = self.grid
        scale = max(float(np.max(np.abs(self.coeffs))), 1.0)
        for c in self.coeffs:
            assert g.is_hermitian(c, tol), "component not Hermitian"
            off = np.abs(c[~g.active])
            assert float(off.max(initial=0.0)) <= tol * scale, "mass outside dealias band"
        assert self.divergence_max() <= tol * g.dealias_radius * scale, "not divergence-free"


Field = VorticityField2D | VelocityField


def sobolev_norm_sq(field: Field, index: SobolevIndex) -> float:
    """Squared Sobolev norm of a field (coefficient-sum convention)."""
    w = field.grid.sobolev_weights(index.s, index.homogeneous)
    if isinstance(field, VelocityField):
        return sum(ops.weighted_sumsq(c, w) for c in field.coeffs)
    return ops.weighted_sumsq(field.coeffs, w)


def sobolev_norm(field: Field, index: SobolevIndex) -> float:
    return float(np.sqrt(sobolev_norm_sq(field, index)))


def l2_norm_sq(field: Field) -> float:
    return sobolev_norm_sq(field, SobolevIndex(0.0))


def random_vorticity(grid: ModeGrid, stream, peak: int = 4, scale: float = 1.0) -> VorticityField2D:
    """Random smooth vorticity: Gaussian modes with exp(-(|n|/peak)^2) envelope,
    rescaled so the induced velocity has unit (then scaled) L2 norm."""
    from .forcing import gaussian_hermitian_field  # local import avoids a cycle

    env = np.where(grid.active, np.exp(-grid.k2 / float(peak) ** 2), 0.0)
    coeffs = gaussian_hermitian_field(grid, env, stream)
    f = VorticityField2D(grid, coeffs)
    h = sobolev_norm(f, SobolevIndex(-1.0))  # velocity L2 via |n|^.. shift
    if h > 0:
        f = VorticityField2D(grid, coeffs * (scale / h))
    return f


def random_velocity(grid: ModeGrid, stream, peak: int = 3, scale: float = 1.0) -> VelocityField:
    """Random smooth divergence-free velocity with unit (then scaled) L2 norm."""
    from .forcing import gaussian_hermitian_field
    from .operators import leray_project

    env = np.where(grid.active, np.exp(-grid.k2 / float(peak) ** 2), 0.0)
    comps = np.stack([gaussian_hermitian_field(grid, env, stream) for _ in range(grid.dim)])
    u = leray_project(VelocityField(grid, comps))
    n = sobolev_norm(u, SobolevIndex(0.0))
    if n > 0:
        u = VelocityField(grid, u.coeffs * (scale / n))
    return u
