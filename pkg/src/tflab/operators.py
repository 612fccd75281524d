"""Spectral operators: projections, Biot-Savart, curl, heat semigroup, and
the dealiased advection / bilinear forms.

The quadratic terms are evaluated pseudo-spectrally; because retained modes
satisfy 3K < M (radial 2/3 rule) the products are alias-free, which makes
the energy/enstrophy pairings of the advection term vanish to rounding.
"""

from __future__ import annotations

import numpy as np

from .fields import VelocityField, VorticityField2D
from .grid import ModeGrid
from .kernels import ops


class ResolutionError(ValueError):
    """Requested cutoff does not fit inside the grid's dealias band."""


def leray_project(u: VelocityField) -> VelocityField:
    """Divergence-free part: multiplier M_ij(n) = delta_ij - n_i n_j / |n|^2."""
    g = u.grid
    ndotu = sum(g.k[i] * u.coeffs[i] for i in range(g.dim))
    factor = ndotu / g.k2_safe
    out = np.empty_like(u.coeffs)
    for i in range(g.dim):
        out[i] = np.where(g.active, u.coeffs[i] - g.k[i] * factor, 0.0)
    return VelocityField(g, out)


def biot_savart(xi: VorticityField2D) -> VelocityField:
    """Velocity with curl xi: u_hat(n) = i xi_hat(n) (n2, -n1) / |n|^2."""
    g = xi.grid
    base = 1j * xi.coeffs / g.k2_safe
    out = np.empty((2,) + g.shape, dtype=np.complex128)
    out[0] = np.where(g.active, g.k[1] * base, 0.0)
    out[1] = np.where(g.active, -g.k[0] * base, 0.0)
    return VelocityField(g, out)


def curl2d(u: VelocityField) -> VorticityField2D:
    """xi_hat(n) = i (n1 u2_hat - n2 u1_hat)."""
    g = u.grid
    if g.dim != 2:
        raise ValueError("curl2d needs a 2D field")
    c = 1j * (g.k[0] * u.coeffs[1] - g.k[1] * u.coeffs[0])
    return VorticityField2D(g, np.where(g.active, c, 0.0))


def galerkin_project(field, radius: int):
    """Zero all modes with |n| > radius; idempotent, commutes with Leray."""
    g = field.grid
    keep = g.k2 <= float(radius) ** 2
    return type(field)(g, np.where(keep, field.coeffs, 0.0))


def heat_semigroup_apply(field, t: float, nu: float, delta: float):
    """Multiply each coefficient by exp(-nu t |n|^{2(1+delta)})."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    g = field.grid
    decay = np.exp(-nu * t * g.dissipation_symbol(delta))
    return type(field)(g, field.coeffs * decay)


def advection_2d(xi: VorticityField2D) -> VorticityField2D:
    """Dealiased pseudo-spectral u . grad(xi) with u = biot_savart(xi)."""
    tend, _ = advection_2d_raw(xi.coeffs, xi.grid)
    return VorticityField2D(xi.grid, tend)


def advection_2d_raw(coeffs: np.ndarray, g: ModeGrid) -> tuple[np.ndarray, float]:
    """Advection tendency plus the grid max of |u| (free by-product for CFL).

    Works in rfft half-layout throughout; with 3K < M the products are
    alias-free so masking after the forward transform is exact dealiasing.
    """
    ch = g.half_of(coeffs)
    u1h, u2h = ops.biot_savart_half(ch, g.kh[0], g.kh[1], g.inv_k2_active_h)
    g1h, g2h = ops.grad_half(ch, g.kh[0], g.kh[1])
    u1 = g.irfft_half(u1h)
    u2 = g.irfft_half(u2h)
    gx = g.irfft_half(g1h)
    gy = g.irfft_half(g2h)
    w = ops.convective_2d(u1, u2, gx, gy)
    tend = g.full_from_half(ops.mask_half(g.rfft_half(w), g.active_h))
    return tend, ops.max_speed(u1, u2)


def bilinear_velocity(u: VelocityField, v: VelocityField, radius: int | None = None) -> VelocityField:
    """Leray-projected, Galerkin-truncated, dealiased u . grad(v)."""
    g = u.grid
    if radius is not None and radius > g.dealias_radius:
        raise ResolutionError(
            f"cutoff {radius} exceeds dealias radius {g.dealias_radius} of a {g.size}^d grid"
        )
    tend, _ = bilinear_velocity_raw(u.coeffs, v.coeffs, g, radius)
    return VelocityField(g, tend)


def bilinear_velocity_raw(
    uc: np.ndarray, vc: np.ndarray, g: ModeGrid, radius: int | None
) -> tuple[np.ndarray, float]:
    d = g.dim
    uphys = [g.irfft_half(g.half_of(uc[i])) for i in range(d)]
    out = np.empty_like(uc)
    for i in range(d):
        vh = g.half_of(vc[i])
        grads = [g.irfft_half(ops.deriv_half(vh, g.kh[j])) for j in range(d)]
        if d == 2:
            w = ops.convective_2d(uphys[0], uphys[1], grads[0], grads[1])
        else:
            w = ops.convective_3d_component(
                uphys[0], uphys[1], uphys[2], grads[0], grads[1], grads[2]
            )
        out[i] = g.full_from_half(g.rfft_half(w))
    ndotw = sum(g.k[i] * out[i] for i in range(d))
    factor = ndotw / g.k2_safe
    keep = g.active if radius is None else g.active & (g.k2 <= float(radius) ** 2)
    for i in range(d):
        out[i] = np.where(keep, out[i] - g.k[i] * factor, 0.0)
    speed = ops.max_speed(*uphys)
    return out, speed


def linf_grad_vorticity(xi: VorticityField2D) -> float:
    """Grid max of |grad xi| (a lower bound for the sup over the torus)."""
    g = xi.grid
    gx = g.to_physical(1j * g.k[0] * xi.coeffs)
    gy = g.to_physical(1j * g.k[1] * xi.coeffs)
    return ops.max_speed(gx, gy)


def linf_vorticity(xi: VorticityField2D) -> float:
    """Grid max of |xi|."""
    return float(np.max(np.abs(xi.to_physical())))


def inner_product(a, b, weights: np.ndarray | None = None) -> float:
    """Real coefficient inner product Re sum w a(n) conj(b(n))."""
    prod = a.coeffs * np.conj(b.coeffs)
    if isinstance(a, VelocityField):
        prod = prod.sum(axis=0)
    if weights is not None:
        prod = prod * weights
    return float(np.sum(prod.real))
