"""Pure-numpy implementations of the hot kernels."""

import numpy as np

NAME = "numpy"


def weighted_sumsq(coeffs, weights):
    """sum w |c|^2 over the flattened arrays."""
    c = coeffs.ravel()
    return float(np.sum(weights.ravel() * (c.real * c.real + c.imag * c.imag)))


def convective_2d(u1, u2, g1, g2):
    """Pointwise u . grad(f) on the collocation grid."""
    return u1 * g1 + u2 * g2


def convective_3d_component(u1, u2, u3, g1, g2, g3):
    return u1 * g1 + u2 * g2 + u3 * g3


def max_speed(u1, u2, u3=None):
    """max over the grid of |u|."""
    s = u1 * u1 + u2 * u2
    if u3 is not None:
        s = s + u3 * u3
    return float(np.sqrt(np.max(s)))


def rk4_combine(y, k1, k2, k3, k4, dt):
    return y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def etd1_update(y, decay, wtend, tend):
    """decay * y - wtend * tend (exponential-Euler deterministic part)."""
    return decay * y - wtend * tend


def axpy(y, a, x):
    return y + a * x


def scatter_hermitian(out_flat, half_idx, conj_idx, values):
    """Write complex values at half-lattice modes and conjugates at -n."""
    out_flat[half_idx] = values
    out_flat[conj_idx] = np.conj(values)
    return out_flat


def biot_savart_half(ch, k1, k2, inv_k2_active):
    """Velocity half-spectrum from vorticity: i ch (n2, -n1) / |n|^2."""
    base = 1j * ch * inv_k2_active
    return k2 * base, -k1 * base


def grad_half(ch, k1, k2):
    return 1j * k1 * ch, 1j * k2 * ch


def deriv_half(ch, k):
    return 1j * k * ch


def mask_half(ch, mask):
    return np.where(mask, ch, 0.0)


def sumsq(c):
    v = c.ravel()
    return float(np.real(np.vdot(v, v)))


def heun_correct(pred, w2, t2, t1):
    """pred - w2 * (t2 - t1): the corrector of the exponential Heun step."""
    return pred - w2 * (t2 - t1)
