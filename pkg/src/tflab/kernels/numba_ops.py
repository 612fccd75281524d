"""Numba implementations of the hot kernels.

Single-threaded, no fastmath: summation order stays deterministic so runs
are bit-reproducible for a fixed backend.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _weighted_sumsq(c, w):
    total = 0.0
    for i in range(c.size):
        v = c[i]
        total += w[i] * (v.real * v.real + v.imag * v.imag)
    return total


def weighted_sumsq(coeffs, weights):
    return float(_weighted_sumsq(coeffs.ravel(), weights.ravel()))


@njit(cache=True)
def _convective_2d(u1, u2, g1, g2, out):
    for i in range(out.size):
        out[i] = u1[i] * g1[i] + u2[i] * g2[i]


def convective_2d(u1, u2, g1, g2):
    out = np.empty_like(u1)
    _convective_2d(u1.ravel(), u2.ravel(), g1.ravel(), g2.ravel(), out.ravel())
    return out


@njit(cache=True)
def _convective_3d(u1, u2, u3, g1, g2, g3, out):
    for i in range(out.size):
        out[i] = u1[i] * g1[i] + u2[i] * g2[i] + u3[i] * g3[i]


def convective_3d_component(u1, u2, u3, g1, g2, g3):
    out = np.empty_like(u1)
    _convective_3d(
        u1.ravel(), u2.ravel(), u3.ravel(), g1.ravel(), g2.ravel(), g3.ravel(), out.ravel()
    )
    return out


@njit(cache=True)
def _max_speed2_2d(u1, u2):
    best = 0.0
    for i in range(u1.size):
        s = u1[i] * u1[i] + u2[i] * u2[i]
        if s > best:
            best = s
    return best


@njit(cache=True)
def _max_speed2_3d(u1, u2, u3):
    best = 0.0
    for i in range(u1.size):
        s = u1[i] * u1[i] + u2[i] * u2[i] + u3[i] * u3[i]
        if s > best:
            best = s
    return best


def max_speed(u1, u2, u3=None):
    if u3 is None:
        return float(np.sqrt(_max_speed2_2d(u1.ravel(), u2.ravel())))
    return float(np.sqrt(_max_speed2_3d(u1.ravel(), u2.ravel(), u3.ravel())))


@njit(cache=True)
def _rk4_combine(y, k1, k2, k3, k4, dt, out):
    c = dt / 6.0
    for i in range(y.size):
        out[i] = y[i] + c * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i])


def rk4_combine(y, k1, k2, k3, k4, dt):
    out = np.empty_like(y)
    _rk4_combine(y.ravel(), k1.ravel(), k2.ravel(), k3.ravel(), k4.ravel(), float(dt), out.ravel())
    return out


@njit(cache=True)
def _etd1_update(y, decay, wtend, tend, out):
    for i in range(y.size):
        out[i] = decay[i] * y[i] - wtend[i] * tend[i]


def etd1_update(y, decay, wtend, tend):
    out = np.empty_like(y)
    _etd1_update(y.ravel(), decay.ravel(), wtend.ravel(), tend.ravel(), out.ravel())
    return out


@njit(cache=True)
def _axpy(y, a, x, out):
    for i in range(y.size):
        out[i] = y[i] + a * x[i]


def axpy(y, a, x):
    out = np.empty_like(y)
    _axpy(y.ravel(), float(a), x.ravel(), out.ravel())
    return out


@njit(cache=True)
def _scatter_hermitian(out_flat, half_idx, conj_idx, values):
    for i in range(half_idx.size):
        v = values[i]
        out_flat[half_idx[i]] = v
        out_flat[conj_idx[i]] = np.conj(v)


def scatter_hermitian(out_flat, half_idx, conj_idx, values):
    _scatter_hermitian(out_flat, half_idx, conj_idx, values)
    return out_flat


@njit(cache=True)
def _biot_savart_half(ch, k1, k2, inv, u1, u2):
    for i in range(ch.size):
        base = 1j * ch[i] * inv[i]
        u1[i] = k2[i] * base
        u2[i] = -k1[i] * base


def biot_savart_half(ch, k1, k2, inv_k2_active):
    u1 = np.empty_like(ch)
    u2 = np.empty_like(ch)
    _biot_savart_half(ch.ravel(), k1.ravel(), k2.ravel(), inv_k2_active.ravel(),
                      u1.ravel(), u2.ravel())
    return u1, u2


@njit(cache=True)
def _grad_half(ch, k1, k2, g1, g2):
    for i in range(ch.size):
        v = 1j * ch[i]
        g1[i] = k1[i] * v
        g2[i] = k2[i] * v


def grad_half(ch, k1, k2):
    g1 = np.empty_like(ch)
    g2 = np.empty_like(ch)
    _grad_half(ch.ravel(), k1.ravel(), k2.ravel(), g1.ravel(), g2.ravel())
    return g1, g2


@njit(cache=True)
def _deriv_half(ch, k, out):
    for i in range(ch.size):
        out[i] = 1j * k[i] * ch[i]


def deriv_half(ch, k):
    out = np.empty_like(ch)
    _deriv_half(ch.ravel(), k.ravel(), out.ravel())
    return out


@njit(cache=True)
def _mask_half(ch, mask, out):
    for i in range(ch.size):
        out[i] = ch[i] if mask[i] else 0.0


def mask_half(ch, mask):
    out = np.empty_like(ch)
    _mask_half(ch.ravel(), mask.ravel(), out.ravel())
    return out


@njit(cache=True)
def _sumsq(c):
    total = 0.0
    for i in range(c.size):
        v = c[i]
        total += v.real * v.real + v.imag * v.imag
    return total


def sumsq(c):
    return float(_sumsq(np.ascontiguousarray(c).ravel()))


@njit(cache=True)
def _heun_correct(pred, w2, t2, t1, out):
    for i in range(pred.size):
        out[i] = pred[i] - w2[i] * (t2[i] - t1[i])


def heun_correct(pred, w2, t2, t1):
    out = np.empty_like(pred)
    _heun_correct(pred.ravel(), w2.ravel(), t2.ravel(), t1.ravel(), out.ravel())
    return out
