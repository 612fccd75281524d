"""Fourier-mode bookkeeping for periodic fields on the torus [0, 2pi)^d.

Fields are stored as full complex coefficient arrays in numpy FFT layout,
with the convention  u(x) = sum_n c(n) exp(i n.x)  over integer wavevectors.
A radial dealias cutoff (2/3 rule) defines the retained mode set; the zero
mode is excluded everywhere (zero-mean fields).
"""

from __future__ import annotations

import functools

import numpy as np


class ModeGrid:
    """Truncated Fourier lattice on the d-torus with radial dealias cutoff.

    Attributes:
        dim: spatial dimension, 2 or 3
        size: per-axis resolution M (transform size)
        dealias_radius: largest integer K with 3K < M; retained modes
            satisfy 0 < |n| <= K, so quadratic products evaluated
            pseudo-spectrally on the M-grid are alias-free on retained modes
        k: list of dim int64 arrays, broadcast wavevector components
        k2: float64 array of |n|^2 (0 at the origin)
        active: boolean mask of retained modes
        half: boolean mask of canonical half-lattice representatives
            (lexicographically positive n) among the active modes
    """

    def __init__(self, dim: int, size: int):
        if dim not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {dim}")
        if size < 8 or size % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {size}")
        self.dim = dim
        self.size = size
        self.dealias_radius = (size - 1) // 3

        k1 = np.fft.fftfreq(size, 1.0 / size).astype(np.int64)
        mesh = np.meshgrid(*([k1] * dim), indexing="ij")
        self.k = [m.copy() for m in mesh]
        k2int = sum(m * m for m in mesh)
        self.k2 = k2int.astype(np.float64)
        self.k2_safe = np.where(k2int == 0, 1.0, self.k2)
        self.kabs = np.sqrt(self.k2)
        self.active = (k2int > 0) & (k2int <= self.dealias_radius**2)

        pos = (self.k[0] > 0) | ((self.k[0] == 0) & (self.k[1] > 0))
        if dim == 3:
            pos |= (self.k[0] == 0) & (self.k[1] == 0) & (self.k[2] > 0)
        self.half = self.active & pos

        # Flat index maps used for Hermitian completion of half-lattice draws.
        neg = (-np.arange(size)) % size
        flat = np.arange(size**dim).reshape((size,) * dim)
        conj_flat = flat[np.ix_(*([neg] * dim))]
        self.half_flat = flat[self.half]
        self.half_conj_flat = conj_flat[self.half]

        # Index arrays reconstructing the full spectrum from the rfft half
        # spectrum: columns j > M/2 come from conjugating column M - j.
        h = size // 2
        cols = np.arange(h + 1, size)
        self._rfft_cols = cols
        self._rfft_src_cols = size - cols
        self._neg = neg

        # Contiguous half-layout companions (last axis 0..M/2) for the
        # transform-heavy inner loops.
        sl = (slice(None),) * (dim - 1) + (slice(0, h + 1),)
        self.kh = [np.ascontiguousarray(m[sl]).astype(np.float64) for m in mesh]
        k2h = sum(m * m for m in self.kh)
        self.active_h = np.ascontiguousarray(self.active[sl])
        self.inv_k2_active_h = np.where(self.active_h, 1.0 / np.where(k2h == 0, 1.0, k2h), 0.0)

        # Deterministic mode enumeration (lexicographic in the wavevector
        # tuple) for checkpoint serialization and reproducible reductions.
        comps = [m[self.active] for m in self.k]
        order = np.lexsort(tuple(reversed(comps)))
        self.mode_list = np.stack([c[order] for c in comps], axis=1)
        self.mode_flat = flat[self.active][order]

        self._weight_cache: dict = {}

    @property
    def shape(self) -> tuple:
        return (self.size,) * self.dim

    @property
    def n_active(self) -> int:
        return int(self.mode_flat.size)

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.size

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=np.complex128)

    def sobolev_weights(self, s: float, homogeneous: bool = True) -> np.ndarray:
        """|n|^{2s} (or <n>^{2s} = (1+|n|^2)^s) on active modes, 0 elsewhere."""
        key = (float(s), bool(homogeneous))
        w = self._weight_cache.get(key)
        if w is None:
            base = self.k2_safe if homogeneous else 1.0 + self.k2
            w = np.where(self.active, base**s, 0.0)
            self._weight_cache[key] = w
        return w

    def dissipation_symbol(self, delta: float) -> np.ndarray:
        """Eigenvalues |n|^{2(1+delta)} of the hyperviscous operator, 0 off-grid."""
        key = ("lam", float(delta))
        lam = self._weight_cache.get(key)
        if lam is None:
            lam = np.where(self.active, self.k2_safe ** (1.0 + delta), 0.0)
            self._weight_cache[key] = lam
        return lam

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate a Hermitian coefficient array on the collocation grid."""
        h = self.size // 2 + 1
        half = coeffs[..., :h]
        axes = tuple(range(-self.dim, 0))
        return np.fft.irfftn(half, s=self.shape, axes=axes) * float(self.size**self.dim)

    def from_physical(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of real grid values (full FFT layout, Hermitian)."""
        return self.full_from_half(self.rfft_half(values))

    def half_of(self, coeffs: np.ndarray) -> np.ndarray:
        """Contiguous rfft half-layout view of a full coefficient array."""
        h = self.size // 2 + 1
        return np.ascontiguousarray(coeffs[..., :h])

    def irfft_half(self, half: np.ndarray) -> np.ndarray:
        """Collocation values of an rfft half-layout coefficient array."""
        axes = tuple(range(-self.dim, 0))
        return np.fft.irfftn(half, s=self.shape, axes=axes) * float(self.size**self.dim)

    def rfft_half(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(-self.dim, 0))
        return np.fft.rfftn(values, axes=axes) / float(self.size**self.dim)

    def full_from_half(self, half: np.ndarray) -> np.ndarray:
        """Expand an rfft half-spectrum to the full FFT layout by conjugation."""
        M = self.size
        out = np.zeros(half.shape[:-1] + (M,), dtype=np.complex128)
        out[..., : M // 2 + 1] = half
        if self.dim == 2:
            src = np.conj(half[..., self._neg, :][..., :, self._rfft_src_cols])
        else:
            src = np.conj(
                half[..., self._neg, :, :][..., :, self._neg, :][..., self._rfft_src_cols]
            )
        out[..., M // 2 + 1 :] = src
        return out

    def hermitize(self, coeffs: np.ndarray) -> np.ndarray:
        """Project onto Hermitian-symmetric arrays: (c(n) + conj(c(-n)))/2."""
        rev = coeffs[..., self._neg[:, None], self._neg[None, :]] if self.dim == 2 else (
            coeffs[..., self._neg, :, :][..., :, self._neg, :][..., :, :, self._neg]
        )
        return 0.5 * (coeffs + np.conj(rev))

    def is_hermitian(self, coeffs: np.ndarray, tol: float = 1e-12) -> bool:
        sym = self.hermitize(coeffs)
        scale = np.max(np.abs(coeffs)) or 1.0
        return bool(np.max(np.abs(coeffs - sym)) <= tol * scale)


@functools.lru_cache(maxsize=32)
def make_grid(dim: int, size: int) -> ModeGrid:
    """Cached grid constructor; grids are immutable once built."""
    return ModeGrid(dim, size)
