"""Noise spectra, their weighted lattice constants, and exact simulation of
the per-mode Ornstein-Uhlenbeck stochastic convolution.

Randomness contract: a stream is identified by (seed, stream, counter).
Each draw event opens a fresh Philox generator keyed by (seed, stream) at
block `counter` and then bumps the counter, so identical identifiers give
identical fields on any platform and trajectories parallelize with
disjoint streams.
"""

from __future__ import annotations

import numpy as np

from .fields import VelocityField, VorticityField2D
from .grid import ModeGrid
from .kernels import ops


class RngStream:
    """Counter-based splittable Gaussian stream (Philox under the hood).

    Each draw event addresses Philox block (0, 0, 0, counter) under the key
    (seed, stream) and then bumps the counter, so the draw is a pure
    function of (seed, stream, counter): identical on every platform,
    bit-exact after a checkpoint resume, and independent across streams.
    """

    __slots__ = ("seed", "stream", "counter", "_bitgen", "_gen")

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.counter = int(counter)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        self._gen = np.random.Generator(self._bitgen)

    def spawn(self, stream: int) -> "RngStream":
        """Independent stream under the same global seed."""
        return RngStream(self.seed, stream, 0)

    def copy(self) -> "RngStream":
        return RngStream(self.seed, self.stream, self.counter)

    def identity(self) -> tuple:
        return (self.seed, self.stream, self.counter)

    def normals(self, n: int) -> np.ndarray:
        """n standard normals; advances the event counter by one."""
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array([0, 0, 0, self.counter], dtype=np.uint64),
                "key": np.array([self.seed, self.stream], dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        self.counter += 1
        return self._gen.standard_normal(n)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream}, counter={self.counter})"


def gaussian_hermitian_field(grid: ModeGrid, std: np.ndarray, stream: RngStream) -> np.ndarray:
    """Complex Gaussian coefficients with E|c(n)|^2 = std(n)^2, Hermitian.

    Draws Re and Im independently on the half lattice with variance
    std^2 / 2 each and fills conjugates, which realizes the target
    per-mode variance exactly under the reality constraint.
    """
    nh = grid.half_flat.size
    xs = stream.normals(2 * nh)
    s = std.ravel()[grid.half_flat] / np.sqrt(2.0)
    vals = (xs[:nh] + 1j * xs[nh:]) * s
    out = grid.zeros()
    ops.scatter_hermitian(out.ravel(), grid.half_flat, grid.half_conj_flat, vals)
    return out


class NoiseSpectrum:
    """Nonnegative forcing amplitudes phi_n per retained mode.

    Amplitudes act on the velocity coefficients; the 2D vorticity route
    forces mode n with amplitude |n| phi_n, which is the curl of the same
    velocity noise. Hermitian-compatible by construction (phi depends on n
    through |n| only for the built-in kinds; custom arrays are symmetrized).
    """

    def __init__(self, grid: ModeGrid, phi: np.ndarray, kind: str, params: dict):
        if np.any(phi < 0):
            raise ValueError("noise amplitudes must be nonnegative")
        self.grid = grid
        self.phi = np.where(grid.active, phi, 0.0)
        self.kind = kind
        self.params = dict(params)

    def b_constant(self, k: int, radius: int | None = None) -> float:
        """B_k = sum over retained modes of |n|^{2k} phi_n^2."""
        g = self.grid
        w = g.sobolev_weights(float(k))
        phi2 = self.phi**2
        if radius is not None:
            phi2 = np.where(g.k2 <= float(radius) ** 2, phi2, 0.0)
        return float(np.sum(w * phi2))

    def max_amplitude_sq(self) -> float:
        return float(np.max(self.phi**2))

    def support_radius(self) -> float:
        """Largest |n| carrying nonzero amplitude."""
        nz = self.phi > 0
        if not nz.any():
            return 0.0
        return float(np.sqrt(np.max(self.grid.k2[nz])))

    def truncated(self, radius: int) -> "NoiseSpectrum":
        phi = np.where(self.grid.k2 <= float(radius) ** 2, self.phi, 0.0)
        return NoiseSpectrum(self.grid, phi, self.kind, {**self.params, "radius": radius})


def b_constant(spectrum: NoiseSpectrum, k: int) -> float:
    return spectrum.b_constant(k)


def decorrelation_time(spectrum: NoiseSpectrum, nu: float, delta: float) -> float:
    """Linear autocorrelation time of the slowest strongly-forced mode.

    Operationally: 1 / (nu |n|^{2(1+delta)}) minimized over modes whose
    amplitude is at least half the peak. This is the a-priori timescale
    used to size stationary-sampling horizons; the measured integrated
    autocorrelation time of the sampled series is reported alongside.
    """
    peak = spectrum.phi.max()
    if peak <= 0 or nu <= 0:
        raise ValueError("decorrelation time needs a nonzero spectrum and nu > 0")
    mask = spectrum.phi >= 0.5 * peak
    lam_min = float(np.min(spectrum.grid.k2_safe[mask]) ** (1.0 + delta))
    return 1.0 / (nu * lam_min)


def make_spectrum(grid: ModeGrid, kind: str, **params) -> NoiseSpectrum:
    """Spectrum constructors addressable by kind name.

    kinds:
        exponential_decay(rate=1.0, amplitude=1.0): phi = a exp(-rate |n|)
        power_law(exponent, amplitude=1.0): phi = a |n|^{-exponent}
        annulus(k, alpha): exp(-|n|) inside, k^alpha/|n| on k<=|n|<=2k,
            exp(-(|n|-2k)) outside
        shell(radius, amplitude=1.0): amplitude exactly on |n| = radius
    """
    r = grid.kabs
    if kind == "exponential_decay":
        rate = float(params.get("rate", 1.0))
        amp = float(params.get("amplitude", 1.0))
        if rate <= 0:
            raise ValueError("exponential_decay needs rate > 0")
        phi = amp * np.exp(-rate * r)
    elif kind == "power_law":
        if "exponent" not in params:
            raise ValueError("power_law needs an exponent")
        p = float(params["exponent"])
        amp = float(params.get("amplitude", 1.0))
        phi = amp * grid.k2_safe ** (-p / 2.0)
    elif kind == "annulus":
        k = int(params.get("k", 0))
        alpha = float(params.get("alpha", 0.0))
        if k < 1 or alpha <= 0:
            raise ValueError("annulus needs shell radius k >= 1 and alpha > 0")
        inner = np.exp(-r)
        ring = float(k) ** alpha / np.sqrt(grid.k2_safe)
        outer = np.exp(-(r - 2.0 * k))
        phi = np.where(r < k, inner, np.where(r <= 2.0 * k, ring, outer))
    elif kind == "shell":
        radius = int(params.get("radius", 1))
        amp = float(params.get("amplitude", 1.0))
        if radius < 1:
            raise ValueError("shell needs radius >= 1")
        phi = np.where(np.isclose(grid.k2, float(radius) ** 2), amp, 0.0)
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    phi = np.where(grid.active, phi, 0.0)
    return NoiseSpectrum(grid, phi, kind, params)


def _vorticity_amplitude(spectrum: NoiseSpectrum) -> np.ndarray:
    """Forcing amplitude seen by vorticity coefficients: |n| phi_n."""
    g = spectrum.grid
    return np.where(g.active, np.sqrt(g.k2_safe) * spectrum.phi, 0.0)


def ou_step_coeffs(
    z: np.ndarray,
    grid: ModeGrid,
    amp: np.ndarray,
    h: float,
    nu: float,
    delta: float,
    stream: RngStream,
    radius: int | None = None,
) -> np.ndarray:
    """One exact OU step on scalar coefficients with amplitude array amp.

    New coefficient: exp(-nu h lam) z + xi with E|xi|^2 =
    amp^2 (1 - exp(-2 nu h lam)) / (2 lam), lam = |n|^{2(1+delta)}.
    """
    lam = grid.dissipation_symbol(delta)
    decay = np.exp(-nu * h * lam)
    var = np.where(grid.active, amp**2 * -np.expm1(-2.0 * nu * h * lam) / (2.0 * grid.k2_safe ** (1.0 + delta)), 0.0)
    if radius is not None:
        var = np.where(grid.k2 <= float(radius) ** 2, var, 0.0)
    noise = gaussian_hermitian_field(grid, np.sqrt(var), stream)
    return decay * z + noise


def ou_convolution_step(field, h: float, nu: float, delta: float, spectrum: NoiseSpectrum, stream: RngStream, radius: int | None = None):
    """Exact-in-distribution step of the linear hyperviscous SPDE.

    2D vorticity fields are driven with amplitude |n| phi_n (curl of the
    velocity noise); 3D velocity fields get an isotropic divergence-free
    complex Gaussian per mode with total variance phi_n^2 per unit Ito time.
    """
    g = field.grid
    if isinstance(field, VorticityField2D):
        amp = _vorticity_amplitude(spectrum)
        return VorticityField2D(g, ou_step_coeffs(field.coeffs, g, amp, h, nu, delta, stream, radius))
    lam = g.dissipation_symbol(delta)
    decay = np.exp(-nu * h * lam)
    # per-component variance phi^2(1-e^{-2 nu h lam})/(4 lam); the rank-2
    # Leray projection restores total per-mode variance phi^2(..)/(2 lam)
    var = np.where(g.active, spectrum.phi**2 * -np.expm1(-2.0 * nu * h * lam) / (4.0 * g.k2_safe ** (1.0 + delta)), 0.0)
    if radius is not None:
        var = np.where(g.k2 <= float(radius) ** 2, var, 0.0)
    std = np.sqrt(var)
    comps = np.stack([gaussian_hermitian_field(g, std, stream) for _ in range(g.dim)])
    ndotw = sum(g.k[i] * comps[i] for i in range(g.dim))
    factor = ndotw / g.k2_safe
    out = np.empty_like(field.coeffs)
    for i in range(g.dim):
        out[i] = decay * field.coeffs[i] + np.where(g.active, comps[i] - g.k[i] * factor, 0.0)
    return VelocityField(g, out)


def sample_stationary_linear(spectrum: NoiseSpectrum, delta: float, stream: RngStream, radius: int | None = None):
    """Draw from the exact stationary law of the linear equation.

    Per-mode velocity-coefficient variance phi_n^2 / (2 |n|^{2(1+delta)}),
    so E||z||_{H^{1+delta}}^2 = B0/2 and E||z||_{H^{2+delta}}^2 = B1/2.
    Returns a vorticity field in 2D, a velocity field in 3D.
    """
    g = spectrum.grid
    lam2 = 2.0 * g.k2_safe ** (1.0 + delta)
    if g.dim == 2:
        amp = _vorticity_amplitude(spectrum)
        var = np.where(g.active, amp**2 / lam2, 0.0)
        if radius is not None:
            var = np.where(g.k2 <= float(radius) ** 2, var, 0.0)
        return VorticityField2D(g, gaussian_hermitian_field(g, np.sqrt(var), stream))
    var = np.where(g.active, spectrum.phi**2 / (2.0 * lam2), 0.0)
    if radius is not None:
        var = np.where(g.k2 <= float(radius) ** 2, var, 0.0)
    std = np.sqrt(var)
    comps = np.stack([gaussian_hermitian_field(g, std, stream) for _ in range(g.dim)])
    ndotw = sum(g.k[i] * comps[i] for i in range(g.dim))
    factor = ndotw / g.k2_safe
    out = np.empty_like(comps)
    for i in range(g.dim):
        out[i] = np.where(g.active, comps[i] - g.k[i] * factor, 0.0)
    return VelocityField(g, out)
