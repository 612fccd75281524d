"""Stationary-measure estimation: time-averaged moments, balance identities,
batch-means confidence intervals, tail and small-ball probes.

Statistics are collected per trajectory into mergeable accumulators; the
merge keeps per-trajectory segments separate so confidence intervals never
batch across independent runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy import stats as sps

from .fields import SobolevIndex, VelocityField, VorticityField2D, sobolev_norm, sobolev_norm_sq
from .forcing import NoiseSpectrum
from .operators import biot_savart

SERIES_KEYS = ("l2sq", "h1sq", "h1psq", "h2psq", "expmom", "noise_proj")


class InsufficientDataError(RuntimeError):
    pass


def default_gamma(spectrum: NoiseSpectrum) -> float:
    """Exponential-moment rate with gamma * sup phi_n^2 = 1/2."""
    m = spectrum.max_amplitude_sq()
    if m <= 0:
        raise ValueError("spectrum is identically zero")
    return 0.5 / m


class MomentAccumulator:
    """Mergeable running statistics over stationary samples of one system.

    Tracks the squared velocity norms entering the balance identities, the
    exponential moment, an L2-norm histogram with fixed edges, per-sigma
    H^sigma samples for tail fits, and the noise-weighted coefficient sum
    used by the local-time identity. merge() is associative and commutative.
    """

    def __init__(self, spectrum: NoiseSpectrum, delta: float, gamma: float | None = None,
                 sigmas: tuple = (2.0,), hist_bins: int = 256):
        self.spectrum = spectrum
        self.delta = float(delta)
        self.gamma = default_gamma(spectrum) if gamma is None else float(gamma)
        self.sigmas = tuple(float(s) for s in sigmas)
        b0 = spectrum.b_constant(0)
        hi = 4.0 * math.sqrt(b0 / 2.0) if b0 > 0 else 1.0
        self.hist_edges = np.linspace(0.0, hi, hist_bins + 1)
        self.hist_counts = np.zeros(hist_bins + 1, dtype=np.int64)  # last = overflow
        self._segments: list[dict] = []
        self._open: dict | None = None

    # -- sample ingestion -------------------------------------------------

    def _ensure_open(self) -> dict:
        if self._open is None:
            self._open = {k: [] for k in SERIES_KEYS}
            self._open["sigma"] = {s: [] for s in self.sigmas}
        return self._open

    def add(self, field) -> None:
        seg = self._ensure_open()
        g = field.grid
        if isinstance(field, VorticityField2D):
            u = biot_savart(field)
        else:
            u = field
        l2sq = sobolev_norm_sq(u, SobolevIndex(0.0))
        h1sq = sobolev_norm_sq(u, SobolevIndex(1.0))
        h1psq = sobolev_norm_sq(u, SobolevIndex(1.0 + self.delta))
        h2psq = sobolev_norm_sq(u, SobolevIndex(2.0 + self.delta))
        if g.dim == 2:
            expmom = math.exp(min(self.gamma * h1sq, 700.0))
        else:
            expmom = math.exp(min(self.gamma * l2sq, 700.0))
        phi2 = self.spectrum.phi**2
        if g.dim == 2:
            proj = float(np.sum(phi2 * (np.abs(u.coeffs[0]) ** 2 + np.abs(u.coeffs[1]) ** 2)))
        else:
            proj = float(np.sum(phi2 * np.sum(np.abs(u.coeffs) ** 2, axis=0)))
        seg["l2sq"].append(l2sq)
        seg["h1sq"].append(h1sq)
        seg["h1psq"].append(h1psq)
        seg["h2psq"].append(h2psq)
        seg["expmom"].append(expmom)
        seg["noise_proj"].append(proj)
        for s in self.sigmas:
            seg["sigma"][s].append(sobolev_norm(u, SobolevIndex(s, homogeneous=False)))
        l2 = math.sqrt(l2sq)
        idx = np.searchsorted(self.hist_edges, l2, side="right") - 1
        if idx >= len(self.hist_counts) - 1 or idx < 0:
            idx = len(self.hist_counts) - 1
        self.hist_counts[idx] += 1

    def close_segment(self) -> None:
        """Seal the currently filling trajectory segment."""
        if self._open is not None:
            seg = {k: np.asarray(self._open[k], dtype=float) for k in SERIES_KEYS}
            seg["sigma"] = {s: np.asarray(v, dtype=float) for s, v in self._open["sigma"].items()}
            self._segments.append(seg)
            self._open = None

    # -- access -----------------------------------------------------------

    @property
    def count(self) -> int:
        n = sum(len(seg["l2sq"]) for seg in self._segments)
        if self._open is not None:
            n += len(self._open["l2sq"])
        return n

    def segments(self, key: str) -> list[np.ndarray]:
        self.close_segment()
        return [seg[key] for seg in self._segments if len(seg[key])]

    def series(self, key: str) -> np.ndarray:
        segs = self.segments(key)
        return np.concatenate(segs) if segs else np.array([])

    def sigma_samples(self, s: float) -> np.ndarray:
        self.close_segment()
        segs = [seg["sigma"][s] for seg in self._segments if s in seg["sigma"]]
        return np.concatenate(segs) if segs else np.array([])

    def mean(self, key: str) -> float:
        x = self.series(key)
        if x.size == 0:
            raise InsufficientDataError("empty accumulator")
        return float(np.mean(x))

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if self.delta != other.delta or self.gamma != other.gamma:
            raise ValueError("cannot merge accumulators with different parameters")
        self.close_segment()
        other.close_segment()
        out = MomentAccumulator(self.spectrum, self.delta, self.gamma, self.sigmas,
                                hist_bins=len(self.hist_counts) - 1)
        out._segments = sorted(
            self._segments + other._segments,
            key=lambda seg: (len(seg["l2sq"]), float(seg["l2sq"].sum()) if len(seg["l2sq"]) else 0.0),
        )
        out.hist_counts = self.hist_counts + other.hist_counts
        return out


def accumulate(acc: MomentAccumulator, field, gamma: float | None = None) -> MomentAccumulator:
    """Functional wrapper over MomentAccumulator.add."""
    if gamma is not None and not math.isclose(gamma, acc.gamma):
        raise ValueError("gamma differs from the accumulator's configured rate")
    acc.add(field)
    return acc


def batch_means_ci(series, n_batches: int = 20, level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of a batch-means confidence interval.

    Splits the series into n_batches contiguous batches (discarding the
    remainder), which absorbs autocorrelation of stationary samples.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 2 * n_batches:
        raise InsufficientDataError(
            f"need at least {2*n_batches} samples for {n_batches} batches, got {x.size}"
        )
    blen = x.size // n_batches
    bm = x[: blen * n_batches].reshape(n_batches, blen).mean(axis=1)
    return _ci_from_batch_means(bm, level)


def _ci_from_batch_means(bm: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    n = bm.size
    mean = float(np.mean(bm))
    if n < 2:
        raise InsufficientDataError("need at least two batches")
    if np.all(bm == bm[0]):
        return mean, 0.0
    sd = float(np.std(bm, ddof=1))
    tq = float(sps.t.ppf(0.5 + level / 2.0, n - 1))
    return mean, tq * sd / math.sqrt(n)


def segmented_ci(segments: list[np.ndarray], n_batches: int = 20, level: float = 0.95) -> tuple[float, float]:
    """Batch-means CI where batches never straddle trajectory boundaries."""
    segs = [np.asarray(s, dtype=float) for s in segments if len(s)]
    if not segs:
        raise InsufficientDataError("no samples")
    per = max(2, n_batches // len(segs))
    bms = []
    for s in segs:
        if s.size >= 2 * per:
            blen = s.size // per
            bms.append(s[: blen * per].reshape(per, blen).mean(axis=1))
        else:
            bms.append(np.array([s.mean()]))
    return _ci_from_batch_means(np.concatenate(bms), level)


def integrated_autocorr_time(series, max_lag: int | None = None) -> float:
    """Integrated autocorrelation time in sample units (>= 1).

    Sokal-style windowed sum: accumulate rho(k) while the window is below
    5 * tau_int, a standard self-consistent truncation.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 10:
        raise InsufficientDataError("series too short for autocorrelation")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0:
        return 1.0
    max_lag = max_lag or n // 4
    tau = 1.0
    for k in range(1, max_lag):
        rho = float(np.dot(x[:-k], x[k:])) / ((n - k) * var)
        tau += 2.0 * rho
        if k >= 5.0 * tau:
            break
    return max(tau, 1.0)


@dataclass
class IdentityRow:
    quantity: str
    estimate: float
    ci_half_width: float
    target: float | None
    lower: float | None = None
    upper: float | None = None
    verdict: str = ""


@dataclass
class BalanceReport:
    """Stationary balance verdicts for one (nu, N) system."""

    delta: float
    b0: float
    b1: float
    c_delta: float
    rows: list = dataclass_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.rows)


def c_delta_bracket(b0: float, b1: float, delta: float) -> float:
    """Lower bracket constant (B0 / B1^{delta/(1+delta)})^{1+delta} / 2."""
    if b1 <= 0:
        return 0.0
    return 0.5 * (b0 / b1 ** (delta / (1.0 + delta))) ** (1.0 + delta)


def balance_report(acc: MomentAccumulator, spectrum: NoiseSpectrum, delta: float,
                   n_batches: int = 20, radius: int | None = None) -> BalanceReport:
    """Compare time averages against the exact stationary targets.

    2D targets: E||u||_{H^{1+d}}^2 = B0/2, E||u||_{H^{2+d}}^2 = B1/2 and the
    bracket C_delta <= E||u||_{H^1}^2 <= B0/2. In 3D only the first identity
    applies (with B0 truncated at the Galerkin radius).
    """
    if acc.count < 2 * n_batches:
        raise InsufficientDataError("accumulator holds too few samples")
    b0 = spectrum.b_constant(0, radius)
    b1 = spectrum.b_constant(1, radius)
    rep = BalanceReport(delta=delta, b0=b0, b1=b1, c_delta=c_delta_bracket(b0, b1, delta))

    def ci(key):
        return segmented_ci(acc.segments(key), n_batches)

    est, hw = ci("h1psq")
    rep.rows.append(IdentityRow(
        "E|u|^2_{H^{1+delta}}", est, hw, b0 / 2.0,
        verdict="pass" if abs(est - b0 / 2.0) <= hw else "fail"))
    if spectrum.grid.dim == 2:
        est2, hw2 = ci("h2psq")
        rep.rows.append(IdentityRow(
            "E|u|^2_{H^{2+delta}}", est2, hw2, b1 / 2.0,
            verdict="pass" if abs(est2 - b1 / 2.0) <= hw2 else "fail"))
        est1, hw1 = ci("h1sq")
        lo, hi = rep.c_delta, b0 / 2.0
        ok = (est1 + hw1 >= lo) and (est1 - hw1 <= hi)
        rep.rows.append(IdentityRow(
            "E|u|^2_{H^1}", est1, hw1, None, lower=lo, upper=hi,
            verdict="pass" if ok else "fail"))
    estl2, hwl2 = ci("l2sq")
    rep.rows.append(IdentityRow("E|u|^2_{L2}", estl2, hwl2, None, verdict="info"))
    este, hwe = ci("expmom")
    rep.rows.append(IdentityRow("E exp(gamma |u|^2)", este, hwe, None,
                                verdict="pass" if math.isfinite(este) else "fail"))
    return rep


def tail_exponent(samples, delta: float, sigma: float, fit_fraction: float = 0.1,
                  min_samples: int = 1000) -> dict:
    """Least-squares slope of the empirical log survival over the top decade.

    The lemma gives the one-sided bound P(|u|_{H^sigma} > l) <~
    l^{-2(1+delta)/(sigma-1)} (log factors dropped), so the verdict is
    directional: observed decay at least as fast as the target.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < min_samples:
        raise InsufficientDataError(f"tail fit needs >= {min_samples} samples")
    if x[-1] <= 0 or x[0] == x[-1]:
        raise InsufficientDataError("degenerate sample set for tail fit")
    # anchor the decade at the 10th-largest sample: survival estimates at
    # the extreme tip are count-starved and bias the slope
    lam_hi = x[-10]
    lam_lo = max(lam_hi / 10.0, x[int(0.5 * x.size)])
    if lam_lo >= 0.99 * lam_hi or lam_lo <= 0:
        raise InsufficientDataError("sample spread too small for a tail fit")
    lams = np.geomspace(lam_lo, lam_hi * 0.999, 12)
    surv = np.array([np.mean(x > lam) for lam in lams])
    keep = surv > 0
    if keep.sum() < 3:
        raise InsufficientDataError("not enough tail mass to fit")
    slope, intercept = np.polyfit(np.log(lams[keep]), np.log(surv[keep]), 1)
    target = -2.0 * (1.0 + delta) / (sigma - 1.0)
    return {
        "slope": float(slope),
        "target": float(target),
        "n_points": int(keep.sum()),
        "passes": bool(slope <= target + 0.5),
    }


def small_ball_probe(samples, delta: float, eps_grid=None, min_samples: int = 1000) -> dict:
    """Empirical P(|u|_{L2} < eps) decay plus a refined-bin atom check.

    Directional verdict against the bound C eps^{2(1+delta)/(2+delta)}:
    the fitted exponent must be at least the target (faster decay passes).
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise InsufficientDataError(f"small-ball probe needs >= {min_samples} samples")
    target = 2.0 * (1.0 + delta) / (2.0 + delta)
    if eps_grid is None:
        lo = np.quantile(x, 0.005)
        hi = np.quantile(x, 0.5)
        if lo <= 0:
            lo = np.min(x[x > 0], initial=hi / 100.0)
        eps_grid = np.geomspace(max(lo, 1e-12), hi, 10)
    probs = np.array([np.mean(x < e) for e in eps_grid])
    keep = probs > 0
    if keep.sum() >= 3 and eps_grid[keep].max() > eps_grid[keep].min():
        slope = float(np.polyfit(np.log(eps_grid[keep]), np.log(probs[keep]), 1)[0])
    else:
        slope = math.inf  # no observed mass near zero: decay faster than any power
    atom_free = refined_bin_check(x)
    return {
        "eps": np.asarray(eps_grid),
        "probs": probs,
        "exponent": slope,
        "target": target,
        "passes": bool(slope >= target - 0.4),
        "atom_free": atom_free,
    }


def refined_bin_check(samples, levels: tuple = (64, 128, 256), shrink: float = 0.75) -> bool:
    """Non-atomicity evidence: the largest histogram bin mass must shrink
    by at least `shrink` each time the bin count doubles."""
    x = np.asarray(samples, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        return False  # all samples equal: an atom
    prev = None
    for nbins in levels:
        counts, _ = np.histogram(x, bins=nbins, range=(lo, hi))
        peak = counts.max() / x.size
        if prev is not None and peak > shrink * prev:
            return False
        prev = peak
    return True


def g_identity_check(acc: MomentAccumulator, spectrum: NoiseSpectrum, delta: float,
                     interval: tuple | None = None, n_batches: int = 20,
                     radius: int | None = None) -> dict:
    """Monte Carlo residual of the local-time identity with g(x) = x.

    For Gamma = [a, b):  E[ |Gamma ∩ (-inf, Y)| (B0/2 - H) ] +
    sum phi_n^2 E[ 1_Gamma(Y) |u_n|^2 ] = 0, with Y = |u|^2_{L2} and
    H = |u|^2_{H^{1+delta}}. Passes when the CI covers zero.
    """
    y = acc.series("l2sq")
    h = acc.series("h1psq")
    w = acc.series("noise_proj")
    if y.size < 2 * n_batches:
        raise InsufficientDataError("too few samples for the identity check")
    b0 = spectrum.b_constant(0, radius)
    if interval is None:
        med = float(np.median(np.sqrt(y)))
        interval = (med**2, math.inf)
    a, b = interval
    if b <= a:
        return {"residual": 0.0, "ci_half_width": 0.0, "interval": (a, b), "passes": True}
    overlap = np.clip(y - a, 0.0, b - a if math.isfinite(b) else None)
    inside = (y >= a) & (y < b)
    res = overlap * (b0 / 2.0 - h) + inside * w
    mean, hw = batch_means_ci(res, n_batches)
    scale = float(np.mean(np.abs(overlap * (b0 / 2.0 - h))) + np.mean(inside * w)) or 1.0
    return {
        "residual": mean,
        "ci_half_width": hw,
        "relative_residual": mean / scale,
        "interval": (a, b),
        "passes": bool(abs(mean) <= hw),
    }
