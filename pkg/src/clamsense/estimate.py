"""Parameter estimators: MUSIC and FFT DoA, the delay-Doppler periodogram
with peak grouping, and the sequential ZF-MUSIC and spatial-smoothing
MUSIC baselines."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize

from . import _kernels
from ._counters import charge
from .scene import ArrayGeometry
from .suppress import ProjectorError, ZfProjector, zf_apply, zf_build
from .synth import ReceivedTensor, snapshot_matrix


class EstimationError(ValueError):
    pass


# --------------------------------------------------------------------------
# covariance
# --------------------------------------------------------------------------

def covariance(snapshots: np.ndarray, block: int = 8192) -> np.ndarray:
    """Sample covariance ``Y Y^H / P`` accumulated over column blocks."""
    y = np.asarray(snapshots)
    if y.ndim != 2 or y.shape[1] < 1:
        raise EstimationError("snapshot matrix must be M x P with P >= 1")
    m, p = y.shape
    r = np.zeros((m, m), dtype=complex)
    for j in range(0, p, block):
        yb = y[:, j:j + block]
        r += yb @ yb.conj().T
    r /= p
    charge("covariance", p * m * m)
    # exact Hermitian symmetry (the block sums are Hermitian up to rounding)
    return 0.5 * (r + r.conj().T)


# --------------------------------------------------------------------------
# MUSIC
# --------------------------------------------------------------------------

def angle_grid(step_deg: float, lo: float = 0.0, hi: float = 180.0) -> np.ndarray:
    if not step_deg > 0:
        raise EstimationError("grid step must be positive")
    n = int(round((hi - lo) / step_deg))
    if not math.isclose(n * step_deg, hi - lo, rel_tol=0, abs_tol=1e-9):
        raise EstimationError(f"grid step {step_deg} does not divide [{lo}, {hi}]")
    return lo + step_deg * np.arange(n + 1)


@dataclass
class MusicSpectrum:
    """Pseudo-spectrum on an ``azimuth x zenith`` grid (``values[i, j]`` is
    at ``(azimuth_deg[i], zenith_deg[j])``)."""

    azimuth_deg: np.ndarray
    zenith_deg: np.ndarray
    values: np.ndarray
    step_deg: float
    n_sources: int
    weighting: str
    nulled_doas: tuple = ()
    eigenvalues: np.ndarray | None = None
    evaluate: Callable[[float, float], float] | None = field(default=None, repr=False)

    def value_at(self, azimuth_deg: float, zenith_deg: float) -> float:
        """Spectrum value at an arbitrary direction (off-grid allowed)."""
        if self.evaluate is None:
            raise EstimationError("spectrum has no evaluator")
        return self.evaluate(azimuth_deg, zenith_deg)

    def nearest_value(self, azimuth_deg: float, zenith_deg: float) -> float:
        i = int(np.argmin(np.abs(self.azimuth_deg - azimuth_deg)))
        j = int(np.argmin(np.abs(self.zenith_deg - zenith_deg)))
        return float(self.values[i, j])


_WEIGHTINGS = ("gain", "none")


def _spectrum_terms(g, gain_matrix, geom, az, zen):
    d = _kernels.steered_norms(g, geom.mx, geom.mz, geom.spacing_over_lambda, az, zen)
    if gain_matrix is None:
        return d, None
    gamma = _kernels.steered_norms(gain_matrix, geom.mx, geom.mz, geom.spacing_over_lambda, az, zen)
    return d, gamma / geom.n_elements


def music_spectrum(
    r: np.ndarray,
    n_sources: int,
    geom: ArrayGeometry,
    grid_step_deg: float = 0.5,
    projector: ZfProjector | None = None,
    weighting: str = "gain",
    eps: float = 1e-300,
    hermitian_tol: float = 1e-8,
) -> MusicSpectrum:
    """MUSIC pseudo-spectrum, optionally with a zero-forcing projector.

    With ``b = W_bar alpha`` (or ``b = alpha`` without a projector) and
    ``Q_n`` the noise subspace, the denominator is ``d = ||Q_n^H b||^2``.

    ``weighting="none"`` returns ``1 / (d + eps)``.
    ``weighting="gain"`` (default) returns ``g^2 / (d + eps)`` with the
    projector gain ``g = alpha^H W alpha / M`` in ``[0, 1]``.  Without a
    projector ``g = 1`` and both weightings coincide.  With a projector the
    plain form diverges at the nulled directions, where ``b`` itself
    vanishes; the gain factor keeps the nulls deep while leaving the peak
    locations of noiseless data unchanged (``d = 0`` there).
    """
    if weighting not in _WEIGHTINGS:
        raise EstimationError(f"unknown weighting {weighting!r}; choose from {_WEIGHTINGS}")
    r = np.asarray(r, dtype=complex)
    m = geom.n_elements
    if r.shape != (m, m):
        raise EstimationError(f"covariance shape {r.shape} does not match M = {m}")
    if not 1 <= n_sources < m:
        raise EstimationError(f"source count {n_sources} must satisfy 1 <= S < M = {m}")
    scale = max(np.linalg.norm(r), 1e-300)
    if np.linalg.norm(r - r.conj().T) > hermitian_tol * scale:
        raise EstimationError("covariance is not Hermitian")
    w, v = np.linalg.eigh(r)
    charge("eig", m ** 3)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    qn = v[:, n_sources:]
    az = angle_grid(grid_step_deg)
    zen = angle_grid(grid_step_deg)
    if projector is None:
        g = qn
        gain_matrix = None
    else:
        if projector.w_bar.shape != (m, m):
            raise EstimationError("projector size does not match the array")
        g = projector.w_bar @ qn
        gain_matrix = projector.w if weighting == "gain" else None
    charge("music_scan", az.size * zen.size * (m + 1) * (m - n_sources))

    def combine(d, gamma):
        if gamma is None:
            return 1.0 / (d + eps)
        return gamma ** 2 / (d + eps)

    d, gamma = _spectrum_terms(g, gain_matrix, geom, az, zen)
    values = combine(d, gamma)

    def evaluate(a, z):
        if not (0.0 <= a <= 180.0 and 0.0 <= z <= 180.0):
            return 0.0
        dd, gg = _spectrum_terms(g, gain_matrix, geom, np.array([a]), np.array([z]))
        return float(combine(dd, gg)[0, 0])

    return MusicSpectrum(
        az, zen, values, grid_step_deg, n_sources, weighting,
        tuple(projector.doas) if projector is not None else (), w, evaluate,
    )


@dataclass
class PeakList:
    doas: list[tuple[float, float]]
    values: list[float]
    padded: bool = False
    refined: bool = False
    low_confidence: bool = False

    def __len__(self):
        return len(self.doas)


def grid_peaks(values: np.ndarray, count: int, flat_rtol: float = 1e-6) -> tuple[list[tuple[int, int]], bool]:
    """Indices of the ``count`` largest strict 8-neighbour local maxima.

    Missing peaks are filled from the global ranking (ties resolved towards
    the lowest flat index); the flag reports whether that happened.  A map
    whose finite values span less than ``flat_rtol`` relative to the
    largest is treated as exactly flat: it has no local maxima and the
    padding starts at flat index 0.
    """
    flat = values.ravel()
    finite = flat[np.isfinite(flat)]
    if finite.size and finite.max() - finite.min() <= flat_rtol * abs(finite.max()):
        picked = [i for i in range(flat.size) if np.isfinite(flat[i])][:count]
        n1 = values.shape[1]
        return [(i // n1, i % n1) for i in picked], True
    order = np.argsort(-flat, kind="stable")
    lm = _kernels.local_maxima_8(values).ravel()
    picked = [int(i) for i in order if lm[i]][:count]
    padded = False
    if len(picked) < count:
        padded = True
        chosen = set(picked)
        for i in order:
            if len(picked) >= count:
                break
            if int(i) not in chosen:
                picked.append(int(i))
                chosen.add(int(i))
    n1 = values.shape[1]
    return [(i // n1, i % n1) for i in picked], padded


def refine_peak(func: Callable[[float, float], float], az: float, zen: float, half_width: float):
    """Local maximisation of ``func`` inside the box ``[az +- half_width] x
    [zen +- half_width]`` (clipped to ``[0, 180]``) by a 2D Nelder-Mead
    search started at the grid peak.  Joint search matters: near the array
    endfire the peak is a narrow ridge oblique to the angle axes.

    Returns ``(az, zen, value)``; the start point is kept unless the search
    finds a strictly larger value.
    """
    best = func(az, zen)
    if not (np.isfinite(best) and best > 0):
        return az, zen, best
    lo = np.array([max(0.0, az - half_width), max(0.0, zen - half_width)])
    hi = np.array([min(180.0, az + half_width), min(180.0, zen + half_width)])

    def neg(x):
        if np.any(x < lo) or np.any(x > hi):
            return np.inf
        return -func(float(x[0]), float(x[1])) / best

    x0 = np.array([az, zen])
    h = 0.5 * half_width
    simplex = np.array([x0, x0 + [h if az + h <= hi[0] else -h, 0.0], x0 + [0.0, h if zen + h <= hi[1] else -h]])
    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-7, "fatol": 1e-14, "maxiter": 400})
    val = -float(res.fun) * best
    if np.isfinite(val) and val > best:
        return float(res.x[0]), float(res.x[1]), val
    return az, zen, best


def music_peaks(spec: MusicSpectrum, count: int, refine: bool = False) -> PeakList:
    """The ``count`` strongest local maxima, sorted by value."""
    idx, padded = grid_peaks(spec.values, count)
    doas, vals = [], []
    for i, j in idx:
        a, z, v = float(spec.azimuth_deg[i]), float(spec.zenith_deg[j]), float(spec.values[i, j])
        if refine and spec.evaluate is not None:
            a, z, v = refine_peak(spec.evaluate, a, z, spec.step_deg)
        doas.append((a, z))
        vals.append(v)
    if refine:
        order = sorted(range(len(vals)), key=lambda k: -vals[k])
        doas, vals = [doas[k] for k in order], [vals[k] for k in order]
    return PeakList(doas, vals, padded, refine)


def music_doa(
    snapshots: np.ndarray,
    n_sources: int,
    geom: ArrayGeometry,
    n_peaks: int | None = None,
    grid_step_deg: float = 0.5,
    projector: ZfProjector | None = None,
    refine: bool = True,
    r: np.ndarray | None = None,
) -> tuple[PeakList, MusicSpectrum]:
    """Covariance, spectrum and peak search in one call."""
    if r is None:
        y = snapshots if projector is None else zf_apply(projector, snapshots)
        r = covariance(y)
    spec = music_spectrum(r, n_sources, geom, grid_step_deg, projector)
    return music_peaks(spec, n_peaks or n_sources, refine), spec


# --------------------------------------------------------------------------
# FFT (beamforming) DoA
# --------------------------------------------------------------------------

def default_fft_size(geom: ArrayGeometry) -> int:
    return max(64, 32 * max(geom.mx, geom.mz))


@dataclass
class FftDoaResult:
    """Beam power on spatial-frequency bins (``fftshift`` order) and the
    strongest peaks mapped to angles."""

    power: np.ndarray
    u: np.ndarray  # (d/lambda) cos(az) sin(zen) per x-bin
    v: np.ndarray  # (d/lambda) cos(zen) per z-bin
    visible: np.ndarray
    peaks: PeakList
    fft_size: int


def bin_to_doa(u: float, v: float, spacing: float) -> tuple[float, float] | None:
    """Map spatial frequencies to (azimuth, zenith); ``None`` when invisible."""
    cz = v / spacing
    if abs(cz) > 1:
        return None
    sz = math.sqrt(max(0.0, 1 - cz * cz))
    zen = math.degrees(math.acos(cz))
    if sz == 0:
        return (90.0, zen) if abs(u) < 1e-12 else None
    ca = u / (spacing * sz)
    if abs(ca) > 1:
        return None
    return math.degrees(math.acos(ca)), zen


def _fft_axes(geom: ArrayGeometry, n: int):
    f = np.fft.fftshift(np.fft.fftfreq(n))  # cycles per element in [-1/2, 1/2)
    u = f.copy()
    v = f.copy()
    s = geom.spacing_over_lambda
    cz = v / s
    sz = np.sqrt(np.clip(1 - cz ** 2, 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        ca = u[:, None] / (s * sz[None, :])
    visible = (np.abs(cz)[None, :] <= 1) & (np.abs(ca) <= 1)
    return u, v, visible


def beam_power_bins(vectors: np.ndarray, weights: np.ndarray, geom: ArrayGeometry, n: int) -> np.ndarray:
    """``sum_i w_i |FFT2(v_i)|^2`` in fftshift order.  ``vectors`` is ``M x K``."""
    vec = np.asarray(vectors).reshape(geom.mx, geom.mz, -1)
    f = np.fft.fft2(vec, s=(n, n), axes=(0, 1))
    p = (np.abs(f) ** 2) @ np.asarray(weights, dtype=float)
    return np.fft.fftshift(p, axes=(0, 1))


def fft_doa(
    snapshots: np.ndarray | None,
    geom: ArrayGeometry,
    n_peaks: int,
    fft_size: int | None = None,
    r: np.ndarray | None = None,
) -> FftDoaResult:
    """2D spatial-DFT beamforming averaged over snapshots.

    The snapshot average ``(1/P) sum_p |FFT2(y_p)|^2`` is computed exactly
    from the eigendecomposition of the sample covariance,
    ``sum_i lambda_i |FFT2(u_i)|^2``, which needs ``M`` transforms instead
    of ``P``.
    """
    n = fft_size or default_fft_size(geom)
    if n < max(geom.mx, geom.mz):
        raise EstimationError("fft_size must be at least the array dimension")
    if r is None:
        r = covariance(snapshots)
    lam, vec = np.linalg.eigh(r)
    lam = np.clip(lam, 0, None)
    power = beam_power_bins(vec, lam, geom, n)
    return _fft_result(power, geom, n, n_peaks)


def _fft_result(power, geom, n, n_peaks) -> FftDoaResult:
    u, v, visible = _fft_axes(geom, n)
    masked = np.where(visible, power, -np.inf)
    idx, padded = grid_peaks(masked, n_peaks)
    doas, vals = [], []
    for i, j in idx:
        d = bin_to_doa(u[i], v[j], geom.spacing_over_lambda)
        if d is None:
            padded = True
            continue
        doas.append(d)
        vals.append(float(power[i, j]))
    return FftDoaResult(power, u, v, visible, PeakList(doas, vals, padded), n)


def fft_doa_vector(y: np.ndarray, geom: ArrayGeometry, fft_size: int | None = None,
                   projector: ZfProjector | None = None, gain_floor: float = 1e-2) -> tuple[tuple[float, float], float]:
    """Strongest DoA of a single spatial vector by zero-padded 2D FFT.

    With a projector the beam power of ``W y`` is divided by the projector
    gain ``||W a||^2 / M`` of each bin, which makes the maximum sit at the
    direction whose projected steering vector best matches ``W y``.
    """
    n = fft_size or default_fft_size(geom)
    m = geom.n_elements
    if projector is None:
        power = beam_power_bins(y[:, None], np.ones(1), geom, n)
    else:
        wy = projector.w @ y
        power = beam_power_bins(wy[:, None], np.ones(1), geom, n)
        q = projector.basis
        if q.shape[1]:
            gain = 1 - beam_power_bins(q, np.ones(q.shape[1]), geom, n) / m
        else:
            gain = np.ones_like(power)
        power = power / np.maximum(gain, gain_floor)
    res = _fft_result(power, geom, n, 1)
    if not res.peaks.doas:
        raise EstimationError("no visible FFT peak")
    return res.peaks.doas[0], res.peaks.values[0]


# --------------------------------------------------------------------------
# delay-Doppler periodogram
# --------------------------------------------------------------------------

@dataclass
class DelayDopplerSpectrum:
    """Complex transform ``M x n_tau x n_fd`` and its scaled magnitude."""

    complex_map: np.ndarray
    power: np.ndarray
    delta_f_hz: float
    t_s_s: float
    n_sc: int
    n_sym: int
    window: str | None = None

    @property
    def n_tau(self) -> int:
        return self.complex_map.shape[1]

    @property
    def n_fd(self) -> int:
        return self.complex_map.shape[2]

    def delay_of_bin(self, n):
        return np.asarray(n) / (self.delta_f_hz * self.n_tau)

    def doppler_of_bin(self, n):
        """Doppler of a bin; bins at or above ``n_fd/2`` are negative."""
        n = np.asarray(n)
        signed = np.where(n >= self.n_fd / 2, n - self.n_fd, n)
        return signed / (self.t_s_s * self.n_fd)

    def summed_power(self) -> np.ndarray:
        return self.power.sum(axis=0)


def _window(name: str | None, n: int) -> np.ndarray | None:
    if name is None or name == "none":
        return None
    if name == "hamming":
        return np.hamming(n)
    if name == "hann":
        return np.hanning(n)
    raise EstimationError(f"unknown window {name!r}")


def _half_nlogn(n: int) -> int:
    return int(round(0.5 * n * math.log2(n)))


def delay_doppler(
    tensor: ReceivedTensor,
    n_tau_ifft: int,
    n_fd_fft: int,
    window: str | None = None,
) -> DelayDopplerSpectrum:
    """Zero-padded IFFT over subcarriers then FFT over symbols, per antenna.

    ``Per = |W_tau F W_fd^*|^2 / (n_sc n_sym)`` with unnormalised
    transforms, so bin ``k`` of the delay axis corresponds to
    ``tau = k / (delta_f n_tau)``.
    """
    x = tensor.data
    m, n_sc, n_sym = x.shape
    if n_tau_ifft < n_sc or n_fd_fft < n_sym:
        raise EstimationError(
            f"transform lengths ({n_tau_ifft}, {n_fd_fft}) must be >= (n_sc, n_sym) = ({n_sc}, {n_sym})"
        )
    ws, wg = _window(window, n_sc), _window(window, n_sym)
    if ws is not None:
        x = x * ws[None, :, None] * wg[None, None, :]
    c = np.fft.ifft(x, n=n_tau_ifft, axis=1) * n_tau_ifft
    c = np.fft.fft(c, n=n_fd_fft, axis=2)
    power = (c.real ** 2 + c.imag ** 2) / (n_sc * n_sym)
    charge("dd_delay_ifft", m * n_sym * _half_nlogn(n_tau_ifft))
    charge("dd_doppler_fft", m * n_tau_ifft * _half_nlogn(n_fd_fft))
    charge("dd_periodogram", m * n_tau_ifft * n_fd_fft)
    return DelayDopplerSpectrum(c, power, tensor.params.delta_f_hz, tensor.params.t_s_s, n_sc, n_sym, window)


@dataclass
class DdClass:
    peak_bin: tuple[int, int]
    delay_s: float
    doppler_hz: float
    power: float
    mask: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def _wrapped_region(above: np.ndarray, i: int, j: int) -> np.ndarray:
    """4-connected component of ``(i, j)`` in ``above`` with the second axis
    treated as periodic."""
    labels, _ = ndimage.label(above)
    target = {int(labels[i, j])}
    rows = np.flatnonzero(above[:, 0] & above[:, -1])
    pairs = {(int(labels[r, 0]), int(labels[r, -1])) for r in rows}
    changed = True
    while changed:
        changed = False
        for a, b in pairs:
            if (a in target) != (b in target):
                target |= {a, b}
                changed = True
    return np.isin(labels, list(target))


def dd_peaks_and_group(
    spec: DelayDopplerSpectrum,
    rel_threshold_db: float = -15.0,
    floor_margin_db: float = 12.0,
    dynamic_range_db: float = 40.0,
    max_classes: int = 8,
) -> list[DdClass]:
    """Group the antenna-summed periodogram into classes.

    Candidate class seeds are strict 8-neighbour local maxima taken in
    decreasing order.  A seed already covered by an earlier class is
    skipped.  Each class is the 4-connected region around its seed above
    ``seed + rel_threshold_db``.  The search stops when the next seed falls
    below ``median + floor_margin_db`` or below ``max - dynamic_range_db``;
    the strongest peak always forms a class.
    """
    if not rel_threshold_db < 0:
        raise EstimationError("rel_threshold_db must be negative")
    pmap = spec.summed_power()
    if pmap.size == 0 or not np.any(pmap > 0):
        raise EstimationError("empty delay-Doppler spectrum")
    floor = float(np.median(pmap)) * 10 ** (floor_margin_db / 10)
    top = float(pmap.max())
    floor = max(floor, top * 10 ** (-dynamic_range_db / 10))
    # the Doppler axis is periodic: test local maxima with wrapped columns
    ext = np.concatenate([pmap[:, -1:], pmap, pmap[:, :1]], axis=1)
    lm = _kernels.local_maxima_8(ext)[:, 1:-1]
    seeds = np.flatnonzero(lm.ravel())
    seeds = seeds[np.argsort(-pmap.ravel()[seeds], kind="stable")]
    covered = np.zeros(pmap.shape, dtype=bool)
    classes: list[DdClass] = []
    for s in seeds:
        i, j = divmod(int(s), pmap.shape[1])
        val = float(pmap[i, j])
        if classes and val < floor:
            break
        if covered[i, j]:
            continue
        above = (pmap >= val * 10 ** (rel_threshold_db / 10)) & ~covered
        region = _wrapped_region(above, i, j)
        covered |= region
        classes.append(DdClass(
            (i, j),
            float(spec.delay_of_bin(i)),
            float(spec.doppler_of_bin(j)),
            val,
            region,
        ))
        if len(classes) >= max_classes:
            break
    return classes


# --------------------------------------------------------------------------
# baselines
# --------------------------------------------------------------------------

@dataclass
class SequentialResult:
    doas: list[tuple[float, float]]
    error: str | None = None


def sequential_zf_music(
    snapshots: np.ndarray,
    geom: ArrayGeometry,
    total_paths: int,
    grid_step_deg: float = 0.5,
    refine: bool = True,
) -> SequentialResult:
    """Path-by-path MUSIC: each round nulls every direction found so far,
    re-estimates the covariance of the projected data and keeps the
    strongest peak of a one-source spectrum."""
    if not total_paths < geom.n_elements:
        raise EstimationError("total_paths must be smaller than M")
    found: list[tuple[float, float]] = []
    for _ in range(total_paths):
        try:
            proj = zf_build(geom, found)
        except ProjectorError as exc:
            return SequentialResult(found, f"round {len(found) + 1}: {exc}")
        r = covariance(zf_apply(proj, snapshots))
        spec = music_spectrum(r, 1, geom, grid_step_deg, proj if found else None)
        peaks = music_peaks(spec, 1, refine)
        found.append(peaks.doas[0])
    return SequentialResult(found)


def subarray_indices(geom: ArrayGeometry, sx: int, sz: int, ox: int, oz: int) -> np.ndarray:
    ix = np.arange(ox, ox + sx)
    iz = np.arange(oz, oz + sz)
    return (ix[:, None] * geom.mz + iz[None, :]).ravel()


def smoothed_covariance(r: np.ndarray, geom: ArrayGeometry, sx: int, sz: int) -> np.ndarray:
    """Forward spatial smoothing: average of all ``sx x sz`` subarray
    covariances."""
    if not (1 <= sx <= geom.mx and 1 <= sz <= geom.mz):
        raise EstimationError("subarray larger than the array")
    acc = np.zeros((sx * sz, sx * sz), dtype=complex)
    n = 0
    for ox in range(geom.mx - sx + 1):
        for oz in range(geom.mz - sz + 1):
            idx = subarray_indices(geom, sx, sz, ox, oz)
            acc += r[np.ix_(idx, idx)]
            n += 1
    return acc / n


def spatial_smoothing_music(
    snapshots: np.ndarray | None,
    geom: ArrayGeometry,
    subarray_mx: int | None,
    subarray_mz: int | None,
    n_sources: int,
    grid_step_deg: float = 0.5,
    n_peaks: int | None = None,
    refine: bool = True,
    r: np.ndarray | None = None,
) -> tuple[PeakList, MusicSpectrum]:
    """MUSIC on the forward-smoothed covariance with the subarray steering
    model.  Subarray size defaults to half the array per axis."""
    sx = subarray_mx or max(1, geom.mx // 2)
    sz = subarray_mz or max(1, geom.mz // 2)
    n_shifts = (geom.mx - sx + 1) * (geom.mz - sz + 1)
    if n_shifts < n_sources:
        raise EstimationError(f"{n_shifts} subarray shifts cannot resolve {n_sources} coherent sources")
    if r is None:
        r = covariance(snapshots)
    sub = ArrayGeometry(sx, sz, geom.spacing_over_lambda, geom.carrier_hz)
    rs = smoothed_covariance(r, geom, sx, sz)
    spec = music_spectrum(rs, n_sources, sub, grid_step_deg)
    return music_peaks(spec, n_peaks or n_sources, refine), spec


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------

def write_spectrum_csv(spec: MusicSpectrum, path: str | Path, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["azimuth_deg", "zenith_deg", "value"])
        for i, a in enumerate(spec.azimuth_deg):
            for j, z in enumerate(spec.zenith_deg):
                w.writerow([f"{a:.4f}", f"{z:.4f}", repr(float(spec.values[i, j]))])


def write_peaks_csv(peaks: PeakList, path: str | Path, stage: str, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "azimuth_deg", "zenith_deg", "value", "stage", "padded", "refined"])
        for k, ((a, z), v) in enumerate(zip(peaks.doas, peaks.values)):
            w.writerow([k, f"{a:.6f}", f"{z:.6f}", repr(float(v)), stage, int(peaks.padded), int(peaks.refined)])
