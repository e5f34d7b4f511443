"""Clutter suppression: symbol-domain MTI filtering and spatial zero-forcing."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import comb

from ._counters import charge
from .scene import ArrayGeometry, steering_matrix
from .synth import ReceivedTensor


class FilterError(ValueError):
    pass


class ProjectorError(ValueError):
    """Zero-forcing projector could not be built (rank deficiency, bad size)."""

    def __init__(self, message: str, pair: tuple | None = None):
        super().__init__(message)
        self.pair = pair


# --------------------------------------------------------------------------
# MTI
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MtiFilter:
    """FIR canceller ``h(t) = sum_n c_n delta(t - nT)``."""

    coefficients: tuple[complex, ...]
    interval_s: float = 1.0

    def __post_init__(self):
        if len(self.coefficients) < 2:
            raise FilterError("an MTI filter needs order N >= 1 (at least two taps)")
        if abs(sum(self.coefficients)) > 1e-12 * max(1.0, sum(abs(c) for c in self.coefficients)):
            raise FilterError("MTI coefficients must sum to zero (DC null)")
        if not self.interval_s > 0:
            raise FilterError("interval_s must be positive")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def with_interval(self, interval_s: float) -> "MtiFilter":
        return MtiFilter(self.coefficients, interval_s)


def mti_design(order: int, profile: str = "binomial", interval_s: float = 1.0) -> MtiFilter:
    """Binomial N-pulse canceller, ``c_n = (-1)^n C(N, n)``."""
    if order < 1:
        raise FilterError("MTI order must be >= 1")
    if profile.lower() != "binomial":
        raise FilterError(f"unknown MTI profile {profile!r} (only 'binomial')")
    coeffs = tuple(float((-1) ** n * comb(order, n, exact=True)) for n in range(order + 1))
    return MtiFilter(coeffs, interval_s)


def mti_response(filt: MtiFilter, f_hz):
    """``H(f) = sum_n c_n exp(-j 2 pi f n T)``; scalar in, scalar out."""
    f = np.asarray(f_hz, dtype=float)
    n = np.arange(filt.order + 1)
    c = np.asarray(filt.coefficients, dtype=complex)
    # reduce f*T to [-1/2, 1/2) so the response is periodic to rounding error
    x = np.mod(f * filt.interval_s + 0.5, 1.0) - 0.5
    # sum c_n (e^{-j theta_n} - 1) instead of sum c_n e^{-j theta_n}: equal
    # because sum c_n = 0, and it avoids cancelling O(1) terms near DC where
    # |H| ~ |f|^N is tiny
    theta = 2 * np.pi * np.multiply.outer(x, n)
    h = (-2 * np.sin(theta / 2) ** 2 - 1j * np.sin(theta)) @ c
    return complex(h) if h.ndim == 0 else h


def mti_cutoff(filt: MtiFilter, n_grid: int = 4097) -> float:
    """3 dB cutoff ``f_B`` in ``(0, 1/(2T))`` of the response normalised to
    its maximum magnitude over one period."""
    t = filt.interval_s
    f = np.linspace(0.0, 1.0 / t, n_grid)
    mag = np.abs(mti_response(filt, f))
    peak = mag.max()
    half = f <= 0.5 / t
    g = mag[half] / peak - 1 / math.sqrt(2)
    idx = np.nonzero(g >= 0)[0]
    if idx.size == 0 or idx[0] == 0:
        raise FilterError("response never crosses the 3 dB level in (0, 1/(2T))")
    i = idx[0]
    fn = lambda x: abs(mti_response(filt, x)) / peak - 1 / math.sqrt(2)
    return float(brentq(fn, f[i - 1], f[i], xtol=1e-15 / t, rtol=1e-14))


def mti_apply(tensor: ReceivedTensor, filt: MtiFilter) -> ReceivedTensor:
    """Filter along the symbol axis, ``out[..., g] = sum_k c_k x[..., g-k]``,
    with ``x[..., g] = 0`` for ``g < 0``.

    The first ``N`` output symbols are boundary partial sums; the output
    ``meta['mti_valid_from']`` records ``N`` so estimators can drop them.
    """
    n_sym = tensor.data.shape[2]
    if filt.order >= n_sym:
        raise FilterError(f"MTI order {filt.order} must be smaller than n_sym = {n_sym}")
    x = tensor.data
    out = np.zeros_like(x)
    for k, c in enumerate(filt.coefficients):
        if c == 0:
            continue
        out[:, :, k:] += c * x[:, :, : n_sym - k]
    return tensor.with_data(out, mti_valid_from=filt.order, mti_coefficients=list(map(float, np.real(filt.coefficients))))


def drop_boundary_symbols(tensor: ReceivedTensor) -> ReceivedTensor:
    """Remove the MTI boundary symbols recorded in ``meta['mti_valid_from']``."""
    from .synth import OfdmParams

    n = int(tensor.meta.get("mti_valid_from", 0))
    if n == 0:
        return tensor
    p = tensor.params
    params = OfdmParams(p.n_sc, p.n_sym - n, p.delta_f_hz, p.t_cp_s)
    meta = {k: v for k, v in tensor.meta.items() if k != "mti_valid_from"}
    meta["dropped_symbols"] = n
    return ReceivedTensor(np.ascontiguousarray(tensor.data[:, :, n:]), params, tensor.array, tensor.noise_variance, meta)


def mti_demo(
    period_s: float = 10e-3,
    doppler_hz: float = 20.0,
    fs_hz: float = 2000.0,
    duration_s: float = 1.0,
    pulse_width_s: float = 1e-3,
    order: int = 1,
) -> dict[str, dict[str, np.ndarray]]:
    """Data series for the periodic-pulse MTI illustration.

    Clutter ``s(t)`` is a train of rectangular pulses with period ``T``;
    the received signal is ``y(t) = s(t) + s(t) exp(j 2 pi f_D t)`` and the
    output is the N-th order canceller applied with delay ``T``.

    Returns
    -------
    dict
        ``"time"``: t, s, Re y, Re y_out, |y_out|.
        ``"spectrum"``: f, |S(f)|, |Y(f)|, |H(f)|, |Y_out(f)| (two-sided,
        amplitude normalised by the sample count).
    """
    filt = mti_design(order, interval_s=period_s)
    n = int(round(duration_s * fs_hz))
    lag = int(round(period_s * fs_hz))
    if abs(lag - period_s * fs_hz) > 1e-9:
        raise FilterError("period must be an integer number of samples")
    t = np.arange(n) / fs_hz
    # integer sample arithmetic keeps every period identical
    width = max(1, int(round(pulse_width_s * fs_hz)))
    s = ((np.arange(n) % lag) < width).astype(float)
    y = s + s * np.exp(2j * np.pi * doppler_hz * t)
    out = np.zeros(n, dtype=complex)
    for k, c in enumerate(filt.coefficients):
        out[k * lag:] += c * y[: n - k * lag]
    f = np.fft.fftshift(np.fft.fftfreq(n, 1 / fs_hz))
    spec = lambda v: np.abs(np.fft.fftshift(np.fft.fft(v))) / n
    return {
        "time": {"t_s": t, "s": s, "y_re": y.real, "y_out_re": out.real, "y_out_abs": np.abs(out)},
        "spectrum": {
            "f_hz": f,
            "s_abs": spec(s),
            "y_abs": spec(y),
            "h_abs": np.abs(mti_response(filt, f)),
            "y_out_abs": spec(out),
        },
    }


# --------------------------------------------------------------------------
# zero-forcing projector
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ZfProjector:
    """Normalised projector ``W_bar = W / ||W||_F`` with ``W = I - Q Q^H``.

    ``basis`` holds an orthonormal basis ``Q`` of the nulled steering
    vectors (``M x K``).
    """

    w_bar: np.ndarray
    doas: tuple[tuple[float, float], ...]
    fro_norm: float
    basis: np.ndarray
    array: ArrayGeometry

    @property
    def w(self) -> np.ndarray:
        return self.w_bar * self.fro_norm

    @property
    def n_nulls(self) -> int:
        return len(self.doas)


def _most_coherent_pair(c: np.ndarray, doas) -> tuple[int, int]:
    best, pair = -1.0, (0, 1)
    norms = np.linalg.norm(c, axis=0)
    for i, j in itertools.combinations(range(c.shape[1]), 2):
        v = abs(np.vdot(c[:, i], c[:, j])) / (norms[i] * norms[j])
        if v > best:
            best, pair = v, (i, j)
    return pair


def zf_build(geom: ArrayGeometry, doas: Sequence[tuple[float, float]], cond_cap: float = 1e10) -> ZfProjector:
    """Projector onto the orthogonal complement of the listed steering vectors.

    The Gram matrix is never inverted: ``C`` is orthonormalised by QR after
    its conditioning has been checked through the singular values.
    """
    doas = tuple((float(a), float(z)) for a, z in doas)
    m = geom.n_elements
    k = len(doas)
    if k >= m:
        raise ProjectorError(f"cannot null {k} directions with {m} elements")
    if k == 0:
        w = np.eye(m, dtype=complex)
        q = np.zeros((m, 0), dtype=complex)
    else:
        c = steering_matrix(geom, doas)
        sv = np.linalg.svd(c, compute_uv=False)
        gram_cond = math.inf if sv[-1] <= sv[0] * 1e-300 else (sv[0] / sv[-1]) ** 2
        if not gram_cond <= cond_cap:
            i, j = _most_coherent_pair(c, doas) if k > 1 else (0, 0)
            raise ProjectorError(
                f"clutter steering matrix is ill-conditioned (Gram condition {gram_cond:.3g} > {cond_cap:.3g}); "
                f"offending DoA pair {doas[i]} and {doas[j]}",
                pair=(doas[i], doas[j]),
            )
        q, _ = np.linalg.qr(c)
        w = np.eye(m, dtype=complex) - q @ q.conj().T
    charge("projector", k * (m + k) ** 2)
    fro = float(np.linalg.norm(w))
    return ZfProjector(w / fro, doas, fro, q, geom)


def zf_apply(proj: ZfProjector, snapshots: np.ndarray) -> np.ndarray:
    """Return ``W_bar @ Y``."""
    y = np.asarray(snapshots)
    m = proj.w_bar.shape[0]
    if y.ndim != 2 or y.shape[0] != m:
        raise ProjectorError(f"snapshot matrix has {y.shape[0] if y.ndim else 0} rows, projector expects {m}")
    charge("projection", y.shape[1] * m * m)
    return proj.w_bar @ y


def zf_apply_tensor(proj: ZfProjector, tensor: ReceivedTensor) -> ReceivedTensor:
    """Project every snapshot of a tensor (same result as :func:`zf_apply`
    on the snapshot matrix, reshaped back)."""
    from .synth import snapshot_matrix, tensor_from_snapshots

    y = zf_apply(proj, snapshot_matrix(tensor))
    return tensor.with_data(np.ascontiguousarray(tensor_from_snapshots(y, tensor.params)), zf_nulls=[list(d) for d in proj.doas])
