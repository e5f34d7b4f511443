"""Demodulated, symbol-divided OFDM receive tensor and its snapshot view.

The tensor is synthesized directly in the post-DFT domain: entry
``(m, n, g)`` is ``sum_k beta_k alpha_k[m] exp(-j2pi n df tau_k)
exp(j2pi fD_k (g Ts + Tcp))`` plus optional circular Gaussian noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .scene import ArrayGeometry, PathParams, steering_matrix


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class OfdmParams:
    n_sc: int
    n_sym: int
    delta_f_hz: float = 30e3
    t_cp_s: float = 288 / (1024 * 30e3)

    def __post_init__(self):
        if self.n_sc < 1:
            raise SynthesisError("n_sc must be >= 1")
        if self.n_sym < 2:
            raise SynthesisError("n_sym must be >= 2")
        if not self.delta_f_hz > 0:
            raise SynthesisError("delta_f_hz must be positive")
        if self.t_cp_s < 0:
            raise SynthesisError("t_cp_s must be non-negative")

    @property
    def t_sym_s(self) -> float:
        return 1.0 / self.delta_f_hz

    @property
    def t_s_s(self) -> float:
        return self.t_cp_s + self.t_sym_s

    @property
    def bandwidth_hz(self) -> float:
        return self.n_sc * self.delta_f_hz

    @property
    def n_snapshots(self) -> int:
        return self.n_sc * self.n_sym

    def check_delays(self, paths: Sequence[PathParams]) -> None:
        for p in paths:
            if p.delay_s > self.t_cp_s * (1 + 1e-12):
                raise SynthesisError(
                    f"path {p.label or ''} delay {p.delay_s * 1e6:.3f} us exceeds the cyclic prefix "
                    f"T_CP = {self.t_cp_s * 1e6:.3f} us (max delay <= T_CP)"
                )


def table2_ofdm() -> OfdmParams:
    """1024 subcarriers, 100 symbols, 30 kHz, 288-sample CP."""
    return OfdmParams(n_sc=1024, n_sym=100, delta_f_hz=30e3, t_cp_s=288 / (1024 * 30e3))


def desk_ofdm() -> OfdmParams:
    """Reduced profile: 128 subcarriers, 32 symbols, same CP duration as the full profile."""
    return OfdmParams(n_sc=128, n_sym=32, delta_f_hz=30e3, t_cp_s=288 / (1024 * 30e3))


def desk_array(carrier_hz: float = 28e9) -> ArrayGeometry:
    return ArrayGeometry(8, 8, 0.5, carrier_hz)


def table2_array(carrier_hz: float = 28e9) -> ArrayGeometry:
    return ArrayGeometry(32, 32, 0.5, carrier_hz)


PROFILES = {
    "desk": (desk_array, desk_ofdm),
    "table2": (table2_array, table2_ofdm),
}


@dataclass
class ReceivedTensor:
    """``data`` has shape ``(M, n_sc, n_sym)``."""

    data: np.ndarray
    params: OfdmParams
    array: ArrayGeometry
    noise_variance: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.array.n_elements
        if self.data.shape != (m, self.params.n_sc, self.params.n_sym):
            raise SynthesisError(
                f"tensor shape {self.data.shape} does not match ({m}, {self.params.n_sc}, {self.params.n_sym})"
            )

    def snapshots(self) -> np.ndarray:
        return snapshot_matrix(self)

    def with_data(self, data: np.ndarray, **meta) -> "ReceivedTensor":
        return ReceivedTensor(data, self.params, self.array, self.noise_variance, {**self.meta, **meta})


def _path_components(paths, ofdm, geom):
    a = steering_matrix(geom, [p.doa for p in paths])
    gains = np.array([p.gain for p in paths], dtype=complex)
    tau = np.array([p.delay_s for p in paths])
    fd = np.array([p.doppler_hz for p in paths])
    n = np.arange(ofdm.n_sc)
    g = np.arange(ofdm.n_sym)
    freq = np.exp(-2j * np.pi * ofdm.delta_f_hz * np.outer(tau, n))  # (K, n_sc)
    sym = np.exp(2j * np.pi * np.outer(fd, g * ofdm.t_s_s + ofdm.t_cp_s))  # (K, n_sym)
    return a * gains[None, :], freq, sym


def noiseless_tensor(paths: Sequence[PathParams], ofdm: OfdmParams, geom: ArrayGeometry) -> np.ndarray:
    m = geom.n_elements
    out = np.zeros((m, ofdm.n_sc, ofdm.n_sym), dtype=complex)
    if not paths:
        return out
    ah, freq, sym = _path_components(paths, ofdm, geom)
    # one path at a time keeps the peak memory at a single tensor
    for k in range(ah.shape[1]):
        out += ah[:, k, None, None] * np.multiply.outer(freq[k], sym[k])[None]
    return out


def synthesize(
    paths: Sequence[PathParams],
    ofdm: OfdmParams,
    geom: ArrayGeometry,
    snr_db: float | None = None,
    rng_seed: int = 0,
) -> ReceivedTensor:
    """Synthesize the receive tensor.

    ``snr_db`` is referenced to the mean per-entry power of the noiseless
    tensor (all paths, clutter included).
    """
    paths = list(paths)
    if not paths and snr_db is None:
        raise SynthesisError("empty path list without noise gives an all-zero tensor")
    ofdm.check_delays(paths)
    for p in paths:
        if abs(p.gain) == 0:
            raise SynthesisError(f"path {p.label or ''} has zero gain")
    data = noiseless_tensor(paths, ofdm, geom)
    return add_noise(ReceivedTensor(data, ofdm, geom), snr_db, rng_seed)


def add_noise(clean: ReceivedTensor, snr_db: float | None, rng_seed: int = 0) -> ReceivedTensor:
    """Noisy copy of a noiseless tensor (``snr_db=None`` returns a copy).

    The noise variance is the mean per-entry power of ``clean`` divided by
    ``10**(snr_db/10)``; an all-zero tensor is taken to have unit power.
    """
    data = clean.data.copy()
    meta = {"snr_db": snr_db, "snr_reference": "mean per-entry noiseless signal power", "seed": rng_seed}
    sigma2 = 0.0
    if snr_db is not None:
        p_sig = float(np.mean(np.abs(data) ** 2))
        if p_sig == 0:
            p_sig = 1.0
        sigma2 = p_sig / 10 ** (snr_db / 10)
        data += complex_noise(data.shape, sigma2, rng_seed)
    return ReceivedTensor(data, clean.params, clean.array, sigma2, {**clean.meta, **meta})


def complex_noise(shape, variance: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    scale = math.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def snapshot_matrix(t: ReceivedTensor) -> np.ndarray:
    """``M x P`` matrix whose column ``g*n_sc + n`` is ``t.data[:, n, g]``."""
    m = t.data.shape[0]
    return t.data.transpose(0, 2, 1).reshape(m, -1)


def tensor_from_snapshots(y: np.ndarray, ofdm: OfdmParams) -> np.ndarray:
    """Inverse of :func:`snapshot_matrix`, returns the ``(M, n_sc, n_sym)`` array."""
    m = y.shape[0]
    if y.shape[1] != ofdm.n_snapshots:
        raise SynthesisError(f"snapshot count {y.shape[1]} != n_sc*n_sym = {ofdm.n_snapshots}")
    return y.reshape(m, ofdm.n_sym, ofdm.n_sc).transpose(0, 2, 1)


# --------------------------------------------------------------------------
# flat binary dump
# --------------------------------------------------------------------------

_MAGIC = "clamsense-array v1"


def write_binary(array: np.ndarray, path: str | Path) -> None:
    """Write a complex array: one ASCII header line, then little-endian
    interleaved re/im float64 values in C order."""
    a = np.ascontiguousarray(array, dtype=np.complex128)
    header = f"{_MAGIC} shape={','.join(str(s) for s in a.shape)} dtype=complex128-le\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(a.astype("<c16").tobytes())


def read_binary(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        if not header.startswith(_MAGIC):
            raise SynthesisError(f"not a clamsense array file: {path}")
        fields = dict(tok.split("=", 1) for tok in header.split()[2:])
        shape = tuple(int(s) for s in fields["shape"].split(",") if s)
        raw = fh.read()
    return np.frombuffer(raw, dtype="<c16").reshape(shape).astype(np.complex128)
