"""Two-step joint spatial-Doppler estimation and bistatic localization.

Step 1 nulls the map's clutter directions and picks ``S`` candidate target
directions.  Step 2 revisits every candidate: all other known directions
are nulled, the projected data go through the delay-Doppler periodogram,
each periodogram class yields a spatial snapshot whose direction is
re-estimated, and the collected records are clustered into the final
target estimates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import fclusterdata

from . import _kernels
from ._counters import charge
from .estimate import (
    DelayDopplerSpectrum,
    EstimationError,
    PeakList,
    angle_grid,
    covariance,
    dd_peaks_and_group,
    delay_doppler,
    fft_doa,
    fft_doa_vector,
    music_peaks,
    music_spectrum,
    refine_peak,
)
from .scene import SPEED_OF_LIGHT, ArrayGeometry
from .suppress import ProjectorError, ZfProjector, zf_apply, zf_build
from .synth import ReceivedTensor, snapshot_matrix, tensor_from_snapshots


class JointError(ValueError):
    pass


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimateRecord:
    delay_s: float
    doppler_hz: float
    azimuth_deg: float
    zenith_deg: float
    power: float
    stage: str
    flags: tuple[str, ...] = ()
    parents: tuple[int, ...] = ()
    delay_bin: float = math.nan
    doppler_bin: float = math.nan

    @property
    def doa(self) -> tuple[float, float]:
        return (self.azimuth_deg, self.zenith_deg)


@dataclass
class EstimateSet:
    records: list[EstimateRecord] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def stage(self, prefix: str) -> list[EstimateRecord]:
        return [r for r in self.records if r.stage.startswith(prefix)]

    @property
    def finals(self) -> list[EstimateRecord]:
        return self.stage("Final")

    @property
    def step2(self) -> list[EstimateRecord]:
        return self.stage("Step2")

    def extend(self, recs):
        self.records.extend(recs)


RECORD_FIELDS = ["index", "stage", "delay_us", "doppler_hz", "azimuth_deg", "zenith_deg", "power", "flags", "parents"]


def write_records_csv(es: EstimateSet, path: str | Path, header: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for d in es.diagnostics:
            fh.write(f"# diagnostic: {d}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_FIELDS)
        for k, r in enumerate(es.records):
            w.writerow([
                k, r.stage, _fmt(r.delay_s * 1e6), _fmt(r.doppler_hz), _fmt(r.azimuth_deg), _fmt(r.zenith_deg),
                repr(float(r.power)), "|".join(r.flags), "|".join(map(str, r.parents)),
            ])


def _fmt(x: float) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class JointConfig:
    """Settings of the two-step algorithm.

    ``oversample`` sets the periodogram lengths to ``oversample * n_sc``
    and ``oversample * n_sym`` unless ``n_tau``/``n_fd`` are given.
    """

    method: str = "music"  # DoA estimator: "music" or "fft"
    grid_step_deg: float = 0.5
    refine: bool = True
    fft_size: int | None = None
    oversample: int = 5
    n_tau: int | None = None
    n_fd: int | None = None
    window: str | None = "hamming"
    rel_threshold_db: float = -15.0
    floor_margin_db: float = 12.0
    dynamic_range_db: float = 40.0
    max_classes: int = 8
    iterate_all: bool = False
    angle_tol_deg: float = 1.5
    doppler_tol_bins: float = 1.0
    link_deg: float = 1.5
    link_bins: float = 1.5
    gain_floor: float = 1e-2
    detect_ratio: float = 4.0
    clutter_dopplers_hz: tuple[float, ...] | None = None

    def dd_lengths(self, n_sc: int, n_sym: int) -> tuple[int, int]:
        return (self.n_tau or self.oversample * n_sc, self.n_fd or self.oversample * n_sym)


# --------------------------------------------------------------------------
# Step 1
# --------------------------------------------------------------------------

@dataclass
class Step1Result:
    candidates: PeakList
    projector: ZfProjector
    spectrum: object = None


def step1(
    snapshots: np.ndarray,
    clam_doas: Sequence[tuple[float, float]],
    n_targets: int,
    geom: ArrayGeometry,
    config: JointConfig = JointConfig(),
    r_projected: np.ndarray | None = None,
    projector: ZfProjector | None = None,
) -> Step1Result:
    """Null the map's clutter directions, then take ``S`` spectral peaks.

    ``r_projected`` and ``projector`` may be supplied when the caller has
    already built them for the same map directions.
    """
    if n_targets < 1:
        raise JointError("S must be >= 1")
    proj = projector if projector is not None else zf_build(geom, clam_doas)
    if r_projected is None:
        r_projected = covariance(zf_apply(proj, snapshots))
    if config.method == "music":
        spec = music_spectrum(r_projected, n_targets, geom, config.grid_step_deg, proj)
        peaks = music_peaks(spec, n_targets, config.refine)
        result = Step1Result(peaks, proj, spec)
        eig = spec.eigenvalues
    elif config.method == "fft":
        res = fft_doa(None, geom, n_targets, config.fft_size, r=r_projected)
        result = Step1Result(res.peaks, proj, res)
        eig = None
    else:
        raise JointError(f"unknown DoA method {config.method!r}")
    if eig is None:
        eig = np.linalg.eigvalsh(r_projected)[::-1]
    result.candidates.low_confidence = _weak_signal(eig, n_targets, proj.n_nulls, config.detect_ratio)
    return result


def _weak_signal(eig_desc: np.ndarray, n_targets: int, n_nulls: int, ratio: float) -> bool:
    """True when the ``S``-th eigenvalue of the projected covariance is not
    ``ratio`` times above the median of the remaining (non-nulled) ones."""
    noise = eig_desc[n_targets:len(eig_desc) - n_nulls]
    if noise.size == 0:
        return False
    return bool(eig_desc[n_targets - 1] < ratio * max(float(np.median(noise)), 0.0))


# --------------------------------------------------------------------------
# Step 2
# --------------------------------------------------------------------------

class _ProjectedMatcher:
    """Direction search for a single projected snapshot ``y``.

    Maximises ``|b^H y|^2 / (||b||^2 ||y||^2)`` over ``b = W alpha``: the
    one-source MUSIC criterion with the rank-one noise-subspace complement
    of ``y y^H``, normalised by the projected steering norm.  Directions
    whose projector gain falls below ``gain_floor`` are excluded.
    """

    def __init__(self, proj: ZfProjector, geom: ArrayGeometry, step: float, gain_floor: float):
        self.proj, self.geom, self.step, self.floor = proj, geom, step, gain_floor
        self.az = angle_grid(step)
        self.zen = angle_grid(step)
        m = geom.n_elements
        self.gain = self._norms(proj.w, self.az, self.zen) / m
        self._n_nodes = self.az.size * self.zen.size

    def _norms(self, g, az, zen):
        return _kernels.steered_norms(g, self.geom.mx, self.geom.mz, self.geom.spacing_over_lambda, az, zen)

    def search(self, y: np.ndarray, refine: bool) -> tuple[tuple[float, float], float]:
        m = self.geom.n_elements
        charge("reestimate_outer", m * m)
        charge("eig", m ** 3)
        charge("reestimate_scan", self._n_nodes * (m * m - 1))
        wy = self.proj.w @ y
        ny = float(np.vdot(wy, wy).real)
        if ny <= 0:
            raise EstimationError("extracted snapshot vanishes after projection")
        num = self._norms(wy[:, None], self.az, self.zen)
        ok = self.gain >= self.floor
        score = np.where(ok, num / (m * np.maximum(self.gain, 1e-300) * ny), 0.0)
        i, j = np.unravel_index(int(np.argmax(score)), score.shape)
        a, z, v = float(self.az[i]), float(self.zen[j]), float(score[i, j])
        if refine:
            def f(aa, zz):
                g = self._norms(self.proj.w, np.array([aa]), np.array([zz]))[0, 0] / m
                if g < self.floor:
                    return 0.0
                return float(self._norms(wy[:, None], np.array([aa]), np.array([zz]))[0, 0] / (m * g * ny))
            a, z, v = refine_peak(f, a, z, self.step)
        return (a, z), v


def _remove_one(seq, item):
    out = list(seq)
    for k, x in enumerate(out):
        if x == item:
            del out[k]
            return out
    return out


def step2(
    snapshots: np.ndarray,
    tensor_like: ReceivedTensor,
    clam_doas: Sequence[tuple[float, float]],
    candidates: Sequence[tuple[float, float]],
    geom: ArrayGeometry,
    config: JointConfig = JointConfig(),
) -> EstimateSet:
    """Per-candidate re-projection, delay-Doppler gating and DoA
    re-estimation.  Returns only the Step2 records (see :func:`cluster_match`
    for the reduction).

    ``tensor_like`` supplies the OFDM parameters used to reshape the
    projected snapshots back into a tensor.
    """
    es = EstimateSet()
    union = [tuple(map(float, d)) for d in clam_doas] + [tuple(map(float, d)) for d in candidates]
    loop = union if config.iterate_all else [tuple(map(float, d)) for d in candidates]
    ofdm = tensor_like.params
    n_tau, n_fd = config.dd_lengths(ofdm.n_sc, ofdm.n_sym)
    for k, cand in enumerate(loop):
        nulls = _remove_one(union, cand)
        try:
            proj = zf_build(geom, nulls)
        except ProjectorError as exc:
            es.diagnostics.append(f"iteration {k}: projector failed ({exc}); skipped")
            continue
        yk = zf_apply(proj, snapshots)
        tk = tensor_like.with_data(tensor_from_snapshots(yk, ofdm))
        dd = delay_doppler(tk, n_tau, n_fd, config.window)
        classes = dd_peaks_and_group(dd, config.rel_threshold_db, config.floor_margin_db,
                                     config.dynamic_range_db, config.max_classes)
        matcher = _ProjectedMatcher(proj, geom, config.grid_step_deg, config.gain_floor) if config.method == "music" else None
        for c, cls in enumerate(classes):
            y = dd.complex_map[:, cls.peak_bin[0], cls.peak_bin[1]]
            flags = []
            try:
                if matcher is not None:
                    doa, _score = matcher.search(y, config.refine)
                else:
                    n = config.fft_size
                    doa, _ = fft_doa_vector(y, geom, n, proj, config.gain_floor)
                    nf = (n or 0) ** 2
                    if nf:
                        charge("reestimate_fft", int(round(0.5 * nf * math.log2(nf))) + nf)
            except EstimationError as exc:
                es.diagnostics.append(f"iteration {k} class {c}: {exc}")
                continue
            nt_bin = cls.peak_bin[0]
            nf_bin = cls.peak_bin[1] if cls.peak_bin[1] < n_fd / 2 else cls.peak_bin[1] - n_fd
            es.records.append(EstimateRecord(
                delay_s=cls.delay_s,
                doppler_hz=cls.doppler_hz,
                azimuth_deg=doa[0],
                zenith_deg=doa[1],
                power=cls.power,
                stage=f"Step2-iter-{k}-class-{c}",
                flags=tuple(flags),
                delay_bin=float(nt_bin),
                doppler_bin=float(nf_bin),
            ))
    if not es.records:
        es.diagnostics.append("no Step2 records: every iteration failed or produced no class")
    return es


# --------------------------------------------------------------------------
# clustering
# --------------------------------------------------------------------------

def _near_clutter(r: EstimateRecord, clam_doas, tol_deg, clutter_bins, tol_bins) -> bool:
    for a, z in clam_doas:
        if abs(r.azimuth_deg - a) <= tol_deg and abs(r.zenith_deg - z) <= tol_deg:
            if clutter_bins is None:
                return True
            if any(abs(r.doppler_bin - b) <= tol_bins for b in clutter_bins):
                return True
    return False


def cluster_match(
    records: Sequence[EstimateRecord],
    n_targets: int,
    clam_doas: Sequence[tuple[float, float]],
    angle_tol_deg: float = 1.5,
    link_deg: float = 1.5,
    link_bins: float = 1.5,
    clutter_doppler_bins: Sequence[float] | None = None,
    doppler_tol_bins: float = 1.0,
    offset: int = 0,
) -> tuple[list[EstimateRecord], list[str]]:
    """Reduce Step2 records to at most ``S`` final estimates.

    1. Records within ``angle_tol_deg`` on both axes of a map clutter DoA
       are discarded (when clutter Doppler bins are known, the Doppler must
       also match within ``doppler_tol_bins``).
    2. Survivors are grouped by single linkage under the Chebyshev distance
       in ``(az/link_deg, zen/link_deg, delay_bin/link_bins,
       doppler_bin/link_bins)``, joining at distance <= 1.
    3. Each cluster is summarised by its power-weighted centroid.
    4. The ``S`` clusters with the largest total power are kept.

    ``offset`` is added to record indices stored as parents.
    """
    diags: list[str] = []
    if not records:
        return [], ["no records to cluster"]
    keep = [k for k, r in enumerate(records)
            if not _near_clutter(r, clam_doas, angle_tol_deg, clutter_doppler_bins, doppler_tol_bins)]
    if not keep:
        return [], ["every record matched a map clutter direction"]
    x = np.array([[records[k].azimuth_deg / link_deg, records[k].zenith_deg / link_deg,
                   records[k].delay_bin / link_bins, records[k].doppler_bin / link_bins] for k in keep])
    x = np.nan_to_num(x, nan=0.0)
    if len(keep) == 1:
        labels = np.array([1])
    else:
        labels = fclusterdata(x, t=1.0, criterion="distance", metric="chebyshev", method="single")
    clusters = []
    for lab in np.unique(labels):
        members = [keep[i] for i in np.flatnonzero(labels == lab)]
        p = np.array([records[k].power for k in members], dtype=float)
        wts = p / p.sum() if p.sum() > 0 else np.full(len(members), 1 / len(members))

        def avg(attr, wts=wts, members=members):
            return float(sum(w * getattr(records[k], attr) for w, k in zip(wts, members)))
        clusters.append((float(p.sum()), members, avg))
    clusters.sort(key=lambda c: (-c[0], c[1][0]))
    finals = []
    for total, members, avg in clusters:
        rec = EstimateRecord(
            delay_s=avg("delay_s"),
            doppler_hz=avg("doppler_hz"),
            azimuth_deg=avg("azimuth_deg"),
            zenith_deg=avg("zenith_deg"),
            power=total,
            stage="Final",
            parents=tuple(offset + k for k in members),
            delay_bin=avg("delay_bin"),
            doppler_bin=avg("doppler_bin"),
        )
        if _near_clutter(rec, clam_doas, angle_tol_deg, clutter_doppler_bins, doppler_tol_bins):
            diags.append(f"cluster centroid ({rec.azimuth_deg:.2f}, {rec.zenith_deg:.2f}) fell inside a clutter window; dropped")
            continue
        finals.append(rec)
        if len(finals) >= n_targets:
            break
    return finals, diags


# --------------------------------------------------------------------------
# orchestration
# --------------------------------------------------------------------------

@dataclass
class JointResult:
    step1: Step1Result
    estimates: EstimateSet

    @property
    def finals(self) -> list[EstimateRecord]:
        return self.estimates.finals


def clutter_doppler_bins(dopplers_hz, t_s_s, n_fd) -> list[float] | None:
    if dopplers_hz is None:
        return None
    return [f * t_s_s * n_fd for f in dopplers_hz]


def run_joint(
    tensor: ReceivedTensor,
    clam_doas: Sequence[tuple[float, float]],
    n_targets: int,
    config: JointConfig = JointConfig(),
    snapshots: np.ndarray | None = None,
    step1_result: Step1Result | None = None,
) -> JointResult:
    """Run both steps and the final clustering on one capture.

    A precomputed Step 1 result (e.g. from the spatial-only pipeline on the
    same data) can be passed to avoid recomputing it.
    """
    geom = tensor.array
    y = snapshot_matrix(tensor) if snapshots is None else snapshots
    s1 = step1_result or step1(y, clam_doas, n_targets, geom, config)
    es = EstimateSet()
    cands = list(s1.candidates.doas)
    s1_flags = tuple(f for f, on in (("padded", s1.candidates.padded),
                                     ("low-confidence", s1.candidates.low_confidence)) if on)
    es.extend(EstimateRecord(math.nan, math.nan, a, z, v, "Step1", s1_flags)
              for (a, z), v in zip(cands, s1.candidates.values))
    s2 = step2(y, tensor, clam_doas, cands, geom, config)
    offset = len(es.records)
    es.extend(s2.records)
    es.diagnostics.extend(s2.diagnostics)
    if s2.records:
        _, n_fd = config.dd_lengths(tensor.params.n_sc, tensor.params.n_sym)
        bins = clutter_doppler_bins(config.clutter_dopplers_hz, tensor.params.t_s_s, n_fd)
        finals, diags = cluster_match(
            s2.records, n_targets, clam_doas, config.angle_tol_deg, config.link_deg, config.link_bins,
            bins, config.doppler_tol_bins, offset=offset,
        )
        es.extend(finals)
        es.diagnostics.extend(diags)
    if not es.finals:
        es.diagnostics.append("empty Final set")
    return JointResult(s1, es)


# --------------------------------------------------------------------------
# localization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Localization:
    position_m: tuple[float, float]
    range_m: float
    azimuth_deg: float
    delay_s: float


def _ray(azimuth_deg: float, bs_yaw_deg: float) -> np.ndarray:
    psi = math.radians(azimuth_deg + bs_yaw_deg)
    return np.array([math.cos(psi), math.sin(psi)])


def localize(delay_s: float, azimuth_deg: float, ue_position_m, bs_position_m, bs_yaw_deg: float = 0.0) -> Localization:
    """Intersect the bistatic ellipse ``|p-UE| + |p-BS| = c tau`` with the
    BS azimuth ray (horizontal plane).

    Along the ray ``p = BS + r u`` the ellipse condition is linear in
    ``r``: ``r = (D^2 - |w|^2) / (2 (D + w.u))`` with ``w = BS - UE`` and
    ``D = c tau``.
    """
    ue = np.asarray(ue_position_m, dtype=float)[:2]
    bs = np.asarray(bs_position_m, dtype=float)[:2]
    d = SPEED_OF_LIGHT * delay_s
    w = bs - ue
    nw = float(np.linalg.norm(w))
    if not d > nw:
        raise GeometryError(f"path length {d:.3f} m does not exceed the UE-BS baseline {nw:.3f} m")
    u = _ray(azimuth_deg, bs_yaw_deg)
    den = 2 * (d + float(w @ u))
    r = (d * d - nw * nw) / den
    if not r > 0:
        raise GeometryError("no positive range on the azimuth ray")
    p = bs + r * u
    return Localization((float(p[0]), float(p[1])), float(r), float(azimuth_deg), float(delay_s))


def forward_geometry(target_m, ue_position_m, bs_position_m, bs_yaw_deg: float = 0.0) -> tuple[float, float]:
    """Horizontal-plane bistatic delay and BS-frame azimuth of a target.
    The azimuth is returned in ``(-180, 180]``."""
    t = np.asarray(target_m, dtype=float)[:2]
    ue = np.asarray(ue_position_m, dtype=float)[:2]
    bs = np.asarray(bs_position_m, dtype=float)[:2]
    delay = (np.linalg.norm(t - ue) + np.linalg.norm(t - bs)) / SPEED_OF_LIGHT
    v = t - bs
    az = math.degrees(math.atan2(v[1], v[0])) - bs_yaw_deg
    az = (az + 180.0) % 360.0 - 180.0
    if az == -180.0:
        az = 180.0
    return float(delay), az


def polar_rows(finals: Sequence[EstimateRecord], truth: Sequence[tuple[float, float, str]]) -> list[tuple[float, float, str]]:
    """(azimuth_deg, delay_us, label) rows for truth and estimates."""
    rows = [(float(a), float(d) * 1e6, lab) for a, d, lab in truth]
    rows += [(r.azimuth_deg, r.delay_s * 1e6, "estimate") for r in finals]
    return rows
