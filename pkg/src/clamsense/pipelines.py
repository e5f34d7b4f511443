"""Named estimation pipelines sharing intermediate results per capture.

A :class:`Capture` wraps one received tensor together with what the
pipelines need to know about the scene (map clutter directions, number of
targets and clutter paths).  Covariances, projections and Step 1 results
are computed once per capture and reused by every method that needs them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .estimate import (
    PeakList,
    covariance,
    fft_doa,
    music_peaks,
    music_spectrum,
    sequential_zf_music,
    spatial_smoothing_music,
)
from .joint import EstimateRecord, EstimateSet, JointConfig, JointResult, run_joint, step1
from .suppress import zf_apply, zf_build
from .synth import ReceivedTensor, snapshot_matrix


@dataclass(frozen=True)
class PipelineConfig:
    grid_step_deg: float = 0.5
    refine: bool = True
    fft_size: int | None = None
    joint: JointConfig = JointConfig()
    subarray: tuple[int, int] | None = None

    def joint_for(self, method: str) -> JointConfig:
        from dataclasses import replace

        return replace(self.joint, method=method, grid_step_deg=self.grid_step_deg,
                       refine=self.refine, fft_size=self.fft_size)


@dataclass
class MethodOutput:
    method: str
    doas: list[tuple[float, float]]
    delays_s: list[float] | None = None
    dopplers_hz: list[float] | None = None
    flags: list[str] = field(default_factory=list)
    estimates: EstimateSet | None = None
    spectrum: object = None


class Capture:
    def __init__(self, tensor: ReceivedTensor, clam_doas: Sequence[tuple[float, float]], n_targets: int,
                 n_clutter: int, config: PipelineConfig = PipelineConfig()):
        self.tensor = tensor
        self.clam_doas = [tuple(map(float, d)) for d in clam_doas]
        self.n_targets = n_targets
        self.n_clutter = n_clutter
        self.config = config
        self.geom = tensor.array

    @cached_property
    def y(self) -> np.ndarray:
        return snapshot_matrix(self.tensor)

    @cached_property
    def r(self) -> np.ndarray:
        return covariance(self.y)

    @cached_property
    def projector(self):
        return zf_build(self.geom, self.clam_doas)

    @cached_property
    def r_zf(self) -> np.ndarray:
        return covariance(zf_apply(self.projector, self.y))

    def step1(self, method: str):
        key = f"_step1_{method}"
        if key not in self.__dict__:
            self.__dict__[key] = step1(self.y, self.clam_doas, self.n_targets, self.geom,
                                       self.config.joint_for(method), r_projected=self.r_zf,
                                       projector=self.projector)
        return self.__dict__[key]

    def joint(self, method: str) -> JointResult:
        key = f"_joint_{method}"
        if key not in self.__dict__:
            self.__dict__[key] = run_joint(self.tensor, self.clam_doas, self.n_targets,
                                           self.config.joint_for(method), self.y, self.step1(method))
        return self.__dict__[key]


def _peaks_output(method, peaks: PeakList, spectrum=None) -> MethodOutput:
    return MethodOutput(method, list(peaks.doas), flags=["padded"] if peaks.padded else [], spectrum=spectrum)


def _music(c: Capture) -> MethodOutput:
    order = min(c.n_clutter + c.n_targets, c.geom.n_elements - 1)
    spec = music_spectrum(c.r, order, c.geom, c.config.grid_step_deg)
    return _peaks_output("music", music_peaks(spec, c.n_targets, c.config.refine), spec)


def _fft(c: Capture) -> MethodOutput:
    res = fft_doa(None, c.geom, c.n_targets, c.config.fft_size, r=c.r)
    return _peaks_output("fft", res.peaks, res)


def _spatial(method):
    def run(c: Capture) -> MethodOutput:
        s1 = c.step1(method)
        return _peaks_output(f"spatial-{method}", s1.candidates, s1.spectrum)
    return run


def _joint(method):
    def run(c: Capture) -> MethodOutput:
        res = c.joint(method)
        finals = res.finals
        doas = [f.doa for f in finals]
        delays = [f.delay_s for f in finals]
        dopplers = [f.doppler_hz for f in finals]
        flags = []
        if len(finals) < c.n_targets:
            # fill from the Step 1 candidates farthest from the finals
            flags.append("step1-fill")
            for d in res.step1.candidates.doas:
                if len(doas) >= c.n_targets:
                    break
                if all(math.dist(d, e) > c.config.joint.link_deg for e in doas):
                    doas.append(d)
                    delays.append(math.nan)
                    dopplers.append(math.nan)
        return MethodOutput(f"joint-{method}", doas, delays, dopplers, flags, res.estimates)
    return run


def _sequential(c: Capture) -> MethodOutput:
    res = sequential_zf_music(c.y, c.geom, c.n_clutter + c.n_targets, c.config.grid_step_deg, c.config.refine)
    return MethodOutput("seq-zf-music", list(res.doas), flags=[res.error] if res.error else [])


def _smoothing(c: Capture) -> MethodOutput:
    sx, sz = c.config.subarray or (None, None)
    order = c.n_clutter + c.n_targets
    peaks, spec = spatial_smoothing_music(None, c.geom, sx, sz, order, c.config.grid_step_deg,
                                          c.n_targets, c.config.refine, r=c.r)
    return _peaks_output("ss-music", peaks, spec)


METHODS: dict[str, Callable[[Capture], MethodOutput]] = {
    "music": _music,
    "fft": _fft,
    "spatial-music": _spatial("music"),
    "spatial-fft": _spatial("fft"),
    "joint-music": _joint("music"),
    "joint-fft": _joint("fft"),
    "seq-zf-music": _sequential,
    "ss-music": _smoothing,
}


def run_method(name: str, capture: Capture) -> MethodOutput:
    try:
        fn = METHODS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(METHODS)}") from None
    return fn(capture)
