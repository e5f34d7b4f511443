"""Clutter angle map: a horizontal grid of candidate UE positions whose
cells store the dominant clutter directions of arrival at the BS."""
from __future__ import annotations

import datetime as _dt
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .scene import PathKind, Scene, SceneError, clutter_paths, derive_paths

FORMAT = "clamsense-clam"
VERSION = 1


class ClamError(ValueError):
    pass


class ClamLookupError(ClamError, LookupError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """``nx x ny`` square cells of side ``cell_size_m`` starting at
    ``origin_m`` (x, y).  UE candidates sit at height ``height_m``."""

    origin_m: tuple[float, float]
    cell_size_m: float
    nx: int
    ny: int
    height_m: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ClamError("empty grid: nx and ny must be >= 1")
        if not self.cell_size_m > 0:
            raise ClamError("cell_size_m must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_center(self, i: int, j: int) -> tuple[float, float, float]:
        return (
            self.origin_m[0] + (i + 0.5) * self.cell_size_m,
            self.origin_m[1] + (j + 0.5) * self.cell_size_m,
            self.height_m,
        )

    def cell_index(self, position_m: Sequence[float]) -> tuple[int, int]:
        """Floor indexing on each axis.  A point on an edge shared by cells
        ``k-1`` and ``k`` lies on the closed lower edge of cell ``k`` and is
        assigned to it."""
        fx = (position_m[0] - self.origin_m[0]) / self.cell_size_m
        fy = (position_m[1] - self.origin_m[1]) / self.cell_size_m
        i, j = math.floor(fx), math.floor(fy)
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ClamLookupError(f"position {tuple(position_m)} is outside the map grid")
        return i, j

    def cells(self):
        for i in range(self.nx):
            for j in range(self.ny):
                yield i, j

    def to_dict(self) -> dict:
        return {
            "origin_m": list(self.origin_m),
            "cell_size_m": self.cell_size_m,
            "nx": self.nx,
            "ny": self.ny,
            "height_m": self.height_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(tuple(float(v) for v in d["origin_m"]), float(d["cell_size_m"]), int(d["nx"]), int(d["ny"]),
                   float(d.get("height_m", 0.0)))


@dataclass(frozen=True)
class ClamMap:
    grid: GridSpec
    cells: tuple[tuple[tuple[float, float], ...], ...]  # row-major: index i * ny + j
    meta: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)  # cell index -> note

    def cell(self, i: int, j: int) -> list[tuple[float, float]]:
        return list(self.cells[i * self.grid.ny + j])


def _quantize(doas, precision_deg):
    if precision_deg is None:
        return tuple((float(a), float(z)) for a, z in doas)
    digits = max(0, -int(math.floor(math.log10(precision_deg) + 1e-12)))
    if math.isclose(precision_deg, 10.0 ** -digits):
        return tuple((round(float(a), digits), round(float(z), digits)) for a, z in doas)
    return tuple((round(a / precision_deg) * precision_deg, round(z / precision_deg) * precision_deg) for a, z in doas)


def _meta(scene: Scene, method: str, n_clutter, precision_deg, **extra) -> dict:
    return {
        "method": method,
        "scene_digest": scene.digest(),
        "scene_name": scene.name,
        "n_clutter": n_clutter,
        "precision_deg": precision_deg,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }


def ranked_clutter_doas(scene: Scene, n_clutter: int | None = None) -> list[tuple[float, float]]:
    """Clutter DoAs of a scene ranked by ``|beta|^2`` (stable for ties)."""
    cl = clutter_paths(derive_paths(scene))
    order = sorted(range(len(cl)), key=lambda k: -abs(cl[k].gain) ** 2)
    doas = [cl[k].doa for k in order]
    return doas if n_clutter is None else doas[:n_clutter]


def build_geometric(scene: Scene, grid: GridSpec, n_clutter: int | None = None,
                    precision_deg: float | None = 0.1) -> ClamMap:
    """Oracle map from the simulator's scatterer geometry.

    Each cell stores the clutter DoAs seen with the UE at the cell centre,
    ranked by received power and truncated to ``n_clutter``.  DoAs are
    rounded to ``precision_deg`` (``None`` keeps full precision).
    """
    has_clutter = bool(scene.clutter) or any(p.kind is PathKind.CLUTTER for p in (scene.paths or ()))
    if not has_clutter:
        raise ClamError("scene has no clutter scatterers")
    cells, flags = [], {}
    for i, j in grid.cells():
        try:
            doas = ranked_clutter_doas(scene.with_ue(grid.cell_center(i, j)), n_clutter)
        except SceneError as exc:
            flags[str(i * grid.ny + j)] = f"empty: {exc}"
            doas = []
        cells.append(_quantize(doas, precision_deg))
    return ClamMap(grid, tuple(cells), _meta(scene, "geometric", n_clutter, precision_deg), flags)


@dataclass(frozen=True)
class EstimatorConfig:
    profile: str = "desk"
    snr_db: float | None = 0.0
    seed: int = 0
    grid_step_deg: float = 0.5
    refine: bool = True
    n_sc: int | None = None
    n_sym: int | None = None


def _estimate_cell(args):
    from .estimate import covariance, music_spectrum, music_peaks
    from .synth import PROFILES, OfdmParams, synthesize, snapshot_matrix

    scene, center, n_clutter, cfg, seed = args
    try:
        cl = clutter_paths(derive_paths(scene.with_ue(center)))
    except SceneError as exc:
        return [], f"empty: {exc}"
    if not cl:
        return [], None
    _, ofdm_fn = PROFILES[cfg.profile]
    base = ofdm_fn()
    ofdm = OfdmParams(cfg.n_sc or base.n_sc, cfg.n_sym or base.n_sym, base.delta_f_hz, base.t_cp_s)
    k = len(cl) if n_clutter is None else min(n_clutter, len(cl))
    t = synthesize(cl, ofdm, scene.array, cfg.snr_db, seed)
    r = covariance(snapshot_matrix(t))
    spec = music_spectrum(r, len(cl), scene.array, cfg.grid_step_deg)
    peaks = music_peaks(spec, k, cfg.refine)
    note = "padded: fewer spectral peaks than clutter paths" if peaks.padded else None
    return list(peaks.doas), note


def build_estimated(scene: Scene, grid: GridSpec, n_clutter: int | None = None,
                    config: EstimatorConfig = EstimatorConfig(), precision_deg: float | None = 0.1,
                    workers: int = 1) -> ClamMap:
    """Map built by running MUSIC on a synthesized clutter-only capture with
    the UE at each cell centre.  Targets in the scene are ignored.

    The MUSIC model order is the number of clutter paths of the cell; the
    ``n_clutter`` strongest peaks are stored.  Cell ``c`` uses the noise
    seed ``config.seed + c``.
    """
    jobs = [(scene, grid.cell_center(i, j), n_clutter, config, config.seed + i * grid.ny + j) for i, j in grid.cells()]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_estimate_cell, jobs))
    else:
        results = [_estimate_cell(j) for j in jobs]
    cells, flags = [], {}
    for c, (doas, note) in enumerate(results):
        if note:
            flags[str(c)] = note
            warnings.warn(f"CLAM cell {c}: {note}", RuntimeWarning, stacklevel=2)
        cells.append(_quantize(doas, precision_deg))
    meta = _meta(scene, "estimated", n_clutter, precision_deg, estimator={
        "profile": config.profile, "snr_db": config.snr_db, "seed": config.seed,
        "grid_step_deg": config.grid_step_deg, "refine": config.refine,
    })
    return ClamMap(grid, tuple(cells), meta, flags)


def lookup(cmap: ClamMap, ue_position_m: Sequence[float]) -> list[tuple[float, float]]:
    i, j = cmap.grid.cell_index(ue_position_m)
    return cmap.cell(i, j)


def map_to_dict(cmap: ClamMap) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "grid": cmap.grid.to_dict(),
        "meta": cmap.meta,
        "flags": cmap.flags,
        "cells": [[[a, z] for a, z in cell] for cell in cmap.cells],
    }


def map_from_dict(d: dict) -> ClamMap:
    if d.get("format") != FORMAT:
        raise ClamError("not a clutter angle map file")
    if int(d.get("version", 0)) != VERSION:
        raise ClamError(f"unsupported map version {d.get('version')}")
    grid = GridSpec.from_dict(d["grid"])
    cells = tuple(tuple((float(a), float(z)) for a, z in cell) for cell in d["cells"])
    if len(cells) != grid.n_cells:
        raise ClamError(f"map has {len(cells)} cells, grid expects {grid.n_cells}")
    for cell in cells:
        for a, z in cell:
            if not (0 <= a <= 180 and 0 <= z <= 180):
                raise ClamError(f"stored DoA ({a}, {z}) outside [0, 180]")
    return ClamMap(grid, cells, dict(d.get("meta", {})), dict(d.get("flags", {})))


def save_map(cmap: ClamMap, path: str | Path) -> None:
    Path(path).write_text(json.dumps(map_to_dict(cmap), indent=1) + "\n")


def load_map(path: str | Path) -> ClamMap:
    return map_from_dict(json.loads(Path(path).read_text()))
