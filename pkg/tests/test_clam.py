import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clamsense.clam import (
    ClamError,
    ClamLookupError,
    ClamMap,
    EstimatorConfig,
    GridSpec,
    build_estimated,
    build_geometric,
    load_map,
    lookup,
    map_from_dict,
    map_to_dict,
    save_map,
)
from clamsense.scene import ArrayGeometry, Scatterer, Scene, Target, clutter_paths, derive_paths, load_bundled_scene

TABLE3_CLUTTER = [(84.3, 65.0), (38.7, 46.0), (111.8, 143.0)]


def _geo_scene(reflectivities=(1.0, 1.0), array=ArrayGeometry(8, 8)):
    pos = [(400.0, 300.0, 20.0), (-300.0, 600.0, 10.0), (200.0, 900.0, 40.0)]
    return Scene(
        (0.0, 1000.0, 30.0), (100.0, 0.0, 0.0), array, bs_yaw_deg=180.0,
        clutter=tuple(Scatterer(p, r) for p, r in zip(pos, reflectivities)),
        targets=(Target((500.0, 350.0, 0.0), bistatic_radial_velocity_mps=4.0),),
    )


def test_grid_validation():
    with pytest.raises(ClamError):
        GridSpec((0, 0), 10.0, 0, 3)
    with pytest.raises(ClamError):
        GridSpec((0, 0), 0.0, 3, 3)


def test_single_scatterer_every_cell_same():
    sc = Scene((0, 0, 10), (50, 50, 0), ArrayGeometry(4, 4), clutter=(Scatterer((100, 40, 0)),))
    cmap = build_geometric(sc, GridSpec((0, 0), 25.0, 4, 3))
    first = cmap.cells[0]
    assert len(first) == 1
    assert all(c == first for c in cmap.cells)


def test_table3_cells_hold_the_three_clutter_doas():
    sc = load_bundled_scene("table3")
    cmap = build_geometric(sc, GridSpec((0, -50), 50.0, 4, 2), n_clutter=3)
    for cell in cmap.cells:
        assert sorted(cell) == sorted(TABLE3_CLUTTER)
    assert sorted(lookup(cmap, (100.0, 0.0))) == sorted(TABLE3_CLUTTER)


def test_truncation_keeps_strongest():
    sc = _geo_scene(reflectivities=(0.2, 3.0, 1.0))
    cmap = build_geometric(sc, GridSpec((0, 0), 50.0, 2, 2), n_clutter=1, precision_deg=None)
    strongest = clutter_paths(derive_paths(sc.with_ue(cmap.grid.cell_center(0, 0))))[1].doa
    assert cmap.cell(0, 0) == [strongest]


def test_geometric_matches_derive_paths_exactly():
    sc = _geo_scene()
    grid = GridSpec((-100, -100), 70.0, 3, 3)
    cmap = build_geometric(sc, grid, precision_deg=None)
    for i, j in grid.cells():
        truth = [p.doa for p in clutter_paths(derive_paths(sc.with_ue(grid.cell_center(i, j))))]
        assert sorted(cmap.cell(i, j)) == sorted(truth)


def test_geometric_quantizes_to_tenth_degree():
    cmap = build_geometric(_geo_scene(), GridSpec((0, 0), 50.0, 1, 1))
    for a, z in cmap.cells[0]:
        assert round(a, 1) == a and round(z, 1) == z
        assert 0 <= a <= 180 and 0 <= z <= 180


def test_geometric_requires_clutter():
    sc = Scene((0, 0, 10), (50, 50, 0), ArrayGeometry(2, 2), targets=(Target((10, 20, 0)),))
    with pytest.raises(ClamError):
        build_geometric(sc, GridSpec((0, 0), 10.0, 1, 1))


@given(st.integers(1, 2))
def test_monotone_truncation(k):
    sc = _geo_scene(reflectivities=(0.5, 2.0, 1.0))
    grid = GridSpec((0, 0), 100.0, 2, 2)
    small = build_geometric(sc, grid, n_clutter=k)
    large = build_geometric(sc, grid, n_clutter=k + 1)
    for a, b in zip(small.cells, large.cells):
        assert len(a) == k and b[:k] == a


def test_lookup_center_edge_and_bounds():
    cells = tuple(((float(c), 90.0),) for c in range(6))
    cmap = ClamMap(GridSpec((0.0, 0.0), 10.0, 3, 2), cells)
    assert lookup(cmap, (15.0, 5.0)) == [(2.0, 90.0)]  # centre of cell (1, 0)
    # the shared edge x = 10 belongs to the upper cell (closed lower edge)
    assert lookup(cmap, (10.0, 5.0)) == [(2.0, 90.0)]
    assert lookup(cmap, (9.999, 10.0)) == [(1.0, 90.0)]
    assert lookup(cmap, (0.0, 0.0)) == [(0.0, 90.0)]
    for bad in [(-0.1, 5.0), (30.0, 5.0), (5.0, 20.0)]:
        with pytest.raises(ClamLookupError):
            lookup(cmap, bad)


def test_round_trip(tmp_path):
    cmap = build_geometric(_geo_scene(), GridSpec((-20, -20), 40.0, 3, 2), n_clutter=2)
    f = tmp_path / "m.json"
    save_map(cmap, f)
    again = load_map(f)
    assert again.cells == cmap.cells and again.grid == cmap.grid
    rng = np.random.default_rng(0)
    for x, y in rng.uniform([-20, -20], [100, 60], size=(30, 2)):
        assert lookup(again, (x, y)) == lookup(cmap, (x, y))
    d = json.loads(f.read_text())
    assert d["format"] == "clamsense-clam" and d["version"] == 1


def test_load_rejects_bad_files():
    good = map_to_dict(ClamMap(GridSpec((0, 0), 1.0, 1, 1), (((10.0, 20.0),),)))
    with pytest.raises(ClamError):
        map_from_dict({**good, "format": "other"})
    with pytest.raises(ClamError):
        map_from_dict({**good, "version": 9})
    with pytest.raises(ClamError):
        map_from_dict({**good, "cells": [[[190.0, 20.0]]]})
    with pytest.raises(ClamError):
        map_from_dict({**good, "cells": []})


def test_estimated_noiseless_matches_geometric():
    sc = _geo_scene()
    grid = GridSpec((0, 0), 100.0, 2, 1)
    cfg = EstimatorConfig(snr_db=None, grid_step_deg=0.5, n_sc=16, n_sym=4)
    est = build_estimated(sc, grid, config=cfg)
    geo = build_geometric(sc, grid)
    for a, b in zip(est.cells, geo.cells):
        assert len(a) == len(b)
        for (ea, ez), (ga, gz) in zip(sorted(a), sorted(b)):
            assert abs(ea - ga) <= 0.1 + 1e-9 and abs(ez - gz) <= 0.1 + 1e-9
    assert est.meta["method"] == "estimated"


def test_estimated_zero_clutter_is_empty():
    sc = Scene((0, 0, 10), (50, 50, 0), ArrayGeometry(4, 4), targets=(Target((10, 20, 0)),))
    est = build_estimated(sc, GridSpec((0, 0), 10.0, 2, 2), config=EstimatorConfig(n_sc=8, n_sym=2))
    assert all(c == () for c in est.cells)


@pytest.mark.slow
def test_estimated_0db_hundred_cells():
    sc = _geo_scene()
    grid = GridSpec((0, 0), 20.0, 10, 10)
    cfg = EstimatorConfig(snr_db=0.0, seed=3, grid_step_deg=1.0, n_sc=32, n_sym=8)
    est = build_estimated(sc, grid, config=cfg)
    geo = build_geometric(sc, grid)
    good = 0
    for a, b in zip(est.cells, geo.cells):
        if len(a) == len(b) and all(abs(x[0] - y[0]) <= 1 and abs(x[1] - y[1]) <= 1
                                    for x, y in zip(sorted(a), sorted(b))):
            good += 1
    assert good >= 95
