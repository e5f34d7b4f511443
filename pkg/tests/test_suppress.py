import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clamsense.scene import ArrayGeometry, PathKind, steering_matrix, steering_vector
from clamsense.suppress import (
    FilterError,
    MtiFilter,
    ProjectorError,
    drop_boundary_symbols,
    mti_apply,
    mti_cutoff,
    mti_demo,
    mti_design,
    mti_response,
    zf_apply,
    zf_apply_tensor,
    zf_build,
)
from clamsense.synth import OfdmParams, ReceivedTensor, snapshot_matrix, synthesize
from conftest import make_path

TABLE3_CLUTTER = [(84.3, 65.0), (38.7, 46.0), (111.8, 143.0)]


# ---------------------------------------------------------------- MTI

@pytest.mark.parametrize("order,coeffs", [(1, [1, -1]), (2, [1, -2, 1]), (3, [1, -3, 3, -1])])
def test_mti_design_binomial(order, coeffs):
    f = mti_design(order)
    assert list(f.coefficients) == coeffs
    assert sum(f.coefficients) == 0
    assert f.order == order


def test_mti_design_errors():
    with pytest.raises(FilterError):
        mti_design(0)
    with pytest.raises(FilterError):
        mti_design(2, profile="chebyshev")
    with pytest.raises(FilterError):
        MtiFilter((1.0, -0.5))


def test_mti_response_examples():
    f = mti_design(1, interval_s=2e-3)
    assert abs(mti_response(f, 0.0)) == 0.0
    assert abs(mti_response(f, 1 / (2 * 2e-3))) == pytest.approx(2.0, abs=1e-12)


@given(st.integers(1, 6), st.floats(-5e3, 5e3), st.floats(1e-5, 1e-2))
def test_mti_response_periodic(order, f, t):
    filt = mti_design(order, interval_s=t)
    assert mti_response(filt, f) == pytest.approx(mti_response(filt, f + 1 / t), abs=1e-12 * 2 ** order)


@pytest.mark.parametrize("order", [1, 2, 3, 4, 5])
def test_mti_low_frequency_slope(order):
    t = 42.708e-6
    filt = mti_design(order, interval_s=t)
    f = np.array([1e-4, 1e-2]) / t
    mag = np.abs(mti_response(filt, f))
    slope = (math.log10(mag[1]) - math.log10(mag[0])) / 2.0
    assert slope == pytest.approx(order, rel=0.02)


def test_mti_cutoff_first_order():
    # |H| = 2 |sin(pi f T)|; half power at sin = 1/sqrt(2) -> f T = 1/4
    assert mti_cutoff(mti_design(1, interval_s=1e-3)) == pytest.approx(250.0, rel=1e-9)


def test_mti_cutoff_rises_with_order():
    cut = [mti_cutoff(mti_design(n)) for n in (1, 2, 3, 4)]
    assert all(a < b for a, b in zip(cut, cut[1:]))


def test_mti_apply_static_path_nulled():
    ofdm = OfdmParams(8, 6)
    t = synthesize([make_path(70, 100, 1.0, 0.0, 1 + 1j)], ofdm, ArrayGeometry(2, 2))
    out = mti_apply(t, mti_design(1)).data
    ref = np.abs(t.data).max()
    assert np.abs(out[:, :, 1:]).max() <= 1e-10 * ref
    np.testing.assert_allclose(out[:, :, 0], t.data[:, :, 0])
    assert out.shape == t.data.shape


def test_mti_apply_doppler_gain():
    ofdm = OfdmParams(8, 10)
    fd = 2100.0
    t = synthesize([make_path(70, 100, 1.0, fd, 0.7)], ofdm, ArrayGeometry(2, 2))
    out = mti_apply(t, mti_design(1)).data
    gain = abs(1 - np.exp(-2j * np.pi * fd * ofdm.t_s_s))
    np.testing.assert_allclose(np.abs(out[:, :, 1:]), gain * np.abs(t.data[:, :, 1:]), rtol=1e-9)


def test_mti_apply_all_ones_pattern():
    t = ReceivedTensor(np.ones((4, 2, 3), complex), OfdmParams(2, 3), ArrayGeometry(2, 2))
    out = mti_apply(t, mti_design(1)).data
    np.testing.assert_array_equal(out, np.broadcast_to([1, 0, 0], (4, 2, 3)))


def test_mti_apply_order_too_large():
    t = ReceivedTensor(np.ones((1, 2, 3), complex), OfdmParams(2, 3), ArrayGeometry(1, 1))
    with pytest.raises(FilterError):
        mti_apply(t, mti_design(3))


@given(st.integers(1, 4), st.integers(0, 2 ** 31))
def test_mti_apply_matches_convolution(order, seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((2, 3, 7)) + 1j * rng.standard_normal((2, 3, 7))
    t = ReceivedTensor(data, OfdmParams(3, 7), ArrayGeometry(2, 1))
    filt = mti_design(order)
    out = mti_apply(t, filt).data
    for m in range(2):
        for n in range(3):
            ref = np.convolve(data[m, n], filt.coefficients)[:7]
            np.testing.assert_allclose(out[m, n], ref, atol=1e-12)


def test_drop_boundary_symbols():
    t = ReceivedTensor(np.ones((1, 2, 5), complex), OfdmParams(2, 5), ArrayGeometry(1, 1))
    out = drop_boundary_symbols(mti_apply(t, mti_design(2)))
    assert out.data.shape == (1, 2, 3)
    assert out.params.n_sym == 3
    assert np.all(out.data == 0)


def test_mti_demo_cancels_static_pulses_after_first_period():
    d = mti_demo(period_s=10e-3, doppler_hz=20.0, fs_hz=2000.0, order=1)
    t, s, out = d["time"]["t_s"], d["time"]["s"], d["time"]["y_out_abs"]
    steady = t >= 10e-3
    # static part cancels; the Doppler-shifted copy keeps |1 - e^{-j2pi fD T}|
    gain = abs(1 - np.exp(-2j * np.pi * 20.0 * 10e-3))
    np.testing.assert_allclose(out[steady], gain * s[steady], atol=1e-12)
    spec = d["spectrum"]
    assert spec["h_abs"][np.argmin(np.abs(spec["f_hz"]))] < 1e-12


# ---------------------------------------------------------------- ZF

def test_zf_empty_list_is_scaled_identity():
    p = zf_build(ArrayGeometry(3, 3), [])
    np.testing.assert_allclose(p.w_bar, np.eye(9) / 3.0, atol=1e-15)
    assert p.fro_norm == pytest.approx(3.0)


@given(st.floats(0, 180), st.floats(0, 180))
def test_zf_single_doa_nulled(az, zen):
    geom = ArrayGeometry(4, 4)
    p = zf_build(geom, [(az, zen)])
    assert np.linalg.norm(p.w_bar @ steering_vector(geom, az, zen)) <= 1e-8


def test_zf_table3_trace_and_invariants():
    geom = ArrayGeometry(32, 32)
    p = zf_build(geom, TABLE3_CLUTTER)
    w = p.w
    assert np.trace(w).real == pytest.approx(1021.0, abs=1e-6)
    fro = np.linalg.norm(w)
    assert np.linalg.norm(w - w.conj().T) <= 1e-10 * fro
    assert np.linalg.norm(w @ w - w) <= 1e-10 * fro
    c = steering_matrix(geom, TABLE3_CLUTTER)
    assert np.linalg.norm(p.w_bar @ c, axis=0).max() <= 1e-8 * math.sqrt(1024)
    assert p.fro_norm == pytest.approx(math.sqrt(1021), rel=1e-12)


def test_zf_duplicate_doa_rejected():
    with pytest.raises(ProjectorError) as exc:
        zf_build(ArrayGeometry(4, 4), [(30.0, 60.0), (80.0, 100.0), (30.0, 60.0)])
    assert exc.value.pair == ((30.0, 60.0), (30.0, 60.0))


def test_zf_too_many_nulls():
    with pytest.raises(ProjectorError):
        zf_build(ArrayGeometry(2, 1), [(10, 90), (120, 90)])


def test_zf_apply_scaled_identity():
    y = np.random.default_rng(2).standard_normal((4, 5)) + 0j
    np.testing.assert_allclose(zf_apply(zf_build(ArrayGeometry(2, 2), []), y), y / 2.0, atol=1e-15)


def test_zf_apply_dimension_mismatch():
    with pytest.raises(ProjectorError):
        zf_apply(zf_build(ArrayGeometry(2, 2), []), np.zeros((3, 5)))


def _clutter_target(geom, ofdm):
    clutter = [make_path(a, z, 1.0 + i, 100.0 * i, 1.0 + 0.5 * i, PathKind.CLUTTER)
               for i, (a, z) in enumerate(TABLE3_CLUTTER)]
    targets = [make_path(52.4, 126.0, 4.5, 3733.3, 0.8j), make_path(66.8, 92.0, 7.34, 466.7, 0.5)]
    return clutter, targets


def test_zf_apply_nulled_single_path():
    geom, ofdm = ArrayGeometry(8, 8), OfdmParams(8, 4)
    y = synthesize([make_path(*TABLE3_CLUTTER[0], 2.0, 50.0)], ofdm, geom).snapshots()
    p = zf_build(geom, TABLE3_CLUTTER)
    assert np.linalg.norm(zf_apply(p, y)) <= 1e-8 * np.linalg.norm(y)


def test_zf_apply_clutter_plus_target_identity():
    geom, ofdm = ArrayGeometry(8, 8), OfdmParams(16, 8)
    clutter, targets = _clutter_target(geom, ofdm)
    p = zf_build(geom, TABLE3_CLUTTER)
    y = synthesize(clutter + targets, ofdm, geom).snapshots()
    y_c = synthesize(clutter, ofdm, geom).snapshots()
    y_s = synthesize(targets, ofdm, geom).snapshots()
    out = zf_apply(p, y)
    # projected mixture equals projected target part
    expected = p.w_bar @ y_s
    assert np.linalg.norm(out - expected) <= 1e-10 * np.linalg.norm(expected)
    assert np.linalg.norm(p.w_bar @ y_c) ** 2 <= 1e-12 * np.linalg.norm(y_c) ** 2
    assert np.linalg.norm(out) ** 2 >= 0.99 * np.linalg.norm(expected) ** 2


@given(st.integers(0, 2 ** 31))
def test_suppressors_are_linear(seed):
    rng = np.random.default_rng(seed)
    geom, ofdm = ArrayGeometry(2, 2), OfdmParams(3, 5)
    a = rng.standard_normal((4, 3, 5)) + 1j * rng.standard_normal((4, 3, 5))
    b = rng.standard_normal((4, 3, 5)) + 1j * rng.standard_normal((4, 3, 5))
    ta, tb, tab = (ReceivedTensor(x, ofdm, geom) for x in (a, b, a + b))
    filt = mti_design(2)
    np.testing.assert_allclose(mti_apply(tab, filt).data, mti_apply(ta, filt).data + mti_apply(tb, filt).data,
                               atol=1e-12)
    p = zf_build(geom, [(40.0, 70.0)])
    np.testing.assert_allclose(zf_apply_tensor(p, tab).data,
                               zf_apply_tensor(p, ta).data + zf_apply_tensor(p, tb).data, atol=1e-12)


def test_zf_apply_tensor_matches_matrix():
    geom, ofdm = ArrayGeometry(2, 3), OfdmParams(4, 3)
    t = synthesize([make_path(20, 50, 1.0, 300.0), make_path(100, 80, 2.0, -200.0)], ofdm, geom)
    p = zf_build(geom, [(20, 50)])
    np.testing.assert_allclose(snapshot_matrix(zf_apply_tensor(p, t)), zf_apply(p, t.snapshots()), atol=1e-14)
