import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clamsense._counters import MulCounter
from clamsense.estimate import covariance, music_spectrum
from clamsense.metrics import (
    ALGORITHMS,
    ComplexityError,
    ComplexityParams,
    ExperimentSpec,
    TargetError,
    TrialResult,
    associate,
    complexity,
    fig6_table,
    half_nlogn,
    monte_carlo,
    read_csv_body,
    rmse,
    score,
    strip_volatile,
    write_summary_csv,
    write_trials_csv,
)
from clamsense.pipelines import MethodOutput
from clamsense.scene import ArrayGeometry
from clamsense.suppress import zf_build

P = 100 * 1024
RR = 901 * 901


# ---------------------------------------------------------------- complexity

def test_fft_spot_value():
    assert complexity("fft", ComplexityParams(m=16)).total == 629_145_600


def test_music_row_by_hand():
    m = 16
    want = P * m * m + m ** 3 + RR * (m + 1) * (m - 5)
    assert want == 178_025_283
    assert complexity("music", ComplexityParams(m=m)).total == want


def test_spatial_adds_only_the_projection():
    for m in (16, 64, 256, 1024):
        p = ComplexityParams(m=m)
        extra = complexity("spatial-clam-music", p).total - complexity("music", p).total
        # projection term, plus a larger scan because only S sources are removed
        assert extra == P * m * m + RR * (m + 1) * 3
        assert complexity("spatial-clam-fft", p).total - complexity("fft", p).total == P * m * m


def test_joint_music_row_by_hand():
    m, s, k = 64, 2, 4
    dd = m * 100 * 5120 + m * 1024 * 5120 + m * 1024 * 1024
    want = s * (k * (m + k) ** 2 + P * m * m + dd + m * m + m ** 3 + RR * (m * m - 1))
    assert complexity("joint-clam-music", ComplexityParams(m=m)).total == want


def test_sequential_row_by_hand():
    m = 16
    want = m * m * 5 * (2 * P + m + RR) + sum(2 * k * (m + k) ** 2 for k in range(1, 6))
    assert complexity("sequential-zf-music", ComplexityParams(m=m)).total == want


def test_half_nlogn():
    assert half_nlogn(1024) == 5120
    assert half_nlogn(1) == 0
    assert half_nlogn(2) == 1
    assert half_nlogn(6) == round(3 * math.log2(6))


def test_fig6_table_shape_and_ordering():
    rows = fig6_table()
    assert len(rows) == 7 and all(len(r) == 5 for r in rows)
    by = {r["algorithm"]: r for r in rows}
    music_family = ["MUSIC", "Spatial CLAM-aided MUSIC", "Sequential ZF-MUSIC", "Joint CLAM-aided MUSIC"]
    at_1024 = {a: by[a]["M=1024"] for a in music_family}
    assert max(at_1024, key=at_1024.get) == "Sequential ZF-MUSIC"
    for r in rows:
        vals = [r[f"M={n * n}"] for n in (4, 8, 16, 32)]
        assert vals == sorted(vals)
        assert all(isinstance(v, int) for v in vals)


def test_complexity_errors():
    with pytest.raises(ComplexityError):
        complexity("esprit", ComplexityParams(m=16))
    with pytest.raises(ComplexityError):
        ComplexityParams(m=0)
    with pytest.raises(ComplexityError):
        ComplexityParams(m=16, s=1.5)


@given(st.integers(2, 40), st.integers(1, 3), st.integers(0, 3))
def test_counts_are_positive_integers(m, s, l):
    if l + s >= m:
        return
    p = ComplexityParams(m=m, n_sc=8, n_sym=4, n_fft=16, n_tau=16, n_fd=8, s=s, l=max(l, 1), r_phi=11, r_theta=11)
    for alg in ALGORITHMS:
        rep = complexity(alg, p)
        assert rep.total == sum(rep.terms.values()) and rep.total > 0


def test_instrumented_counters_match_closed_form():
    geom = ArrayGeometry(4, 4)
    m = geom.n_elements
    rng = np.random.default_rng(0)
    y = rng.standard_normal((m, 64)) + 1j * rng.standard_normal((m, 64))
    with MulCounter() as c:
        r = covariance(y)
        zf_build(geom, [(30.0, 60.0), (100.0, 90.0), (140.0, 120.0)])
        music_spectrum(r, 5, geom, 10.0)
    assert c.terms["covariance"] == 64 * m * m
    assert c.terms["projector"] == 3 * (m + 3) ** 2
    assert c.terms["music_scan"] == 19 * 19 * (m + 1) * (m - 5)
    p = ComplexityParams(m=m, n_sc=64, n_sym=1, r_phi=19, r_theta=19)
    assert complexity("music", p).terms["covariance"] == c.terms["covariance"]
    assert complexity("music", p).terms["music_scan"] == c.terms["music_scan"]


# ---------------------------------------------------------------- scoring

def _trial(errs, snr=0.0, trial=0):
    return TrialResult(trial, trial, snr, "m", [TargetError(f"T{i}", e, 0.0) for i, e in enumerate(errs)])


def test_rmse_examples():
    assert rmse([_trial([0.0, 0.0]), _trial([0.0])])[0.0] == 0.0
    assert rmse([_trial([2.0])])[0.0] == pytest.approx(2.0)
    assert rmse([_trial([3.0]), _trial([4.0], trial=1)])[0.0] == pytest.approx(3.5355339, abs=1e-6)


def test_rmse_per_snr_and_failed():
    ts = [_trial([1.0], snr=-10.0), _trial([3.0], snr=0.0), TrialResult(2, 2, 0.0, "m", failed=True)]
    assert rmse(ts) == {-10.0: 1.0, 0.0: 3.0}
    with pytest.raises(ValueError):
        rmse([])


@given(st.lists(st.lists(st.floats(0, 90), min_size=1, max_size=4), min_size=1, max_size=8), st.randoms())
def test_rmse_permutation_invariant(errs, rnd):
    ts = [_trial(e, trial=i) for i, e in enumerate(errs)]
    base = rmse(ts)[0.0]
    rnd.shuffle(ts)
    for t in ts:
        rnd.shuffle(t.errors)
    assert rmse(ts)[0.0] == pytest.approx(base, rel=1e-12)


def test_associate_greedy():
    truths = [(10.0, 10.0), (20.0, 20.0)]
    assert associate([(19.0, 20.0), (10.5, 10.0)], truths) == [1, 0]
    assert associate([(15.0, 15.0)], truths) == [0, None]
    assert associate([], truths) == [None, None]


@given(st.lists(st.tuples(st.floats(0, 180), st.floats(0, 180)), max_size=6),
       st.lists(st.tuples(st.floats(0, 180), st.floats(0, 180)), max_size=6))
def test_associate_injective(est, truths):
    m = associate(est, truths)
    used = [k for k in m if k is not None]
    assert len(used) == len(set(used))
    assert len(used) == min(len(est), len(truths))


def test_score_penalty_and_errors_nonnegative():
    out = MethodOutput("x", [(50.0, 120.0)], [4.6e-6], [3700.0])
    truths = [("T1", 52.4, 126.0, 4.5e-6, 3733.3), ("T2", 84.3, 80.0, 0.93e-6, 933.3)]
    res = score("x", 0, 0, 0.0, out, truths)
    e1, e2 = res.errors
    assert e1.azimuth_err_deg == pytest.approx(2.4) and e1.zenith_err_deg == pytest.approx(6.0)
    assert e1.delay_err_s == pytest.approx(0.1e-6) and e1.doppler_err_hz == pytest.approx(33.3)
    assert not e2.matched and e2.azimuth_err_deg == 90.0
    assert score("x", 0, 0, 0.0, out, truths, miss_penalty_deg=45.0).errors[1].azimuth_err_deg == 45.0


# ---------------------------------------------------------------- Monte Carlo

def _small_spec(**kw):
    d = dict(scene="bundled:table3_sparse", methods=["spatial-music"], snr_db=[None], trials=1, seed=3,
             n_sc=32, n_sym=8, pipeline={"grid_step_deg": 0.5})
    d.update(kw)
    return ExperimentSpec.from_dict(d)


def test_noiseless_spatial_music_is_exact():
    res = monte_carlo(_small_spec())
    assert len(res.trials) == 1 and not res.trials[0].failed
    assert rmse(res.trials)[None] <= 0.5
    assert rmse(res.trials, "zenith")[None] <= 0.5


def test_monte_carlo_common_seeds_and_order():
    spec = _small_spec(methods=["music", "spatial-music"], snr_db=[0.0, 10.0], trials=2)
    res = monte_carlo(spec)
    assert [(t.trial, t.snr_db, t.method) for t in res.trials] == [
        (0, 0.0, "music"), (0, 0.0, "spatial-music"), (0, 10.0, "music"), (0, 10.0, "spatial-music"),
        (1, 0.0, "music"), (1, 0.0, "spatial-music"), (1, 10.0, "music"), (1, 10.0, "spatial-music")]
    assert [t.seed for t in res.trials] == [3] * 4 + [4] * 4


def test_failed_trial_is_recorded(monkeypatch):
    from clamsense import pipelines

    def boom(capture):
        raise RuntimeError("kaput")

    monkeypatch.setitem(pipelines.METHODS, "music", boom)
    res = monte_carlo(_small_spec(methods=["music", "spatial-music"]))
    bad = res.select("music", None)[0]
    assert bad.failed and "kaput" in bad.message
    assert not res.select("spatial-music", None)[0].failed


def test_spec_validation():
    with pytest.raises(ValueError):
        monte_carlo(_small_spec(methods=["nope"]))
    with pytest.raises(ValueError):
        ExperimentSpec.from_dict({"scene": "x", "methods": [], "snr_db": [], "trials": 1, "colour": 1})


def test_csv_determinism_and_headers(tmp_path):
    texts = []
    for k in range(2):
        res = monte_carlo(_small_spec(methods=["music", "spatial-music"], snr_db=[0.0], trials=2))
        write_trials_csv(res, tmp_path / f"t{k}.csv")
        write_summary_csv(res, tmp_path / f"s{k}.csv")
        texts.append(((tmp_path / f"t{k}.csv").read_text(), (tmp_path / f"s{k}.csv").read_text()))
    assert strip_volatile(texts[0][0]) == strip_volatile(texts[1][0])
    assert strip_volatile(texts[0][1]) == strip_volatile(texts[1][1])
    head = texts[0][0].splitlines()[:3]
    assert head[0].startswith("# clamsense ") and '"miss_penalty_deg":90.0' in head[1]
    assert head[2].startswith("# created:")
    rows = read_csv_body(tmp_path / "s0.csv")
    assert {r["method"] for r in rows} == {"music", "spatial-music"}
    assert all(r["n_trials"] == "2" for r in rows)
