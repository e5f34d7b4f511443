"""Complexity accounting, error scoring and the Monte Carlo harness."""
from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__

# --------------------------------------------------------------------------
# complexity (complex multiplications)
# --------------------------------------------------------------------------

ALGORITHMS = (
    "fft",
    "spatial-clam-fft",
    "joint-clam-fft",
    "music",
    "spatial-clam-music",
    "sequential-zf-music",
    "joint-clam-music",
)

ALGORITHM_LABELS = {
    "fft": "FFT",
    "spatial-clam-fft": "Spatial CLAM-aided FFT",
    "joint-clam-fft": "Joint CLAM-aided FFT",
    "music": "MUSIC",
    "spatial-clam-music": "Spatial CLAM-aided MUSIC",
    "sequential-zf-music": "Sequential ZF-MUSIC",
    "joint-clam-music": "Joint CLAM-aided MUSIC",
}


class ComplexityError(ValueError):
    pass


@dataclass(frozen=True)
class ComplexityParams:
    m: int
    n_sc: int = 1024
    n_sym: int = 100
    n_fft: int = 1024
    n_tau: int = 1024
    n_fd: int = 1024
    s: int = 2
    l: int = 3
    r_phi: int = 901
    r_theta: int = 901

    def __post_init__(self):
        for k, v in asdict(self).items():
            if int(v) != v or v < 1:
                raise ComplexityError(f"{k} must be a positive integer, got {v}")


def half_nlogn(n: int) -> int:
    """``(1/2) n log2 n``; exact for powers of two, rounded otherwise."""
    if n & (n - 1) == 0:
        return (n * (n.bit_length() - 1)) // 2 if n > 1 else 0
    return int(round(0.5 * n * math.log2(n)))


@dataclass
class ComplexityReport:
    algorithm: str
    total: int
    terms: dict[str, int]
    params: ComplexityParams


def complexity(algorithm: str, p: ComplexityParams) -> ComplexityReport:
    """Closed-form multiplication count of one algorithm, split into terms."""
    m, ns, nsym = p.m, p.n_sc, p.n_sym
    P = ns * nsym
    rr = p.r_phi * p.r_theta
    L, S = p.l, p.s
    fft_core = {
        "spatial_fft": P * half_nlogn(p.n_fft),
        "bin_energy": P * p.n_fft,
    }
    dd = {
        "dd_delay_ifft": m * nsym * half_nlogn(p.n_tau),
        "dd_doppler_fft": m * p.n_tau * half_nlogn(p.n_fd),
        "dd_periodogram": m * p.n_tau * p.n_fd,
    }
    k = L + S - 1
    if algorithm == "fft":
        terms = dict(fft_core)
    elif algorithm == "spatial-clam-fft":
        terms = {**fft_core, "projection": P * m * m}
    elif algorithm == "joint-clam-fft":
        per = {"projector": k * (m + k) ** 2, "projection": P * m * m, **dd,
               "reestimate_fft": half_nlogn(p.n_fft) + p.n_fft}
        terms = {key: S * v for key, v in per.items()}
    elif algorithm == "music":
        terms = {"covariance": P * m * m, "eig": m ** 3, "music_scan": rr * (m + 1) * (m - (L + S))}
    elif algorithm == "spatial-clam-music":
        terms = {"projection": P * m * m, "covariance": P * m * m, "eig": m ** 3,
                 "music_scan": rr * (m + 1) * (m - S)}
    elif algorithm == "sequential-zf-music":
        terms = {
            "rounds": m * m * (L + S) * (2 * P + m + rr),
            "projector": sum(2 * kk * (m + kk) ** 2 for kk in range(1, L + S + 1)),
        }
    elif algorithm == "joint-clam-music":
        per = {"projector": k * (k + m) ** 2, "projection": P * m * m, **dd,
               "reestimate_outer": m * m, "eig": m ** 3, "reestimate_scan": rr * (m * m - 1)}
        terms = {key: S * v for key, v in per.items()}
    else:
        raise ComplexityError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    return ComplexityReport(algorithm, int(sum(terms.values())), terms, p)


FIG6_SIZES = (4, 8, 16, 32)


def fig6_table(sizes: Sequence[int] = FIG6_SIZES, base: ComplexityParams | None = None) -> list[dict]:
    """Rows ``{"algorithm", "M=16", ...}`` for square ``n x n`` arrays."""
    base = base or ComplexityParams(m=16)
    rows = []
    for alg in ALGORITHMS:
        row = {"algorithm": ALGORITHM_LABELS[alg]}
        for n in sizes:
            row[f"M={n * n}"] = complexity(alg, replace(base, m=n * n)).total
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------

def associate(estimates: Sequence[tuple[float, float]], truths: Sequence[tuple[float, float]]) -> list[int | None]:
    """Greedy nearest-neighbour matching in (azimuth, zenith).

    Pairs are taken in order of increasing angular distance; each estimate
    and each truth is used at most once.  Returns, per truth, the index of
    its estimate or ``None``.
    """
    pairs = []
    for i, e in enumerate(estimates):
        for j, t in enumerate(truths):
            pairs.append((math.hypot(e[0] - t[0], e[1] - t[1]), j, i))
    pairs.sort()
    used_e, out = set(), [None] * len(truths)
    for _, j, i in pairs:
        if out[j] is None and i not in used_e:
            out[j] = i
            used_e.add(i)
    return out


@dataclass
class TargetError:
    label: str
    azimuth_err_deg: float
    zenith_err_deg: float
    delay_err_s: float = math.nan
    doppler_err_hz: float = math.nan
    matched: bool = True
    est_azimuth_deg: float = math.nan
    est_zenith_deg: float = math.nan


@dataclass
class TrialResult:
    trial: int
    seed: int
    snr_db: float | None
    method: str
    errors: list[TargetError] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    failed: bool = False
    message: str = ""

    def mean_azimuth_error(self) -> float:
        return float(np.mean([e.azimuth_err_deg for e in self.errors])) if self.errors else math.nan


def score(method: str, trial: int, seed: int, snr_db, output, truths, miss_penalty_deg: float = 90.0) -> TrialResult:
    """Compare a pipeline output with the target truths
    ``[(label, az, zen, delay_s, doppler_hz), ...]``."""
    est = list(output.doas)
    match = associate(est, [(t[1], t[2]) for t in truths])
    errs = []
    for (label, az, zen, tau, fd), k in zip(truths, match):
        if k is None:
            errs.append(TargetError(label, miss_penalty_deg, miss_penalty_deg, matched=False))
            continue
        e = TargetError(label, abs(est[k][0] - az), abs(est[k][1] - zen),
                        est_azimuth_deg=est[k][0], est_zenith_deg=est[k][1])
        if output.delays_s is not None and not math.isnan(output.delays_s[k]):
            e.delay_err_s = abs(output.delays_s[k] - tau)
            e.doppler_err_hz = abs(output.dopplers_hz[k] - fd)
        errs.append(e)
    return TrialResult(trial, seed, snr_db, method, errs, list(output.flags))


def rmse(trials: Sequence[TrialResult], quantity: str = "azimuth") -> dict:
    """RMSE per SNR, pooled over targets and trials.  Failed trials are
    excluded; missing targets carry the miss penalty."""
    if not trials:
        raise ValueError("empty trial set")
    attr = {"azimuth": "azimuth_err_deg", "zenith": "zenith_err_deg",
            "delay": "delay_err_s", "doppler": "doppler_err_hz"}[quantity]
    by_snr: dict = {}
    for t in trials:
        if t.failed:
            continue
        for e in t.errors:
            v = getattr(e, attr)
            if not math.isnan(v):
                by_snr.setdefault(t.snr_db, []).append(v)
    return {k: math.sqrt(math.fsum(x * x for x in v) / len(v)) for k, v in by_snr.items()}


def median_trial_error(trials: Sequence[TrialResult]) -> float:
    """Median over trials of the per-trial mean azimuth error."""
    vals = [t.mean_azimuth_error() for t in trials if not t.failed]
    return float(np.median(vals)) if vals else math.nan


# --------------------------------------------------------------------------
# Monte Carlo harness
# --------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    scene: str
    methods: list[str]
    snr_db: list[float | None]
    trials: int
    seed: int = 0
    profile: str = "desk"
    array: tuple[int, int] | None = None
    n_sc: int | None = None
    n_sym: int | None = None
    clam: str | None = None  # map file; default: exact clutter DoAs of the scene
    n_clutter: int | None = None
    clutter_doppler_known: bool = False
    miss_penalty_deg: float = 90.0
    workers: int = 1
    pipeline: dict = field(default_factory=dict)
    joint: dict = field(default_factory=dict)
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        d = dict(d)
        d["snr_db"] = [None if s in (None, "off") else float(s) for s in d["snr_db"]]
        if d.get("array") is not None:
            d["array"] = tuple(d["array"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = ["off" if s is None else s for s in self.snr_db]
        return d

    def validate(self) -> None:
        from .pipelines import METHODS

        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db:
            raise ValueError("snr_db list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {sorted(METHODS)}")


def _setup(spec: ExperimentSpec):
    from .clam import load_map, lookup
    from .joint import JointConfig
    from .pipelines import PipelineConfig
    from .scene import ArrayGeometry, clutter_paths, derive_paths, load_scene, target_paths
    from .synth import PROFILES, OfdmParams, ReceivedTensor, noiseless_tensor

    scene = load_scene(spec.scene)
    array_fn, ofdm_fn = PROFILES[spec.profile]
    geom = array_fn(scene.array.carrier_hz)
    if spec.array is not None:
        geom = ArrayGeometry(spec.array[0], spec.array[1], geom.spacing_over_lambda, geom.carrier_hz)
    base = ofdm_fn()
    ofdm = OfdmParams(spec.n_sc or base.n_sc, spec.n_sym or base.n_sym, base.delta_f_hz, base.t_cp_s)
    paths = derive_paths(scene)
    ofdm.check_delays(paths)
    cl, tg = clutter_paths(paths), target_paths(paths)
    if spec.clam:
        clam_doas = lookup(load_map(spec.clam), scene.ue_position_m)
    else:
        clam_doas = [p.doa for p in cl]
    if spec.n_clutter is not None:
        clam_doas = clam_doas[: spec.n_clutter]
    clean = ReceivedTensor(noiseless_tensor(paths, ofdm, geom), ofdm, geom)
    truths = [(p.label, p.azimuth_deg, p.zenith_deg, p.delay_s, p.doppler_hz) for p in tg]
    jkw = dict(spec.joint)
    if spec.clutter_doppler_known and jkw.get("clutter_dopplers_hz") is None:
        jkw["clutter_dopplers_hz"] = tuple(p.doppler_hz for p in cl)
    if jkw.get("clutter_dopplers_hz") is not None:
        jkw["clutter_dopplers_hz"] = tuple(jkw["clutter_dopplers_hz"])
    jcfg = JointConfig(**jkw)
    pkw = dict(spec.pipeline)
    if "subarray" in pkw and pkw["subarray"] is not None:
        pkw["subarray"] = tuple(pkw["subarray"])
    pcfg = PipelineConfig(joint=jcfg, **pkw)
    return clean, clam_doas, len(tg), len(cl), truths, pcfg


def _run_trial(args) -> list[TrialResult]:
    spec, trial, ctx = args
    from .pipelines import Capture, run_method
    from .synth import add_noise

    clean, clam_doas, n_t, n_c, truths, pcfg = ctx
    seed = spec.seed + trial
    out = []
    for snr in spec.snr_db:
        tensor = add_noise(clean, snr, seed)
        cap = Capture(tensor, clam_doas, n_t, n_c, pcfg)
        for method in spec.methods:
            try:
                res = run_method(method, cap)
                out.append(score(method, trial, seed, snr, res, truths, spec.miss_penalty_deg))
            except Exception as exc:  # recorded, harness continues
                msg = f"{type(exc).__name__}: {exc}"
                out.append(TrialResult(trial, seed, snr, method, failed=True, message=msg,
                                       flags=[traceback.format_exc(limit=1).strip().splitlines()[-1]]))
    return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    trials: list[TrialResult]

    def select(self, method: str, snr_db) -> list[TrialResult]:
        return [t for t in self.trials if t.method == method and t.snr_db == snr_db]

    def summary(self) -> list[dict]:
        rows = []
        for snr in self.spec.snr_db:
            for method in self.spec.methods:
                ts = self.select(method, snr)
                ok = [t for t in ts if not t.failed]
                errs = [e for t in ok for e in t.errors]
                r_az = rmse(ok, "azimuth").get(snr, math.nan) if ok else math.nan
                r_zen = rmse(ok, "zenith").get(snr, math.nan) if ok else math.nan
                r_tau = rmse(ok, "delay").get(snr, math.nan) if ok else math.nan
                r_fd = rmse(ok, "doppler").get(snr, math.nan) if ok else math.nan
                rows.append({
                    "snr_db": "off" if snr is None else snr,
                    "method": method,
                    "n_trials": len(ts),
                    "n_failed": len(ts) - len(ok),
                    "rmse_azimuth_deg": r_az,
                    "rmse_zenith_deg": r_zen,
                    "median_mean_azimuth_err_deg": median_trial_error(ok),
                    "miss_rate": (sum(not e.matched for e in errs) / len(errs)) if errs else math.nan,
                    "rmse_delay_us": r_tau * 1e6,
                    "rmse_doppler_hz": r_fd,
                })
        return rows


def monte_carlo(spec: ExperimentSpec) -> ExperimentResult:
    """Run every (trial, SNR, method) combination.

    Trial ``t`` uses the noise seed ``spec.seed + t`` for every SNR and
    method, so the methods see identical noise realisations.
    """
    spec.validate()
    ctx = _setup(spec)
    jobs = [(spec, t, ctx) for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as ex:
            chunks = list(ex.map(_run_trial, jobs))
    else:
        chunks = [_run_trial(j) for j in jobs]
    trials = [r for c in chunks for r in c]
    trials.sort(key=lambda r: (r.trial, _snr_key(r.snr_db), spec.methods.index(r.method)))
    return ExperimentResult(spec, trials)


def _snr_key(s):
    return math.inf if s is None else s


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def header_lines(config: dict, kind: str) -> list[str]:
    """Reproducibility header; the ``created:`` line is the only
    run-dependent content."""
    return [
        f"clamsense {__version__} {kind}",
        "config: " + json.dumps(config, sort_keys=True, separators=(",", ":")),
        "created: " + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    ]


def _num(x) -> str:
    if x is None:
        return "off"
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


TRIAL_FIELDS = ["trial", "seed", "snr_db", "method", "target", "azimuth_err_deg", "zenith_err_deg",
                "delay_err_us", "doppler_err_hz", "est_azimuth_deg", "est_zenith_deg", "matched", "failed",
                "flags", "message"]


def write_trials_csv(result: ExperimentResult, path: str | Path) -> None:
    cfg = {**result.spec.to_dict(), "miss_penalty_deg": result.spec.miss_penalty_deg}
    with open(path, "w", newline="") as fh:
        for line in header_lines(cfg, "trials"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIAL_FIELDS)
        for t in result.trials:
            rows = t.errors or [None]
            for e in rows:
                w.writerow([
                    t.trial, t.seed, _num(t.snr_db), t.method,
                    e.label if e else "",
                    _num(e.azimuth_err_deg) if e else "nan",
                    _num(e.zenith_err_deg) if e else "nan",
                    _num(e.delay_err_s * 1e6) if e else "nan",
                    _num(e.doppler_err_hz) if e else "nan",
                    _num(e.est_azimuth_deg) if e else "nan",
                    _num(e.est_zenith_deg) if e else "nan",
                    int(e.matched) if e else 0,
                    int(t.failed), "|".join(t.flags), t.message,
                ])


SUMMARY_FIELDS = ["snr_db", "method", "n_trials", "n_failed", "rmse_azimuth_deg", "rmse_zenith_deg",
                  "median_mean_azimuth_err_deg", "miss_rate", "rmse_delay_us", "rmse_doppler_hz"]


def write_summary_csv(result: ExperimentResult, path: str | Path) -> None:
    cfg = {**result.spec.to_dict()}
    with open(path, "w", newline="") as fh:
        for line in header_lines(cfg, "summary"):
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for row in result.summary():
            w.writerow([_num(row[k]) for k in SUMMARY_FIELDS])


def strip_volatile(text: str) -> str:
    """Drop the ``# created:`` header line (for determinism comparisons)."""
    return "".join(line for line in io.StringIO(text) if not line.startswith("# created:"))


def read_csv_body(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
