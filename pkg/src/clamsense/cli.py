"""``clamsense`` command-line entry point.

Every file written carries a ``#`` header with the artifact version, the
fully resolved configuration as JSON and a ``created:`` timestamp (the
only run-dependent line).  Output goes to ``--out``, else to
``$CLAMSENSE_OUTPUT_DIR``, else to ``./out``.

Exit codes: 0 success, 2 configuration or precondition error, 1 any other
failure.  Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__

OUTPUT_ENV = "CLAMSENSE_OUTPUT_DIR"
METHOD_NAMES = ("music", "fft", "spatial-music", "spatial-fft", "joint-music", "joint-fft", "seq-zf-music", "ss-music")


class ConfigError(Exception):
    """Invalid command-line configuration; ``precondition`` names the rule."""

    def __init__(self, message: str, precondition: str = ""):
        super().__init__(message)
        self.precondition = precondition


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUTPUT_ENV) or "out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _header(config: dict, kind: str) -> list[str]:
    from .metrics import header_lines

    return header_lines(config, kind)


def _write_csv(path: Path, header: list[str], columns: list[str], rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return str(v)


def _parse_snr(text: str) -> float | None:
    if text.lower() in ("off", "none", "inf"):
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"--snr expects a number in dB or 'off', got {text!r}", "snr") from None


def _existing(path: str, what: str) -> str:
    if path.startswith("bundled:"):
        return path
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}", f"{what} exists")
    return path


def _load_scene(path: str):
    from .scene import SceneError, load_scene

    _existing(path, "scene")
    try:
        return load_scene(path)
    except (SceneError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid scene {path}: {exc}", "scene schema") from exc


def _geometry(scene, profile: str, array):
    from .scene import ArrayGeometry
    from .synth import PROFILES

    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}", "profile")
    array_fn, ofdm_fn = PROFILES[profile]
    geom = array_fn(scene.array.carrier_hz)
    if array:
        geom = ArrayGeometry(array[0], array[1], geom.spacing_over_lambda, geom.carrier_hz)
    return geom, ofdm_fn()


def _check_profile(scene, ofdm):
    """Derive the paths and verify the CP constraint before any compute."""
    from .scene import SceneError, derive_paths
    from .synth import SynthesisError

    try:
        paths = derive_paths(scene)
        ofdm.check_delays(paths)
    except (SceneError, SynthesisError, ValueError) as exc:
        raise ConfigError(str(exc), "max delay <= T_CP" if "cyclic prefix" in str(exc) else "scene geometry") from exc
    return paths


# --------------------------------------------------------------------------
# scene
# --------------------------------------------------------------------------

def cmd_scene_validate(args) -> int:
    scene = _load_scene(args.scene)
    geom, ofdm = _geometry(scene, args.profile, None)
    paths = _check_profile(scene, ofdm)
    report = {
        "scene": scene.name,
        "digest": scene.digest(),
        "profile": args.profile,
        "t_cp_us": ofdm.t_cp_s * 1e6,
        "paths": [
            {"label": p.label, "kind": p.kind.value, "azimuth_deg": p.azimuth_deg, "zenith_deg": p.zenith_deg,
             "delay_us": p.delay_s * 1e6, "doppler_hz": p.doppler_hz}
            for p in paths
        ],
    }
    print(json.dumps(report, indent=1))
    return 0


# --------------------------------------------------------------------------
# CLAM
# --------------------------------------------------------------------------

def cmd_clam_build(args) -> int:
    from .clam import ClamError, EstimatorConfig, GridSpec, build_estimated, build_geometric, save_map

    scene = _load_scene(args.scene)
    try:
        grid = GridSpec(tuple(args.origin), args.cell_size, args.nx, args.ny, args.height)
    except ClamError as exc:
        raise ConfigError(str(exc), "grid") from exc
    if args.method == "geometric":
        cmap = build_geometric(scene, grid, args.n_clutter, args.precision)
    else:
        cfg = EstimatorConfig(args.profile, _parse_snr(args.snr), args.seed, args.grid_step, not args.no_refine)
        cmap = build_estimated(scene, grid, args.n_clutter, cfg, args.precision, args.workers)
    path = Path(args.output) if args.output else _out_dir(args) / "clam.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_map(cmap, path)
    print(str(path))
    return 0


def cmd_clam_lookup(args) -> int:
    from .clam import ClamError, load_map, lookup

    _existing(args.map, "map")
    try:
        cmap = load_map(args.map)
        doas = lookup(cmap, args.ue)
    except (ClamError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(str(exc), "UE inside map grid" if "outside" in str(exc) else "map schema") from exc
    print(json.dumps({"ue_m": args.ue, "clutter_doas_deg": [list(d) for d in doas]}))
    return 0


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def cmd_pipeline_run(args) -> int:
    from .clam import ClamError, load_map, lookup
    from .joint import EstimateRecord, EstimateSet, JointConfig, polar_rows, write_records_csv
    from .pipelines import METHODS, Capture, PipelineConfig, run_method
    from .scene import clutter_paths, target_paths
    from .estimate import MusicSpectrum, write_spectrum_csv
    from .synth import OfdmParams, synthesize

    if args.method not in METHODS:
        raise ConfigError(f"unknown method {args.method!r}; choose from {sorted(METHODS)}", "method")
    scene = _load_scene(args.scene)
    geom, base = _geometry(scene, args.profile, args.array)
    try:
        ofdm = OfdmParams(args.n_sc or base.n_sc, args.n_sym or base.n_sym, base.delta_f_hz, base.t_cp_s)
    except ValueError as exc:
        raise ConfigError(str(exc), "OFDM profile") from exc
    paths = _check_profile(scene, ofdm)
    cl, tg = clutter_paths(paths), target_paths(paths)
    if args.clam:
        _existing(args.clam, "map")
        try:
            clam_doas = lookup(load_map(args.clam), scene.ue_position_m)
        except ClamError as exc:
            raise ConfigError(str(exc), "UE inside map grid") from exc
    else:
        clam_doas = [p.doa for p in cl]
    if args.n_targets is not None and args.n_targets < 1:
        raise ConfigError("--targets must be >= 1", "S >= 1")
    n_targets = args.n_targets or len(tg)
    if n_targets < 1:
        raise ConfigError("scene has no targets; pass --targets", "S >= 1")
    if len(clam_doas) + n_targets >= geom.n_elements:
        raise ConfigError(f"L+S = {len(clam_doas) + n_targets} must be < M = {geom.n_elements}", "L+S < M")
    snr = _parse_snr(args.snr)
    jcfg = JointConfig(oversample=args.oversample,
                       clutter_dopplers_hz=tuple(p.doppler_hz for p in cl) if args.clutter_doppler_known else None,
                       iterate_all=args.iterate_all)
    pcfg = PipelineConfig(grid_step_deg=args.grid_step, refine=not args.no_refine, joint=jcfg)
    config = {
        "command": "pipeline run", "scene": args.scene, "scene_digest": scene.digest(), "clam": args.clam,
        "clam_doas": [list(d) for d in clam_doas], "method": args.method, "snr_db": "off" if snr is None else snr,
        "seed": args.seed, "profile": args.profile, "array": [geom.mx, geom.mz], "n_sc": ofdm.n_sc,
        "n_sym": ofdm.n_sym, "n_targets": n_targets, "pipeline": {**asdict(pcfg), "joint": asdict(jcfg)},
    }

    tensor = synthesize(paths, ofdm, geom, snr, args.seed)
    cap = Capture(tensor, clam_doas, n_targets, len(cl), pcfg)
    res = run_method(args.method, cap)

    out = _out_dir(args)
    stem = args.prefix or args.method
    header = _header(config, "estimates")
    if res.estimates is not None:
        es = EstimateSet(list(res.estimates.records), list(res.estimates.diagnostics))
        n_final = len(es.finals)
        es.extend(EstimateRecord(math.nan, math.nan, a, z, math.nan, "Final", ("step1-fill",))
                  for a, z in res.doas[n_final:])
    else:
        es = EstimateSet([EstimateRecord(math.nan, math.nan, a, z, math.nan, "Final", tuple(res.flags))
                          for a, z in res.doas])
    write_records_csv(es, out / f"{stem}_estimates.csv", header)
    written = [out / f"{stem}_estimates.csv"]

    spec = res.spectrum
    if spec is None and res.estimates is not None:
        spec = cap.step1(args.method.split("-", 1)[1]).spectrum
    if isinstance(spec, MusicSpectrum):
        write_spectrum_csv(spec, out / f"{stem}_spectrum.csv", _header(config, "spectrum"))
        written.append(out / f"{stem}_spectrum.csv")
    elif spec is not None and hasattr(spec, "power"):
        rows = ((float(u), float(v), float(spec.power[i, j]))
                for i, u in enumerate(spec.u) for j, v in enumerate(spec.v) if spec.visible[i, j])
        _write_csv(out / f"{stem}_spectrum.csv", _header(config, "spectrum"), ["u", "v", "power"], rows)
        written.append(out / f"{stem}_spectrum.csv")

    if res.estimates is not None:
        truth = [(p.azimuth_deg, p.delay_s, p.label or "target") for p in tg]
        rows = polar_rows(res.estimates.finals, truth)
        _write_csv(out / f"{stem}_polar.csv", _header(config, "polar"), ["azimuth_deg", "delay_us", "label"], rows)
        written.append(out / f"{stem}_polar.csv")
    for p in written:
        print(str(p))
    return 0


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _load_experiment(path: str):
    from .metrics import ExperimentSpec

    if path.startswith("bundled:"):
        from importlib import resources

        res = resources.files("clamsense").joinpath("data", "experiments", path[8:] + ".json")
        if not res.is_file():
            raise ConfigError(f"no bundled experiment named {path[8:]!r}", "experiment exists")
        text = res.read_text()
    else:
        _existing(path, "experiment")
        text = Path(path).read_text()
    try:
        spec = ExperimentSpec.from_dict(json.loads(text))
        spec.validate()
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid experiment {path}: {exc}", "experiment schema") from exc
    return spec


def cmd_experiment_run(args) -> int:
    from .metrics import monte_carlo, write_summary_csv, write_trials_csv
    from .synth import PROFILES

    spec = _load_experiment(args.spec)
    over = {}
    if args.trials is not None:
        over["trials"] = args.trials
    if args.seed is not None:
        over["seed"] = args.seed
    if args.workers is not None:
        over["workers"] = args.workers
    spec = replace(spec, **over)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), "experiment schema") from exc
    scene = _load_scene(spec.scene)
    if spec.profile not in PROFILES:
        raise ConfigError(f"unknown profile {spec.profile!r}", "profile")
    _, ofdm = _geometry(scene, spec.profile, spec.array)
    _check_profile(scene, ofdm)

    result = monte_carlo(spec)
    out = _out_dir(args)
    name = spec.name or Path(args.spec.replace("bundled:", "")).stem
    write_trials_csv(result, out / f"{name}_trials.csv")
    write_summary_csv(result, out / f"{name}_summary.csv")
    print(str(out / f"{name}_trials.csv"))
    print(str(out / f"{name}_summary.csv"))
    return 0


# --------------------------------------------------------------------------
# complexity, MTI demo
# --------------------------------------------------------------------------

def cmd_complexity_table(args) -> int:
    from .metrics import ALGORITHMS, ComplexityError, ComplexityParams, FIG6_SIZES, complexity

    if args.fig6 or not args.m:
        sizes = tuple(n * n for n in FIG6_SIZES)
    else:
        sizes = tuple(args.m)
    try:
        base = ComplexityParams(m=16, n_sc=args.n_sc, n_sym=args.n_sym, n_fft=args.n_fft, n_tau=args.n_tau,
                                n_fd=args.n_fd, s=args.s, l=args.l, r_phi=args.r, r_theta=args.r)
        table = {alg: [complexity(alg, replace(base, m=m)).total for m in sizes] for alg in ALGORITHMS}
    except ComplexityError as exc:
        raise ConfigError(str(exc), "complexity parameters positive") from exc
    params = asdict(base)
    params.pop("m")
    config = {"command": "complexity table", "m": list(sizes), "params": params}
    out = _out_dir(args)
    path = out / "complexity.csv"
    _write_csv(path, _header(config, "complexity"), ["algorithm"] + [f"M={m}" for m in sizes],
               ([alg] + counts for alg, counts in table.items()))
    if args.svg:
        from .plotting import Chart, Series, write_svg

        chart = Chart("Complexity versus array size", "M", "complex multiplications", log_y=True)
        for alg, counts in table.items():
            chart.series.append(Series(alg, list(sizes), [float(c) for c in counts]))
        write_svg(chart, out / "complexity.svg", " ".join(_header(config, "complexity")))
    print(str(path))
    return 0


def cmd_mti_demo(args) -> int:
    from .suppress import FilterError, mti_demo

    try:
        data = mti_demo(args.period, args.doppler, args.fs, args.duration, args.pulse_width, args.order)
    except FilterError as exc:
        raise ConfigError(str(exc), "MTI parameters") from exc
    config = {"command": "mti demo", "period_s": args.period, "doppler_hz": args.doppler, "fs_hz": args.fs,
              "duration_s": args.duration, "pulse_width_s": args.pulse_width, "order": args.order}
    out = _out_dir(args)
    for part in ("time", "spectrum"):
        cols = list(data[part])
        rows = zip(*(map(float, data[part][c]) for c in cols))
        _write_csv(out / f"mti_{part}.csv", _header(config, f"mti-{part}"), cols, rows)
        print(str(out / f"mti_{part}.csv"))
    return 0


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def _read_body(path: str) -> list[dict]:
    from .metrics import read_csv_body

    _existing(path, "input")
    return read_csv_body(path)


def _curve_figure(args, figure: str) -> int:
    from .plotting import Chart, Series, write_svg

    rows = _read_body(args.summary)
    need = {"snr_db", "method", args.quantity}
    if not rows or not need <= set(rows[0]):
        raise ConfigError(f"{args.summary} is not an experiment summary CSV with column {args.quantity}",
                          "summary schema")
    methods = list(dict.fromkeys(r["method"] for r in rows))
    snrs = sorted({float(r["snr_db"]) for r in rows if r["snr_db"] != "off"})
    table = {(r["method"], r["snr_db"]): float(r[args.quantity]) for r in rows}
    config = {"command": f"plotdata {figure}", "summary": args.summary, "quantity": args.quantity}
    out = _out_dir(args)
    cols = ["snr_db"] + methods
    data_rows = [[s] + [table.get((m, _cell(s)), table.get((m, str(s)), math.nan)) for m in methods] for s in snrs]
    path = out / f"{figure}_series.csv"
    _write_csv(path, _header(config, figure), cols, data_rows)
    chart = Chart(f"{figure}: {args.quantity}", "SNR (dB)", args.quantity, log_y=args.log)
    for k, m in enumerate(methods):
        chart.series.append(Series(m, snrs, [row[k + 1] for row in data_rows]))
    write_svg(chart, out / f"{figure}.svg", " ".join(_header(config, figure)))
    print(str(path))
    print(str(out / f"{figure}.svg"))
    return 0


def cmd_plot_fig10(args) -> int:
    from .plotting import Chart, Series, write_svg

    rows = _read_body(args.polar)
    if not rows or not {"azimuth_deg", "delay_us", "label"} <= set(rows[0]):
        raise ConfigError(f"{args.polar} is not a polar CSV from 'pipeline run'", "polar schema")
    config = {"command": "plotdata fig10", "polar": args.polar}
    out = _out_dir(args)
    labels = list(dict.fromkeys(r["label"] for r in rows))
    chart = Chart("Targets in (azimuth, delay)", "azimuth (deg)", "delay (us)")
    series_rows = []
    for lab in labels:
        pts = [(float(r["azimuth_deg"]), float(r["delay_us"])) for r in rows if r["label"] == lab]
        chart.series.append(Series(lab, [a for a, _ in pts], [d for _, d in pts], markers_only=True))
        series_rows += [(lab, a, d, math.radians(a)) for a, d in pts]
    path = out / "fig10_series.csv"
    _write_csv(path, _header(config, "fig10"), ["label", "azimuth_deg", "delay_us", "theta_rad"], series_rows)
    write_svg(chart, out / "fig10.svg", " ".join(_header(config, "fig10")))
    print(str(path))
    print(str(out / "fig10.svg"))
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}", "command line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clamsense", description="Clutter-aware bistatic OFDM sensing toolkit.")
    parser.add_argument("--version", action="version", version=f"clamsense {__version__}")
    parser.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV} or ./out)")
    sub = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def common_out(p):
        p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")

    # scene
    g = sub.add_parser("scene", help="scene files").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("validate", help="check a scene against an OFDM profile")
    p.add_argument("scene", help="scene JSON file or bundled:<name>")
    p.add_argument("--profile", default="desk")
    p.set_defaults(func=cmd_scene_validate)

    # clam
    g = sub.add_parser("clam", help="clutter angle maps").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("build", help="build a map over a UE grid")
    p.add_argument("--scene", required=True)
    p.add_argument("--origin", type=float, nargs=2, required=True, metavar=("X", "Y"))
    p.add_argument("--cell-size", type=float, required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--ny", type=int, required=True)
    p.add_argument("--height", type=float, default=0.0)
    p.add_argument("--n-clutter", type=int)
    p.add_argument("--method", choices=("geometric", "estimated"), default="geometric")
    p.add_argument("--precision", type=float, default=0.1)
    p.add_argument("--profile", default="desk")
    p.add_argument("--snr", default="0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-step", type=float, default=0.5)
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", help="map file (default: <out>/clam.json)")
    common_out(p)
    p.set_defaults(func=cmd_clam_build)
    p = g.add_parser("lookup", help="clutter DoAs stored for a UE position")
    p.add_argument("--map", required=True)
    p.add_argument("--ue", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"))
    p.set_defaults(func=cmd_clam_lookup)

    # pipeline / joint
    for name, text in (("pipeline", "run one method on one capture"), ("joint", "same as 'pipeline'")):
        g = sub.add_parser(name, help=text).add_subparsers(dest="action", required=True, parser_class=_Parser)
        p = g.add_parser("run")
        p.add_argument("--scene", required=True, help="scene JSON file or bundled:<name>")
        p.add_argument("--clam", help="map file; default uses the scene's exact clutter DoAs")
        p.add_argument("--method", default="joint-music", help="one of: " + ", ".join(METHOD_NAMES))
        p.add_argument("--snr", default="off", help="dB or 'off' (noiseless)")
        p.add_argument("--seed", type=int, default=0, help="noise seed")
        p.add_argument("--profile", default="desk", help="desk (8x8, 128x32) or table2 (32x32, 1024x100)")
        p.add_argument("--array", type=int, nargs=2, metavar=("MX", "MZ"), help="override the profile array")
        p.add_argument("--n-sc", type=int, help="override the number of subcarriers")
        p.add_argument("--n-sym", type=int, help="override the number of symbols")
        p.add_argument("--targets", dest="n_targets", type=int, help="S (default: targets in the scene)")
        p.add_argument("--grid-step", type=float, default=0.5, help="angle grid step in degrees")
        p.add_argument("--no-refine", action="store_true", help="skip off-grid peak refinement")
        p.add_argument("--oversample", type=int, default=5, help="delay-Doppler zero-padding factor")
        p.add_argument("--iterate-all", action="store_true", help="Step 2 loops over every class")
        p.add_argument("--clutter-doppler-known", action="store_true",
                       help="also gate clutter rejection on the scene's clutter Dopplers")
        p.add_argument("--prefix", help="output file stem (default: method name)")
        common_out(p)
        p.set_defaults(func=cmd_pipeline_run)

    # experiment
    g = sub.add_parser("experiment", help="Monte Carlo experiments").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("run")
    p.add_argument("spec", help="experiment JSON file or bundled:<name> (fig7, fig8, full)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    common_out(p)
    p.set_defaults(func=cmd_experiment_run)

    # complexity
    g = sub.add_parser("complexity", help="complex-multiplication counts").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("table")
    p.add_argument("--fig6", action="store_true", help="M in {16, 64, 256, 1024} with the reference parameters")
    p.add_argument("--m", type=int, nargs="+", help="numbers of array elements M")
    p.add_argument("--n-sc", type=int, default=1024)
    p.add_argument("--n-sym", type=int, default=100)
    p.add_argument("--n-fft", type=int, default=1024)
    p.add_argument("--n-tau", type=int, default=1024)
    p.add_argument("--n-fd", type=int, default=1024)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--l", type=int, default=3)
    p.add_argument("--r", type=int, default=901, help="grid points per angle axis")
    p.add_argument("--svg", action="store_true")
    common_out(p)
    p.set_defaults(func=cmd_complexity_table)

    # MTI demo (two spellings)
    for name, action, text in (("mti", "demo", "MTI illustration data"),
                               ("suppress", "mti-demo", "same as 'mti demo'")):
        g = sub.add_parser(name, help=text).add_subparsers(dest="action", required=True, parser_class=_Parser)
        p = g.add_parser(action)
        p.add_argument("--period", type=float, default=10e-3)
        p.add_argument("--doppler", type=float, default=20.0)
        p.add_argument("--fs", type=float, default=2000.0)
        p.add_argument("--duration", type=float, default=1.0)
        p.add_argument("--pulse-width", type=float, default=1e-3)
        p.add_argument("--order", type=int, default=1)
        common_out(p)
        p.set_defaults(func=cmd_mti_demo)

    # plot data
    g = sub.add_parser("plotdata", help="reshape results into figure series").add_subparsers(dest="action", required=True, parser_class=_Parser)
    for fig in ("fig7", "fig8"):
        p = g.add_parser(fig)
        p.add_argument("--summary", required=True, help="experiment summary CSV")
        p.add_argument("--quantity", default="rmse_azimuth_deg")
        p.add_argument("--log", action="store_true")
        common_out(p)
        p.set_defaults(func=lambda a, f=fig: _curve_figure(a, f))
    p = g.add_parser("fig10")
    p.add_argument("--polar", required=True, help="polar CSV from 'pipeline run'")
    common_out(p)
    p.set_defaults(func=cmd_plot_fig10)
    return parser


def _error(kind: str, message: str, precondition: str = "") -> None:
    payload = {"error": kind, "message": message}
    if precondition:
        payload["precondition"] = precondition
    print(json.dumps(payload), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        if not hasattr(args, "out"):
            args.out = None
        return int(args.func(args) or 0)
    except ConfigError as exc:
        _error("config", str(exc), exc.precondition)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as structured error
        _error(type(exc).__name__, str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
