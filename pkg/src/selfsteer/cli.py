"""Command-line harness: generate | run | eval | sweep | calibrate.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .dsp import stft
from .metrics import (angular_error, format_table, loglinear_fit, quartiles,
                      scene_result, summarize, SceneResult)
from .pipeline import AR, CONCAT, STRONG, PipelineConfig, run
from .scene import ScenarioTemplate, calibrate_sigma, generate_scenario
from .ssf import SsfParams
from .tracker import TrackerConfig, TransitionModel

log = logging.getLogger("selfsteer")

FRAME_COLUMNS = ["scene_id", "frame", "theta_true_deg", "theta_est_deg", "ae_deg", "n_eff", "resampled"]
STRONG_FRAME_COLUMNS = ["scene_id", "frame", "theta_true_deg"]
SCENE_COLUMNS = ["scene_id", "pipeline", "motion", "ssf", "degrade", "mae_deg",
                 "sisdr_in_db", "sisdr_out_db", "wall_ms_per_frame"]
STRONG_SCENE_COLUMNS = [c for c in SCENE_COLUMNS if c != "mae_deg"]
REQUIRED_SCENE_COLUMNS = ["scene_id", "pipeline", "motion", "ssf", "sisdr_in_db", "sisdr_out_db"]
SWEEP_ALIASES = {"gamma": "likelihood_exponent", "floor": "likelihood_floor"}
SWEEP_KEYS = {"sigma", "likelihood_exponent", "likelihood_floor", "resample_threshold",
              "init_spread_theta", "init_spread_vel", "n_particles", "band_lo_hz",
              "band_hi_hz", "pipeline", "motion"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _fmt(v, nd=6):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.{nd}f}"


def _scene_seed(base, index):
    return int(np.random.SeedSequence([int(base), int(index)]).generate_state(1)[0])


# ---------------------------------------------------------------- generate

def _generate_one(args):
    index, seed, template, pool, out = args
    scene_id = f"scene_{index:05d}"
    scene_seed = _scene_seed(seed, index)
    truth = generate_scenario(template, scene_seed, pool)
    io.save_scenario(Path(out) / scene_id, truth, scene_id, template.geometry(), reverb=template.reverb)
    return scene_id


def _load_template(path):
    if path is None:
        return {}, None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {p} not found")
    try:
        with open(p, encoding="utf-8") as fh:
            return json.load(fh), p.parent
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc


def cmd_generate(args):
    raw, base = _load_template(args.config)
    pool_spec = args.audio_pool or raw.get("audio_pool")
    if pool_spec is None:
        raise UsageError("no audio pool: set 'audio_pool' in the config or pass --audio-pool "
                         "(use 'synthetic' for generated speech-like sources)")
    try:
        template = ScenarioTemplate.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario config: {exc}") from exc
    if pool_spec == "synthetic":
        pool = None
    else:
        pool_dir = Path(pool_spec)
        if not pool_dir.is_absolute() and args.audio_pool is None and base is not None:
            pool_dir = base / pool_dir
        pool = io.load_audio_pool(pool_dir)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise io.DataError(f"output directory {out} is not writable: {exc}") from exc

    jobs = [(i, args.seed, template, pool, str(out)) for i in range(args.count)]
    ids = _map(_generate_one, jobs, args.workers)
    manifest = {"count": args.count, "seed": args.seed, "audio_pool": str(pool_spec),
                "template": raw, "scenes": ids}
    with open(out / io.MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(ids)} scenes to {out}")
    return 0


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------- run

def build_pipeline_config(pipeline, motion, ssf="oracle", degrade=0.0, seed=0, overrides=None,
                          geometry=None, stft_cfg=None):
    """Pipeline configuration from CLI-level labels plus tracker overrides."""
    overrides = dict(overrides or {})
    sigma = overrides.pop("sigma", None)
    if motion == "rw":
        trans = TransitionModel.rw() if sigma is None else TransitionModel.rw(sigma)
    elif motion == "cv":
        dt = stft_cfg.frame_dt if stft_cfg is not None else 0.016
        trans = TransitionModel.cv(dt=dt) if sigma is None else TransitionModel.cv(sigma, dt)
    else:
        raise UsageError(f"unknown motion model {motion!r}")
    band = list(TrackerConfig().likelihood_band)
    if "band_lo_hz" in overrides:
        band[0] = float(overrides.pop("band_lo_hz"))
    if "band_hi_hz" in overrides:
        band[1] = float(overrides.pop("band_hi_hz"))
    if "n_particles" in overrides:
        overrides["n_particles"] = int(overrides["n_particles"])
    tracker = TrackerConfig(transition=trans, likelihood_band=tuple(band), seed=seed, **overrides)
    mode = "miso" if pipeline == CONCAT else "mimo"
    ssf_params = SsfParams(kind=ssf, mode=mode, oracle_degrade=degrade)
    kw = {} if stft_cfg is None else {"stft": stft_cfg}
    return PipelineConfig(mode=pipeline, tracker=tracker, ssf=ssf_params, geometry=geometry, **kw)


def run_scene(scene_dir, pipeline, motion, ssf, degrade, seed, overrides=None):
    """Run one pipeline on one scene; returns ``(SceneResult, frame_rows)``."""
    truth, geom, cfg, meta = io.load_scenario(scene_dir)
    scene_id = meta.get("scene_id", Path(scene_dir).name)
    tracker_seed = _scene_seed(seed, truth.seed if truth.seed is not None else 0)
    pc = build_pipeline_config(pipeline, motion, ssf, degrade, tracker_seed, overrides, geom, cfg)
    spectrum = stft(truth.mixture, cfg)
    spectrum.data = spectrum.data[:, : truth.frames]
    trace = run(spectrum, pc, truth)
    label = "oracle" if pipeline == STRONG else motion
    res = scene_result(scene_id, trace, truth, cfg, pipeline, label, geom.reference_index)
    res.extra = {"ssf": ssf, "degrade": degrade}
    theta_true = np.degrees(truth.trajectories[0])
    rows = []
    for t in range(trace.frames):
        row = {"scene_id": scene_id, "frame": t, "theta_true_deg": theta_true[t]}
        if trace.theta_est is not None:
            row.update(theta_est_deg=np.degrees(trace.theta_est[t]), ae_deg=res.ae_deg[t],
                       n_eff=trace.n_eff[t], resampled=bool(trace.resampled[t]))
        rows.append(row)
    return res, rows


def _run_job(job):
    scene_dir, pipeline, motion, ssf, degrade, seed, overrides = job
    try:
        return run_scene(scene_dir, pipeline, motion, ssf, degrade, seed, overrides)
    except (io.DataError, ValueError, OSError, KeyError) as exc:
        return f"{scene_dir}: {exc}"


def run_batch(scenes, pipeline, motion, ssf="oracle", degrade=0.0, seed=0, overrides=None, workers=1):
    jobs = [(str(s), pipeline, motion, ssf, degrade, seed, overrides) for s in scenes]
    results, failures = [], []
    for out in _map(_run_job, jobs, workers):
        if isinstance(out, str):
            log.warning("skipping scene %s", out)
            failures.append(out)
        else:
            results.append(out)
    results.sort(key=lambda r: r[0].scene_id)
    return results, failures


def _frames_path(scenes_csv):
    p = Path(scenes_csv)
    return p.with_name(p.stem + ".frames.csv")


def write_run_csvs(out, results, pipeline):
    strong = pipeline == STRONG
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fcols = STRONG_FRAME_COLUMNS if strong else FRAME_COLUMNS
    scols = STRONG_SCENE_COLUMNS if strong else SCENE_COLUMNS
    with open(_frames_path(out), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fcols)
        for _, rows in results:
            for row in rows:
                w.writerow([_fmt(row[c]) if c != "scene_id" else row[c] for c in fcols])
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(scols)
        for res, _ in results:
            vals = {
                "scene_id": res.scene_id, "pipeline": res.pipeline, "motion": res.tracker,
                "ssf": res.extra["ssf"], "degrade": _fmt(res.extra["degrade"], 4),
                "mae_deg": _fmt(res.mae_deg), "sisdr_in_db": _fmt(res.sisdr_in_db),
                "sisdr_out_db": _fmt(res.sisdr_out_db),
                "wall_ms_per_frame": _fmt(res.wall_ms_per_frame, 4),
            }
            w.writerow([vals[c] for c in scols])


def cmd_run(args):
    scenes = io.list_scenes(args.scenes)
    if not scenes:
        raise io.DataError(f"no scenes found in {args.scenes}")
    results, failures = run_batch(scenes, args.pipeline, args.motion, args.ssf, args.degrade,
                                  args.seed, None, args.workers)
    if not results:
        raise io.DataError(f"all {len(failures)} scenes failed")
    write_run_csvs(args.out, results, args.pipeline)
    print(f"wrote {len(results)} scene rows to {args.out}")
    return 0


# ---------------------------------------------------------------- eval

def _read_csv(path):
    p = Path(path)
    if not p.is_file():
        raise io.DataError(f"results file {p} not found")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def _method_label(pipeline, ssf):
    return pipeline if ssf == "oracle" else f"{pipeline}:{ssf}"


def load_results(paths):
    """SceneResults from scene CSVs, with per-frame AE from sibling frame files."""
    results = []
    for path in paths:
        cols, rows = _read_csv(path)
        for c in REQUIRED_SCENE_COLUMNS:
            if c not in cols:
                raise io.DataError(f"{path}: missing column '{c}'")
        ae = {}
        fpath = _frames_path(path)
        if fpath.is_file():
            fcols, frows = _read_csv(fpath)
            if "ae_deg" in fcols:
                for fr in frows:
                    ae.setdefault(fr["scene_id"], []).append((int(fr["frame"]), float(fr["ae_deg"])))
        for row in rows:
            try:
                frames = ae.get(row["scene_id"])
                ae_arr = np.array([v for _, v in sorted(frames)]) if frames else None
                if ae_arr is None and row.get("mae_deg"):
                    ae_arr = np.array([float(row["mae_deg"])])
                res = SceneResult(
                    scene_id=row["scene_id"],
                    pipeline=_method_label(row["pipeline"], row["ssf"]),
                    tracker=row["motion"],
                    ae_deg=ae_arr,
                    sisdr_in_db=float(row["sisdr_in_db"]),
                    sisdr_out_db=float(row["sisdr_out_db"]),
                    extra={"degrade": float(row.get("degrade") or 0.0)},
                )
            except ValueError as exc:
                raise io.DataError(f"{path}: bad value in row {row}: {exc}") from exc
            results.append(res)
    return results


def regression_points(results):
    """(method, scene, degrade, mae, delta) rows for every tracked scene, sorted."""
    pts = []
    for r in results:
        if r.ae_deg is None:
            continue
        pts.append((f"{r.pipeline}/{r.tracker}", r.scene_id, r.extra.get("degrade", 0.0),
                    r.mae_deg, r.delta_sisdr_db))
    return sorted(pts)


def fit_by_method(points):
    fits = {}
    for method, grp in itertools.groupby(points, key=lambda p: p[0]):
        grp = list(grp)
        try:
            fits[method] = loglinear_fit([max(p[3], 1e-6) for p in grp], [p[4] for p in grp])
        except ValueError:
            fits[method] = None
    return fits


def evaluate(paths, out_dir):
    results = load_results(paths)
    if not results:
        raise io.DataError("results files contain no rows")
    rows = summarize(results)
    points = regression_points(results)
    fits = fit_by_method(points)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = format_table(rows)
    (out / "report.txt").write_text(table, encoding="utf-8")
    report = {
        "table": rows,
        "regression": {m: (None if f is None else {"slope": f.slope, "intercept": f.intercept, "r2": f.r2})
                       for m, f in fits.items()},
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    with open(out / "regression.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "scene_id", "degrade", "mae_deg", "delta_sisdr_db", "slope", "intercept"])
        for m, sid, deg, mae, delta in points:
            f = fits[m]
            w.writerow([m, sid, _fmt(deg, 4), _fmt(mae), _fmt(delta),
                        _fmt(f.slope if f else None), _fmt(f.intercept if f else None)])
    return table, report


def cmd_eval(args):
    table, _ = evaluate(args.results, args.out)
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------- sweep

def load_grid(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"grid file {p} not found")
    with open(p, encoding="utf-8") as fh:
        grid_doc = json.load(fh)
    grid = {SWEEP_ALIASES.get(k, k): v for k, v in grid_doc.get("grid", {}).items()}
    if not grid or any(not isinstance(v, list) or not v for v in grid.values()):
        raise UsageError("empty grid: every entry under 'grid' must be a non-empty list")
    unknown = set(grid) - SWEEP_KEYS
    if unknown:
        raise UsageError(f"unknown grid keys {sorted(unknown)}; allowed: {sorted(SWEEP_KEYS)}")
    return grid_doc, grid


def sweep(scenes, grid_doc, grid, seed=0, workers=1):
    keys = sorted(grid)
    ranked = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        pipeline = params.pop("pipeline", grid_doc.get("pipeline", AR))
        motion = params.pop("motion", grid_doc.get("motion", "cv"))
        if pipeline == STRONG:
            raise UsageError("sweeps need a tracking pipeline (concat or ar)")
        results, _ = run_batch(scenes, pipeline, motion, grid_doc.get("ssf", "oracle"),
                               float(grid_doc.get("degrade", 0.0)), seed, params, workers)
        if not results:
            raise io.DataError("all scenes failed during sweep")
        ae = np.concatenate([r.ae_deg for r, _ in results])
        delta = [r.delta_sisdr_db for r, _ in results]
        ranked.append({"pipeline": pipeline, "motion": motion, **params,
                       "median_ae_deg": float(np.median(ae)),
                       "median_delta_sisdr_db": float(np.median(delta))})
    ranked.sort(key=lambda r: (r["median_ae_deg"], -r["median_delta_sisdr_db"]))
    return ranked


def cmd_sweep(args):
    grid_doc, grid = load_grid(args.grid)
    scenes = io.list_scenes(args.scenes)
    if not scenes:
        raise io.DataError(f"no scenes found in {args.scenes}")
    ranked = sweep(scenes, grid_doc, grid, args.seed, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["rank", "pipeline", "motion", *sorted(k for k in grid if k not in ("pipeline", "motion")),
            "median_ae_deg", "median_delta_sisdr_db"]
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, r in enumerate(ranked, 1):
            w.writerow([i] + [r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in cols[1:]])
    best = {k: v for k, v in ranked[0].items() if not k.startswith("median_")}
    with open(out / "best.json", "w", encoding="utf-8") as fh:
        json.dump(best, fh, indent=1)
        fh.write("\n")
    print(json.dumps(best))
    return 0


# ---------------------------------------------------------------- calibrate

def cmd_calibrate(args):
    sigma = calibrate_sigma(args.v, args.r, args.frames, args.dt)
    print(f"{sigma:.6f}")
    return 0


def build_parser():
    p = _Parser(prog="selfsteer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate synthetic scenario directories")
    g.add_argument("--config", help="JSON scenario template")
    g.add_argument("--audio-pool", help="directory of 16 kHz mono WAVs, or 'synthetic'")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run a pipeline over a scenes directory")
    r.add_argument("scenes")
    r.add_argument("--pipeline", choices=[CONCAT, AR, STRONG], required=True)
    r.add_argument("--motion", choices=["rw", "cv"], default="cv")
    r.add_argument("--ssf", choices=["oracle", "coherence"], default="oracle")
    r.add_argument("--degrade", type=float, default=0.0, help="oracle_degrade in [0, 1]")
    r.add_argument("--out", required=True, help="per-scene CSV; frames go to <stem>.frames.csv")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="summarise run CSVs into a quartile table and regression")
    e.add_argument("results", nargs="+")
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="exhaustive tracker parameter search")
    s.add_argument("grid", help="JSON grid file")
    s.add_argument("scenes")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("calibrate", help="perturbation std for a target walking speed")
    c.add_argument("--v", type=float, default=1.5, help="target speed in m/s")
    c.add_argument("--r", type=float, default=2.0, help="radius in m")
    c.add_argument("--frames", type=int, default=312)
    c.add_argument("--dt", type=float, default=0.016)
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"selfsteer: error: {exc}", file=sys.stderr)
        return 1
    except io.DataError as exc:
        print(f"selfsteer: data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"selfsteer: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
