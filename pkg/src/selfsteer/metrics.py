"""Tracking and enhancement metrics and Table-style summaries."""

from dataclasses import dataclass, field

import numpy as np

from .dsp import Spectrogram, interior, istft

SISDR_CLAMP = 60.0


def angular_error(theta_est, theta_true):
    """Absolute wrapped angular error in degrees, in [0, 180]."""
    d = np.asarray(theta_est, dtype=np.float64) - np.asarray(theta_true, dtype=np.float64)
    d = (d + np.pi) % (2 * np.pi) - np.pi
    err = np.degrees(np.abs(d))
    # (x + pi) % 2pi - pi maps +pi to -pi; both give 180
    return float(err) if err.ndim == 0 else err


def si_sdr_raw(estimate, reference):
    """Unclamped SI-SDR in dB (may be +-inf)."""
    est = np.asarray(estimate, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if est.shape != ref.shape or est.size == 0:
        raise ValueError("estimate and reference must have equal nonzero length")
    ref_energy = np.dot(ref, ref)
    if ref_energy == 0:
        raise ValueError("reference signal is all zeros")
    alpha = np.dot(est, ref) / ref_energy
    target = alpha * ref
    residual = target - est
    num, den = np.dot(target, target), np.dot(residual, residual)
    with np.errstate(divide="ignore"):
        if num == 0:
            return -np.inf
        if den == 0:
            return np.inf
        return 10 * np.log10(num / den)


def si_sdr(estimate, reference):
    return float(np.clip(si_sdr_raw(estimate, reference), -SISDR_CLAMP, SISDR_CLAMP))


def quartiles(values):
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("quartiles of an empty sequence")
    q = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


@dataclass(frozen=True)
class LogLinearFit:
    slope: float
    intercept: float
    r2: float


def loglinear_fit(mae, delta):
    """Least-squares fit of ``delta = slope * log10(mae) + intercept``."""
    mae = np.asarray(mae, dtype=np.float64)
    y = np.asarray(delta, dtype=np.float64)
    if mae.size < 2 or mae.size != y.size:
        raise ValueError("need at least two (mae, delta) points")
    if not np.all((mae > 0) & np.isfinite(mae)):
        raise ValueError("mae values must be positive")
    x = np.log10(mae)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx <= 1e-24 * max(1.0, np.sum(x * x)):
        raise ValueError("degenerate design: all mae values identical")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    syy = np.sum((y - ym) ** 2)
    r2 = 1.0 - np.sum(resid**2) / syy if syy > 0 else 1.0
    return LogLinearFit(float(slope), float(intercept), float(r2))


@dataclass
class SceneResult:
    scene_id: str
    pipeline: str
    tracker: str
    ae_deg: np.ndarray | None
    sisdr_in_db: float
    sisdr_out_db: float
    wall_ms_per_frame: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def mae_deg(self):
        return float(np.mean(self.ae_deg)) if self.ae_deg is not None else None

    @property
    def delta_sisdr_db(self):
        return self.sisdr_out_db - self.sisdr_in_db


def reference_sisdr(signal, target, cfg):
    """SI-SDR of one channel against the reference target over the interior region."""
    n = min(len(signal), len(target))
    sl = interior(n, cfg)
    return si_sdr(np.asarray(signal)[:n][sl], np.asarray(target)[:n][sl])


def scene_result(scene_id, trace, truth, cfg, pipeline, tracker="-", ref=0):
    """Score a :class:`~selfsteer.pipeline.RunTrace` against ground truth."""
    out = istft(Spectrogram(trace.enhanced[None], cfg))[0]
    target = truth.target_direct[ref]
    ae = None
    if trace.theta_est is not None:
        ae = angular_error(trace.theta_est, truth.trajectories[0, : trace.frames])
    return SceneResult(
        scene_id=scene_id,
        pipeline=pipeline,
        tracker=tracker,
        ae_deg=np.atleast_1d(ae) if ae is not None else None,
        sisdr_in_db=reference_sisdr(truth.mixture[ref], target, cfg),
        sisdr_out_db=reference_sisdr(out, target, cfg),
        wall_ms_per_frame=float(np.mean(trace.wall_time) * 1e3),
    )


def _group_key(r):
    return (r.pipeline, r.tracker)


def summarize(batch):
    """Table-1 style grid: frame-pooled AE and scene-pooled SI-SDR quartiles.

    An ``unprocessed`` row is derived from the input SI-SDR of every
    distinct scene.  Rows are ordered ``unprocessed``, ``strong``,
    ``concat``, ``ar``, then alphabetically, with tracker labels sorted.
    """
    if not batch:
        raise ValueError("empty batch")
    order = {"unprocessed": 0, "strong": 1, "concat": 2, "ar": 3}
    groups = {}
    for r in batch:
        groups.setdefault(_group_key(r), []).append(r)
    inputs = {}
    for r in batch:
        inputs.setdefault(r.scene_id, r.sisdr_in_db)
    rows = [{
        "pipeline": "unprocessed", "tracker": "-", "scenes": len(inputs),
        "ae_deg": None,
        "sisdr_db": quartiles(list(inputs.values())),
        "delta_sisdr_db": (0.0, 0.0, 0.0),
    }]
    for key in sorted(groups, key=lambda k: (order.get(k[0], 9), k[0], k[1])):
        rs = sorted(groups[key], key=lambda r: r.scene_id)
        ae = [r.ae_deg for r in rs if r.ae_deg is not None]
        rows.append({
            "pipeline": key[0], "tracker": key[1], "scenes": len(rs),
            "ae_deg": quartiles(np.concatenate(ae)) if ae else None,
            "sisdr_db": quartiles([r.sisdr_out_db for r in rs]),
            "delta_sisdr_db": quartiles([r.delta_sisdr_db for r in rs]),
        })
    return rows


def _fmt_q(q, fmt="{:.2f}"):
    if q is None:
        return "-"
    return "|".join(fmt.format(v) for v in q)


def format_table(rows):
    head = ("pipeline", "tracker", "scenes", "AE [deg] 25|50|75", "SI-SDR [dB] 25|50|75")
    body = [(r["pipeline"], r["tracker"], str(r["scenes"]), _fmt_q(r["ae_deg"]), _fmt_q(r["sisdr_db"]))
            for r in rows]
    widths = [max(len(x[i]) for x in [head, *body]) for i in range(len(head))]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(head), sep, *map(line, body)]) + "\n"
