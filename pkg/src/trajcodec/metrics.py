"""Quality metrics, BD-rate and rate-distortion sweeps."""

from __future__ import annotations

import csv
import logging
import math
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class RDPoint:
    rate_kbps: float
    quality: float


def _as_float_video(video):
    arr = np.asarray(video)
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def psnr(a, b) -> float:
    """Mean over frames of 10*log10(1/MSE); ``inf`` when any frame is identical.

    Inputs are (T, ...) videos, uint8 or float in [0, 1].
    """
    a, b = _as_float_video(a), _as_float_video(b)
    if a.shape != b.shape:
        raise EvaluationError(f"video shapes differ: {a.shape} vs {b.shape}")
    mse = ((a - b) ** 2).reshape(a.shape[0], -1).mean(axis=1)
    if np.any(mse == 0):
        return math.inf
    return float(np.mean(10.0 * np.log10(1.0 / mse)))


def _curve(points) -> tuple[np.ndarray, np.ndarray]:
    pts = [p if isinstance(p, RDPoint) else RDPoint(*p) for p in points]
    if len(pts) < 4:
        raise EvaluationError(f"BD-rate needs at least 4 points per curve, got {len(pts)}")
    rate = np.array([p.rate_kbps for p in pts], dtype=np.float64)
    quality = np.array([p.quality for p in pts], dtype=np.float64)
    if np.any(rate <= 0) or not np.all(np.isfinite(rate)) or not np.all(np.isfinite(quality)):
        raise EvaluationError("rates must be positive and all values finite")
    order = np.argsort(quality)
    quality, rate = quality[order], rate[order]
    if np.any(np.diff(quality) <= 0):
        raise EvaluationError("quality values within a curve must be distinct")
    return quality, np.log(rate)


def bd_rate(anchor, test, method: str = "pchip") -> float:
    """Average rate difference of ``test`` vs ``anchor`` in percent (negative = savings).

    Log-rate is interpolated as a function of quality (piecewise cubic
    Hermite by default, or a cubic polynomial fit with ``method="cubic"``)
    and integrated over the overlapping quality interval.
    """
    qa, la = _curve(anchor)
    qt, lt = _curve(test)
    lo, hi = max(qa[0], qt[0]), min(qa[-1], qt[-1])
    if not hi > lo:
        raise EvaluationError(f"quality ranges do not overlap: [{qa[0]}, {qa[-1]}] vs [{qt[0]}, {qt[-1]}]")
    if method == "pchip":
        int_a = PchipInterpolator(qa, la).integrate(lo, hi)
        int_t = PchipInterpolator(qt, lt).integrate(lo, hi)
    elif method == "cubic":
        pa, pt = np.polyint(np.polyfit(qa, la, 3)), np.polyint(np.polyfit(qt, lt, 3))
        int_a = np.polyval(pa, hi) - np.polyval(pa, lo)
        int_t = np.polyval(pt, hi) - np.polyval(pt, lo)
    else:
        raise EvaluationError(f"unknown BD-rate method {method!r}")
    avg = (int_t - int_a) / (hi - lo)
    return float(math.expm1(avg) * 100.0)


# ---------------------------------------------------------------------------
# metric adapters


@dataclass
class MetricAdapter:
    """A quality metric and its RD-axis display transform.

    ``compute(reference, distorted)`` takes uint8 (T, H, W, 3) videos.
    """

    id: str
    higher_is_better: bool
    axis_label: str
    display: Callable[[float], float]
    compute: Callable[[np.ndarray, np.ndarray], float] | None = None

    @property
    def available(self) -> bool:
        return self.compute is not None


def _external(template: str | None):
    if not template:
        return None

    def run(reference, distorted):
        from .video_io import write_raw_video

        with tempfile.TemporaryDirectory() as tmp:
            ref, dist = Path(tmp) / "reference.rgb", Path(tmp) / "distorted.rgb"
            write_raw_video(ref, reference, 25)
            write_raw_video(dist, distorted, 25)
            proc = subprocess.run(
                shlex.split(template.format(reference=ref, distorted=dist)), capture_output=True, text=True
            )
        if proc.returncode != 0:
            raise EvaluationError(f"metric command failed ({proc.returncode}): {proc.stderr.strip()[-500:]}")
        return float(proc.stdout.strip().split()[-1])

    return run


def metric_adapter(metric_id: str, command: str | None = None) -> MetricAdapter:
    """psnr is builtin; dists/lpips/fvd run ``command`` (placeholders {reference}, {distorted})
    which must print the score as the last token on stdout."""
    if metric_id == "psnr":
        return MetricAdapter("psnr", True, "PSNR (dB)", lambda v: v, psnr)
    if metric_id in ("dists", "lpips"):
        return MetricAdapter(metric_id, False, f"1-{metric_id.upper()}", lambda v: 1.0 - v, _external(command))
    if metric_id == "fvd":
        return MetricAdapter("fvd", False, "5000-FVD", lambda v: 5000.0 - v, _external(command))
    raise EvaluationError(f"unknown metric {metric_id!r}")


# ---------------------------------------------------------------------------
# RD sweep

SWEEP_FIELDS = ["sequence", "qp", "delta", "total_kbps", "keyframe_kbps", "feature_kbps", "metric", "value", "display", "missing"]


def _atomic_write(path: Path, write):
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)


def rd_sweep(model, sequences: Sequence, qps: Sequence[int], deltas: Sequence, metrics: Sequence[MetricAdapter],
             out_dir, adapter=None, plot: bool = True) -> list[dict]:
    """Encode/decode every (sequence, qp, delta) point and score it.

    Metrics score the synthesized frames only (the key frame is left out,
    since a lossless key frame would pin PSNR at infinity).  Writes
    ``rd.csv`` and one ``rd_<metric>.png`` per metric into ``out_dir``.
    Metric failures mark the point missing; the sweep continues.
    """
    from .pipeline import decode_stream, encode_video
    from .video_io import read_video

    if not sequences:
        raise EvaluationError("no sequences given")
    if len(qps) * len(deltas) < 2:
        raise EvaluationError("an RD sweep needs at least two operating points")
    if not metrics:
        raise EvaluationError("no metrics given")
    videos = {str(s): read_video(s) for s in sequences}

    rows = []
    for name, video in videos.items():
        for delta in deltas:
            for qp in qps:
                stream, _, _ = encode_video(model, video, qp=qp, delta=delta, adapter=adapter)
                decoded, stats, _ = decode_stream(model, stream, adapter=adapter)
                info = stats.as_dict()
                for metric in metrics:
                    row = {
                        "sequence": Path(name).name, "qp": qp, "delta": delta,
                        "total_kbps": info["total_kbps"], "keyframe_kbps": info["keyframe_kbps"],
                        "feature_kbps": info["feature_kbps"], "metric": metric.id,
                        "value": "", "display": "", "missing": 1,
                    }
                    if metric.available:
                        try:
                            value = float(metric.compute(video.frames[1:], decoded.frames[1:]))
                            row.update(value=value, display=metric.display(value), missing=0)
                        except Exception as exc:
                            log.warning("%s failed on %s qp=%s: %s", metric.id, name, qp, exc)
                    rows.append(row)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def write_csv(path):
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, SWEEP_FIELDS)
            writer.writeheader()
            writer.writerows(rows)

    _atomic_write(out_dir / "rd.csv", write_csv)
    if plot:
        for metric in metrics:
            _plot(rows, metric, out_dir / f"rd_{metric.id}.png")
    return rows


def _plot(rows, metric: MetricAdapter, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    curves = {}
    for row in rows:
        if row["metric"] != metric.id or row["missing"]:
            continue
        curves.setdefault((row["sequence"], row["delta"]), []).append((row["total_kbps"], row["display"]))
    for (seq, delta), pts in sorted(curves.items(), key=lambda kv: str(kv[0])):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{seq} delta={delta}")
    ax.set_xlabel("Bitrate (kbps)")
    ax.set_ylabel(metric.axis_label)
    if curves:
        ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _atomic_write(path, lambda tmp: fig.savefig(tmp, format="png", dpi=100))
    plt.close(fig)


def read_rd_csv(path) -> list[RDPoint]:
    """Two-column CSV with header ``rate_kbps,quality``."""
    with open(path, newline="") as f:
        return [RDPoint(float(r["rate_kbps"]), float(r["quality"])) for r in csv.DictReader(f)]
