"""VIM / VAM forecast metrics, millisecond offsets and the zero-velocity baseline."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, MotionSample, PoseSequence, PredictionSet, parse_window_id
from .preprocess import pad_visibility

OFFSETS_3D = (100.0, 240.0, 500.0, 640.0, 900.0)
OFFSETS_2D = (80.0, 160.0, 320.0, 400.0, 560.0)


class MetricWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MetricConfig:
    beta: float = 200.0
    offsets_ms: tuple | None = None  # None: per-dimension defaults
    unit_scale: float | None = None  # None: 100 (m -> cm) for 3D, 1 for 2D
    metric: str | None = None  # "vim" | "vam"; None: vim for 3D, vam for 2D

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.metric not in (None, "vim", "vam"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.offsets_ms is not None:
            object.__setattr__(self, "offsets_ms", tuple(float(o) for o in self.offsets_ms))

    def resolved(self, dims):
        return MetricConfig(
            beta=self.beta,
            offsets_ms=self.offsets_ms or (OFFSETS_3D if dims == 3 else OFFSETS_2D),
            unit_scale=self.unit_scale if self.unit_scale is not None else (100.0 if dims == 3 else 1.0),
            metric=self.metric or ("vim" if dims == 3 else "vam"),
        )


def offset_to_frame(offset_ms, frame_interval_ms, tau=None):
    """1-based forecast frame closest to ``offset_ms`` (half rounds up)."""
    if not offset_ms > 0:
        raise ValueError(f"offset must be positive, got {offset_ms}")
    exact = offset_ms / frame_interval_ms
    frame = max(1, int(math.floor(exact + 0.5)))
    if tau is not None and frame > tau:
        warnings.warn(
            f"offset {offset_ms} ms lies beyond the {tau}-frame horizon; clamped", MetricWarning, stacklevel=2
        )
        frame = tau
    return frame


def _coords(x):
    return x.coords if isinstance(x, PoseSequence) else np.asarray(x, dtype=np.float64)


def _vis(x):
    if isinstance(x, PoseSequence):
        return x.visibility
    return np.ones(np.shape(x)[:2], dtype=np.int8)


def vim(pred, gt, frame, cfg: MetricConfig = MetricConfig()):
    """Mean joint distance at 1-based ``frame`` over joints visible in ``gt``."""
    p, g = _coords(pred), _coords(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    unit = cfg.resolved(p.shape[-1]).unit_scale
    vis = _vis(gt)[frame - 1] == 1
    if not vis.any():
        warnings.warn(f"no visible ground-truth joints at frame {frame}; VIM counted as 0", MetricWarning)
        return 0.0
    err = np.linalg.norm(p[frame - 1] - g[frame - 1], axis=-1)
    return float(err[vis].mean() * unit)


def vam(pred: PoseSequence, gt: PoseSequence, frame, cfg: MetricConfig = MetricConfig()):
    """Visibility-aware error at 1-based ``frame``.

    Joints with matching visibility contribute their distance (both visible)
    or 0 (both invisible); a visibility mismatch costs ``cfg.beta``.
    """
    if not isinstance(pred, PoseSequence):
        raise ValueError("VAM needs predicted visibility")
    if pred.coords.shape != gt.coords.shape:
        raise ValueError(f"shape mismatch {pred.coords.shape} vs {gt.coords.shape}")
    unit = cfg.resolved(pred.dims).unit_scale
    pv = pred.visibility[frame - 1] == 1
    gv = gt.visibility[frame - 1] == 1
    dist = np.linalg.norm(pred.coords[frame - 1] - gt.coords[frame - 1], axis=-1) * unit
    err = np.where(pv != gv, cfg.beta, np.where(pv & gv, dist, 0.0))
    return float(err.mean())


@dataclass
class MetricReport:
    metric: str
    offsets_ms: tuple
    frames: tuple
    values: tuple
    average: float
    per_sample: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "metric": self.metric,
            "offsets_ms": list(self.offsets_ms),
            "frames": list(self.frames),
            "values": list(self.values),
            "average": self.average,
            "per_sample": {k: list(v) for k, v in self.per_sample.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["metric"],
            tuple(d["offsets_ms"]),
            tuple(d["frames"]),
            tuple(d["values"]),
            d["average"],
            {k: tuple(v) for k, v in d.get("per_sample", {}).items()},
        )

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["offset_ms", "frame", self.metric])
        for o, f, v in zip(self.offsets_ms, self.frames, self.values):
            w.writerow([o, f, repr(v)])
        w.writerow(["average", "", repr(self.average)])
        return buf.getvalue()

    def to_svg(self, width=480, height=280):
        """Bar chart of the per-offset values."""
        pad, n = 40, len(self.values)
        top = max(max(self.values, default=0.0), 1e-12)
        bar_w = (width - 2 * pad) / max(n, 1)
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
            f'<text x="{pad}" y="20" font-size="14">{self.metric.upper()} '
            f"(average {self.average:.3f})</text>",
        ]
        for i, (o, v) in enumerate(zip(self.offsets_ms, self.values)):
            h = (height - 2 * pad - 10) * v / top
            x = pad + i * bar_w
            y = height - pad - h
            parts.append(
                f'<rect x="{x + 4:.2f}" y="{y:.2f}" width="{bar_w - 8:.2f}" height="{h:.2f}" fill="#4a7ab5"/>'
            )
            parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{height - pad + 16}" font-size="11" '
                         f'text-anchor="middle">{o:g} ms</text>')
            parts.append(f'<text x="{x + bar_w / 2:.2f}" y="{y - 4:.2f}" font-size="10" '
                         f'text-anchor="middle">{v:.2f}</text>')
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def ground_truth_window(gt: Dataset, source_id, input_frames, output_frames, videos=None):
    videos = videos if videos is not None else gt.videos()
    video_id, t0 = parse_window_id(source_id)
    seq = videos.get(video_id)
    start = t0 + input_frames
    if seq is None or start + output_frames > seq.n_frames:
        return None
    return seq.frames(start, start + output_frames)


def evaluate(preds: PredictionSet, gt: Dataset, cfg: MetricConfig = MetricConfig()):
    cfg = cfg.resolved(gt.dims)
    tau = preds.output_frames
    frames = tuple(offset_to_frame(o, gt.frame_interval_ms, tau) for o in cfg.offsets_ms)
    videos = gt.videos()
    windows, unmatched = {}, []
    for sid, _ in preds.items():
        w = ground_truth_window(gt, sid, preds.input_frames, tau, videos)
        if w is None:
            unmatched.append(sid)
        windows[sid] = w
    if unmatched:
        raise ValueError(f"predictions without a ground-truth window: {unmatched}")
    score = vim if cfg.metric == "vim" else vam
    per_sample = {}
    for sid, pred in preds.items():
        per_sample[sid] = tuple(score(pred, windows[sid], f, cfg) for f in frames)
    if per_sample:
        values = tuple(float(v) for v in np.mean(np.array(list(per_sample.values())), axis=0))
    else:
        values = tuple(0.0 for _ in frames)
    return MetricReport(cfg.metric, cfg.offsets_ms, frames, values, float(np.mean(values)), per_sample)


def evaluate_samples(preds, samples, frames, cfg: MetricConfig):
    """Per-frame metric averaged over in-memory predictions and samples."""
    score = vim if cfg.metric == "vim" else vam
    rows = [[score(p, s.target, f, cfg) for f in frames] for p, s in zip(preds, samples)]
    return np.mean(np.array(rows), axis=0)


def zero_velocity_baseline(sample: MotionSample):
    """Repeat the last observed pose and visibility for every forecast frame."""
    inp = sample.input
    coords = np.repeat(inp.coords[-1:], sample.tau, axis=0)
    return PoseSequence(
        coords,
        pad_visibility(inp.visibility[-1], sample.tau),
        frame_interval_ms=inp.frame_interval_ms,
        sequence_id=inp.sequence_id,
        video_id=inp.video_id,
    )
