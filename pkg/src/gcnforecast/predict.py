"""End-to-end inference and short/long-term fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, PoseSequence, PredictionSet, SkeletonSpec
from .dct import make_basis
from .gcnet import GcnModel, completed_trajectory, forward, node_features_array
from .preprocess import (
    PreprocessConfig,
    WindowSpec,
    boundary_filter,
    extend_and_window,
    fill_gaps,
    find_center,
    pad_visibility,
)


@dataclass(frozen=True)
class FusionConfig:
    short_frames: int = 4
    short_model: str | None = None
    long_model: str | None = None
    extra_models: tuple = ()

    def __post_init__(self):
        if self.short_frames < 1:
            raise ValueError("short_frames must be >= 1")
        object.__setattr__(self, "extra_models", tuple(self.extra_models))


def forecast_batch(
    model: GcnModel,
    inputs,
    skeleton: SkeletonSpec,
    tau,
    preprocess: PreprocessConfig = PreprocessConfig(),
    input_repr="position",
    chunk=512,
):
    """Forecast ``tau`` frames after each raw input window, in original units."""
    inputs = list(inputs)
    if not inputs:
        return []
    t = inputs[0].n_frames
    if any(s.n_frames != t for s in inputs):
        raise ValueError("all input windows must have the same length")
    basis = make_basis(t + tau, model.config.coeffs)
    xs, offsets = [], []
    scale = preprocess.scale_for(inputs[0].dims)
    for seq in inputs:
        if preprocess.interpolate_invisible:
            seq, _ = fill_gaps(seq)
        offset, _ = find_center(seq, skeleton.neck_index)
        xs.append((seq.coords - offset) * scale)
        offsets.append(offset)
    x = np.stack(xs)
    coords = np.empty((len(inputs), tau) + x.shape[2:])
    for lo in range(0, len(inputs), chunk):
        xb = x[lo : lo + chunk]
        feats = node_features_array(xb, basis, model.config.node_mode, input_repr)
        out, _ = forward(model, feats, "eval")
        coords[lo : lo + chunk] = completed_trajectory(out, xb, basis, input_repr)[:, t:]
    preds = []
    for seq, c, offset in zip(inputs, coords, offsets):
        pred = PoseSequence(
            c / scale + offset,
            pad_visibility(seq.visibility[-1], tau),
            frame_interval_ms=seq.frame_interval_ms,
            sequence_id=seq.sequence_id,
            video_id=seq.video_id,
        )
        if pred.dims == 2 and preprocess.boundary_filter and skeleton.image_bounds:
            pred = boundary_filter(pred, skeleton.image_bounds)
        preds.append(pred)
    return preds


def run_inference(model, raw_input: PoseSequence, skeleton, tau=14, preprocess=PreprocessConfig(), input_repr="position"):
    """Gap-fill, center/scale, run the network, undo the transform, pad visibility, filter."""
    return forecast_batch(model, [raw_input], skeleton, tau, preprocess, input_repr)[0]


def forecast_dataset(
    model,
    dataset: Dataset,
    window: WindowSpec = WindowSpec(),
    preprocess=PreprocessConfig(),
    input_repr="position",
):
    """Predictions for every enumerated window of ``dataset``."""
    spec = WindowSpec(window.input_frames, window.output_frames, window.stride)
    samples = list(extend_and_window(dataset, spec))
    preds = forecast_batch(
        model, [s.input for s in samples], dataset.skeleton, window.output_frames, preprocess, input_repr
    )
    return PredictionSet(
        preds,
        [s.source_id for s in samples],
        dataset.skeleton,
        dataset.dims,
        dataset.frame_interval_ms,
        window.input_frames,
        window.output_frames,
    )


def fuse(short_pred: PoseSequence, long_pred: PoseSequence, cfg: FusionConfig = FusionConfig()):
    """First ``cfg.short_frames`` frames from the short-term model, the rest from the long-term one."""
    if short_pred.coords.shape != long_pred.coords.shape:
        raise ValueError("short and long predictions must have the same shape")
    k = cfg.short_frames
    if k > short_pred.n_frames:
        raise ValueError(f"short_frames {k} exceeds forecast length {short_pred.n_frames}")
    coords = np.concatenate([short_pred.coords[:k], long_pred.coords[k:]])
    vis = np.concatenate([short_pred.visibility[:k], long_pred.visibility[k:]])
    return long_pred.with_coords(coords).with_visibility(vis)


def fuse_sets(short: PredictionSet, long: PredictionSet, cfg: FusionConfig = FusionConfig()):
    if short.source_ids != long.source_ids:
        raise ValueError("short and long prediction sets cover different windows")
    fused = [fuse(s, l, cfg) for s, l in zip(short.predictions, long.predictions)]
    return PredictionSet(
        fused, long.source_ids, long.skeleton, long.dims, long.frame_interval_ms, long.input_frames, long.output_frames
    )


def average_predictions(preds):
    """Coordinate-wise mean of several models' forecasts; visibility by majority (ties visible)."""
    preds = list(preds)
    if not preds:
        raise ValueError("nothing to average")
    coords = np.mean([p.coords for p in preds], axis=0)
    vis = (2 * np.sum([p.visibility for p in preds], axis=0) >= len(preds)).astype(np.int8)
    return preds[0].with_coords(coords).with_visibility(vis)


@dataclass
class FusedReport:
    offsets_ms: tuple
    values: tuple
    sources: tuple
    average: float

    def to_dict(self):
        return {
            "offsets_ms": list(self.offsets_ms),
            "values": list(self.values),
            "sources": list(self.sources),
            "average": self.average,
        }


def fuse_reports(reports):
    """Best (lowest) value per offset column across named reports, with its source.

    An evaluation summary only; no prediction is produced.
    """
    reports = dict(reports)
    if not reports:
        raise ValueError("no reports to fuse")
    names = list(reports)
    offsets = tuple(reports[names[0]].offsets_ms)
    for name in names[1:]:
        if tuple(reports[name].offsets_ms) != offsets:
            raise ValueError(f"report {name!r} uses different offsets")
    values, sources = [], []
    for i in range(len(offsets)):
        best = min(names, key=lambda n: reports[n].values[i])
        values.append(reports[best].values[i])
        sources.append(best)
    return FusedReport(offsets, tuple(values), tuple(sources), float(np.mean(values)))

