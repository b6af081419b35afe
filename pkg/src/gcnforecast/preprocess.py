"""Data processing and augmentation: centering, gap filling, visibility
padding, boundary filtering, windowing and the reverse/flip augmentations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from .core import Dataset, MotionSample, PoseSequence, SkeletonSpec, window_id


class PreprocessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    scale: float | None = None  # multiplier; None: 100 for 3D (m -> cm), 1 for 2D
    interpolate_invisible: bool = True
    boundary_filter: bool = True

    def __post_init__(self):
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")

    def scale_for(self, dims):
        if self.scale is not None:
            return float(self.scale)
        return 100.0 if dims == 3 else 1.0


@dataclass(frozen=True)
class WindowSpec:
    input_frames: int = 16
    output_frames: int = 14
    stride: int = 1
    random_start: bool = False
    num_samples: int | None = None

    def __post_init__(self):
        if self.input_frames < 2:
            raise ValueError("input_frames must be >= 2")
        if self.output_frames < 1:
            raise ValueError("output_frames must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def length(self):
        return self.input_frames + self.output_frames


# ---------------------------------------------------------------- centering


def find_center(seq: PoseSequence, neck_index):
    """Neck position in the first frame where it is visible.

    Returns ``(offset, flagged)``; when the neck is never visible the
    centroid of all visible joints is used and ``flagged`` is True.
    """
    vis = seq.visibility[:, neck_index] == 1
    if vis.any():
        return seq.coords[int(np.argmax(vis)), neck_index].copy(), False
    mask = seq.visibility == 1
    if mask.any():
        offset = seq.coords[mask].mean(axis=0)
    else:
        offset = seq.coords.reshape(-1, seq.dims).mean(axis=0)
    warnings.warn(
        f"neck joint never visible in {seq.sequence_id!r}; centering on the visible-joint centroid",
        PreprocessWarning,
        stacklevel=3,
    )
    return offset, True


def center_and_scale(seq: PoseSequence, spec: SkeletonSpec, cfg: PreprocessConfig = PreprocessConfig()):
    offset, _ = find_center(seq, spec.neck_index)
    scale = cfg.scale_for(seq.dims)
    return seq.with_coords((seq.coords - offset) * scale), offset, scale


def uncenter(seq: PoseSequence, offset, scale):
    return seq.with_coords(seq.coords / scale + np.asarray(offset))


def prepare_sample(sample: MotionSample, spec: SkeletonSpec, cfg: PreprocessConfig = PreprocessConfig()):
    """Gap-fill the input window, then center both windows on the input's first neck position."""
    if sample.scale != 1.0 or np.any(sample.center_offset):
        sample = sample.restored()
    inp = sample.input
    flagged = sample.flagged
    if cfg.interpolate_invisible:
        inp, missing = fill_gaps(inp)
        flagged = flagged or missing
    offset, no_neck = find_center(inp, spec.neck_index)
    scale = cfg.scale_for(inp.dims)
    return replace(
        sample,
        input=inp.with_coords((inp.coords - offset) * scale),
        target=sample.target.with_coords((sample.target.coords - offset) * scale),
        center_offset=offset,
        scale=scale,
        flagged=flagged or no_neck,
    )


# ------------------------------------------------------------ gap filling


def fill_gaps(seq: PoseSequence):
    """Interpolate invisible coordinates; returns ``(seq, any_joint_never_visible)``."""
    coords = np.array(seq.coords)
    vis = seq.visibility == 1
    missing = False
    for j in range(seq.n_joints):
        idx = np.flatnonzero(vis[:, j])
        if idx.size == 0:
            missing = True
            continue
        coords[: idx[0], j] = coords[idx[0], j]
        coords[idx[-1] + 1 :, j] = coords[idx[-1], j]
        for t, t_end in zip(idx[:-1], idx[1:]):
            m = t_end - t
            if m < 2:
                continue
            i = np.arange(1, m)[:, None]
            coords[t + 1 : t_end, j] = i / m * (coords[t_end, j] - coords[t, j]) + coords[t, j]
    return seq.with_coords(coords), missing


def interpolate_invisible(seq: PoseSequence):
    """Fill coordinates of invisible frames; visibility flags are kept.

    Interior gaps are filled linearly between the bracketing visible frames,
    leading and trailing gaps repeat the nearest visible frame. A joint that
    is never visible is left untouched (and a warning is issued).
    """
    out, missing = fill_gaps(seq)
    if missing:
        warnings.warn(
            f"some joints of {seq.sequence_id!r} are never visible; left as-is",
            PreprocessWarning,
            stacklevel=2,
        )
    return out


# ------------------------------------------------------------- visibility


def pad_visibility(last_visibility, tau):
    v = np.asarray(last_visibility, dtype=np.int8)
    return np.repeat(v[None, :], tau, axis=0)


def boundary_filter(pred: PoseSequence, bounds):
    """Mark predicted 2D joints outside ``[0, w) x [0, h)`` invisible."""
    if pred.dims != 2:
        raise ValueError("boundary filtering only applies to 2D predictions")
    if bounds is None:
        raise ValueError("image bounds are required for boundary filtering")
    w, h = bounds
    x, y = pred.coords[..., 0], pred.coords[..., 1]
    outside = (x < 0) | (x >= w) | (y < 0) | (y >= h)
    return pred.with_visibility(np.where(outside, 0, pred.visibility))


# -------------------------------------------------------------- windowing


def valid_starts(length, spec: WindowSpec):
    return max(0, length - spec.length + 1)


def extend_and_window(dataset: Dataset, spec: WindowSpec = WindowSpec(), rng=None) -> Iterator[MotionSample]:
    """Concatenate sequences per video and cut ``T + tau`` windows.

    With ``spec.random_start`` the start frames are drawn uniformly (with
    replacement) over every valid (video, start) pair, ``spec.num_samples``
    times; otherwise all starts are enumerated with ``spec.stride``.
    """
    videos = []
    for vid, seq in dataset.videos().items():
        if valid_starts(seq.n_frames, spec) == 0:
            warnings.warn(
                f"video {vid!r} has {seq.n_frames} frames, fewer than {spec.length}; skipped",
                PreprocessWarning,
                stacklevel=2,
            )
            continue
        videos.append(seq)

    def cut(seq, t0):
        return MotionSample(
            seq.frames(t0, t0 + spec.input_frames),
            seq.frames(t0 + spec.input_frames, t0 + spec.length),
            source_id=window_id(seq.video_id, t0),
        )

    if not spec.random_start:
        for seq in videos:
            for t0 in range(0, valid_starts(seq.n_frames, spec), spec.stride):
                yield cut(seq, t0)
        return

    if rng is None:
        raise ValueError("random window starts need an rng")
    counts = np.array([valid_starts(s.n_frames, spec) for s in videos])
    total = int(counts.sum())
    if total == 0:
        return
    bounds = np.cumsum(counts)
    for k in rng.integers(0, total, size=spec.num_samples or total):
        v = int(np.searchsorted(bounds, k, side="right"))
        t0 = int(k - (bounds[v - 1] if v else 0))
        yield cut(videos[v], t0)


# ----------------------------------------------------------- augmentation


def reverse_augment(sample: MotionSample):
    full = sample.full()
    rev = full.with_coords(full.coords[::-1]).with_visibility(full.visibility[::-1])
    t = sample.T
    return replace(sample, input=rev.frames(0, t), target=rev.frames(t, rev.n_frames))


def flip_augment(sample: MotionSample, spec: SkeletonSpec, axis=0):
    """Negate one (centered) coordinate axis and swap left/right joints."""
    perm = spec.swap_permutation()

    def flip(seq):
        c = np.array(seq.coords[:, perm])
        c[..., axis] = -c[..., axis]
        return seq.with_coords(c).with_visibility(seq.visibility[:, perm])

    return replace(sample, input=flip(sample.input), target=flip(sample.target))
