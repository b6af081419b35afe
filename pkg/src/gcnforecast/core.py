"""Pose sequences, training samples, skeletons and the JSON-lines file formats.

Frame indices are 0-based everywhere in code and on disk.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

FORMAT_VERSION = 1


class DivergenceError(RuntimeError):
    """Non-finite values appeared in activations, losses or gradients."""


class DatasetFormatError(ValueError):
    """Raised for malformed or inconsistent dataset / prediction files."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Global joint coordinates of one person over ``N`` frames.

    ``coords`` has shape (N, J, D) and ``visibility`` shape (N, J) with
    entries in {0, 1}. Both arrays are read-only copies.
    """

    coords: np.ndarray
    visibility: np.ndarray
    frame_interval_ms: float = 1.0
    sequence_id: str = ""
    video_id: str = ""

    def __post_init__(self):
        coords = _frozen(self.coords, np.float64)
        if coords.ndim != 3:
            raise ValueError(f"coords must be (N, J, D), got shape {coords.shape}")
        n, j, d = coords.shape
        if n < 1 or j < 1:
            raise ValueError(f"need N >= 1 and J >= 1, got N={n}, J={j}")
        if d not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {d}")
        vis = np.asarray(self.visibility)
        if vis.shape != (n, j):
            raise ValueError(f"visibility shape {vis.shape} does not match coords {(n, j)}")
        if not np.all((vis == 0) | (vis == 1)):
            raise ValueError("visibility values must be 0 or 1")
        if d == 3 and not np.all(vis == 1):
            raise ValueError("3D sequences must be fully visible")
        if not (self.frame_interval_ms > 0):
            raise ValueError("frame_interval_ms must be positive")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "visibility", _frozen(vis, np.int8))
        object.__setattr__(self, "frame_interval_ms", float(self.frame_interval_ms))

    @classmethod
    def from_coords(cls, coords, visibility=None, **kwargs):
        coords = np.asarray(coords, dtype=np.float64)
        if visibility is None:
            visibility = np.ones(coords.shape[:2], dtype=np.int8)
        return cls(coords, visibility, **kwargs)

    @property
    def n_frames(self):
        return self.coords.shape[0]

    @property
    def n_joints(self):
        return self.coords.shape[1]

    @property
    def dims(self):
        return self.coords.shape[2]

    def __len__(self):
        return self.n_frames

    def frames(self, start, stop):
        """Frames ``start`` up to (excluding) ``stop`` as a new sequence."""
        if not 0 <= start < stop <= self.n_frames:
            raise IndexError(f"window [{start}, {stop}) outside [0, {self.n_frames})")
        return replace(self, coords=self.coords[start:stop], visibility=self.visibility[start:stop])

    def with_coords(self, coords):
        return replace(self, coords=coords)

    def with_visibility(self, visibility):
        return replace(self, visibility=visibility)

    def equals(self, other, atol=0.0):
        return (
            self.coords.shape == other.coords.shape
            and np.allclose(self.coords, other.coords, rtol=0.0, atol=atol)
            and np.array_equal(self.visibility, other.visibility)
            and self.frame_interval_ms == other.frame_interval_ms
            and self.sequence_id == other.sequence_id
            and self.video_id == other.video_id
        )


def concat_sequences(seqs: Sequence[PoseSequence], sequence_id=None):
    """Join sequences end to end along the frame axis."""
    if not seqs:
        raise ValueError("nothing to concatenate")
    first = seqs[0]
    return PoseSequence(
        np.concatenate([s.coords for s in seqs]),
        np.concatenate([s.visibility for s in seqs]),
        frame_interval_ms=first.frame_interval_ms,
        sequence_id=first.sequence_id if sequence_id is None else sequence_id,
        video_id=first.video_id,
    )


@dataclass(frozen=True, eq=False)
class MotionSample:
    """An input window of ``T`` frames and the ``tau`` frames that follow.

    ``center_offset`` and ``scale`` describe the transform already applied
    to both windows: stored = (original - center_offset) * scale.
    """

    input: PoseSequence
    target: PoseSequence
    center_offset: np.ndarray = None
    scale: float = 1.0
    source_id: str = ""
    flagged: bool = False

    def __post_init__(self):
        if self.input.n_joints != self.target.n_joints or self.input.dims != self.target.dims:
            raise ValueError("input and target must share J and D")
        offset = self.center_offset
        if offset is None:
            offset = np.zeros(self.input.dims)
        offset = _frozen(offset, np.float64)
        if offset.shape != (self.input.dims,):
            raise ValueError(f"center_offset must have shape ({self.input.dims},)")
        if not (self.scale > 0):
            raise ValueError("scale must be positive")
        object.__setattr__(self, "center_offset", offset)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def T(self):
        return self.input.n_frames

    @property
    def tau(self):
        return self.target.n_frames

    def full(self):
        """The concatenated input || target sequence."""
        return concat_sequences([self.input, self.target])

    def to_original(self, coords):
        """Map stored (centered, scaled) coordinates back to the original frame."""
        return np.asarray(coords) / self.scale + self.center_offset

    def restored(self):
        """Copy of this sample with the centering/scaling undone."""
        return replace(
            self,
            input=self.input.with_coords(self.to_original(self.input.coords)),
            target=self.target.with_coords(self.to_original(self.target.coords)),
            center_offset=np.zeros(self.input.dims),
            scale=1.0,
        )


@dataclass(frozen=True)
class SkeletonSpec:
    joint_names: tuple
    neck_index: int = 0
    left_right_swap: tuple | None = None
    image_bounds: tuple | None = None

    def __post_init__(self):
        names = tuple(self.joint_names)
        object.__setattr__(self, "joint_names", names)
        n = len(names)
        if n < 1:
            raise ValueError("skeleton needs at least one joint")
        if not 0 <= self.neck_index < n:
            raise ValueError(f"neck_index {self.neck_index} out of range for {n} joints")
        if self.left_right_swap is not None:
            pairs = tuple((int(a), int(b)) for a, b in self.left_right_swap)
            seen = set()
            for a, b in pairs:
                if not (0 <= a < n and 0 <= b < n) or a == b:
                    raise ValueError(f"invalid swap pair ({a}, {b})")
                if a in seen or b in seen:
                    raise ValueError("swap pairs must be disjoint")
                seen.update((a, b))
            object.__setattr__(self, "left_right_swap", pairs)
        if self.image_bounds is not None:
            w, h = self.image_bounds
            if not (w > 0 and h > 0):
                raise ValueError("image bounds must be positive")
            object.__setattr__(self, "image_bounds", (float(w), float(h)))

    @property
    def n_joints(self):
        return len(self.joint_names)

    def swap_permutation(self):
        """Joint index permutation realizing the left/right swap."""
        perm = np.arange(self.n_joints)
        for a, b in self.left_right_swap or ():
            perm[a], perm[b] = b, a
        return perm


@dataclass(frozen=True, eq=False)
class Dataset:
    sequences: tuple
    skeleton: SkeletonSpec
    dims: int = 3
    frame_interval_ms: float = 1.0

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        for s in seqs:
            if s.n_joints != self.skeleton.n_joints:
                raise ValueError(
                    f"sequence {s.sequence_id!r} has {s.n_joints} joints, skeleton has {self.skeleton.n_joints}"
                )
            if s.dims != self.dims:
                raise ValueError(f"sequence {s.sequence_id!r} has D={s.dims}, dataset has D={self.dims}")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self) -> Iterator[PoseSequence]:
        return iter(self.sequences)

    def videos(self):
        """Sequences grouped by video id and concatenated in file order."""
        groups: dict[str, list] = {}
        for s in self.sequences:
            groups.setdefault(s.video_id, []).append(s)
        return {vid: concat_sequences(seqs, sequence_id=vid) for vid, seqs in groups.items()}

    def equals(self, other, atol=0.0):
        return (
            self.skeleton == other.skeleton
            and self.dims == other.dims
            and self.frame_interval_ms == other.frame_interval_ms
            and len(self) == len(other)
            and all(a.equals(b, atol) for a, b in zip(self.sequences, other.sequences))
        )


# ---------------------------------------------------------------- file io


def _header(skeleton, dims, frame_interval_ms):
    return {
        "format_version": FORMAT_VERSION,
        "joints": list(skeleton.joint_names),
        "neck_index": skeleton.neck_index,
        "dims": dims,
        "frame_interval_ms": frame_interval_ms,
        "image_bounds": list(skeleton.image_bounds) if skeleton.image_bounds else None,
        "left_right_swap": [list(p) for p in skeleton.left_right_swap] if skeleton.left_right_swap else None,
    }


def _check_finite(seq):
    if not np.all(np.isfinite(seq.coords)):
        raise ValueError(f"sequence {seq.sequence_id!r} contains non-finite coordinates")


def _seq_record(seq):
    return {
        "sequence_id": seq.sequence_id,
        "video_id": seq.video_id,
        "frames": seq.coords.tolist(),
        "visibility": seq.visibility.astype(int).tolist(),
    }


def _dump(obj):
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def save_dataset(dataset: Dataset, path):
    """Write ``dataset`` as JSON lines: one header record, one record per sequence."""
    for seq in dataset.sequences:
        _check_finite(seq)
    lines = [_dump(_header(dataset.skeleton, dataset.dims, dataset.frame_interval_ms))]
    lines += [_dump(_seq_record(s)) for s in dataset.sequences]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _parse_header(obj, lineno):
    try:
        dims = int(obj["dims"])
        interval = float(obj["frame_interval_ms"])
        skeleton = SkeletonSpec(
            joint_names=tuple(obj["joints"]),
            neck_index=int(obj["neck_index"]),
            left_right_swap=obj.get("left_right_swap"),
            image_bounds=obj.get("image_bounds"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad header: {exc}", lineno) from exc
    if dims not in (2, 3):
        raise DatasetFormatError(f"dims must be 2 or 3, got {dims}", lineno)
    if not interval > 0:
        raise DatasetFormatError("frame_interval_ms must be positive", lineno)
    return skeleton, dims, interval


def _parse_sequence(obj, lineno, skeleton, dims, interval):
    try:
        coords = np.asarray(obj["frames"], dtype=np.float64)
        vis = np.asarray(obj["visibility"])
        sid, vid = str(obj["sequence_id"]), str(obj["video_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad sequence record: {exc}", lineno) from exc
    if coords.ndim != 3 or coords.shape[1] != skeleton.n_joints or coords.shape[2] != dims:
        raise DatasetFormatError(
            f"frames shape {coords.shape} does not match (N, {skeleton.n_joints}, {dims})", lineno
        )
    if vis.shape != coords.shape[:2]:
        raise DatasetFormatError(f"visibility shape {vis.shape} does not match frames", lineno)
    if not np.all((vis == 0) | (vis == 1)):
        raise DatasetFormatError("visibility values must be 0 or 1", lineno)
    try:
        return PoseSequence(coords, vis, interval, sequence_id=sid, video_id=vid)
    except ValueError as exc:
        raise DatasetFormatError(str(exc), lineno) from exc


def _read_records(path):
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"invalid JSON: {exc.msg}", lineno) from exc


def load_dataset(path) -> Dataset:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    records = _read_records(path)
    try:
        lineno, head = next(records)
    except StopIteration:
        raise DatasetFormatError("empty file, header record missing") from None
    skeleton, dims, interval = _parse_header(head, lineno)
    seqs = [_parse_sequence(obj, n, skeleton, dims, interval) for n, obj in records]
    return Dataset(seqs, skeleton, dims, interval)


# ------------------------------------------------------- prediction files


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Forecast windows keyed by ``source_input_id`` (``"<video_id>:<t0>"``)."""

    predictions: tuple
    source_ids: tuple
    skeleton: SkeletonSpec
    dims: int
    frame_interval_ms: float
    input_frames: int
    output_frames: int

    def __post_init__(self):
        object.__setattr__(self, "predictions", tuple(self.predictions))
        object.__setattr__(self, "source_ids", tuple(self.source_ids))
        if len(self.predictions) != len(self.source_ids):
            raise ValueError("one source id per prediction required")
        if len(set(self.source_ids)) != len(self.source_ids):
            raise ValueError("duplicate source ids")

    def __len__(self):
        return len(self.predictions)

    def items(self):
        return zip(self.source_ids, self.predictions)


def window_id(video_id, start):
    return f"{video_id}:{start}"


def parse_window_id(source_id):
    video_id, _, start = source_id.rpartition(":")
    if not video_id or not start.isdigit():
        raise ValueError(f"malformed source id {source_id!r}")
    return video_id, int(start)


def save_predictions(preds: PredictionSet, path):
    head = _header(preds.skeleton, preds.dims, preds.frame_interval_ms)
    head["input_frames"] = preds.input_frames
    head["output_frames"] = preds.output_frames
    lines = [_dump(head)]
    for sid, seq in preds.items():
        _check_finite(seq)
        rec = _seq_record(seq)
        rec["source_input_id"] = sid
        lines.append(_dump(rec))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_predictions(path) -> PredictionSet:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    records = _read_records(path)
    try:
        lineno, head = next(records)
    except StopIteration:
        raise DatasetFormatError("empty file, header record missing") from None
    skeleton, dims, interval = _parse_header(head, lineno)
    try:
        t_in, t_out = int(head["input_frames"]), int(head["output_frames"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"bad prediction header: {exc}", lineno) from exc
    seqs, ids = [], []
    for n, obj in records:
        if "source_input_id" not in obj:
            raise DatasetFormatError("missing source_input_id", n)
        seq = _parse_sequence(obj, n, skeleton, dims, interval)
        if seq.n_frames != t_out:
            raise DatasetFormatError(f"expected {t_out} frames, got {seq.n_frames}", n)
        seqs.append(seq)
        ids.append(str(obj["source_input_id"]))
    try:
        return PredictionSet(seqs, ids, skeleton, dims, interval, t_in, t_out)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc
