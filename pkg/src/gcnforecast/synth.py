"""Seeded synthetic motion: a root drifting with smooth random acceleration
and limbs oscillating sinusoidally around a fixed template."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, PoseSequence, SkeletonSpec

JOINTS_13 = (
    "neck",
    "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow",
    "l_wrist", "r_wrist",
    "l_hip", "r_hip",
    "l_knee", "r_knee",
    "l_ankle", "r_ankle",
)
JOINTS_14 = ("neck", "head") + JOINTS_13[1:]

# template offsets from the neck in meters: x lateral, y forward, z up
_TEMPLATE = {
    "neck": (0.0, 0.0, 0.0),
    "head": (0.0, 0.02, 0.22),
    "l_shoulder": (0.19, 0.0, -0.02),
    "r_shoulder": (-0.19, 0.0, -0.02),
    "l_elbow": (0.24, 0.0, -0.30),
    "r_elbow": (-0.24, 0.0, -0.30),
    "l_wrist": (0.26, 0.05, -0.55),
    "r_wrist": (-0.26, 0.05, -0.55),
    "l_hip": (0.11, 0.0, -0.55),
    "r_hip": (-0.11, 0.0, -0.55),
    "l_knee": (0.12, 0.02, -0.98),
    "r_knee": (-0.12, 0.02, -0.98),
    "l_ankle": (0.12, -0.02, -1.40),
    "r_ankle": (-0.12, -0.02, -1.40),
}
# how strongly each joint oscillates relative to the amplitude range
_LIMB_GAIN = {"neck": 0.0, "head": 0.3, "l_shoulder": 0.3, "r_shoulder": 0.3, "l_hip": 0.3, "r_hip": 0.3,
              "l_elbow": 0.7, "r_elbow": 0.7, "l_knee": 0.7, "r_knee": 0.7,
              "l_wrist": 1.0, "r_wrist": 1.0, "l_ankle": 1.0, "r_ankle": 1.0}

PIXELS_PER_METER = 100.0


@dataclass(frozen=True)
class SynthSpec:
    num_sequences: int = 16
    frames: int = 60
    joints: int | None = None  # None: 13 for 3D, 14 for 2D
    dims: int = 3
    sequences_per_video: int = 1
    speed_range: tuple = (0.0, 0.06)  # meters per frame
    accel_std: float = 0.002  # meters per frame^2
    amplitude_range: tuple = (0.02, 0.12)  # meters
    frequency_range: tuple = (0.03, 0.10)  # cycles per frame
    occlusion_rate: float = 0.0
    occlusion_mean_length: float = 3.0
    image_bounds: tuple = (640.0, 480.0)
    frame_interval_ms: float | None = None  # None: 64.3 for 3D, 40 for 2D
    seed: int = 0

    def __post_init__(self):
        if self.num_sequences < 0 or self.frames < 1 or self.sequences_per_video < 1:
            raise ValueError("sequence counts and lengths must be positive")
        if self.dims not in (2, 3):
            raise ValueError("dims must be 2 or 3")
        if self.joints is not None and self.joints < 1:
            raise ValueError("joints must be positive")
        if not 0 <= self.occlusion_rate < 1:
            raise ValueError("occlusion_rate must lie in [0, 1)")
        if self.occlusion_mean_length < 1:
            raise ValueError("occlusion_mean_length must be >= 1")

    @property
    def interval(self):
        if self.frame_interval_ms is not None:
            return float(self.frame_interval_ms)
        return 64.3 if self.dims == 3 else 40.0


def default_skeleton(joints=13, dims=3, image_bounds=None):
    if joints == 13:
        names = JOINTS_13
    elif joints == 14:
        names = JOINTS_14
    else:
        names = tuple(["neck"] + [f"joint{i}" for i in range(1, joints)])
    index = {n: i for i, n in enumerate(names)}
    swap = [(index[n], index["r_" + n[2:]]) for n in names if n.startswith("l_") and "r_" + n[2:] in index]
    return SkeletonSpec(
        joint_names=names,
        neck_index=0,
        left_right_swap=swap or None,
        image_bounds=tuple(image_bounds) if dims == 2 and image_bounds is not None else None,
    )


def _template(names, rng):
    offsets, gains = [], []
    for n in names:
        if n in _TEMPLATE:
            offsets.append(_TEMPLATE[n])
            gains.append(_LIMB_GAIN[n])
        else:
            offsets.append(rng.uniform(-0.3, 0.3, size=3) * (1.0, 0.3, 3.0))
            gains.append(0.7)
    return np.array(offsets, dtype=np.float64), np.array(gains)


def _root_path(n, spec, rng):
    heading = rng.uniform(0, 2 * np.pi)
    speed = rng.uniform(*spec.speed_range)
    vel = speed * np.array([np.cos(heading), np.sin(heading), 0.0])
    accel = np.zeros(3)
    pos = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), 1.45])
    out = np.empty((n, 3))
    for t in range(n):
        out[t] = pos
        if spec.accel_std > 0:
            accel = 0.9 * accel + rng.normal(0.0, spec.accel_std, size=3) * (1.0, 1.0, 0.2)
            vel = vel + accel
        pos = pos + vel
    return out


def _limbs(n, template, gains, spec, rng):
    j = len(template)
    amp = rng.uniform(*spec.amplitude_range, size=(j, 3)) * gains[:, None]
    freq = rng.uniform(*spec.frequency_range, size=(j, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(j, 3))
    t = np.arange(n)[:, None, None]
    return template[None] + amp[None] * np.sin(2 * np.pi * freq[None] * t + phase[None])


def _occlusion(n, j, spec, rng):
    vis = np.ones((n, j), dtype=np.int8)
    if spec.occlusion_rate == 0:
        return vis
    start_p = spec.occlusion_rate / spec.occlusion_mean_length
    for jj in range(j):
        t = 0
        while t < n:
            if rng.random() < start_p:
                length = int(rng.geometric(1.0 / spec.occlusion_mean_length))
                vis[t : t + length, jj] = 0
                t += length
            else:
                t += 1
    return vis


def generate(spec: SynthSpec = SynthSpec()):
    rng = np.random.default_rng(spec.seed)
    joints = spec.joints or (13 if spec.dims == 3 else 14)
    skeleton = default_skeleton(joints, spec.dims, spec.image_bounds)
    template, gains = _template(skeleton.joint_names, rng)
    n_videos = -(-spec.num_sequences // spec.sequences_per_video)
    seqs = []
    for v in range(n_videos):
        count = min(spec.sequences_per_video, spec.num_sequences - v * spec.sequences_per_video)
        n = spec.frames * count
        coords = _root_path(n, spec, rng)[:, None, :] + _limbs(n, template, gains, spec, rng)
        vis = np.ones((n, joints), dtype=np.int8)
        if spec.dims == 2:
            w, h = spec.image_bounds
            start = np.array([rng.uniform(0.2, 0.8) * w, rng.uniform(0.3, 0.7) * h])
            root0 = coords[0, 0, :2]
            # x stays horizontal, height maps to image rows growing downward
            coords = np.stack(
                [(coords[..., 0] - root0[0]) * PIXELS_PER_METER + start[0],
                 -(coords[..., 2] - coords[0, 0, 2]) * PIXELS_PER_METER + start[1]
                 + (coords[..., 1] - root0[1]) * 0.3 * PIXELS_PER_METER],
                axis=-1,
            )
            vis = _occlusion(n, joints, spec, rng)
            x, y = coords[..., 0], coords[..., 1]
            vis[(x < 0) | (x >= w) | (y < 0) | (y >= h)] = 0
            coords = np.where(vis[..., None] == 1, coords, 0.0)
        for k in range(count):
            sl = slice(k * spec.frames, (k + 1) * spec.frames)
            seqs.append(
                PoseSequence(
                    coords[sl],
                    vis[sl],
                    frame_interval_ms=spec.interval,
                    sequence_id=f"video{v:03d}_{k}",
                    video_id=f"video{v:03d}",
                )
            )
    return Dataset(seqs, skeleton, spec.dims, spec.interval)
