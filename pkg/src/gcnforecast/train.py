"""Training: smooth-L1 + hard-joint mining loss, curriculum masks, Adam and the epoch loop."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import Dataset, DivergenceError, SkeletonSpec
from .dct import make_basis
from .gcnet import (
    GcnConfig,
    GcnModel,
    backward,
    completed_trajectory,
    forward,
    init_model,
    node_features_array,
    readout_matrix,
)
from .metrics import MetricConfig, offset_to_frame, vam, vim
from .preprocess import (
    PreprocessConfig,
    WindowSpec,
    extend_and_window,
    prepare_sample,
    reverse_augment,
)


@dataclass(frozen=True)
class LossConfig:
    ohkm_k: int | None = None  # None: 6 for 3D, 8 for 2D
    ohkm_enabled: bool = True
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        if self.ohkm_k is not None and self.ohkm_k < 1:
            raise ValueError("ohkm_k must be >= 1")
        if not self.smooth_l1_beta > 0:
            raise ValueError("smooth_l1_beta must be positive")

    def k_for(self, dims, joints):
        k = self.ohkm_k if self.ohkm_k is not None else (6 if dims == 3 else 8)
        if k > joints:
            raise ValueError(f"ohkm_k={k} exceeds the number of joints ({joints})")
        return k


@dataclass(frozen=True)
class CurriculumConfig:
    epochs_per_frame: int = 2
    enabled: bool = True

    def __post_init__(self):
        if self.epochs_per_frame < 1:
            raise ValueError("epochs_per_frame must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    lr_decay: float = 0.95
    input_repr: str | None = None  # None: velocity for 3D, position for 2D
    reverse_augment: bool | None = None  # None: on for 3D, off for 2D
    flip_augment: bool | None = None  # None: on for 3D, off for 2D
    flip_prob: float = 0.5
    flip_axis: int = 0
    short_term_frames: int | None = None
    short_term_observed: bool = False  # keep frames 1..T in a short-term model's loss

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.input_repr not in (None, "position", "velocity"):
            raise ValueError(f"unknown input_repr {self.input_repr!r}")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")

    def resolved(self, dims):
        three = dims == 3
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            lr_decay=self.lr_decay,
            input_repr=self.input_repr or ("velocity" if three else "position"),
            reverse_augment=three if self.reverse_augment is None else self.reverse_augment,
            flip_augment=three if self.flip_augment is None else self.flip_augment,
            flip_prob=self.flip_prob,
            flip_axis=self.flip_axis,
            short_term_frames=self.short_term_frames,
            short_term_observed=self.short_term_observed,
        )


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    base_lr: float = 1e-3
    decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_metric: float | None
    lr: float
    active_frames: int
    seconds: float


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    seed: int | None = None

    @property
    def losses(self):
        return [e.loss for e in self.epochs]

    def to_dict(self):
        return {"seed": self.seed, "best_epoch": self.best_epoch, "epochs": [asdict(e) for e in self.epochs]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "val_metric", "lr", "active_frames", "seconds"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.loss), "" if e.val_metric is None else repr(e.val_metric),
                        repr(e.lr), e.active_frames, f"{e.seconds:.3f}"])
        return buf.getvalue()


class TrainingDiverged(DivergenceError):
    def __init__(self, message, model=None, report=None):
        super().__init__(message)
        self.model = model
        self.report = report


# ------------------------------------------------------------------- loss


def smooth_l1(pred, target=0.0, beta=1.0):
    e = np.abs(np.asarray(pred, dtype=np.float64) - target)
    return np.where(e < beta, 0.5 * e**2 / beta, e - 0.5 * beta)


def smooth_l1_grad(e, beta=1.0):
    """Derivative of smooth-L1 w.r.t. the signed error ``e``."""
    return np.where(np.abs(e) < beta, e / beta, np.sign(e))


def _joint_losses(pred, target, weights, beta):
    """Per-joint weighted mean of smooth-L1 over frames and channels.

    ``weights`` has shape (..., N, J). Returns ``(losses, counts)`` of shape (..., J).
    """
    d = pred.shape[-1]
    elem = smooth_l1(pred, target, beta).sum(axis=-1)
    counts = weights.sum(axis=-2) * d
    sums = (elem * weights).sum(axis=-2)
    return np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0), counts


def joint_losses(pred, target, frame_mask, beta=1.0):
    """Per-joint loss of one forecast; invisible target joints are excluded."""
    p = getattr(pred, "coords", pred)
    t = getattr(target, "coords", target)
    p, t = np.asarray(p, dtype=np.float64), np.asarray(t, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {t.shape}")
    mask = np.asarray(frame_mask, dtype=np.float64)
    if mask.shape != (p.shape[0],):
        raise ValueError("frame mask length must equal the number of frames")
    if not mask.any():
        raise ValueError("frame mask selects no frames")
    vis = getattr(target, "visibility", np.ones(p.shape[:2]))
    losses, _ = _joint_losses(p, t, mask[:, None] * vis, beta)
    return losses


def _top_k(losses, k):
    # stable sort on the negated losses puts lower joint indices first among ties
    return np.argsort(-losses, axis=-1, kind="stable")[..., :k]


def ohkm(losses, k):
    """Mean of the ``k`` largest joint losses."""
    losses = np.asarray(losses, dtype=np.float64)
    if not 1 <= k <= losses.shape[-1]:
        raise ValueError(f"k must lie in [1, {losses.shape[-1]}], got {k}")
    idx = _top_k(losses, k)
    return np.take_along_axis(losses, idx, axis=-1).mean(axis=-1)


def masked_loss(pred, target, weights, k=None, beta=1.0):
    """Batch loss and its gradient w.r.t. ``pred``.

    ``pred``/``target`` are (B, N, J, D), ``weights`` (B, N, J) zero/one.
    Each sample's loss is the mean over its ``k`` hardest joints (all joints
    when ``k`` is None); the batch loss is the mean over samples.
    """
    b, _, j, d = pred.shape
    losses, counts = _joint_losses(pred, target, weights, beta)
    k = j if k is None else k
    idx = _top_k(losses, k)
    selected = np.zeros((b, j))
    np.put_along_axis(selected, idx, 1.0, axis=-1)
    loss = float((losses * selected).sum() / (k * b))
    coef = np.divide(selected, counts, out=np.zeros_like(selected), where=counts > 0) / (k * b)
    e = pred - target
    grad = smooth_l1_grad(e, beta) * (weights * coef[:, None, :])[..., None]
    return loss, grad, losses


# ------------------------------------------------------------- schedules


def curriculum_mask(epoch, T, tau, cfg: CurriculumConfig = CurriculumConfig()):
    """0/1 vector over the T + tau frames counted in the loss at ``epoch`` (0-based)."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    mask = np.ones(T + tau, dtype=np.int8)
    if cfg.enabled:
        t = np.arange(1, tau + 1)
        mask[T:] = epoch >= cfg.epochs_per_frame * t
    return mask


def lr_at(epoch, base_lr=1e-3, decay=0.95):
    return base_lr * decay**epoch


def adam_step(params, grads, state: OptimizerState, lr=None):
    """One bias-corrected Adam update, applied in place to ``params``."""
    lr = state.base_lr if lr is None else lr
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ------------------------------------------------------------------ loop


@dataclass(frozen=True)
class ModelOptions:
    hidden_channels: int = 256
    num_blocks: int = 12
    dropout_rate: float = 0.5
    node_mode: str = "one_node_per_joint"
    coeffs: int | None = None  # None: T + tau
    normalization: bool = True
    norm_axes: str = "batch_node"

    def __post_init__(self):
        # fail at config time rather than when the network is built
        self.gcn_config(1, 3, 1)

    def gcn_config(self, joints, dims, n_total):
        return GcnConfig(
            joints=joints,
            dims=dims,
            coeffs=self.coeffs or n_total,
            hidden_channels=self.hidden_channels,
            num_blocks=self.num_blocks,
            dropout_rate=self.dropout_rate,
            node_mode=self.node_mode,
            normalization=self.normalization,
            norm_axes=self.norm_axes,
        )


@dataclass(frozen=True)
class TrainSetup:
    """Everything :func:`fit` needs besides data and a seed."""

    model: ModelOptions = ModelOptions()
    train: TrainConfig = TrainConfig()
    loss: LossConfig = LossConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    window: WindowSpec = WindowSpec()
    preprocess: PreprocessConfig = PreprocessConfig()
    metric: MetricConfig = MetricConfig()


def _stack(samples):
    x = np.stack([s.input.coords for s in samples])
    y = np.stack([np.concatenate([s.input.coords, s.target.coords]) for s in samples])
    vis = np.stack([np.concatenate([s.input.visibility, s.target.visibility]) for s in samples])
    return x, y, vis.astype(np.float64)


def _flip_arrays(x, y, vis, which, perm, axis):
    x, y, vis = x.copy(), y.copy(), vis.copy()
    x[which] = x[which][:, :, perm]
    y[which] = y[which][:, :, perm]
    vis[which] = vis[which][:, :, perm]
    x[which, ..., axis] *= -1
    y[which, ..., axis] *= -1
    return x, y, vis


def validation_metric(model, val_samples, skeleton, setup: TrainSetup, input_repr):
    """Average metric over the configured offsets, in original units."""
    from .predict import forecast_batch

    if not val_samples:
        return None
    cfg = setup.metric.resolved(val_samples[0].input.dims)
    tau = setup.window.output_frames
    interval = val_samples[0].input.frame_interval_ms
    frames = [offset_to_frame(o, interval, tau) for o in cfg.offsets_ms]
    score = vim if cfg.metric == "vim" else vam
    preds = forecast_batch(model, [s.input for s in val_samples], skeleton, tau, setup.preprocess, input_repr)
    vals = [[score(p, s.target, f, cfg) for f in frames] for p, s in zip(preds, val_samples)]
    return float(np.mean(vals))


def fit(
    samples,
    skeleton: SkeletonSpec,
    setup: TrainSetup = TrainSetup(),
    seed=0,
    val_samples=None,
    model: GcnModel | None = None,
    callback=None,
):
    """Train on raw (uncentered) motion samples.

    Returns ``(model, report)``. With ``val_samples`` the returned model is
    the epoch with the lowest validation metric, otherwise the last one.
    ``callback(epoch, batch_indices, loss_mask)`` is called before each step.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no training samples")
    dims, joints = samples[0].input.dims, samples[0].input.n_joints
    T, tau = samples[0].T, samples[0].tau
    n_total = T + tau
    tr = setup.train.resolved(dims)
    k = setup.loss.k_for(dims, joints) if setup.loss.ohkm_enabled else None
    if tr.short_term_frames is not None and not 1 <= tr.short_term_frames <= tau:
        raise ValueError(f"short_term_frames must lie in [1, {tau}]")

    rng = np.random.default_rng(seed)
    if model is None:
        model = init_model(setup.model.gcn_config(joints, dims, n_total), seed)
    cfg = model.config
    if (cfg.joints, cfg.dims) != (joints, dims):
        raise ValueError("model shape does not match the data")
    model.info.update(
        input_repr=tr.input_repr,
        scale=setup.preprocess.scale_for(dims),
        input_frames=T,
        output_frames=tau,
        short_term_frames=tr.short_term_frames,
    )
    basis = make_basis(n_total, cfg.coeffs)
    readout = readout_matrix(basis, T, tr.input_repr)

    pool = list(samples)
    if tr.reverse_augment:
        pool += [reverse_augment(s) for s in samples]
    pool = [prepare_sample(s, skeleton, setup.preprocess) for s in pool]
    x_all, y_all, vis_all = _stack(pool)
    perm = skeleton.swap_permutation()
    val_samples = list(val_samples or [])

    state = OptimizerState(base_lr=tr.lr, decay=tr.lr_decay)
    report = TrainReport(seed=seed)
    best_model, best_val = None, np.inf
    for epoch in range(tr.epochs):
        start = time.perf_counter()
        lr = lr_at(epoch, tr.lr, tr.lr_decay)
        mask = curriculum_mask(epoch, T, tau, setup.curriculum).astype(np.float64)
        if tr.short_term_frames is not None:
            mask[T + tr.short_term_frames :] = 0.0
            if not tr.short_term_observed:
                mask[:T] = 0.0
        order = rng.permutation(len(pool))
        flips = rng.random(len(pool)) < tr.flip_prob
        total, seen = 0.0, 0
        # a short-term run has no active frame until its first forecast frame unlocks
        batches = range(0, len(order), tr.batch_size) if mask.any() else ()
        for lo in batches:
            idx = order[lo : lo + tr.batch_size]
            if callback is not None:
                callback(epoch, idx, mask)
            x, y, vis = x_all[idx], y_all[idx], vis_all[idx]
            if tr.flip_augment:
                x, y, vis = _flip_arrays(x, y, vis, flips[idx], perm, tr.flip_axis)
            feats = node_features_array(x, basis, cfg.node_mode, tr.input_repr)
            try:
                out, cache = forward(model, feats, "train", rng)
            except DivergenceError as exc:
                raise TrainingDiverged(str(exc), best_model or model, report) from exc
            pos = completed_trajectory(out, x, basis, tr.input_repr)
            loss, dpos, _ = masked_loss(pos, y, vis * mask[None, :, None], k, setup.loss.smooth_l1_beta)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", best_model or model, report)
            dcoef = np.einsum("nl,bnjd->bjdl", readout, dpos).reshape(out.shape)
            grads = backward(model, cache, dcoef)
            try:
                adam_step(model.params, grads, state, lr)
            except DivergenceError as exc:
                raise TrainingDiverged(str(exc), best_model or model, report) from exc
            model.version += 1
            total += loss * len(idx)
            seen += len(idx)
        val = validation_metric(model, val_samples, skeleton, setup, tr.input_repr)
        report.epochs.append(
            EpochRecord(epoch, total / seen if seen else 0.0, val, lr, int(mask.sum()), time.perf_counter() - start)
        )
        if val is not None and val < best_val:
            best_val, best_model = val, model.copy()
            report.best_epoch = epoch
    if best_model is not None:
        return best_model, report
    return model, report


def train(dataset: Dataset, setup: TrainSetup = TrainSetup(), seed=0, val_dataset=None, model=None):
    """Window ``dataset`` and run :func:`fit`.

    Random window starts are drawn from a generator seeded with ``seed``;
    validation windows always enumerate every start.
    """
    window_rng = np.random.default_rng([seed, 1]) if setup.window.random_start else None
    samples = list(extend_and_window(dataset, setup.window, window_rng))
    if not samples:
        raise ValueError("dataset yields no training windows")
    val_window = replace(setup.window, random_start=False, num_samples=None)
    val = list(extend_and_window(val_dataset, val_window)) if val_dataset is not None else None
    return fit(samples, dataset.skeleton, setup, seed, val, model)


def train_short_term(dataset, setup: TrainSetup = TrainSetup(), seed=0, val_dataset=None, k_frames=4):
    """Same pipeline with the loss limited to the first ``k_frames`` forecast frames."""
    if k_frames > setup.window.output_frames:
        raise ValueError("k_frames must not exceed the forecast length")
    setup = replace(setup, train=replace(setup.train, short_term_frames=k_frames))
    return train(dataset, setup, seed, val_dataset)
