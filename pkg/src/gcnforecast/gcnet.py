"""Residual graph-convolution network over DCT trajectory features.

Every graph layer computes ``A @ (H @ W)`` with a dense learnable
adjacency ``A`` (plus a bias where no normalization follows). Hidden layers are followed by per-feature normalization,
tanh and dropout; blocks of two hidden layers carry a residual connection,
and the network output is added to its input features.

The backward pass is written out by hand; all arrays are float64.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from .core import DivergenceError, MotionSample, PoseSequence
from .dct import DctBasis, decode_coords, encode_coords

CHECKPOINT_VERSION = 1

NODE_MODES = ("one_node_per_joint", "one_node_per_channel")
INPUT_REPRS = ("position", "velocity")
NORM_AXES = ("batch_node", "batch")


class CheckpointError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class GcnConfig:
    joints: int
    dims: int = 3
    coeffs: int = 30
    hidden_channels: int = 256
    num_blocks: int = 12
    dropout_rate: float = 0.5
    node_mode: str = "one_node_per_joint"
    normalization: bool = True
    norm_momentum: float = 0.1
    norm_eps: float = 1e-5
    norm_axes: str = "batch_node"  # "batch_node": stats per feature; "batch": per (node, feature)

    def __post_init__(self):
        if self.joints < 1 or self.coeffs < 1:
            raise ValueError("joints and coeffs must be positive")
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be >= 1")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.node_mode not in NODE_MODES:
            raise ValueError(f"node_mode must be one of {NODE_MODES}, got {self.node_mode!r}")
        if self.norm_axes not in NORM_AXES:
            raise ValueError(f"norm_axes must be one of {NORM_AXES}, got {self.norm_axes!r}")

    @property
    def n_nodes(self):
        if self.node_mode == "one_node_per_joint":
            return self.joints
        return self.joints * self.dims

    @property
    def feature_dim(self):
        if self.node_mode == "one_node_per_joint":
            return self.dims * self.coeffs
        return self.coeffs


class GcnModel:
    """Parameters, normalization buffers and config of one network.

    ``params`` maps names such as ``"block3.1.weight"`` to arrays; layers are
    ``input``, ``block{i}.0``, ``block{i}.1`` and ``output``.
    """

    def __init__(self, config: GcnConfig, params, buffers, seed=None):
        self.config = config
        self.params = params
        self.buffers = buffers
        self.seed = seed
        self.version = 0
        # free-form training context stored with checkpoints (input_repr, scale, ...)
        self.info = {}

    def hidden_layers(self):
        names = ["input"]
        for i in range(self.config.num_blocks):
            names += [f"block{i}.0", f"block{i}.1"]
        return names

    def copy(self):
        model = GcnModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.seed,
        )
        model.info = dict(self.info)
        return model

    def zero_output_(self):
        """Zero the output layer so the network returns its input features."""
        for key in ("output.weight", "output.bias"):
            self.params[key][...] = 0.0
        self.version += 1
        return self

    def apply_update(self, deltas):
        for name, delta in deltas.items():
            self.params[name] += delta
        self.version += 1

    def adjacency_edges(self):
        """Number of learnable adjacency entries in one graph layer."""
        return self.params["input.adjacency"].size

    def num_parameters(self):
        return sum(p.size for p in self.params.values())


def _uniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_model(config: GcnConfig, seed=0):
    rng = np.random.default_rng(seed)
    n, f, h = config.n_nodes, config.feature_dim, config.hidden_channels
    params, buffers = {}, {}

    def add_layer(name, fin, fout, norm):
        params[f"{name}.adjacency"] = _uniform(rng, (n, n), n, n)
        params[f"{name}.weight"] = _uniform(rng, (fin, fout), fin, fout)
        if norm and config.normalization:
            shape = (fout,) if config.norm_axes == "batch_node" else (n, fout)
            params[f"{name}.norm.gamma"] = np.ones(shape)
            params[f"{name}.norm.beta"] = np.zeros(shape)
            buffers[f"{name}.norm.mean"] = np.zeros(shape)
            buffers[f"{name}.norm.var"] = np.ones(shape)
        else:
            # a bias ahead of normalization would be cancelled by the mean subtraction
            params[f"{name}.bias"] = np.zeros(fout)

    add_layer("input", f, h, True)
    for i in range(config.num_blocks):
        add_layer(f"block{i}.0", h, h, True)
        add_layer(f"block{i}.1", h, h, True)
    add_layer("output", h, f, False)
    return GcnModel(config, params, buffers, seed)


# ----------------------------------------------------------------- layers


def _graph_conv(p, name, x):
    s = x @ p[f"{name}.weight"]
    y = np.einsum("ij,bjf->bif", p[f"{name}.adjacency"], s)
    if f"{name}.bias" in p:
        y = y + p[f"{name}.bias"]
    return y, (x, s)


def _graph_conv_backward(p, name, rec, dy, grads):
    x, s = rec
    a = p[f"{name}.adjacency"]
    grads[f"{name}.adjacency"] = np.einsum("bif,bjf->ij", dy, s)
    if f"{name}.bias" in p:
        grads[f"{name}.bias"] = dy.sum(axis=(0, 1))
    ds = np.einsum("ij,bif->bjf", a, dy)
    grads[f"{name}.weight"] = np.einsum("bnf,bng->fg", x, ds)
    return ds @ p[f"{name}.weight"].T


def _norm_reduce(config):
    return (0, 1) if config.norm_axes == "batch_node" else (0,)


def _norm(model, name, y, train):
    cfg = model.config
    gamma = model.params[f"{name}.norm.gamma"]
    beta = model.params[f"{name}.norm.beta"]
    if train:
        axes = _norm_reduce(cfg)
        m = int(np.prod([y.shape[a] for a in axes]))
        mu = y.mean(axis=axes)
        var = y.var(axis=axes)
        unbiased = var * m / (m - 1) if m > 1 else var
        mom = cfg.norm_momentum
        model.buffers[f"{name}.norm.mean"] = (1 - mom) * model.buffers[f"{name}.norm.mean"] + mom * mu
        model.buffers[f"{name}.norm.var"] = (1 - mom) * model.buffers[f"{name}.norm.var"] + mom * unbiased
    else:
        mu = model.buffers[f"{name}.norm.mean"]
        var = model.buffers[f"{name}.norm.var"]
    inv_std = 1.0 / np.sqrt(var + cfg.norm_eps)
    xhat = (y - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std)


def _norm_backward(p, name, rec, dout, grads, axes):
    xhat, inv_std = rec
    m = int(np.prod([xhat.shape[a] for a in axes]))
    grads[f"{name}.norm.gamma"] = (dout * xhat).sum(axis=axes)
    grads[f"{name}.norm.beta"] = dout.sum(axis=axes)
    dxhat = dout * p[f"{name}.norm.gamma"]
    return (inv_std / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


def _hidden(model, name, x, train, rng):
    y, conv = _graph_conv(model.params, name, x)
    norm = None
    if model.config.normalization:
        y, norm = _norm(model, name, y, train)
    y = np.tanh(y)
    act = y
    mask = None
    p = model.config.dropout_rate
    if train and p > 0:
        if rng is None:
            raise ValueError("train-mode forward with dropout needs an rng")
        mask = (rng.random(y.shape) >= p) / (1.0 - p)
        y = y * mask
    return y, (conv, norm, act, mask)


def _hidden_backward(model, name, rec, dy, grads):
    conv, norm, act, mask = rec
    if mask is not None:
        dy = dy * mask
    dy = dy * (1.0 - act**2)
    if norm is not None:
        dy = _norm_backward(model.params, name, norm, dy, grads, _norm_reduce(model.config))
    return _graph_conv_backward(model.params, name, conv, dy, grads)


# ------------------------------------------------------- forward/backward


def forward(model: GcnModel, features, mode="eval", rng=None):
    """Run the network on (n, F) or (B, n, F) features.

    Returns ``(output, cache)``; ``cache`` feeds :func:`backward` when
    ``mode == "train"``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    cfg = model.config
    if x.ndim != 3 or x.shape[1:] != (cfg.n_nodes, cfg.feature_dim):
        raise ValueError(
            f"features shape {x.shape[-2:]} does not match ({cfg.n_nodes}, {cfg.feature_dim})"
        )
    train = mode == "train"
    records = {}
    h, records["input"] = _hidden(model, "input", x, train, rng)
    for i in range(cfg.num_blocks):
        y, records[f"block{i}.0"] = _hidden(model, f"block{i}.0", h, train, rng)
        y, records[f"block{i}.1"] = _hidden(model, f"block{i}.1", y, train, rng)
        h = h + y
    out, records["output"] = _graph_conv(model.params, "output", h)
    out = out + x
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite network output")
    cache = {"mode": mode, "version": model.version, "model": id(model), "single": single, "records": records}
    return (out[0] if single else out), cache


def backward(model: GcnModel, cache, grad_output):
    """Gradients of every entry of ``model.params`` given d(loss)/d(output)."""
    if cache.get("mode") != "train":
        raise StaleCacheError("backward needs the cache of a train-mode forward")
    if cache["model"] != id(model) or cache["version"] != model.version:
        raise StaleCacheError("cache was produced by a different model or before a parameter update")
    dy = np.asarray(grad_output, dtype=np.float64)
    if cache["single"]:
        dy = dy[None]
    records = cache["records"]
    grads = {}
    dh = _graph_conv_backward(model.params, "output", records["output"], dy, grads)
    for i in reversed(range(model.config.num_blocks)):
        dy_blk = _hidden_backward(model, f"block{i}.1", records[f"block{i}.1"], dh, grads)
        dy_blk = _hidden_backward(model, f"block{i}.0", records[f"block{i}.0"], dy_blk, grads)
        dh = dh + dy_blk
    _hidden_backward(model, "input", records["input"], dh, grads)
    return {name: grads[name] for name in model.params}


# ------------------------------------------------- features and readout


def velocities(coords):
    """First differences along the frame axis (-3), with a zero first entry."""
    coords = np.asarray(coords, dtype=np.float64)
    v = np.zeros_like(coords)
    v[..., 1:, :, :] = np.diff(coords, axis=-3)
    return v


def _pad_frames(coords, tau):
    # same rule as dct.pad_future, along axis -3 so a batch axis may lead
    tail = np.repeat(coords[..., -1:, :, :], tau, axis=-3)
    return np.concatenate([coords, tail], axis=-3)


def node_features_array(coords, basis: DctBasis, node_mode="one_node_per_joint", input_repr="position"):
    """(..., T, J, D) observed coordinates -> (..., n, F) network input."""
    if input_repr not in INPUT_REPRS:
        raise ValueError(f"input_repr must be one of {INPUT_REPRS}")
    if node_mode not in NODE_MODES:
        raise ValueError(f"node_mode must be one of {NODE_MODES}")
    coords = np.asarray(coords, dtype=np.float64)
    t = coords.shape[-3]
    tau = basis.n - t
    if tau < 0:
        raise ValueError(f"input has {t} frames but basis covers only {basis.n}")
    if input_repr == "velocity":
        coords = velocities(coords)
    feats = encode_coords(_pad_frames(coords, tau), basis)
    if node_mode == "one_node_per_channel":
        j, d = coords.shape[-2:]
        feats = feats.reshape(feats.shape[:-2] + (j * d, basis.l))
    return feats


def node_features(sample: MotionSample, basis: DctBasis, node_mode="one_node_per_joint", input_repr="position"):
    if basis.n != sample.T + sample.tau:
        raise ValueError(f"basis length {basis.n} != T + tau = {sample.T + sample.tau}")
    return node_features_array(sample.input.coords, basis, node_mode, input_repr)


def readout_matrix(basis: DctBasis, t_obs, input_repr="position"):
    """(N, L) matrix taking coefficients to completed-trajectory values.

    In velocity mode the decoded velocities are summed from ``x_1`` over the
    observed frames and from ``x_T`` over the forecast frames.
    """
    inv = basis.matrix.T
    if input_repr == "position":
        return inv
    n = basis.n
    q = np.zeros((n, n))
    for t in range(n):
        start = 1 if t < t_obs else t_obs
        q[t, start : t + 1] = 1.0
    return q @ inv


def readout_anchor(obs_coords, n_total, input_repr="position"):
    """Offset added to the readout: zero for positions, x_1 / x_T for velocities."""
    obs = np.asarray(obs_coords, dtype=np.float64)
    t = obs.shape[-3]
    shape = obs.shape[:-3] + (n_total,) + obs.shape[-2:]
    if input_repr == "position":
        return np.zeros(shape)
    anchor = np.empty(shape)
    anchor[..., :t, :, :] = obs[..., :1, :, :]
    anchor[..., t:, :, :] = obs[..., t - 1 : t, :, :]
    return anchor


def completed_trajectory(output, obs_coords, basis: DctBasis, input_repr="position"):
    """Network output (..., n, F) -> completed (..., N, J, D) coordinates."""
    obs = np.asarray(obs_coords, dtype=np.float64)
    j, d = obs.shape[-2:]
    out = np.asarray(output).reshape(output.shape[:-2] + (j, d * basis.l))
    if input_repr == "position":
        coords = decode_coords(out, basis)
    else:
        c = out.reshape(out.shape[:-1] + (d, basis.l))
        r = readout_matrix(basis, obs.shape[-3], input_repr)
        coords = np.einsum("nl,...jdl->...njd", r, c)
    return coords + readout_anchor(obs, basis.n, input_repr)


def predict(model: GcnModel, sample: MotionSample, basis: DctBasis, node_mode=None, input_repr="position"):
    """Forecast the ``tau`` frames after ``sample.input`` in the sample's own coordinates."""
    node_mode = node_mode or model.config.node_mode
    if node_mode != model.config.node_mode:
        raise ValueError(f"model was built for {model.config.node_mode}, not {node_mode}")
    x = node_features(sample, basis, node_mode, input_repr)
    out, _ = forward(model, x, "eval")
    coords = completed_trajectory(out, sample.input.coords, basis, input_repr)[sample.T :]
    return PoseSequence.from_coords(
        coords,
        frame_interval_ms=sample.input.frame_interval_ms,
        sequence_id=sample.input.sequence_id,
        video_id=sample.input.video_id,
    )


# ---------------------------------------------------------- checkpoints


def save_model(model: GcnModel, path):
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "seed": model.seed,
        "params": {k: list(v.shape) for k, v in model.params.items()},
        "buffers": {k: list(v.shape) for k, v in model.buffers.items()},
        "info": model.info,
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    arrays.update({f"buffer/{k}": v for k, v in model.buffers.items()})
    with open(path, "wb") as f:
        np.savez(f, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path, expected_config: GcnConfig | None = None):
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            params = {k: data[f"param/{k}"].astype(np.float64) for k in meta["params"]}
            buffers = {k: data[f"buffer/{k}"].astype(np.float64) for k in meta["buffers"]}
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {meta.get('format_version')} != supported {CHECKPOINT_VERSION}"
        )
    config = GcnConfig(**meta["config"])
    if expected_config is not None and expected_config != config:
        diff = {
            k: (v, getattr(config, k)) for k, v in asdict(expected_config).items() if getattr(config, k) != v
        }
        raise CheckpointError(f"checkpoint config differs from expected (expected, found): {diff}")
    for k, shape in meta["params"].items():
        if list(params[k].shape) != shape:
            raise CheckpointError(f"parameter {k} has shape {params[k].shape}, header says {shape}")
    reference = init_model(config, 0)
    if set(reference.params) != set(params) or set(reference.buffers) != set(buffers):
        raise CheckpointError("checkpoint parameter names do not match its config")
    model = GcnModel(config, params, buffers, meta.get("seed"))
    model.info = dict(meta.get("info", {}))
    return model
