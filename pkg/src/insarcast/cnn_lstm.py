"""CNN-LSTM forecaster with hand-written reverse-mode gradients.

Each input frame passes through a shared convolutional encoder (three
blocks of 3x3 same-convolution, ReLU, 2x2 max-pool by default, doubling
channels 1 -> 32 -> 64 -> 128), the flattened per-frame features feed a
single-layer LSTM with zero initial state, and a linear head maps the
final hidden state back to an H x W displacement map. Training minimises
mean squared error over the map with full-batch Adam on the one
spatio-temporal sample.

Everything runs in float64 numpy. The backward pass is written out layer
by layer, which keeps it checkable against central finite differences
(:func:`gradient_check`); convolutions use an im2col layout so both
directions are plain matrix products plus nine shifted slice-adds.
Max-pool ties resolve to the first element in row-major window order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import InvalidConfig, NonFiniteLoss, ShapeMismatch
from .grid import DisplacementMap, SpatioTemporalTensor


@dataclass(frozen=True)
class CnnLstmConfig:
    conv_channels: tuple[int, ...] = (32, 64, 128)
    kernel_size: int = 3
    pool_factor: int = 2
    lstm_hidden: int = 256
    learning_rate: float = 1e-3
    epochs: int = 500
    seed: int = 42

    def __post_init__(self):
        if len(self.conv_channels) == 0 or min(self.conv_channels) < 1:
            raise InvalidConfig(f"bad conv_channels {self.conv_channels}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidConfig(f"kernel_size must be odd, got {self.kernel_size}")
        if self.pool_factor < 1 or self.lstm_hidden < 1:
            raise InvalidConfig("pool_factor and lstm_hidden must be >= 1")
        if self.learning_rate < 0 or self.epochs < 0:
            raise InvalidConfig("learning_rate and epochs must be non-negative")

    @property
    def n_blocks(self) -> int:
        return len(self.conv_channels)

    def validate_grid(self, height: int, width: int) -> None:
        shrink = self.pool_factor ** self.n_blocks
        if height % shrink or width % shrink:
            raise InvalidConfig(
                f"grid {height}x{width} must be divisible by "
                f"pool_factor^{self.n_blocks} = {shrink}"
            )

    def feature_length(self, height: int, width: int) -> int:
        shrink = self.pool_factor ** self.n_blocks
        return self.conv_channels[-1] * (height // shrink) * (width // shrink)


@dataclass
class NeuralParameters:
    """Named parameter arrays plus the geometry they were built for."""

    config: CnnLstmConfig
    height: int
    width: int
    arrays: dict[str, np.ndarray]

    def names(self) -> list[str]:
        return parameter_order(self.config)

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def copy(self) -> "NeuralParameters":
        return NeuralParameters(
            self.config, self.height, self.width,
            {k: v.copy() for k, v in self.arrays.items()},
        )


def parameter_order(config: CnnLstmConfig) -> list[str]:
    """Canonical array order, also the checkpoint blob order."""
    names: list[str] = []
    for i in range(config.n_blocks):
        names += [f"conv{i}.kernel", f"conv{i}.bias"]
    names += ["lstm.w_x", "lstm.w_h", "lstm.b", "head.weight", "head.bias"]
    return names


def init_parameters(config: CnnLstmConfig, height: int, width: int) -> NeuralParameters:
    """Seeded uniform(+-1/sqrt(fan_in)) weights, zero biases.

    LSTM gate blocks stack in i, f, g, o order along the first axis of
    w_x, w_h and b.
    """
    config.validate_grid(height, width)
    rng = np.random.default_rng(config.seed)
    k = config.kernel_size
    hid = config.lstm_hidden
    feat = config.feature_length(height, width)
    arrays: dict[str, np.ndarray] = {}

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    c_in = 1
    for i, c_out in enumerate(config.conv_channels):
        arrays[f"conv{i}.kernel"] = uniform((c_out, c_in, k, k), c_in * k * k)
        arrays[f"conv{i}.bias"] = np.zeros(c_out)
        c_in = c_out
    arrays["lstm.w_x"] = uniform((4 * hid, feat), feat)
    arrays["lstm.w_h"] = uniform((4 * hid, hid), hid)
    arrays["lstm.b"] = np.zeros(4 * hid)
    arrays["head.weight"] = uniform((height * width, hid), hid)
    arrays["head.bias"] = np.zeros(height * width)
    return NeuralParameters(config, height, width, arrays)


# --- layer primitives -------------------------------------------------------


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """(T, C, H, W) -> (T, C*k*k, H*W) patch matrix for same-padding conv."""
    t, c, h, w = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((t, c, k, k, h, w))
    for di in range(k):
        for dj in range(k):
            cols[:, :, di, dj] = xp[:, :, di:di + h, dj:dj + w]
    return cols.reshape(t, c * k * k, h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int], k: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    t, c, h, w = shape
    p = (k - 1) // 2
    d = dcols.reshape(t, c, k, k, h, w)
    dxp = np.zeros((t, c, h + 2 * p, w + 2 * p))
    for di in range(k):
        for dj in range(k):
            dxp[:, :, di:di + h, dj:dj + w] += d[:, :, di, dj]
    return dxp[:, :, p:p + h, p:p + w]


def _pool_forward(x: np.ndarray, f: int) -> tuple[np.ndarray, np.ndarray]:
    """Max-pool f x f with stride f; returns output and argmax indices."""
    t, c, h, w = x.shape
    windows = (
        x.reshape(t, c, h // f, f, w // f, f)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(t, c, h // f, w // f, f * f)
    )
    idx = windows.argmax(axis=-1)  # first max wins ties
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout: np.ndarray, idx: np.ndarray, in_shape, f: int) -> np.ndarray:
    t, c, h, w = in_shape
    dwin = np.zeros((t, c, h // f, w // f, f * f))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return (
        dwin.reshape(t, c, h // f, w // f, f, f)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(t, c, h, w)
    )


def _encode_forward(params: NeuralParameters, frames: np.ndarray):
    """Shared conv encoder over a (T, H, W) stack -> (T, D) features."""
    cfg = params.config
    x = frames[:, None, :, :]  # (T, 1, H, W)
    cache = []
    for i in range(cfg.n_blocks):
        kernel = params.arrays[f"conv{i}.kernel"]
        bias = params.arrays[f"conv{i}.bias"]
        c_out = kernel.shape[0]
        t, c, h, w = x.shape
        cols = _im2col(x, cfg.kernel_size)
        k2d = kernel.reshape(c_out, -1)
        conv = np.matmul(k2d, cols) + bias[:, None]  # (T, C_out, H*W)
        conv = conv.reshape(t, c_out, h, w)
        mask = conv > 0
        act = np.where(mask, conv, 0.0)
        pooled, idx = _pool_forward(act, cfg.pool_factor)
        cache.append({
            "in_shape": x.shape, "cols": cols, "mask": mask,
            "act_shape": act.shape, "idx": idx,
        })
        x = pooled
    t = x.shape[0]
    return x.reshape(t, -1), cache


def _encode_backward(params: NeuralParameters, dfeat: np.ndarray, cache) -> dict:
    cfg = params.config
    grads: dict[str, np.ndarray] = {}
    t = dfeat.shape[0]
    last = cache[-1]["act_shape"]
    f = cfg.pool_factor
    dx = dfeat.reshape(t, last[1], last[2] // f, last[3] // f)
    for i in range(cfg.n_blocks - 1, -1, -1):
        blk = cache[i]
        kernel = params.arrays[f"conv{i}.kernel"]
        c_out = kernel.shape[0]
        dact = _pool_backward(dx, blk["idx"], blk["act_shape"], f)
        dconv = np.where(blk["mask"], dact, 0.0)
        tt, _, h, w = blk["act_shape"]
        dconv2 = dconv.reshape(tt, c_out, h * w)
        grads[f"conv{i}.bias"] = dconv2.sum(axis=(0, 2))
        grads[f"conv{i}.kernel"] = np.einsum(
            "tcp,tkp->ck", dconv2, blk["cols"]
        ).reshape(kernel.shape)
        k2d = kernel.reshape(c_out, -1)
        dcols = np.matmul(k2d.T, dconv2)
        dx = _col2im(dcols, blk["in_shape"], cfg.kernel_size)
    return grads


def _lstm_forward(params: NeuralParameters, feats: np.ndarray):
    """Single-layer LSTM over (T, D) features; returns the final hidden."""
    hid = params.config.lstm_hidden
    w_x, w_h, b = (params.arrays["lstm.w_x"], params.arrays["lstm.w_h"],
                   params.arrays["lstm.b"])
    t_steps = feats.shape[0]
    x_proj = feats @ w_x.T  # (T, 4H)
    h = np.zeros(hid)
    c = np.zeros(hid)
    steps = []
    for t in range(t_steps):
        z = x_proj[t] + w_h @ h + b
        i = expit(z[:hid])
        f = expit(z[hid:2 * hid])
        g = np.tanh(z[2 * hid:3 * hid])
        o = expit(z[3 * hid:])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h_prev = h
        h = o * tanh_c
        steps.append((i, f, g, o, c_prev, tanh_c, h_prev))
    return h, {"steps": steps, "feats": feats}


def _lstm_backward(params: NeuralParameters, dh_final: np.ndarray, cache):
    hid = params.config.lstm_hidden
    w_x, w_h = params.arrays["lstm.w_x"], params.arrays["lstm.w_h"]
    steps = cache["steps"]
    feats = cache["feats"]
    t_steps = len(steps)
    dz_all = np.zeros((t_steps, 4 * hid))
    dh = dh_final
    dc = np.zeros(hid)
    for t in range(t_steps - 1, -1, -1):
        i, f, g, o, c_prev, tanh_c, _ = steps[t]
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ])
        dz_all[t] = dz
        dh = w_h.T @ dz
        dc = dc * f
    grads = {
        "lstm.w_x": dz_all.T @ feats,
        "lstm.w_h": dz_all.T @ np.stack([s[6] for s in steps]),
        "lstm.b": dz_all.sum(axis=0),
    }
    dfeat = dz_all @ w_x
    return grads, dfeat


def _forward_cache(params: NeuralParameters, frames: np.ndarray):
    feats, enc_cache = _encode_forward(params, frames)
    h_final, lstm_cache = _lstm_forward(params, feats)
    pred = params.arrays["head.weight"] @ h_final + params.arrays["head.bias"]
    return pred, (enc_cache, lstm_cache, h_final)


def _loss_and_grads(params: NeuralParameters, frames: np.ndarray, target: np.ndarray):
    pred, (enc_cache, lstm_cache, h_final) = _forward_cache(params, frames)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    dpred = 2.0 * diff / diff.size
    grads = {
        "head.weight": np.outer(dpred, h_final),
        "head.bias": dpred,
    }
    dh_final = params.arrays["head.weight"].T @ dpred
    lstm_grads, dfeat = _lstm_backward(params, dh_final, lstm_cache)
    grads.update(lstm_grads)
    grads.update(_encode_backward(params, dfeat, enc_cache))
    return loss, grads


# --- public API --------------------------------------------------------------


def _as_frames(x) -> np.ndarray:
    if isinstance(x, SpatioTemporalTensor):
        return x.as_array()
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 3:
        raise ShapeMismatch(f"expected a (T, H, W) stack, got shape {arr.shape}")
    return arr


def _check_geometry(params: NeuralParameters, frames: np.ndarray) -> None:
    if frames.shape[1:] != (params.height, params.width):
        raise ShapeMismatch(
            f"frames are {frames.shape[1:]}, parameters were built for "
            f"({params.height}, {params.width})"
        )


def encode_frame(params: NeuralParameters, frame: np.ndarray) -> np.ndarray:
    """Run one H x W frame through the conv encoder; flattened features."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (params.height, params.width):
        raise ShapeMismatch(
            f"frame is {frame.shape}, expected ({params.height}, {params.width})"
        )
    feats, _ = _encode_forward(params, frame[None])
    return feats[0]


def forward(params: NeuralParameters, x) -> np.ndarray | DisplacementMap:
    """Predict the next displacement map from a (T, H, W) history.

    Returns a DisplacementMap when given a SpatioTemporalTensor (reusing
    its grid spec), else a bare (H, W) array.
    """
    frames = _as_frames(x)
    _check_geometry(params, frames)
    pred, _ = _forward_cache(params, frames)
    grid = pred.reshape(params.height, params.width)
    if isinstance(x, SpatioTemporalTensor):
        return DisplacementMap(x.spec, grid, epoch_index=x.steps[-1].epoch_index + 1)
    return grid


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    return float(np.mean((pred - target) ** 2))


@dataclass
class TrainingHistory:
    loss: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.loss)


def train(
    config: CnnLstmConfig, x, y: np.ndarray
) -> tuple[NeuralParameters, TrainingHistory]:
    """Full-batch Adam on the single (history, target) sample.

    The recorded loss for epoch e is evaluated at the parameters entering
    that epoch, before the update. A non-finite loss aborts with the
    offending epoch index.
    """
    frames = _as_frames(x)
    target = np.asarray(y, dtype=float)
    if target.shape != frames.shape[1:]:
        raise ShapeMismatch(
            f"target {target.shape} does not match frames {frames.shape[1:]}"
        )
    params = init_parameters(config, frames.shape[1], frames.shape[2])
    target_flat = target.ravel()

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
    history = TrainingHistory()
    for epoch in range(config.epochs):
        loss, grads = _loss_and_grads(params, frames, target_flat)
        if not np.isfinite(loss):
            raise NonFiniteLoss(epoch)
        history.loss.append(loss)
        step = epoch + 1
        corr1 = 1.0 - beta1**step
        corr2 = 1.0 - beta2**step
        for name, g in grads.items():
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            params.arrays[name] -= config.learning_rate * (
                (m[name] / corr1) / (np.sqrt(v[name] / corr2) + eps)
            )
    return params, history


def gradient_check(
    params: NeuralParameters,
    x,
    y: np.ndarray,
    epsilon: float = 1e-5,
    groups: list[str] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Intended for tiny nets in float64. ``groups`` restricts the sweep to
    arrays whose name starts with one of the prefixes (e.g. ["head"] checks
    the linear head with the encoder frozen). The relative error per
    parameter is |a - n| / max(1e-12, |a| + |n|), so exact zero pairs score
    zero.
    """
    frames = _as_frames(x)
    _check_geometry(params, frames)
    target_flat = np.asarray(y, dtype=float).ravel()
    _, grads = _loss_and_grads(params, frames, target_flat)
    names = params.names()
    if groups is not None:
        names = [n for n in names if any(n.startswith(g) for g in groups)]
    worst = 0.0
    for name in names:
        arr = params.arrays[name]
        analytic = grads[name]
        flat = arr.ravel()
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            up, _ = _forward_cache(params, frames)
            f_up = float(np.mean((up - target_flat) ** 2))
            flat[j] = orig - epsilon
            dn, _ = _forward_cache(params, frames)
            f_dn = float(np.mean((dn - target_flat) ** 2))
            flat[j] = orig
            numeric = (f_up - f_dn) / (2.0 * epsilon)
            a = analytic.ravel()[j]
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


# --- checkpoints -------------------------------------------------------------
# Single file: one JSON header line (config, geometry, array order and
# shapes), a newline, then the little-endian float64 blob of all arrays
# concatenated in canonical order.


def save_checkpoint(params: NeuralParameters, path: str | Path) -> None:
    order = params.names()
    header = {
        "config": asdict(params.config),
        "height": params.height,
        "width": params.width,
        "order": order,
        "shapes": {n: list(params.arrays[n].shape) for n in order},
    }
    blob = np.concatenate([params.arrays[n].ravel() for n in order]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob.tobytes())


def load_checkpoint(path: str | Path) -> NeuralParameters:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    cfg_d = dict(header["config"])
    cfg_d["conv_channels"] = tuple(cfg_d["conv_channels"])
    config = CnnLstmConfig(**cfg_d)
    flat = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(float)
    arrays: dict[str, np.ndarray] = {}
    pos = 0
    for name in header["order"]:
        shape = tuple(header["shapes"][name])
        size = int(np.prod(shape))
        arrays[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    if pos != flat.size:
        raise ShapeMismatch(
            f"checkpoint blob holds {flat.size} values, header promises {pos}"
        )
    return NeuralParameters(config, header["height"], header["width"], arrays)
