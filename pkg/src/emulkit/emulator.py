"""Toy space-time factorized emulator.

Two model families share one rollout contract
``u_{t+1} = u_t + denorm(M(norm(U_t)))``:

* :class:`AttentionModel`: patch encoder, alternating spatial / causal
  temporal attention blocks with random periodic rolls between blocks,
  patch decoder. Forward only.
* :class:`LinearPathModel`: linear patch encoder, learnable mixing over the
  history, linear patch decoder. Gradients are written out by hand so the
  model can be trained without autodiff.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _conv
from .errors import ConfigError, DimensionError, RolloutError, TrainingError
from .normalize import EPS, NormMode, NormStats, stats_for
from .patching import (
    N_MASKS,
    PatchPlan,
    PatchWeights,
    decode_wraps,
    encode_array,
    pad_and_jitter,
    unjitter_and_crop,
    wrap_pad,
)
from .tensorfield import FieldSet, Trajectory


class Mode(enum.Enum):
    LINEAR_PATH = "linear"
    ATTENTION = "attention"


@dataclass(frozen=True)
class EmulatorConfig:
    hidden: int = 32
    heads: int = 4
    blocks: int = 2
    groups: int = 4
    token_shape: tuple = (4, 4)
    history: int = 3
    mode: Mode = Mode.ATTENTION
    mlp_ratio: int = 2
    rope_base: float = 100.0
    # "auto": roll the periodic axes only; True: every axis (must be periodic)
    rolls: object = "auto"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "token_shape", tuple(int(t) for t in self.token_shape))
        if self.hidden % self.heads or self.hidden % self.groups:
            raise ConfigError(
                f"hidden width {self.hidden} must be divisible by heads ({self.heads}) "
                f"and groups ({self.groups})"
            )
        if self.mode is Mode.ATTENTION and (self.hidden // self.heads) % 2:
            raise ConfigError("head dimension must be even for rotary encoding")
        if self.history < 1 or self.blocks < 0:
            raise ConfigError("history must be >= 1 and blocks >= 0")
        if self.rolls not in ("auto", True, False):
            raise ConfigError(f"rolls must be 'auto', True or False, got {self.rolls!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


# --- building blocks -----------------------------------------------------------

def rms_group_norm(x, groups: int, gain=None, eps: float = EPS) -> np.ndarray:
    """RMS norm over each group of the last (channel) axis, then a per-channel gain."""
    x = np.asarray(x, dtype=np.float64)
    c = x.shape[-1]
    if groups < 1 or c % groups:
        raise ConfigError(f"{c} channels not divisible into {groups} groups")
    g = x.reshape(x.shape[:-1] + (groups, c // groups))
    rms = np.sqrt(np.mean(np.square(g), axis=-1, keepdims=True) + eps)
    out = (g / rms).reshape(x.shape)
    return out if gain is None else out * gain


def _rms_last(x, gain, eps=EPS):
    return x / np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + eps) * gain


def rope_frequencies(head_dim: int, n_axes: int, base: float = 100.0) -> list:
    """Split the ``head_dim // 2`` rotation pairs into one band per axis."""
    if head_dim % 2:
        raise ConfigError(f"head dimension must be even, got {head_dim}")
    bands = np.array_split(np.arange(head_dim // 2), n_axes)
    freqs = []
    for band in bands:
        n = max(len(band), 1)
        freqs.append(base ** (-np.arange(len(band)) / n))
    return bands, freqs


def axial_rope(x, positions, base: float = 100.0) -> np.ndarray:
    """Rotate coordinate pairs of ``x`` (``(..., tokens, head_dim)``).

    ``positions`` is ``(tokens, axes)``. Pair ``2i, 2i+1`` belongs to one
    axis and turns by ``theta_i * position`` along that axis.
    """
    x = np.asarray(x, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim == 1:
        positions = positions[:, None]
    if positions.shape[0] != x.shape[-2]:
        raise DimensionError(f"{positions.shape[0]} positions for {x.shape[-2]} tokens")
    bands, freqs = rope_frequencies(x.shape[-1], positions.shape[1], base)
    angle = np.zeros((positions.shape[0], x.shape[-1] // 2))
    for axis, (band, f) in enumerate(zip(bands, freqs)):
        angle[:, band] = positions[:, axis:axis + 1] * f[None, :]
    cos, sin = np.cos(angle), np.sin(angle)
    a, b = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = a * cos - b * sin
    out[..., 1::2] = a * sin + b * cos
    return out


def _softmax(scores):
    scores = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / np.sum(e, axis=-1, keepdims=True)


def _split_heads(x, heads):
    return x.reshape(x.shape[:-1] + (heads, -1)).swapaxes(-2, -3)  # (..., H, N, d)


def _merge_heads(x):
    x = x.swapaxes(-2, -3)
    return x.reshape(x.shape[:-2] + (-1,))


@dataclass(eq=False)
class SpatialWeights:
    norm_gain: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    q_gain: np.ndarray  # (heads, head_dim), per-head QK norm
    k_gain: np.ndarray
    w1: np.ndarray       # SwiGLU gate
    w3: np.ndarray       # SwiGLU value
    w2: np.ndarray


@dataclass(eq=False)
class TemporalWeights:
    norm_gain: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bias: np.ndarray    # (heads, 2 * history - 1), indexed by offset i - j


def spatial_block(tokens, positions, w: SpatialWeights, heads: int, groups: int,
                  rope_base: float = 100.0) -> np.ndarray:
    """``u + MLP(v') + Attn(v')`` with ``v' = RMSGroupNorm(u)``, per time slice.

    ``tokens`` is ``(..., N, C)`` with the spatial tokens flattened.
    """
    u = np.asarray(tokens, dtype=np.float64)
    c = u.shape[-1]
    if w.wq.shape != (c, c) or positions.shape[0] != u.shape[-2]:
        raise DimensionError(f"token shape {u.shape} does not match block weights")
    v = rms_group_norm(u, groups, w.norm_gain)
    q = _rms_last(_split_heads(v @ w.wq, heads), w.q_gain[:, None, :])
    k = _rms_last(_split_heads(v @ w.wk, heads), w.k_gain[:, None, :])
    val = _split_heads(v @ w.wv, heads)
    q = axial_rope(q, positions, rope_base)
    k = axial_rope(k, positions, rope_base)
    att = _softmax(q @ k.swapaxes(-1, -2) / np.sqrt(q.shape[-1]))
    attn = _merge_heads(att @ val) @ w.wo
    gate = v @ w.w1
    mlp = (_conv.silu(gate) * (v @ w.w3)) @ w.w2
    return u + mlp + attn


def temporal_block(tokens, w: TemporalWeights, heads: int, groups: int) -> np.ndarray:
    """Causal attention over time at each spatial location.

    ``tokens`` is ``(T, N, C)``; the relative bias table is indexed by the
    time offset ``i - j``.
    """
    u = np.asarray(tokens, dtype=np.float64)
    t, _, c = u.shape
    if w.wq.shape != (c, c):
        raise DimensionError(f"token shape {u.shape} does not match block weights")
    tau = (w.bias.shape[1] + 1) // 2
    if t > tau:
        raise DimensionError(f"{t} time slots but the bias table covers {tau}")
    x = rms_group_norm(u, groups, w.norm_gain).swapaxes(0, 1)  # (N, T, C)
    q = _split_heads(x @ w.wq, heads)                             # (N, H, T, d)
    k = _split_heads(x @ w.wk, heads)
    val = _split_heads(x @ w.wv, heads)
    offset = np.arange(t)[:, None] - np.arange(t)[None, :]
    scores = q @ k.swapaxes(-1, -2) / np.sqrt(q.shape[-1])
    scores = scores + w.bias[:, offset + tau - 1][None]
    scores = np.where(offset >= 0, scores, -np.inf)
    out = _merge_heads(_softmax(scores) @ val) @ w.wo           # (N, T, C)
    return u + out.swapaxes(0, 1)


# --- attention model -----------------------------------------------------------------

@dataclass(eq=False)
class BlockState:
    """Accumulated inter-block roll per token axis."""

    offsets: np.ndarray

    def roll(self, x, shift, axes):
        self.offsets = self.offsets + np.asarray(shift)
        return np.roll(x, tuple(int(s) for s in shift), axis=axes)

    def undo(self, x, axes, shape):
        back = tuple(int(-o % n) for o, n in zip(self.offsets, shape))
        return np.roll(x, back, axis=axes)


@dataclass(eq=False)
class AttentionWeights:
    spatial: list
    temporal: list
    w_out: np.ndarray

    @classmethod
    def random(cls, config: EmulatorConfig, rng, scale: float = 0.1) -> "AttentionWeights":
        c, h, d = config.hidden, config.heads, config.head_dim
        f = config.mlp_ratio * c

        def mat(*shape):
            return rng.standard_normal(shape) * scale

        spatial, temporal = [], []
        for _ in range(config.blocks):
            spatial.append(SpatialWeights(
                np.ones(c), mat(c, c), mat(c, c), mat(c, c), mat(c, c),
                np.ones((h, d)), np.ones((h, d)), mat(c, f), mat(c, f), mat(f, c),
            ))
            temporal.append(TemporalWeights(
                np.ones(c), mat(c, c), mat(c, c), mat(c, c), mat(c, c),
                mat(h, 2 * config.history - 1),
            ))
        return cls(spatial, temporal, mat(c, c))

    @classmethod
    def zeros(cls, config: EmulatorConfig) -> "AttentionWeights":
        w = cls.random(config, np.random.default_rng(0))
        for blk in w.spatial + w.temporal:
            for name, val in vars(blk).items():
                if name.startswith("w"):
                    setattr(blk, name, np.zeros_like(val))
        w.w_out = np.zeros_like(w.w_out)
        return w


def roll_axes(config: EmulatorConfig, periodic) -> tuple:
    """Token axes that receive inter-block rolls."""
    periodic = tuple(bool(p) for p in periodic)
    if len(periodic) != len(config.token_shape):
        raise ConfigError("one periodicity flag per token axis")
    if config.rolls is False:
        return ()
    if config.rolls is True and not all(periodic):
        raise ConfigError("inter-block rolls requested on a non-periodic axis")
    return tuple(i for i, p in enumerate(periodic) if p)


def token_positions(shape) -> np.ndarray:
    grids = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.float64)


def run_blocks(tokens, weights: AttentionWeights, config: EmulatorConfig, rng,
               periodic=None) -> np.ndarray:
    """All time slots after the block stack, rolls undone. ``tokens``: ``(T, *grid, C)``."""
    x = np.asarray(tokens, dtype=np.float64)
    shape = config.token_shape
    if x.shape[1:-1] != shape or x.shape[-1] != config.hidden:
        raise DimensionError(f"tokens {x.shape} do not match grid {shape} x {config.hidden}")
    periodic = (True,) * len(shape) if periodic is None else periodic
    axes = roll_axes(config, periodic)
    state = BlockState(np.zeros(len(axes), dtype=int))
    positions = token_positions(shape)
    t, c = x.shape[0], x.shape[-1]
    for b in range(config.blocks):
        flat = x.reshape(t, -1, c)
        flat = spatial_block(flat, positions, weights.spatial[b], config.heads,
                             config.groups, config.rope_base)
        flat = temporal_block(flat, weights.temporal[b], config.heads, config.groups)
        x = flat.reshape(x.shape)
        if axes and b < config.blocks - 1:
            shift = [int(rng.integers(shape[a])) for a in axes]
            x = state.roll(x, shift, tuple(a + 1 for a in axes))
    if axes:
        x = state.undo(x, tuple(a + 1 for a in axes), [shape[a] for a in axes])
    return x


def forward(tokens, weights: AttentionWeights, config: EmulatorConfig, rng,
            periodic=None) -> np.ndarray:
    """Delta tokens ``(*grid, C)`` for the final time slot."""
    if config.mode is not Mode.ATTENTION:
        raise ConfigError("forward() runs the attention stack; use LinearPathModel otherwise")
    out = run_blocks(tokens, weights, config, rng, periodic)
    return out[-1] @ weights.w_out


@dataclass(eq=False)
class AttentionModel:
    """Patch encoder, attention stack, patch decoder (forward only)."""

    plan: PatchPlan
    patches: PatchWeights
    weights: AttentionWeights
    config: EmulatorConfig

    @property
    def history(self) -> int:
        return self.config.history

    def predict(self, window: Trajectory, stats: NormStats, rng, jitter: bool) -> FieldSet:
        frames = [s.values / stats.per_channel(s, "input").reshape((-1,) + (1,) * s.dim)
                  for s in window.snapshots[-self.history:]]
        template = window.template
        jit = self.plan.draw_jitter(rng) if jitter else (0,) * self.plan.dim
        toks = []
        for f in frames:
            padded, _ = pad_and_jitter(template.with_values(f), self.plan, jitter=jit)
            toks.append(np.moveaxis(encode_array(padded.values, self.plan, self.patches), 0, -1))
        periodic = [a.periodic for a in self.plan.axes]
        delta = forward(np.stack(toks), self.weights, self.config, rng, periodic)
        out = _decode_crop(np.moveaxis(delta, -1, 0), self.plan, self.patches, jit)
        return template.with_values(_finite(out))


def _finite(x):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("model output is not finite")
    return x


def _decode_crop(tokens, plan, patches, jitter):
    wrap2, wrap1 = decode_wraps(plan)
    s1 = tuple(a.s1 for a in plan.axes)
    s2 = tuple(a.s2 for a in plan.axes)
    hidden = _conv.conv_transpose(tokens, patches.dec2, s2, wrap2)
    out = _conv.conv_transpose(patches._act(hidden), patches.dec1, s1, wrap1)
    return _crop_array(wrap_pad(out, plan), plan, jitter)


def _crop_array(x, plan, jitter):
    fs = FieldSet(tuple(f"c{i}" for i in range(x.shape[0])), (0,) * x.shape[0], x)
    return unjitter_and_crop(fs, plan, jitter).values


# --- linear path ---------------------------------------------------------------------

PARAMS = ("enc1", "enc2", "dec2", "dec1", "mix")


@dataclass(eq=False)
class LinearPathModel:
    """Linear encode, history mixing, linear decode.

    ``params``: ``enc1`` (hidden, C + 3, *p1), ``enc2`` (tok, hidden, *p2),
    ``dec2`` (tok, hidden, *p2), ``dec1`` (hidden, C, *p1), ``mix`` (tau,).
    """

    plan: PatchPlan
    params: dict

    @property
    def history(self) -> int:
        return len(self.params["mix"])

    @classmethod
    def random(cls, plan: PatchPlan, channels: int, history: int, rng,
               hidden: int = 4, token_channels: int = 4, scale=None) -> "LinearPathModel":
        pw = PatchWeights.random(plan, channels + N_MASKS, hidden, token_channels,
                                 channels, rng, nonlinear=False, scale=scale)
        mix = rng.standard_normal(history) / np.sqrt(history)
        return cls(plan, dict(enc1=pw.enc1, enc2=pw.enc2, dec2=pw.dec2, dec1=pw.dec1, mix=mix))

    def copy(self) -> "LinearPathModel":
        return LinearPathModel(self.plan, {k: np.array(v) for k, v in self.params.items()})

    @property
    def patches(self) -> PatchWeights:
        p = self.params
        return PatchWeights(p["enc1"], p["enc2"], p["dec2"], p["dec1"], nonlinear=False)

    def _inputs(self, window: Trajectory, stats: NormStats, jitter):
        xs = []
        for s in window.snapshots[-self.history:]:
            scaled = s.values / stats.per_channel(s, "input").reshape((-1,) + (1,) * s.dim)
            padded, _ = pad_and_jitter(s.with_values(scaled), self.plan, jitter=jitter)
            xs.append(padded.values)
        if len(xs) != self.history:
            raise DimensionError(f"need {self.history} history frames, got {len(xs)}")
        return np.stack(xs)

    def _forward(self, xs, jitter):
        p = self.params
        s1 = tuple(a.s1 for a in self.plan.axes)
        s2 = tuple(a.s2 for a in self.plan.axes)
        wrap2, wrap1 = decode_wraps(self.plan)
        xmix = np.tensordot(p["mix"], xs, axes=(0, 0))
        h = _conv.conv(xmix, p["enc1"], s1)
        z = _conv.conv(h, p["enc2"], s2)
        g = _conv.conv_transpose(z, p["dec2"], s2, wrap2)
        o = _conv.conv_transpose(g, p["dec1"], s1, wrap1)
        idx = _gather_index(o.shape, self.plan, jitter)
        pred = o.ravel()[idx]
        cache = dict(xs=xs, xmix=xmix, h=h, z=z, g=g, o_shape=o.shape, idx=idx,
                     s1=s1, s2=s2, wrap1=wrap1, wrap2=wrap2)
        return pred, cache

    def predict(self, window: Trajectory, stats: NormStats, rng=None, jitter=False) -> FieldSet:
        """Normalized delta for the frame after ``window``."""
        jit = self.plan.draw_jitter(rng) if jitter else (0,) * self.plan.dim
        pred, _ = self._forward(self._inputs(window, stats, jit), jit)
        return window.template.with_values(_finite(pred))

    def loss_and_grad(self, batch, jitters=None):
        """Mean normalized L1 loss over ``batch`` and its gradient.

        ``batch`` holds ``(window, target_delta, stats)`` triples.
        """
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        total = 0.0
        for i, (window, target, stats) in enumerate(batch):
            jit = jitters[i] if jitters is not None else (0,) * self.plan.dim
            loss, g = self._example(window, target, stats, jit)
            total += loss
            for k in grads:
                grads[k] += g[k]
        n = len(batch)
        return total / n, {k: v / n for k, v in grads.items()}

    def loss(self, batch, jitters=None) -> float:
        total = 0.0
        for i, (window, target, stats) in enumerate(batch):
            jit = jitters[i] if jitters is not None else (0,) * self.plan.dim
            pred, _ = self._forward(self._inputs(window, stats, jit), jit)
            total += _l1(pred, target, stats)[0]
        return total / len(batch)

    def _example(self, window, target, stats, jitter):
        p = self.params
        pred, c = self._forward(self._inputs(window, stats, jitter), jitter)
        loss, d_pred = _l1(pred, target, stats)
        d_o = np.zeros(int(np.prod(c["o_shape"])))
        np.add.at(d_o, c["idx"].ravel(), d_pred.ravel())
        d_o = d_o.reshape(c["o_shape"])
        g = {}
        g["dec1"] = _conv.conv_transpose_weight_grad(
            c["g"], d_o, p["dec1"].shape[2:], c["s1"], c["wrap1"])
        d_g = _conv.conv_transpose_input_grad(d_o, p["dec1"], c["s1"], c["g"].shape[1:], c["wrap1"])
        g["dec2"] = _conv.conv_transpose_weight_grad(
            c["z"], d_g, p["dec2"].shape[2:], c["s2"], c["wrap2"])
        d_z = _conv.conv_transpose_input_grad(d_g, p["dec2"], c["s2"], c["z"].shape[1:], c["wrap2"])
        g["enc2"] = _conv.conv_weight_grad(c["h"], d_z, p["enc2"].shape[2:], c["s2"])
        d_h = _conv.conv_input_grad(d_z, p["enc2"], c["s2"], c["h"].shape[1:])
        g["enc1"] = _conv.conv_weight_grad(c["xmix"], d_h, p["enc1"].shape[2:], c["s1"])
        d_x = _conv.conv_input_grad(d_h, p["enc1"], c["s1"], c["xmix"].shape[1:])
        g["mix"] = np.tensordot(c["xs"], d_x, axes=(list(range(1, c["xs"].ndim)), list(range(d_x.ndim))))
        return loss, g


def _gather_index(shape, plan, jitter):
    """Flat indices mapping the raw decoder output to the cropped frame."""
    idx = np.arange(int(np.prod(shape)), dtype=np.float64).reshape(shape)
    return _crop_array(wrap_pad(idx, plan), plan, jitter).astype(np.int64)


def _l1(pred, target: FieldSet, stats: NormStats):
    """Mean over fields of mean |pred - target / out_scale| and its gradient."""
    scale = stats.per_channel(target, "output").reshape((-1,) + (1,) * target.dim)
    diff = pred - target.values / scale
    grad = np.zeros_like(pred)
    per_field = []
    n_fields = len(target.names)
    for sl in target.channel_slices().values():
        per_field.append(np.mean(np.abs(diff[sl])))
        grad[sl] = np.sign(diff[sl]) / (diff[sl].size * n_fields)
    return float(np.mean(per_field)), grad


def finite_difference_check(model: LinearPathModel, batch, h: float = 1e-6,
                            jitters=None) -> float:
    """Relative error between the analytic gradient and central differences."""
    _, grads = model.loss_and_grad(batch, jitters)
    analytic, numeric = [], []
    for name in PARAMS:
        arr = model.params[name]
        for i in np.ndindex(arr.shape):
            keep = arr[i]
            arr[i] = keep + h
            up = model.loss(batch, jitters)
            arr[i] = keep - h
            down = model.loss(batch, jitters)
            arr[i] = keep
            numeric.append((up - down) / (2 * h))
            analytic.append(grads[name][i])
    analytic, numeric = np.array(analytic), np.array(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), EPS))


# --- training --------------------------------------------------------------------------

def identity_windows(traj: Trajectory, history: int, mode=NormMode.PRETRAINING,
                     stats: NormStats | None = None) -> list:
    """Windows whose target is the last delta inside the window."""
    if history < 2:
        raise ValueError("the identity task needs a history of at least two frames")
    out = []
    for start in range(len(traj) - history + 1):
        win = traj.replace_snapshots(traj.snapshots[start:start + history])
        st = stats_for(win, mode, stats)
        target = win.snapshots[-1].with_values(win.snapshots[-1].values - win.snapshots[-2].values)
        out.append((win, target, st))
    return out


def next_step_windows(traj: Trajectory, history: int, mode=NormMode.PRETRAINING,
                      stats: NormStats | None = None) -> list:
    out = []
    for start in range(len(traj) - history):
        win = traj.replace_snapshots(traj.snapshots[start:start + history])
        st = stats_for(win, mode, stats)
        nxt, last = traj.snapshots[start + history], win.snapshots[-1]
        out.append((win, last.with_values(nxt.values - last.values), st))
    return out


@dataclass
class TrainResult:
    model: LinearPathModel
    losses: list = field(default_factory=list)


def train_linear_path(model: LinearPathModel, windows, steps: int, lr: float,
                      optimizer: str = "adam", schedule: str = "cosine",
                      rng=None, jitter: bool = False) -> TrainResult:
    """Full-batch descent on the normalized L1 loss.

    ``optimizer`` is ``"sgd"`` or ``"adam"``; ``schedule`` is ``"constant"``
    or ``"cosine"`` (decay to zero at the last step). The model is not
    modified; the trained copy is returned with the loss before each step.
    """
    if optimizer not in ("sgd", "adam") or schedule not in ("constant", "cosine"):
        raise ConfigError(f"unknown optimizer/schedule {optimizer}/{schedule}")
    if jitter and rng is None:
        raise ConfigError("jittered training needs an rng")
    model = model.copy()
    result = TrainResult(model)
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(x) for k, x in model.params.items()}
    b1, b2 = 0.9, 0.999
    for step in range(steps):
        jits = [model.plan.draw_jitter(rng) for _ in windows] if jitter else None
        loss, grads = model.loss_and_grad(windows, jits)
        if not np.isfinite(loss):
            raise TrainingError(f"loss became {loss} at step {step}")
        result.losses.append(loss)
        rate = lr if schedule == "constant" else lr * 0.5 * (1 + np.cos(np.pi * step / steps))
        for k, grad in grads.items():
            if optimizer == "sgd":
                model.params[k] = model.params[k] - rate * grad
                continue
            m[k] = b1 * m[k] + (1 - b1) * grad
            v[k] = b2 * v[k] + (1 - b2) * grad**2
            m_hat = m[k] / (1 - b1 ** (step + 1))
            v_hat = v[k] / (1 - b2 ** (step + 1))
            model.params[k] = model.params[k] - rate * m_hat / (np.sqrt(v_hat) + 1e-12)
    final = model.loss(windows)
    if not np.isfinite(final):
        raise TrainingError(f"loss became {final} after training")
    result.losses.append(final)
    return result


# --- rollout --------------------------------------------------------------------------

def rollout(model, history: Trajectory, horizon: int, jitter: bool, rng=None,
            mode=NormMode.PRETRAINING, stats: NormStats | None = None) -> Trajectory:
    """Autoregressive rollout.

    Returns the history followed by ``horizon`` predicted frames. ``model``
    needs a ``history`` length and ``predict(window, stats, rng, jitter)``
    returning a normalized delta. Jitter is redrawn every step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if jitter and rng is None:
        raise ConfigError("jittered rollout needs an rng")
    # windows hold at least two frames (a trajectory invariant and the
    # minimum for window statistics); models read only their last ``history``
    span = max(model.history, 2)
    frames = list(history.snapshots)
    if len(frames) < span:
        raise IndexError(f"need {span} history frames, got {len(frames)}")
    for step in range(1, horizon + 1):
        window = history.replace_snapshots(frames[-span:])
        st = stats_for(window, mode, stats)
        try:
            delta = model.predict(window, st, rng, jitter)
        except FloatingPointError as exc:
            raise RolloutError(step, str(exc)) from None
        scale = st.per_channel(delta, "output").reshape((-1,) + (1,) * delta.dim)
        nxt = frames[-1].values + delta.values * scale
        if not np.all(np.isfinite(nxt)):
            raise RolloutError(step, "prediction is not finite")
        frames.append(frames[-1].with_values(nxt))
    return history.replace_snapshots(tuple(frames))


def predictions(rolled: Trajectory, history: Trajectory) -> tuple:
    """The predicted snapshots of a :func:`rollout` result."""
    return rolled.snapshots[len(history):]


# --- alias audit ---------------------------------------------------------------------

def alias_energy(u, k0: int, m: int) -> float:
    """Energy in the alias bins of ``+-k0`` relative to the energy at ``+-k0``."""
    from . import spectral

    c = np.abs(spectral.dft(np.asarray(u, dtype=np.float64))) ** 2
    n = c.shape[0]
    signal = c[k0 % n] + c[-k0 % n]
    bins = np.union1d(spectral.alias_bins(n, m, k0), spectral.alias_bins(n, m, -k0))
    bins = bins[(bins != k0 % n) & (bins != -k0 % n)]
    return float(np.sum(c[bins]) / signal)


def notch_filter(n: int, k0: int, taps: int) -> np.ndarray:
    """``[1, -2 cos(2 pi k0 / n), 1]`` zero-padded: its response vanishes at ``+-k0``."""
    if taps < 3:
        raise ConfigError("the notch filter needs at least three taps")
    h = np.zeros(taps)
    h[:3] = [1.0, -2.0 * np.cos(2 * np.pi * k0 / n), 1.0]
    return h


def adversarial_model(n: int = 64, p: int = 8, k0: int = 3, eps: float = 0.02):
    """Delta model ``eps * B`` on an ``n x 1`` periodic grid, plus a pure-mode history.

    ``B`` box-filters with stride ``p`` and decodes with a notch at ``+-k0``, so
    the signal bin is never written and every decoded cell is alias energy.
    """
    from .patching import make_plan
    from .tensorfield import Boundary, BoundarySpec

    boundary = BoundarySpec.uniform(Boundary.PERIODIC, 2)
    plan = make_plan((n, 1), [(p, p, 1, 1), (1, 1, 1, 1)], boundary)
    enc1 = np.zeros((1, 1 + N_MASKS, p, 1))
    enc1[0, 0, :, 0] = 1.0 / p
    one = np.ones((1, 1, 1, 1))
    dec1 = notch_filter(n, k0, p).reshape(1, 1, p, 1)
    model = LinearPathModel(plan, dict(enc1=enc1, enc2=one, dec2=one.copy(), dec1=dec1,
                                       mix=np.array([eps])))
    u = np.cos(2 * np.pi * k0 * np.arange(n) / n)[None, :, None]
    history = Trajectory.from_array(("u",), (0,), np.stack([u, u]), boundary=boundary)
    return model, history


@dataclass
class AliasDemo:
    plain: np.ndarray          # alias energy per step without jitter
    jittered: np.ndarray       # (seeds, steps)
    ratios: np.ndarray         # plain / jittered at the last step, per seed

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.plain) > 0))

    def pass_fraction(self, factor: float = 5.0) -> float:
        return float(np.mean(self.ratios >= factor))


def alias_demo(steps: int = 10, seeds=range(20), n: int = 64, p: int = 8, k0: int = 3,
               eps: float = 0.02) -> AliasDemo:
    from .normalize import NormStats

    model, history = adversarial_model(n, p, k0, eps)
    stats = NormStats.unit(history.template.names)
    m = n // p

    def curve(jitter, rng=None):
        out = rollout(model, history, steps, jitter, rng, NormMode.FINETUNING, stats)
        return np.array([alias_energy(f.values[0, :, 0], k0, m)
                         for f in predictions(out, history)])

    plain = curve(False)
    jit = np.array([curve(True, np.random.default_rng(s)) for s in seeds])
    return AliasDemo(plain, jit, plain[-1] / jit[:, -1])


@dataclass(eq=False)
class ZeroModel:
    """Predicts no change; every state is a fixed point."""

    history: int = 1

    def predict(self, window, stats, rng=None, jitter=False):
        t = window.template
        return t.with_values(np.zeros_like(t.values))


def with_params(model: LinearPathModel, **params) -> LinearPathModel:
    new = model.copy()
    new.params.update({k: np.asarray(v, dtype=np.float64) for k, v in params.items()})
    return new


__all__ = [
    "AttentionModel", "AttentionWeights", "BlockState", "EmulatorConfig",
    "LinearPathModel", "Mode", "SpatialWeights", "TemporalWeights", "TrainResult",
    "ZeroModel", "axial_rope", "finite_difference_check", "forward",
    "identity_windows", "next_step_windows", "rms_group_norm", "rollout",
    "run_blocks", "spatial_block", "temporal_block", "train_linear_path",
    "with_params", "alias_demo", "alias_energy", "adversarial_model", "predictions",
]
