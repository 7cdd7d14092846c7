"""Asymmetric RMS normalization and the normalized delta loss.

Inputs are divided by the per-field RMS of the history window, model outputs
(deltas) are multiplied by the per-field RMS of the history's consecutive
differences. Stats are per field (all tensor components pooled) so that the
scaling commutes with rotations of vector and tensor fields.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensorfield import FieldSet, Trajectory

EPS = 1e-8


class NormMode(enum.Enum):
    PRETRAINING = "pretraining"  # stats from each history window
    FINETUNING = "finetuning"    # stats precomputed over a whole dataset


@dataclass(frozen=True, eq=False)
class NormStats:
    names: tuple
    input_scale: np.ndarray
    output_scale: np.ndarray
    eps: float = EPS

    def __post_init__(self):
        inp = np.maximum(np.asarray(self.input_scale, dtype=np.float64), self.eps)
        out = np.maximum(np.asarray(self.output_scale, dtype=np.float64), self.eps)
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if inp.shape != (len(self.names),) or out.shape != (len(self.names),):
            raise DimensionError("one input and one output scale per field")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "input_scale", inp)
        object.__setattr__(self, "output_scale", out)

    @classmethod
    def unit(cls, names) -> "NormStats":
        names = tuple(names)
        return cls(names, np.ones(len(names)), np.ones(len(names)))

    def per_channel(self, template: FieldSet, which: str) -> np.ndarray:
        """Expand per-field scales to a ``(channels,)`` vector for ``template``."""
        self._check(template)
        scale = self.input_scale if which == "input" else self.output_scale
        return np.concatenate([
            np.full(template.dim**o, s) for o, s in zip(template.orders, scale)
        ])

    def _check(self, fs: FieldSet):
        if fs.names != self.names:
            raise DimensionError(f"stats for fields {self.names}, got {fs.names}")


def _field_rms(stack, template):
    """RMS per field over (time, components, space) of a ``(T, C, ...)`` stack."""
    out = []
    for sl in template.channel_slices().values():
        out.append(np.sqrt(np.mean(np.square(stack[:, sl]))))
    return np.array(out)


def compute_stats(history: Trajectory, eps: float = EPS) -> NormStats:
    if len(history) < 2:
        raise IndexError("history window must hold at least two snapshots")
    stack = history.stack()
    t = history.template
    return NormStats(
        t.names,
        _field_rms(stack, t),
        _field_rms(np.diff(stack, axis=0), t),
        eps,
    )


def dataset_stats(trajectories, eps: float = EPS) -> NormStats:
    """Whole-dataset stats for finetuning mode (pooled over every trajectory)."""
    trajectories = list(trajectories)
    t = trajectories[0].template
    sq_in = np.zeros(len(t.names))
    sq_out = np.zeros(len(t.names))
    n_in = np.zeros(len(t.names))
    n_out = np.zeros(len(t.names))
    for traj in trajectories:
        stack = traj.stack()
        deltas = np.diff(stack, axis=0)
        for i, sl in enumerate(t.channel_slices().values()):
            sq_in[i] += np.sum(np.square(stack[:, sl]))
            n_in[i] += stack[:, sl].size
            sq_out[i] += np.sum(np.square(deltas[:, sl]))
            n_out[i] += deltas[:, sl].size
    return NormStats(t.names, np.sqrt(sq_in / n_in), np.sqrt(sq_out / n_out), eps)


def stats_for(window: Trajectory, mode: NormMode = NormMode.PRETRAINING,
              precomputed: NormStats | None = None) -> NormStats:
    if NormMode(mode) is NormMode.FINETUNING:
        if precomputed is None:
            raise ValueError("finetuning mode needs precomputed dataset stats")
        return precomputed
    return compute_stats(window, precomputed.eps if precomputed else EPS)


def normalize_in(u: FieldSet, stats: NormStats) -> FieldSet:
    return u.with_values(u.values / _expand(stats.per_channel(u, "input"), u))


def normalize_out(delta: FieldSet, stats: NormStats) -> FieldSet:
    return delta.with_values(delta.values / _expand(stats.per_channel(delta, "output"), delta))


def denormalize_out(delta_pred: FieldSet, stats: NormStats) -> FieldSet:
    return delta_pred.with_values(
        delta_pred.values * _expand(stats.per_channel(delta_pred, "output"), delta_pred)
    )


def _expand(vec, fs):
    return vec.reshape((-1,) + (1,) * fs.dim)


def step_forward(u_t: FieldSet, model_output: FieldSet, stats: NormStats) -> FieldSet:
    """``u_{t+1} = u_t + M(U_t / RMS(U_t)) * RMS(dU_t)``."""
    if not u_t.same_layout(model_output):
        raise DimensionError("model output layout differs from the state")
    return u_t.with_values(u_t.values + denormalize_out(model_output, stats).values)


def normalized_loss(pred_delta: FieldSet, true_delta: FieldSet, stats: NormStats) -> float:
    """Mean over fields of ``mean|pred - true| / output_scale``."""
    if not pred_delta.same_layout(true_delta):
        raise DimensionError("prediction and target layouts differ")
    stats._check(pred_delta)
    err = np.abs(pred_delta.values - true_delta.values)
    per_field = [
        np.mean(err[sl]) / s
        for sl, s in zip(pred_delta.channel_slices().values(), stats.output_scale)
    ]
    return float(np.mean(per_field))
