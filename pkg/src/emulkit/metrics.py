"""Rollout metrics: VMSE / VRMSE per field and windowed aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .normalize import EPS
from .tensorfield import FieldSet


def _per_field(pred: FieldSet, truth: FieldSet):
    if not pred.same_layout(truth):
        raise DimensionError(
            f"layouts differ: {pred.names}/{pred.extents} vs {truth.names}/{truth.extents}"
        )
    spatial = tuple(range(1, truth.dim + 1))
    for name, sl in truth.channel_slices().items():
        p, t = pred.values[sl], truth.values[sl]
        err = np.mean(np.sum(np.square(p - t), axis=0))
        centered = t - np.mean(t, axis=spatial, keepdims=True)
        var = np.mean(np.sum(np.square(centered), axis=0))
        yield name, err, var


def vmse(pred: FieldSet, truth: FieldSet, eps: float = EPS) -> dict:
    return {name: float(err / (var + eps)) for name, err, var in _per_field(pred, truth)}


def vrmse(pred: FieldSet, truth: FieldSet, eps: float = EPS) -> dict:
    """Per-field RMSE over the truth's spatial standard deviation.

    ``|.|`` is the Euclidean norm over tensor components, spatial means are
    over grid cells; ``eps`` floors the variance.
    """
    return {
        name: float(np.sqrt(err) / np.sqrt(var + eps))
        for name, err, var in _per_field(pred, truth)
    }


def field_mean(per_field: dict) -> float:
    """Unweighted mean across fields (the headline number)."""
    return float(np.mean(list(per_field.values())))


def parse_window(text: str) -> tuple:
    """``"1:20"`` -> ``(1, 20)``, 1-based and inclusive."""
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def window_mean(per_step, window) -> float:
    """Mean of 1-based inclusive ``window`` over the steps that exist.

    A trajectory shorter than the window averages over its available frames;
    a window starting past the end raises ``IndexError``.
    """
    lo, hi = window
    if lo < 1 or hi < lo:
        raise IndexError(f"empty window {lo}:{hi}")
    values = np.asarray(per_step, dtype=np.float64)[lo - 1:hi]
    if values.size == 0:
        raise IndexError(f"window {lo}:{hi} has no frames in a {len(per_step)}-step rollout")
    return float(np.mean(values))


@dataclass
class MetricReport:
    per_step: list                      # per trajectory: list of {field: vrmse}
    windows: tuple
    window_values: list = field(default_factory=list)   # per trajectory: {window: mean}
    medians: dict = field(default_factory=dict)         # {window: median over trajectories}


def window_aggregate(per_step_metrics, windows) -> MetricReport:
    """Aggregate per-step metrics of several trajectories.

    ``per_step_metrics`` is a list (one entry per trajectory) of per-step
    values, each either a float or a ``{field: value}`` dict (reduced by the
    unweighted field mean). Windows a trajectory cannot reach are skipped for
    that trajectory; the median runs over trajectories that have the window.
    """
    windows = tuple(tuple(w) for w in windows)
    for lo, hi in windows:
        if lo < 1 or hi < lo:
            raise IndexError(f"empty window {lo}:{hi}")
    report = MetricReport(list(per_step_metrics), windows)
    for steps in report.per_step:
        scalars = [field_mean(v) if isinstance(v, dict) else float(v) for v in steps]
        row = {}
        for w in windows:
            if w[0] <= len(scalars):
                row[w] = window_mean(scalars, w)
        report.window_values.append(row)
    for w in windows:
        vals = [row[w] for row in report.window_values if w in row]
        if vals:
            report.medians[w] = float(np.median(vals))
    return report
