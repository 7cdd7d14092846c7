"""Adaptive two-stage patching, boundary-aware padding and patch jitter.

Pipeline for one frame::

    padded, jitter = pad_and_jitter(field, plan, rng)
    tokens = patch_encode(padded, plan, weights)
    ...
    decoded = patch_decode(tokens, plan, weights, field)
    restored = unjitter_and_crop(decoded, plan, jitter)

Periodic axes are rolled by up to a full extent and circularly padded by
``p_eff - s_eff``. Non-periodic axes are zero padded by ``s_eff // 2 +
(p_eff - s_eff)`` per side (plus any high-side divisibility pad), the padded
cells are flagged in one-hot boundary-mask channels, and the padded array is
rolled by at most the pad width.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _conv
from .errors import DimensionError, InversionError, PlanError
from .tensorfield import Boundary, BoundarySpec, FieldSet

MASK_NAMES = ("mask_open", "mask_closed", "mask_periodic")
N_MASKS = len(MASK_NAMES)


@dataclass(frozen=True)
class AxisPlan:
    extent: int
    p1: int
    s1: int
    p2: int
    s2: int
    periodic: bool
    extra: int = 0

    def __post_init__(self):
        if not (self.p1 >= self.s1 >= 1 and self.p2 >= self.s2 >= 1):
            raise PlanError(f"need p >= s >= 1 for both stages, got {self}")
        if self.extent < 1 or self.extra < 0:
            raise PlanError(f"bad extent/extra in {self}")
        if self.periodic and self.extra:
            raise PlanError("periodic axes cannot take a divisibility pad")
        if self.core_padded % self.s_eff and self.periodic:
            raise PlanError(f"periodic extent {self.extent} not divisible by {self.s_eff}")
        if (self.padded_extent - self.p_eff) % self.s_eff:
            raise PlanError(f"plan {self} does not tile its padded extent")

    @property
    def p_eff(self) -> int:
        return self.p1 + self.s1 * (self.p2 - 1)

    @property
    def s_eff(self) -> int:
        return self.s1 * self.s2

    @property
    def pad_stride(self) -> int:
        return self.p_eff - self.s_eff

    @property
    def pad_total(self) -> int:
        if self.periodic:
            return self.pad_stride
        return self.s_eff // 2 + self.pad_stride

    @property
    def core_padded(self) -> int:
        return self.extent + self.extra

    @property
    def pad_lo(self) -> int:
        return self.pad_stride // 2 if self.periodic else self.pad_total

    @property
    def pad_hi(self) -> int:
        if self.periodic:
            return self.pad_stride - self.pad_stride // 2
        return self.pad_total + self.extra

    @property
    def padded_extent(self) -> int:
        return self.extent + self.pad_lo + self.pad_hi

    @property
    def tokens(self) -> int:
        return (self.padded_extent - self.p_eff) // self.s_eff + 1

    @property
    def jitter_range(self) -> int:
        """Number of admissible jitter offsets, ``j in [0, jitter_range)``."""
        return self.extent if self.periodic else self.pad_total + 1


@dataclass(frozen=True)
class PatchPlan:
    axes: tuple
    boundary: BoundarySpec

    def __post_init__(self):
        if len(self.axes) != self.boundary.ndim:
            raise PlanError("one axis plan per boundary axis is required")
        for i, ax in enumerate(self.axes):
            if ax.periodic != self.boundary.is_periodic(i):
                raise PlanError(f"axis {i}: periodicity disagrees with boundary spec")

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def extents(self) -> tuple:
        return tuple(a.extent for a in self.axes)

    @property
    def padded_extents(self) -> tuple:
        return tuple(a.padded_extent for a in self.axes)

    @property
    def token_shape(self) -> tuple:
        return tuple(a.tokens for a in self.axes)

    def draw_jitter(self, rng) -> tuple:
        return tuple(int(rng.integers(a.jitter_range)) for a in self.axes)


@dataclass(frozen=True, eq=False)
class TokenGrid:
    tokens: np.ndarray
    plan: PatchPlan

    def __post_init__(self):
        if self.tokens.shape[1:] != self.plan.token_shape:
            raise DimensionError(
                f"token grid {self.tokens.shape[1:]} != planned {self.plan.token_shape}"
            )


def _factor(s_eff):
    """Most balanced ``(s1, s2)`` with ``s1 * s2 == s_eff`` and ``s1 >= s2``."""
    s2 = max(d for d in range(1, math.isqrt(s_eff) + 1) if s_eff % d == 0)
    return s_eff // s2, s2


def _divisibility_pad(extent, p1, s1, p2, s2):
    p_eff, s_eff = p1 + s1 * (p2 - 1), s1 * s2
    pad_total = s_eff // 2 + (p_eff - s_eff)
    return (-(extent + 2 * pad_total - p_eff)) % s_eff


def plan_axis(extent: int, target: int, periodic: bool, overlap: int = 0) -> AxisPlan:
    """Pick ``s_eff`` minimizing ``|ceil(extent / s_eff) - target|``.

    Ties go to the larger stride. Periodic axes only consider divisors of the
    extent since they cannot be padded without breaking periodicity.
    ``overlap`` widens the first-stage kernel beyond its stride.
    """
    if not 1 <= target <= extent:
        raise PlanError(f"need 1 <= target <= extent, got target={target}, extent={extent}")
    best = None
    for s_eff in range(1, extent + 1):
        if periodic and extent % s_eff:
            continue
        miss = abs(-(-extent // s_eff) - target)
        if best is None or miss <= best[0]:
            best = (miss, s_eff)
    s1, s2 = _factor(best[1])
    p1, p2 = s1 + overlap, s2
    extra = 0 if periodic else _divisibility_pad(extent, p1, s1, p2, s2)
    return AxisPlan(extent, p1, s1, p2, s2, periodic, extra)


def plan_strides(
    extents: Sequence[int],
    targets: Sequence[int],
    boundary: BoundarySpec | None = None,
    overlap: int = 0,
) -> PatchPlan:
    if len(extents) != len(targets):
        raise PlanError("one target per axis is required")
    if boundary is None:
        boundary = BoundarySpec.uniform(Boundary.PERIODIC, len(extents))
    axes = tuple(
        plan_axis(e, t, boundary.is_periodic(i), overlap)
        for i, (e, t) in enumerate(zip(extents, targets))
    )
    return PatchPlan(axes, boundary)


def make_plan(extents, stages, boundary: BoundarySpec) -> PatchPlan:
    """Plan from explicit ``(p1, s1, p2, s2)`` per axis (or one tuple for all)."""
    if len(stages) == 4 and all(isinstance(v, int) for v in stages):
        stages = [stages] * len(extents)
    axes = []
    for i, (extent, (p1, s1, p2, s2)) in enumerate(zip(extents, stages)):
        periodic = boundary.is_periodic(i)
        extra = 0 if periodic else _divisibility_pad(extent, p1, s1, p2, s2)
        axes.append(AxisPlan(extent, p1, s1, p2, s2, periodic, extra))
    return PatchPlan(tuple(axes), boundary)


# --- padding and jitter ------------------------------------------------------

def _check_jitter(plan, jitter):
    jitter = tuple(int(j) for j in jitter)
    if len(jitter) != plan.dim:
        raise InversionError(f"need {plan.dim} jitter offsets, got {len(jitter)}")
    for i, (ax, j) in enumerate(zip(plan.axes, jitter)):
        if not 0 <= j < ax.jitter_range:
            raise InversionError(f"axis {i}: jitter {j} outside [0, {ax.jitter_range})")
    return jitter


def pad_and_jitter(field: FieldSet, plan: PatchPlan, rng=None, jitter=None):
    """Pad, flag boundary cells and jitter one frame.

    Returns ``(padded, jitter)``; ``padded`` carries three extra scalar mask
    fields (open, closed, periodic). Pass ``jitter`` explicitly to skip the
    random draw; with neither ``rng`` nor ``jitter`` the offsets are zero.
    """
    if field.extents != plan.extents:
        raise DimensionError(f"field extents {field.extents} != plan extents {plan.extents}")
    if jitter is None:
        jitter = plan.draw_jitter(rng) if rng is not None else (0,) * plan.dim
    jitter = _check_jitter(plan, jitter)

    x = field.values
    for i, ax in enumerate(plan.axes):
        if ax.periodic:
            x = np.roll(x, jitter[i], axis=i + 1)

    pad = [(0, 0)] + [
        (0, 0) if ax.periodic else (ax.pad_lo, ax.pad_hi) for ax in plan.axes
    ]
    x = np.pad(x, pad)
    masks = np.zeros((N_MASKS,) + x.shape[1:])
    for i, ax in enumerate(plan.axes):
        if ax.periodic:
            continue
        lo_tag, hi_tag = plan.boundary.sides[i]
        lo = [slice(None)] * plan.dim
        hi = [slice(None)] * plan.dim
        lo[i] = slice(0, ax.pad_lo)
        hi[i] = slice(ax.pad_lo + ax.extent, None)
        masks[(int(lo_tag),) + tuple(lo)] = 1.0
        masks[(int(hi_tag),) + tuple(hi)] = 1.0
    x = np.concatenate([x, masks])
    for i, ax in enumerate(plan.axes):
        if not ax.periodic:
            x = np.roll(x, jitter[i], axis=i + 1)

    wrap = [(0, 0)] + [
        (ax.pad_lo, ax.pad_hi) if ax.periodic else (0, 0) for ax in plan.axes
    ]
    x = np.pad(x, wrap, mode="wrap")
    padded = FieldSet(
        field.names + MASK_NAMES,
        field.orders + (0,) * N_MASKS,
        x,
        field.transforms + ("none",) * N_MASKS,
    )
    return padded, jitter


def unjitter_and_crop(field: FieldSet, plan: PatchPlan, jitter) -> FieldSet:
    """Invert :func:`pad_and_jitter`; mask fields, if present, are dropped."""
    jitter = _check_jitter(plan, jitter)
    if field.extents != plan.padded_extents:
        raise InversionError(
            f"field extents {field.extents} != padded extents {plan.padded_extents}"
        )
    x = field.values
    crop = [slice(None)]
    for ax in plan.axes:
        crop.append(slice(ax.pad_lo, ax.pad_lo + ax.extent) if ax.periodic else slice(None))
    x = x[tuple(crop)]
    for i, ax in enumerate(plan.axes):
        if not ax.periodic:
            x = np.roll(x, -jitter[i], axis=i + 1)
    crop = [slice(None)]
    for ax in plan.axes:
        crop.append(slice(None) if ax.periodic else slice(ax.pad_lo, ax.pad_lo + ax.extent))
    x = x[tuple(crop)]
    for i, ax in enumerate(plan.axes):
        if ax.periodic:
            x = np.roll(x, -jitter[i], axis=i + 1)

    names, orders, transforms = field.names, field.orders, field.transforms
    if names[-N_MASKS:] == MASK_NAMES:
        names, orders, transforms = names[:-N_MASKS], orders[:-N_MASKS], transforms[:-N_MASKS]
        x = x[: x.shape[0] - N_MASKS]
    return FieldSet(names, orders, x, transforms)


# --- encode / decode ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PatchWeights:
    """Two-stage encoder and mirrored decoder.

    ``enc1``: (hidden, in, *p1); ``enc2``: (tokens, hidden, *p2);
    ``dec2``: (tokens, hidden, *p2); ``dec1``: (hidden, out, *p1).
    """

    enc1: np.ndarray
    enc2: np.ndarray
    dec2: np.ndarray
    dec1: np.ndarray
    nonlinear: bool = True

    @classmethod
    def random(cls, plan: PatchPlan, in_channels, hidden, token_channels,
               out_channels, rng, nonlinear=True, scale=None):
        k1 = tuple(a.p1 for a in plan.axes)
        k2 = tuple(a.p2 for a in plan.axes)

        def draw(shape, fan_in):
            std = scale if scale is not None else 1.0 / math.sqrt(fan_in)
            return rng.standard_normal(shape) * std

        n1, n2 = int(np.prod(k1)), int(np.prod(k2))
        return cls(
            draw((hidden, in_channels) + k1, in_channels * n1),
            draw((token_channels, hidden) + k2, hidden * n2),
            draw((token_channels, hidden) + k2, token_channels * n2),
            draw((hidden, out_channels) + k1, hidden * n1),
            nonlinear,
        )

    @classmethod
    def identity(cls, in_channels, out_channels, dim):
        """Identity encode for the all-ones plan; decode keeps the first channels."""
        one = (1,) * dim
        enc = np.eye(in_channels).reshape((in_channels, in_channels) + one)
        dec1 = np.eye(in_channels, out_channels).reshape((in_channels, out_channels) + one)
        return cls(enc, enc.copy(), enc.copy(), dec1, nonlinear=False)

    def _act(self, x):
        return _conv.silu(x) if self.nonlinear else x


def _strides(plan, stage):
    return tuple(a.s1 if stage == 1 else a.s2 for a in plan.axes)


def patch_encode(field: FieldSet, plan: PatchPlan, weights: PatchWeights) -> TokenGrid:
    if field.extents != plan.padded_extents:
        raise DimensionError(
            f"encode expects padded extents {plan.padded_extents}, got {field.extents}"
        )
    return TokenGrid(encode_array(field.values, plan, weights), plan)


def encode_array(x, plan: PatchPlan, weights: PatchWeights) -> np.ndarray:
    if weights.enc1.shape[1] != x.shape[0]:
        raise DimensionError(
            f"encoder expects {weights.enc1.shape[1]} channels, got {x.shape[0]}"
        )
    hidden = _conv.conv(x, weights.enc1, _strides(plan, 1))
    return _conv.conv(weights._act(hidden), weights.enc2, _strides(plan, 2))


def decode_array(tokens, plan: PatchPlan, weights: PatchWeights) -> np.ndarray:
    """Transposed two-stage map back to the padded extents.

    On periodic axes both stages are circular (the hidden grid has period
    ``extent / s1``), then the result is wrap-padded to the padded extent.
    This keeps decoding an exact circular operator, so shifting tokens by one
    shifts the output by exactly ``s_eff`` cells, nonlinearity included.
    """
    if tokens.shape[1:] != plan.token_shape or tokens.shape[0] != weights.dec2.shape[0]:
        raise DimensionError(f"token grid {tokens.shape} does not match plan/weights")
    wrap2, wrap1 = decode_wraps(plan)
    hidden = _conv.conv_transpose(tokens, weights.dec2, _strides(plan, 2), wrap2)
    out = _conv.conv_transpose(weights._act(hidden), weights.dec1, _strides(plan, 1), wrap1)
    return wrap_pad(out, plan)


def decode_wraps(plan: PatchPlan):
    wrap2 = tuple(0 if a.periodic else None for a in plan.axes)
    wrap1 = tuple(a.pad_lo if a.periodic else None for a in plan.axes)
    return wrap2, wrap1


def wrap_pad(x, plan: PatchPlan) -> np.ndarray:
    pad = [(0, 0)] + [
        (a.pad_lo, a.pad_hi) if a.periodic else (0, 0) for a in plan.axes
    ]
    return np.pad(x, pad, mode="wrap")


def patch_decode(tokens: TokenGrid, plan: PatchPlan, weights: PatchWeights,
                 template: FieldSet) -> FieldSet:
    """Decode to the padded extents; channels follow ``template``'s fields."""
    out = decode_array(tokens.tokens, plan, weights)
    if out.shape[0] == template.channels:
        return FieldSet(template.names, template.orders, out, template.transforms)
    if out.shape[0] == template.channels + N_MASKS:
        return FieldSet(
            template.names + MASK_NAMES,
            template.orders + (0,) * N_MASKS,
            out,
            template.transforms + ("none",) * N_MASKS,
        )
    raise DimensionError(
        f"decoder emits {out.shape[0]} channels, template has {template.channels}"
    )


def autoencode(field: FieldSet, plan: PatchPlan, weights: PatchWeights, jitter) -> FieldSet:
    """Pad, jitter, encode, decode, unjitter and crop one frame."""
    padded, jitter = pad_and_jitter(field, plan, jitter=jitter)
    decoded = patch_decode(patch_encode(padded, plan, weights), plan, weights, field)
    return unjitter_and_crop(decoded, plan, jitter)


def jitter_average(field: FieldSet, plan: PatchPlan, weights: PatchWeights) -> FieldSet:
    """Mean of :func:`autoencode` over every admissible jitter."""
    acc = np.zeros_like(field.values)
    offsets = list(itertools.product(*(range(a.jitter_range) for a in plan.axes)))
    for j in offsets:
        acc += autoencode(field, plan, weights, j).values
    return field.with_values(acc / len(offsets))
