"""Discretized fields, trajectories and the ``CKT1`` on-disk container.

Channel layout is field-major, then tensor-component-major: a velocity field
in 3D occupies three contiguous channels (v_x, v_y, v_z); an order-2 field in
3D occupies nine channels in row-major (i, j) order.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContainerError, DimensionError

CONTAINER_VERSION = "CKT1"


class Boundary(enum.IntEnum):
    # The integer value doubles as the boundary-mask channel index.
    OPEN = 0
    CLOSED = 1
    PERIODIC = 2

    @classmethod
    def parse(cls, text: str) -> "Boundary":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown boundary tag {text!r}") from None


@dataclass(frozen=True)
class BoundarySpec:
    """Per-axis ``(low side, high side)`` boundary tags."""

    sides: tuple

    def __post_init__(self):
        sides = tuple((Boundary(lo), Boundary(hi)) for lo, hi in self.sides)
        for axis, (lo, hi) in enumerate(sides):
            if (lo == Boundary.PERIODIC) != (hi == Boundary.PERIODIC):
                raise ValueError(f"axis {axis}: periodicity must hold on both sides")
        object.__setattr__(self, "sides", sides)

    @classmethod
    def uniform(cls, tag, ndim: int) -> "BoundarySpec":
        tag = Boundary.parse(tag) if isinstance(tag, str) else Boundary(tag)
        return cls(tuple((tag, tag) for _ in range(ndim)))

    @property
    def ndim(self) -> int:
        return len(self.sides)

    def is_periodic(self, axis: int) -> bool:
        return self.sides[axis][0] == Boundary.PERIODIC

    def encode(self) -> str:
        return ";".join(f"{lo.name.lower()}:{hi.name.lower()}" for lo, hi in self.sides)

    @classmethod
    def decode(cls, text: str) -> "BoundarySpec":
        sides = []
        for chunk in text.split(";"):
            lo, hi = chunk.split(":")
            sides.append((Boundary.parse(lo), Boundary.parse(hi)))
        return cls(tuple(sides))


def channels_for(orders: Sequence[int], dim: int) -> int:
    return sum(dim**o for o in orders)


@dataclass(frozen=True, eq=False)
class FieldSet:
    """Named physical fields sampled on a regular grid.

    ``values`` has shape ``(channels, *extents)``; it is copied and made
    read-only on construction.
    """

    names: tuple
    orders: tuple
    values: np.ndarray
    transforms: tuple = field(default=None)

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        orders = tuple(int(o) for o in self.orders)
        if len(names) != len(orders):
            raise DimensionError("names and orders differ in length")
        if len(set(names)) != len(names):
            raise ValueError("field names must be unique")
        if any(o not in (0, 1, 2) for o in orders):
            raise ValueError(f"tensor orders must be 0, 1 or 2, got {orders}")
        values = np.array(self.values, dtype=np.float64, copy=True)
        dim = values.ndim - 1
        if dim not in (2, 3):
            raise ValueError(f"spatial dimensionality must be 2 or 3, got {dim}")
        if any(e < 1 for e in values.shape[1:]):
            raise ValueError("every extent must be >= 1")
        expected = channels_for(orders, dim)
        if values.shape[0] != expected:
            raise DimensionError(
                f"{values.shape[0]} channels given, fields {names} with orders "
                f"{orders} need {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.flags.writeable = False
        transforms = self.transforms
        if transforms is None:
            transforms = ("none",) * len(names)
        transforms = tuple(str(t) for t in transforms)
        if len(transforms) != len(names):
            raise DimensionError("one transform tag per field is required")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "transforms", transforms)

    @property
    def dim(self) -> int:
        return self.values.ndim - 1

    @property
    def extents(self) -> tuple:
        return self.values.shape[1:]

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    def channel_slices(self) -> dict:
        out, start = {}, 0
        for name, order in zip(self.names, self.orders):
            width = self.dim**order
            out[name] = slice(start, start + width)
            start += width
        return out

    def field(self, name: str) -> np.ndarray:
        return self.values[self.channel_slices()[name]]

    def same_layout(self, other: "FieldSet") -> bool:
        return (
            self.names == other.names
            and self.orders == other.orders
            and self.values.shape == other.values.shape
        )

    def with_values(self, values) -> "FieldSet":
        return FieldSet(self.names, self.orders, values, self.transforms)

    def __eq__(self, other):
        if not isinstance(other, FieldSet):
            return NotImplemented
        return (
            self.same_layout(other)
            and self.transforms == other.transforms
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    snapshots: tuple
    dt_index: int
    boundary: BoundarySpec

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if len(snaps) < 2:
            raise ValueError("a trajectory needs at least two snapshots")
        first = snaps[0]
        for i, s in enumerate(snaps[1:], start=1):
            if not first.same_layout(s) or first.transforms != s.transforms:
                raise DimensionError(f"snapshot {i} layout differs from snapshot 0")
        if int(self.dt_index) < 1:
            raise ValueError("dt_index must be >= 1")
        if self.boundary.ndim != first.dim:
            raise DimensionError("boundary spec and field dimensionality differ")
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "dt_index", int(self.dt_index))

    @classmethod
    def from_array(cls, names, orders, array, dt_index=1, boundary=None, transforms=None):
        """Build from a ``(time, channels, *extents)`` array."""
        array = np.asarray(array, dtype=np.float64)
        if boundary is None:
            boundary = BoundarySpec.uniform(Boundary.PERIODIC, array.ndim - 2)
        snaps = tuple(FieldSet(names, orders, a, transforms) for a in array)
        return cls(snaps, dt_index, boundary)

    def __len__(self):
        return len(self.snapshots)

    @property
    def template(self) -> FieldSet:
        return self.snapshots[0]

    def stack(self) -> np.ndarray:
        return np.stack([s.values for s in self.snapshots])

    def replace_snapshots(self, snapshots, dt_index=None) -> "Trajectory":
        return Trajectory(
            tuple(snapshots),
            self.dt_index if dt_index is None else dt_index,
            self.boundary,
        )

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.dt_index == other.dt_index
            and self.boundary == other.boundary
            and len(self) == len(other)
            and all(a == b for a, b in zip(self.snapshots, other.snapshots))
        )

    __hash__ = None


def delta(traj: Trajectory, t: int) -> FieldSet:
    """Difference ``snapshot[t] - snapshot[t-1]``."""
    if not 1 <= t < len(traj):
        raise IndexError(f"delta index {t} outside [1, {len(traj)})")
    cur, prev = traj.snapshots[t], traj.snapshots[t - 1]
    return cur.with_values(cur.values - prev.values)


# --- container -------------------------------------------------------------

_OFFSET_WIDTH = 12
_REQUIRED = (
    "names", "orders", "transforms", "dim", "extents", "dt_index",
    "boundary", "endianness", "dtype", "time_length", "layout",
)


def _header_text(traj: Trajectory, offset: int) -> str:
    t = traj.template
    records = [
        CONTAINER_VERSION,
        f"payload_offset={offset:0{_OFFSET_WIDTH}d}",
        f"names={','.join(t.names)}",
        f"orders={','.join(map(str, t.orders))}",
        f"transforms={','.join(t.transforms)}",
        f"dim={t.dim}",
        f"extents={','.join(map(str, t.extents))}",
        f"dt_index={traj.dt_index}",
        f"boundary={traj.boundary.encode()}",
        "endianness=little",
        "dtype=float64",
        f"time_length={len(traj)}",
        "layout=time,channel,space;row-major;channels=field-major,component-major",
        "end",
    ]
    return "\n".join(records) + "\n"


def write_container(traj: Trajectory, path) -> None:
    probe = _header_text(traj, 0)
    offset = len(probe.encode("ascii"))
    header = _header_text(traj, offset).encode("ascii")
    assert len(header) == offset
    payload = traj.stack().astype("<f8", copy=False).tobytes(order="C")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def _parse_ints(key, text):
    try:
        return [int(x) for x in text.split(",")] if text else []
    except ValueError:
        raise ContainerError(f"record {key!r}: expected integers, got {text!r}") from None


def read_container(path) -> Trajectory:
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"\nend\n")
    if end < 0:
        raise ContainerError("record 'end': header terminator missing")
    try:
        lines = blob[: end + 1].decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise ContainerError("header is not ASCII text") from None
    if not lines or lines[0] != CONTAINER_VERSION:
        got = lines[0] if lines else ""
        raise ContainerError(f"record 'version': unknown version {got!r}")
    meta = {}
    for line in lines[1:]:
        key, sep, value = line.partition("=")
        if not sep:
            raise ContainerError(f"record {line!r}: expected key=value")
        meta[key] = value
    for key in ("payload_offset",) + _REQUIRED:
        if key not in meta:
            raise ContainerError(f"record {key!r}: missing")

    (offset,) = _parse_ints("payload_offset", meta["payload_offset"])
    if offset != end + len(b"\nend\n"):
        raise ContainerError("record 'payload_offset': does not match header length")
    if meta["endianness"] != "little":
        raise ContainerError(f"record 'endianness': unsupported {meta['endianness']!r}")
    if meta["dtype"] != "float64":
        raise ContainerError(f"record 'dtype': unsupported {meta['dtype']!r}")
    names = meta["names"].split(",") if meta["names"] else []
    orders = _parse_ints("orders", meta["orders"])
    transforms = meta["transforms"].split(",") if meta["transforms"] else []
    (dim,) = _parse_ints("dim", meta["dim"])
    extents = _parse_ints("extents", meta["extents"])
    (dt_index,) = _parse_ints("dt_index", meta["dt_index"])
    (time_length,) = _parse_ints("time_length", meta["time_length"])
    if dim not in (2, 3):
        raise ContainerError(f"record 'dim': must be 2 or 3, got {dim}")
    if len(extents) != dim or any(e < 1 for e in extents):
        raise ContainerError(f"record 'extents': {extents} invalid for dim={dim}")
    if len(orders) != len(names) or any(o not in (0, 1, 2) for o in orders):
        raise ContainerError(f"record 'orders': {orders} invalid for names {names}")
    if time_length < 2:
        raise ContainerError("record 'time_length': must be >= 2")
    try:
        boundary = BoundarySpec.decode(meta["boundary"])
    except ValueError as exc:
        raise ContainerError(f"record 'boundary': {exc}") from None
    if boundary.ndim != dim:
        raise ContainerError("record 'boundary': axis count does not match dim")

    shape = (time_length, channels_for(orders, dim), *extents)
    payload = blob[offset:]
    if len(payload) != 8 * int(np.prod(shape)):
        raise ContainerError(
            f"record 'payload': payload length mismatch "
            f"({len(payload)} bytes, expected {8 * int(np.prod(shape))})"
        )
    array = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    try:
        return Trajectory.from_array(names, orders, array, dt_index, boundary, transforms)
    except ValueError as exc:
        raise ContainerError(f"record 'payload': {exc}") from None
