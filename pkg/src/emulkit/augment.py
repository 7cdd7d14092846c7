"""Dimension padding, octahedral tensor-law transforms and time striding.

A group element ``R`` is a signed permutation: ``R[a, perm[a]] = signs[a]``.
Acting on a field, ``u'(y) = R u(R^T y)``; on the grid this means new axis
``a`` is old axis ``perm[a]``, reversed when ``signs[a] == -1``. Vector
components map as ``v'_a = signs[a] v_perm[a]`` and order-2 components as
``T'_ab = signs[a] signs[b] T_perm[a] perm[b]``. Everything is index
shuffling and sign flips, so compositions are bit-exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensorfield import Boundary, BoundarySpec, FieldSet, Trajectory


@dataclass(frozen=True)
class OctahedralElement:
    perm: tuple
    signs: tuple

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        signs = tuple(int(s) for s in self.signs)
        if sorted(perm) != [0, 1, 2] or any(s not in (-1, 1) for s in signs):
            raise ValueError(f"not a signed permutation of three axes: {perm}, {signs}")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def from_matrix(cls, matrix) -> "OctahedralElement":
        r = np.asarray(matrix)
        if r.shape != (3, 3) or not np.array_equal(r, np.round(r)):
            raise ValueError("group elements are 3x3 integer matrices")
        r = r.astype(int)
        if not np.array_equal(r @ r.T, np.eye(3, dtype=int)) or np.count_nonzero(r) != 3:
            raise ValueError(f"matrix is not a signed permutation:\n{r}")
        perm = tuple(int(np.flatnonzero(row)[0]) for row in r)
        signs = tuple(int(r[a, perm[a]]) for a in range(3))
        return cls(perm, signs)

    @property
    def matrix(self) -> np.ndarray:
        r = np.zeros((3, 3), dtype=int)
        for a in range(3):
            r[a, self.perm[a]] = self.signs[a]
        return r

    @property
    def det(self) -> int:
        return int(round(np.linalg.det(self.matrix)))

    def __matmul__(self, other: "OctahedralElement") -> "OctahedralElement":
        return OctahedralElement.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "OctahedralElement":
        return OctahedralElement.from_matrix(self.matrix.T)


@lru_cache(maxsize=1)
def enumerate_group() -> tuple:
    """All 48 signed permutations; index 0 is the identity."""
    return tuple(
        OctahedralElement(perm, signs)
        for perm in itertools.permutations(range(3))
        for signs in itertools.product((1, -1), repeat=3)
    )


def embed_2d_in_3d(field: FieldSet) -> FieldSet:
    """Append a singleton z axis and zero-pad tensor components to 3D."""
    if field.dim != 2:
        raise ValueError(f"expected a 2D field, got dim={field.dim}")
    h, w = field.extents
    blocks = []
    for name, order in zip(field.names, field.orders):
        vals = field.field(name)
        if order == 0:
            blocks.append(vals)
        elif order == 1:
            blocks.append(np.concatenate([vals, np.zeros((1, h, w))]))
        else:
            full = np.zeros((3, 3, h, w))
            full[:2, :2] = vals.reshape(2, 2, h, w)
            blocks.append(full.reshape(9, h, w))
    values = np.concatenate(blocks)[..., None]
    return FieldSet(field.names, field.orders, values, field.transforms)


def embed_trajectory(traj: Trajectory) -> Trajectory:
    """2D trajectory to 3D; the new singleton axis is tagged periodic."""
    sides = traj.boundary.sides + ((Boundary.PERIODIC, Boundary.PERIODIC),)
    return Trajectory(
        tuple(embed_2d_in_3d(s) for s in traj.snapshots),
        traj.dt_index,
        BoundarySpec(sides),
    )


def is_admissible(element: OctahedralElement, extents, keep_extents: bool) -> bool:
    if not keep_extents:
        return True
    return all(extents[element.perm[a]] == extents[a] for a in range(3))


def admissible_elements(extents, keep_extents: bool) -> list:
    return [g for g in enumerate_group() if is_admissible(g, extents, keep_extents)]


def _transform_values(values, orders, element):
    perm, signs = element.perm, np.array(element.signs, dtype=np.float64)
    # spatial: new axis a <- old axis perm[a], reversed where signs[a] < 0
    x = np.transpose(values, (0,) + tuple(p + 1 for p in perm))
    flips = tuple(a + 1 for a in range(3) if signs[a] < 0)
    if flips:
        x = np.flip(x, axis=flips)
    out, start = [], 0
    for order in orders:
        width = 3**order
        block = x[start:start + width]
        start += width
        if order == 1:
            block = signs[:, None, None, None] * block[list(perm)]
        elif order == 2:
            idx = [3 * perm[a] + perm[b] for a in range(3) for b in range(3)]
            sgn = np.outer(signs, signs).reshape(9)
            block = sgn[:, None, None, None] * block[idx]
        out.append(block)
    return np.ascontiguousarray(np.concatenate(out))


def apply_group_element(field: FieldSet, element, keep_extents: bool = False) -> FieldSet:
    """Rotate/reflect a 3D field, transforming tensor components consistently.

    ``element`` may be an :class:`OctahedralElement` or a 3x3 matrix. With
    ``keep_extents`` only elements mapping every axis onto one of equal length
    are accepted.
    """
    if field.dim != 3:
        raise ValueError(f"group action needs a 3D field, got dim={field.dim}")
    if not isinstance(element, OctahedralElement):
        element = OctahedralElement.from_matrix(element)
    if not is_admissible(element, field.extents, keep_extents):
        raise ValueError(
            f"element {element} would change extents {field.extents}"
        )
    return field.with_values(_transform_values(field.values, field.orders, element))


def transform_boundary(boundary: BoundarySpec, element: OctahedralElement) -> BoundarySpec:
    sides = []
    for a in range(3):
        lo, hi = boundary.sides[element.perm[a]]
        sides.append((hi, lo) if element.signs[a] < 0 else (lo, hi))
    return BoundarySpec(tuple(sides))


def apply_to_trajectory(traj: Trajectory, element, keep_extents: bool = False) -> Trajectory:
    if not isinstance(element, OctahedralElement):
        element = OctahedralElement.from_matrix(element)
    snaps = tuple(apply_group_element(s, element, keep_extents) for s in traj.snapshots)
    return Trajectory(snaps, traj.dt_index, transform_boundary(traj.boundary, element))


MAX_TIME_STRIDE = 5


def admissible_phases(length: int, stride: int) -> range:
    """Start offsets leaving at least two snapshots."""
    return range(0, min(stride, max(length - stride, 0)))


def stride_time(traj: Trajectory, stride: int, rng=None, phase=None) -> Trajectory:
    """Keep every ``stride``-th snapshot from a (random) admissible phase."""
    if not 1 <= stride <= MAX_TIME_STRIDE:
        raise ValueError(f"time stride must be in 1..{MAX_TIME_STRIDE}, got {stride}")
    phases = admissible_phases(len(traj), stride)
    if not phases:
        raise IndexError(
            f"trajectory of length {len(traj)} too short for time stride {stride}"
        )
    if phase is None:
        phase = int(rng.integers(len(phases))) if rng is not None else 0
    if phase not in phases:
        raise IndexError(f"phase {phase} not admissible, choose from {list(phases)}")
    kept = traj.snapshots[phase::stride]
    return traj.replace_snapshots(kept, dt_index=traj.dt_index * stride)
