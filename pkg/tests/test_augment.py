import numpy as np
import pytest

from emulkit.augment import (
    OctahedralElement,
    admissible_elements,
    apply_group_element,
    apply_to_trajectory,
    embed_2d_in_3d,
    embed_trajectory,
    enumerate_group,
    stride_time,
    transform_boundary,
)
from emulkit.tensorfield import Boundary, BoundarySpec, FieldSet, Trajectory

from conftest import random_fieldset, random_trajectory

GROUP = enumerate_group()


def test_group_size_and_rotations():
    assert len(GROUP) == 48
    assert len({(g.perm, g.signs) for g in GROUP}) == 48
    assert sum(g.det == 1 for g in GROUP) == 24
    assert np.array_equal(GROUP[0].matrix, np.eye(3, dtype=int))


def test_closure_and_inverses():
    members = {g.matrix.tobytes() for g in GROUP}
    for a in GROUP:
        assert a.inverse().matrix.tobytes() in members
        assert np.array_equal(a.matrix @ a.matrix.T, np.eye(3, dtype=int))
        for b in GROUP:
            assert (a @ b).matrix.tobytes() in members


def test_from_matrix_validation():
    with pytest.raises(ValueError):
        OctahedralElement.from_matrix(np.array([[1, 1, 0], [0, 1, 0], [0, 0, 1]]))
    with pytest.raises(ValueError):
        OctahedralElement.from_matrix(np.eye(3) * 0.5)
    with pytest.raises(ValueError):
        apply_group_element(random_fieldset(np.random.default_rng(0), (2, 2, 2), (0,)),
                            np.eye(3) * 2)


def test_embed_velocity_and_tensor(rng):
    vel = rng.standard_normal((2, 4, 5))
    fs = FieldSet(("v",), (1,), vel)
    out = embed_2d_in_3d(fs)
    assert out.extents == (4, 5, 1)
    np.testing.assert_array_equal(out.values[:2, ..., 0], vel)
    assert np.all(out.values[2] == 0)
    t = FieldSet(("s", "p"), (2, 0), rng.standard_normal((5, 3, 3)))
    e = embed_2d_in_3d(t)
    block = e.values[:9].reshape(3, 3, 3, 3, 1)
    assert np.all(block[2] == 0) and np.all(block[:, 2] == 0)
    np.testing.assert_array_equal(e.values[9, ..., 0], t.values[4])
    with pytest.raises(ValueError):
        embed_2d_in_3d(e)


def test_identity_is_bit_exact(rng):
    fs = random_fieldset(rng, (3, 4, 2), (0, 1, 2))
    assert apply_group_element(fs, GROUP[0]) == fs


def test_rotation_about_z_maps_x_to_y():
    rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]])
    vel = np.zeros((3, 2, 2, 2))
    vel[0] = 1.0
    out = apply_group_element(FieldSet(("v",), (1,), vel), rz)
    assert np.all(out.values[1] == 1.0) and np.all(out.values[[0, 2]] == 0)


def test_rotation_moves_grid_like_a_point():
    rz = OctahedralElement.from_matrix([[0, -1, 0], [1, 0, 0], [0, 0, 1]])
    vals = np.zeros((1, 4, 4, 1))
    vals[0, 1, 0, 0] = 1.0
    out = apply_group_element(FieldSet(("p",), (0,), vals), rz).values[0, ..., 0]
    # about the grid centre, cell (1, 0) sits at (-0.5, -1.5) and maps to (1.5, -0.5)
    assert out[3, 1] == 1.0 and out.sum() == 1.0


def test_action_law_exhaustive(rng):
    fs = random_fieldset(rng, (4, 4, 4), (0, 1, 2))
    once = [apply_group_element(fs, g) for g in GROUP]
    for a in GROUP:
        for i, b in enumerate(GROUP):
            assert apply_group_element(once[i], a) == apply_group_element(fs, a @ b)


def test_inverse_round_trip(rng):
    fs = random_fieldset(rng, (3, 5, 2), (1, 2))
    for g in GROUP:
        assert apply_group_element(apply_group_element(fs, g), g.inverse()) == fs


def test_outer_product_law(rng):
    a = rng.standard_normal((3, 3, 3, 3))
    b = rng.standard_normal((3, 3, 3, 3))
    outer = np.einsum("i...,j...->ij...", a, b).reshape(9, 3, 3, 3)
    fs = FieldSet(("a", "b", "ab"), (1, 1, 2), np.concatenate([a, b, outer]))
    for g in GROUP:
        out = apply_group_element(fs, g)
        ra, rb = out.field("a"), out.field("b")
        want = np.einsum("i...,j...->ij...", ra, rb).reshape(9, 3, 3, 3)
        assert np.max(np.abs(out.field("ab") - want)) <= 1e-12


def test_embedded_zero_component_stays_zero(rng):
    fs = embed_2d_in_3d(FieldSet(("v",), (1,), rng.standard_normal((2, 4, 4))))
    for g in GROUP:
        out = apply_group_element(fs, g).values
        zero_axis = list(g.perm).index(2)
        assert np.all(out[zero_axis] == 0)


def test_pointwise_magnitudes_preserved(rng):
    fs = random_fieldset(rng, (3, 3, 3), (1,))
    norms = np.sort(np.linalg.norm(fs.values, axis=0).ravel())
    for g in GROUP:
        out = apply_group_element(fs, g)
        got = np.sort(np.linalg.norm(out.values, axis=0).ravel())
        np.testing.assert_allclose(got, norms, rtol=4e-16, atol=0)


def test_admissibility():
    assert len(admissible_elements((4, 4, 4), keep_extents=True)) == 48
    assert len(admissible_elements((4, 4, 1), keep_extents=True)) == 16
    assert len(admissible_elements((2, 3, 5), keep_extents=True)) == 8
    assert len(admissible_elements((2, 3, 5), keep_extents=False)) == 48
    fs = random_fieldset(np.random.default_rng(0), (2, 3, 5), (0,))
    swap = OctahedralElement((1, 0, 2), (1, 1, 1))
    with pytest.raises(ValueError):
        apply_group_element(fs, swap, keep_extents=True)
    assert apply_group_element(fs, swap).extents == (3, 2, 5)


def test_boundary_follows_axes():
    O, C, P = Boundary.OPEN, Boundary.CLOSED, Boundary.PERIODIC
    spec = BoundarySpec(((O, C), (P, P), (C, C)))
    flip = OctahedralElement((1, 0, 2), (-1, 1, 1))
    assert transform_boundary(spec, flip).sides == ((P, P), (O, C), (C, C))
    flip_x = OctahedralElement((0, 1, 2), (-1, 1, 1))
    assert transform_boundary(spec, flip_x).sides[0] == (C, O)


def test_trajectory_embedding_and_augmentation(rng):
    traj = random_trajectory(rng, length=3, extents=(4, 6), orders=(0, 1))
    emb = embed_trajectory(traj)
    assert emb.template.extents == (4, 6, 1) and emb.boundary.is_periodic(2)
    g = OctahedralElement((2, 0, 1), (1, -1, 1))
    out = apply_to_trajectory(emb, g)
    assert out.template.extents == (1, 4, 6) and len(out) == 3


def test_stride_time_cases(rng):
    traj = random_trajectory(rng, length=11, extents=(2, 2), orders=(0,))
    assert stride_time(traj, 1, phase=0) == traj
    lengths = set()
    for phase in range(5):
        s = stride_time(traj, 5, phase=phase)
        assert s.dt_index == 5
        lengths.add(len(s))
        assert s.snapshots[0] == traj.snapshots[phase]
    assert lengths == {2, 3}
    twice = stride_time(stride_time(traj, 2, phase=1), 2, phase=0)
    assert twice == stride_time(traj, 4, phase=1)
    r = stride_time(traj, 3, rng=np.random.default_rng(3))
    assert r.dt_index == 3 and len(r) >= 2


def test_stride_time_errors(rng):
    traj = random_trajectory(rng, length=4, extents=(2, 2), orders=(0,))
    with pytest.raises(IndexError):
        stride_time(traj, 5)
    with pytest.raises(ValueError):
        stride_time(traj, 6)
    with pytest.raises(IndexError):
        stride_time(traj, 2, phase=3)
