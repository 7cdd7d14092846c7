import numpy as np
import pytest

from emulkit.errors import ConfigError
from emulkit.synthetic import (
    CENTER_RANGE,
    KINDS,
    NU_RANGE,
    SIGMA_RANGE,
    draw_case,
    gen_synthetic,
)


def test_zero_velocity_is_constant():
    rng = np.random.default_rng(0)
    case = draw_case("mixed", (8, 12), rng, velocity=(0.0, 0.0))
    traj = case.trajectory(5)
    assert all(s == traj.snapshots[0] for s in traj.snapshots)


def test_one_cell_per_step_is_a_roll():
    n = (16, 8)
    rng = np.random.default_rng(1)
    # velocity * dt * n == 1 cell per step along axis 0, 2 along axis 1
    case = draw_case("advection", n, rng, dt=0.25, velocity=(1 / (0.25 * 16), 2 / (0.25 * 8)))
    u0 = case.solution(0)
    for t in range(1, 4):
        np.testing.assert_array_equal(case.solution(t), np.roll(u0, (t, 2 * t), axis=(0, 1)))


def test_pure_mode_has_one_bin():
    rng = np.random.default_rng(2)
    case = draw_case("pure-mode", (32,  1), rng, mode=(3, 0))
    c = np.abs(np.fft.fft(case.solution(0)[:, 0])) / 32
    assert np.isclose(c[3], 0.5) and np.isclose(c[29], 0.5)
    c[[3, 29]] = 0
    assert c.max() < 1e-12


def test_parameter_ranges():
    rng = np.random.default_rng(3)
    for _ in range(200):
        case = draw_case(KINDS[_ % 3], (16, 16, 8), rng)
        assert all(NU_RANGE[0] <= abs(v) <= NU_RANGE[1] for v in case.velocity)
        assert all(CENTER_RANGE[0] <= c <= CENTER_RANGE[1] for c in case.center)
        assert SIGMA_RANGE[0] <= case.sigma <= SIGMA_RANGE[1]


def test_trajectory_layout_and_determinism():
    a = gen_synthetic("advection", (8, 8, 4), 3, seed=5)
    assert len(a) == 3 and a.template.extents == (8, 8, 4) and a.template.names == ("u",)
    assert all(a.boundary.is_periodic(i) for i in range(3))
    assert a == gen_synthetic("advection", (8, 8, 4), 3, seed=5)


def test_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        draw_case("vortex", (8, 8), rng)
    with pytest.raises(ConfigError):
        draw_case("advection", (8,), rng)
    with pytest.raises(ConfigError):
        gen_synthetic("advection", (8, 8), 0, seed=0)
