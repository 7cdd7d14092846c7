"""Randomized property checks (hypothesis) across modules."""
import numpy as np
from hypothesis import given, settings, strategies as st

from emulkit import spectral
from emulkit.augment import apply_group_element, enumerate_group
from emulkit.metrics import vrmse
from emulkit.normalize import compute_stats, normalized_loss
from emulkit.patching import make_plan, pad_and_jitter, unjitter_and_crop
from emulkit.scheduler import (
    ClusterConfig, CostModel, Dataset, Sampling, Strategy, simulate,
)
from emulkit.tensorfield import Boundary, BoundarySpec, FieldSet, Trajectory

GROUP = enumerate_group()
seeds = st.integers(0, 2**32 - 1)
FAST = settings(max_examples=40, deadline=None)


@FAST
@given(seed=seeds, m=st.integers(1, 8), p=st.sampled_from([1, 2, 3, 4]),
       taps=st.integers(1, 6))
def test_frequency_model_matches_loops(seed, m, p, taps):
    n = m * p
    rng = np.random.default_rng(seed)
    setup = spectral.random_setup(n, p, rng, taps=min(taps, n))
    u = rng.standard_normal(n)
    u_hat = spectral.Spectrum.of_signal(u)
    got = spectral.autoencode_freq(setup, u_hat).signal()
    want = spectral.autoencode_spatial(u, setup.g, setup.h, p)
    assert spectral.relative_error(got, want) < 1e-10


@FAST
@given(seed=seeds, m=st.integers(1, 6), p=st.sampled_from([1, 2, 4]))
def test_jitter_average_removes_aliases(seed, m, p):
    n = m * p
    rng = np.random.default_rng(seed)
    setup = spectral.random_setup(n, p, rng)
    u_hat = spectral.Spectrum.of_signal(rng.standard_normal(n))
    got = spectral.jitter_expectation(setup, u_hat).coeffs
    want = spectral.unaliased_response(setup, u_hat).coeffs
    assert spectral.relative_error(got, want) < 1e-9


@FAST
@given(seed=seeds, i=st.integers(0, 47), j=st.integers(0, 47))
def test_group_action_is_a_homomorphism(seed, i, j):
    rng = np.random.default_rng(seed)
    fs = FieldSet(("s", "v", "t"), (0, 1, 2), rng.standard_normal((13, 3, 2, 4)))
    a, b = GROUP[i], GROUP[j]
    assert apply_group_element(apply_group_element(fs, b), a) == apply_group_element(fs, a @ b)


@FAST
@given(seed=seeds,
       sides=st.lists(st.tuples(st.sampled_from([0, 1]), st.sampled_from([0, 1])),
                      min_size=2, max_size=2),
       periodic=st.lists(st.booleans(), min_size=2, max_size=2),
       s1=st.integers(1, 3), s2=st.integers(1, 2), over=st.integers(0, 2))
def test_pad_jitter_round_trip(seed, sides, periodic, s1, s2, over):
    rng = np.random.default_rng(seed)
    tags = tuple((Boundary.PERIODIC, Boundary.PERIODIC) if per else
                 (Boundary(lo), Boundary(hi)) for per, (lo, hi) in zip(periodic, sides))
    bspec = BoundarySpec(tags)
    extents = tuple(s1 * s2 * int(rng.integers(1, 4)) if per else int(rng.integers(2, 10))
                    for per in periodic)
    plan = make_plan(extents, [(s1 + over, s1, s2, s2)] * 2, bspec)
    fs = FieldSet(("u", "v"), (0, 1), rng.standard_normal((3,) + extents))
    jit = plan.draw_jitter(rng)
    padded, _ = pad_and_jitter(fs, plan, jitter=jit)
    assert unjitter_and_crop(padded, plan, jit) == fs


@FAST
@given(seed=seeds, c=st.floats(1e-3, 1e3))
def test_loss_is_scale_blind(seed, c):
    rng = np.random.default_rng(seed)
    arr = rng.standard_normal((3, 1, 5, 5))
    traj = Trajectory.from_array(("u",), (0,), arr)
    pred = FieldSet(("u",), (0,), rng.standard_normal((1, 5, 5)))
    true = FieldSet(("u",), (0,), rng.standard_normal((1, 5, 5)))
    base = normalized_loss(pred, true, compute_stats(traj))
    scaled = Trajectory.from_array(("u",), (0,), c * arr)
    got = normalized_loss(pred.with_values(c * pred.values), true.with_values(c * true.values),
                          compute_stats(scaled))
    assert np.isclose(got, base, rtol=1e-9)


@FAST
@given(seed=seeds, b=st.floats(-100, 100))
def test_vrmse_shift_invariant(seed, b):
    rng = np.random.default_rng(seed)
    t = FieldSet(("v",), (1,), rng.standard_normal((2, 6, 6)))
    p = t.with_values(t.values + 0.1 * rng.standard_normal(t.values.shape))
    base = vrmse(p, t)["v"]
    moved = vrmse(p.with_values(p.values + b), t.with_values(t.values + b))["v"]
    assert np.isclose(moved, base, rtol=1e-6)


@settings(max_examples=25, deadline=None)
@given(seed=seeds, costs=st.lists(st.integers(1, 50), min_size=1, max_size=5),
       accum=st.integers(1, 3), tied=st.booleans())
def test_work_conservation_and_bounds(seed, costs, accum, tied):
    cm = CostModel(tuple(Dataset(f"d{i}", 2, c, 0.0, 0.0) for i, c in enumerate(costs)))
    strat = Strategy(Sampling.TIED if tied else Sampling.NAIVE, accum=accum)
    r = simulate(strat, cm, ClusterConfig(8, 4), 50, seed)
    assert r.busy_time == r.assigned_cost
    assert 0.0 <= r.idle_fraction < 1.0
    assert r.mean_step_time >= accum * min(costs) and r.mean_step_time <= accum * max(costs)
    if len(set(costs)) == 1:
        assert r.idle_fraction == 0.0
