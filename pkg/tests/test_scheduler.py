import numpy as np
import pytest

from emulkit.errors import ConfigError
from emulkit.scheduler import (
    Batching,
    ClusterConfig,
    CostModel,
    Dataset,
    Sampling,
    Strategy,
    compare,
    group_times,
    reference_catalog,
    parse_catalog,
    sample_assignment,
    simulate,
    step_time,
)

NAIVE = Strategy(Sampling.NAIVE)
TIED = Strategy(Sampling.TIED)


def two_cost_model():
    # zero shares make microbatch cost equal to tokens
    return CostModel((Dataset("a", 2, 1, 0.0, 0.0), Dataset("b", 2, 2, 0.0, 0.0)))


def test_cost_formula():
    cm = CostModel((Dataset("x", 3, 100, 0.2, 0.02),))
    assert cm.microbatch_cost("uniform")[0] == pytest.approx(100 / 0.8 * 1.02, rel=1e-15)
    cm2 = CostModel((Dataset("y", 2, 10, 0.0, 0.0),))
    assert cm2.microbatch_tokens("differential")[0] == 40
    assert cm2.batch("differential")[0] == 2


def test_reference_catalog_shape():
    cm = reference_catalog()
    dims = [d.dim for d in cm.datasets]
    assert dims.count(2) == 14 and dims.count(3) == 5
    assert cm.microbatch_tokens("differential")[0] == 32 * 32 * 6 * 2


def test_cluster_validation():
    with pytest.raises(ConfigError):
        ClusterConfig(10, 3)
    with pytest.raises(ConfigError):
        Strategy(accum=0)


def test_group_size_one_makes_strategies_identical():
    c = ClusterConfig(8, 1)
    a = sample_assignment(NAIVE, 5, c, np.random.default_rng(4), 10)
    b = sample_assignment(TIED, 5, c, np.random.default_rng(4), 10)
    np.testing.assert_array_equal(a, b)


def test_tied_groups_share_ids():
    c = ClusterConfig(12, 4)
    a = sample_assignment(Strategy(Sampling.TIED, accum=3), 7, c, np.random.default_rng(0), 50)
    assert a.shape == (50, 3, 12)
    g = a.reshape(50, 3, 3, 4)
    assert np.all(g == g[..., :1])


def test_naive_frequency():
    a = sample_assignment(NAIVE, 2, ClusterConfig(1, 1), np.random.default_rng(1), 100_000)
    assert abs(np.mean(a == 0) - 0.5) < 0.01


def test_empty_catalog():
    with pytest.raises(ConfigError):
        CostModel(())
    with pytest.raises(ConfigError):
        sample_assignment(NAIVE, 0, ClusterConfig(2, 1), np.random.default_rng(0))


def test_equal_costs_step_time():
    c = ClusterConfig(8, 4)
    rng = np.random.default_rng(2)
    for strat in (NAIVE, Strategy(Sampling.TIED, accum=5)):
        a = sample_assignment(strat, 3, c, rng, 20)
        np.testing.assert_array_equal(step_time(a, np.full(3, 2.5), c), strat.accum * 2.5)


def test_step_time_barriers():
    c = ClusterConfig(4, 2)
    costs = np.array([1.0, 2.0, 5.0])
    a = np.array([[[0, 1, 0, 0], [0, 0, 2, 0]]])   # (1 step, A=2, 4 ranks)
    np.testing.assert_array_equal(group_times(a, costs, c), [[[2.0, 1.0], [1.0, 5.0]]])
    assert step_time(a, costs, c)[0] == 6.0


def test_two_dataset_example():
    c = ClusterConfig(2, 2)
    naive = simulate(NAIVE, two_cost_model(), c, 100_000, 0)
    tied = simulate(TIED, two_cost_model(), c, 100_000, 0)
    assert naive.mean_group_time == pytest.approx(1.75, rel=0.01)
    assert tied.mean_group_time == pytest.approx(1.5, rel=0.01)


def test_accumulation_averages_out():
    c = ClusterConfig(2, 2)
    r = simulate(Strategy(Sampling.TIED, accum=64), two_cost_model(), c, 10_000, 3)
    assert r.mean_step_time / 64 == pytest.approx(1.5, rel=0.02)


def test_single_dataset_no_idle():
    cm = CostModel((Dataset("only", 3, 50, 0.2),))
    for strat in (NAIVE, TIED, Strategy(Sampling.TIED, Batching.DIFFERENTIAL, 4)):
        assert simulate(strat, cm, ClusterConfig(8, 4), 100, 0).idle_fraction == 0.0


def test_work_conservation_and_idle_definition():
    cm = reference_catalog()
    c = ClusterConfig(16, 4)
    r = simulate(Strategy(Sampling.NAIVE, accum=2), cm, c, 500, 7)
    assert r.busy_time == r.assigned_cost
    assert r.idle_fraction == pytest.approx(1 - r.busy_time / (c.ranks * r.total_time), rel=1e-9)
    assert 0 < r.idle_fraction < 1


def test_determinism():
    cm, c = reference_catalog(), ClusterConfig(16, 8)
    assert simulate(NAIVE, cm, c, 300, 11) == simulate(NAIVE, cm, c, 300, 11)
    # chunking does not change the draws' effect on totals
    a = simulate(TIED, cm, c, 300, 5, chunk=7)
    b = simulate(TIED, cm, c, 300, 5, chunk=7)
    assert a == b


def test_tied_not_slower_on_random_catalogs():
    rng = np.random.default_rng(123)
    c = ClusterConfig(16, 4)
    for trial in range(10):
        n = int(rng.integers(2, 8))
        sets = tuple(Dataset(f"d{i}", int(rng.choice([2, 3])), int(rng.integers(10, 1000)),
                             float(rng.uniform(0, 0.5))) for i in range(n))
        cm = CostModel(sets)
        naive = simulate(NAIVE, cm, c, 2000, trial).throughput
        tied = simulate(TIED, cm, c, 2000, trial).throughput
        assert tied >= naive * 0.99


def test_parse_catalog():
    cm = parse_catalog("# comment\nflow 2 3072 0.05\n\nbox, 3, 12288, 0.2, 0.01\n")
    assert [d.name for d in cm.datasets] == ["flow", "box"]
    assert cm.datasets[1].encoder_share == 0.01
    for bad in ("x 2 10", "x 4 10 0.1", "x 2 ten 0.1", "x 2 10 1.5", ""):
        with pytest.raises(ConfigError):
            parse_catalog(bad)


def test_compare_ordering_small():
    rows = compare(reference_catalog(), ClusterConfig(96, 8), 500, [0])
    assert [r[0].label for r in rows][0] == "naive/uniform/A=1"
    samples = [r[1] for r in rows]
    assert samples == sorted(samples)
