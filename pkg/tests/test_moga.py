import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import build, chain, device, node, version
from placekit import moga
from placekit.metrics import FitnessWeights
from placekit.placement import Placement, check_constraints, random_placement
from placekit.scenario import SCALES, builtin_scale, generate, tiny_scale

SMALL = dict(X=15, Y=5, N=15, M=8, K=20)  # X*Y = 75, N+M+K = 43


def _dims(name):
    s = builtin_scale(name)
    return s.x_services, s.y_components, s.n_users, s.n_helpers, s.K


def test_population_formula():
    assert moga.estimate_population_size(**SMALL) == 230
    assert moga.estimate_population_size(1, 1, 1, 0, 0) == 63


def test_iteration_formula():
    assert moga.estimate_iterations(**SMALL) == 62
    assert moga.estimate_iterations(1, 1, 1, 0, 0) == 35


def test_crossover_coefficient_small():
    assert moga.crossover_coefficient(**SMALL) == pytest.approx(0.6 + 75 * 0.0003 + 43 ** 0.04)
    assert moga.crossover_coefficient(**SMALL) == pytest.approx(1.785, abs=1e-3)


@pytest.mark.parametrize("name", SCALES)
def test_crossover_formula_always_clamps(name):
    dims = _dims(name)
    assert moga.crossover_coefficient(*dims) > 1.6
    assert moga.estimate_crossover_rate(*dims) == 0.8


def test_small_scale_dimensions():
    assert _dims("small") == (15, 5, 15, 8, 20)


def test_presets_carry_the_published_rates():
    # the formula clamps to 0.8; the published table uses 60-70%
    assert [moga.PRESETS[s]["cr"] for s in ("small", "medium", "large")] == [0.6, 0.7, 0.7]
    assert moga.preset("small").ps == 200 and moga.preset("small").it == 50
    assert moga.preset("medium").ps == 300 and moga.preset("medium").it == 100
    assert moga.preset("small", it=7).it == 7
    with pytest.raises(ValueError):
        moga.preset("huge")


def test_auto_config():
    inst = generate(builtin_scale("small"), 0)
    cfg = moga.auto_config(inst)
    assert (cfg.ps, cfg.it, cfg.cr, cfg.ss) == (230, 62, 0.8, 23)


def test_default_elitism():
    assert moga.SolverConfig(ps=200).elite == 4
    assert moga.SolverConfig(ps=10, ss=2).elite == 1
    assert moga.SolverConfig(ps=10, ss=2, elitism_count=0).elite == 0


@pytest.mark.parametrize("kw", [dict(ps=1, ss=1), dict(cr=1.5), dict(mr=-0.1), dict(ss=0),
                                dict(ps=10, ss=11), dict(it=0), dict(ps=10, ss=2, elitism_count=10),
                                dict(reliability_scope="some"), dict(rt_reference=0.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        moga.SolverConfig(**kw)


def test_config_round_trip():
    cfg = moga.SolverConfig(ps=40, ss=4, it=3, seed=9, weights=FitnessWeights(0.5, 0.25, 0.25),
                            thread_capacity=4.0, rt_reference=100.0)
    assert moga.SolverConfig.from_dict(cfg.to_dict()) == moga.SolverConfig(**{**cfg.__dict__, "elitism_count": 1})
    d = moga.SolverConfig().to_dict()
    assert d["thread_capacity"] is None and math.isinf(moga.SolverConfig.from_dict(d).thread_capacity)
    with pytest.raises(ValueError):
        moga.SolverConfig.from_dict({"population": 3})


# ---------------------------------------------------------------------------
# operators


def test_tournament_with_full_field_picks_the_best():
    rng = np.random.default_rng(0)
    fit = [0.5, 0.2, 0.9, 0.2]
    assert all(moga.tournament_select(fit, fit, 4, rng) == 1 for _ in range(50))


def test_tournament_of_one_is_uniform():
    rng = np.random.default_rng(1)
    counts = np.bincount([moga.tournament_select(range(4), [0.1, 0.2, 0.3, 0.4], 1, rng)
                          for _ in range(8000)], minlength=4)
    assert np.all(np.abs(counts - 2000) < 4 * math.sqrt(8000 * 0.25 * 0.75))


def test_tournament_of_two_prefers_fitter():
    rng = np.random.default_rng(2)
    n = 10_000
    counts = np.bincount(moga._tournament(np.array([0.1, 0.2, 0.3, 0.4]), 2, n, rng), minlength=4)
    assert counts[0] > counts[1] > counts[2] > counts[3] == 0
    # pairs out of 4: index i wins (3 - i) of the 6
    expected = n * np.array([3, 2, 1, 0]) / 6
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(n * 0.25) + 1)


def test_tournament_validates():
    with pytest.raises(ValueError):
        moga.tournament_select([1, 2], [0.1], 1, np.random.default_rng())
    with pytest.raises(ValueError):
        moga.tournament_select([1, 2], [0.1, 0.2], 3, np.random.default_rng())


def _layout_instance(Y=2, V=2):
    comps = [[version(cr=10, mr=0.5, dr=0.5)] * V] * Y
    return build([node(), node(), node()], [(comps, chain(Y))])


def test_crossover_on_two_genes_swaps_the_tail():
    inst = _layout_instance()
    a = Placement.for_instance(inst, [0, 0], [0, 0])
    b = Placement.for_instance(inst, [1, 1], [2, 2])
    c1, c2 = moga.single_point_crossover(a, b, np.random.default_rng(0))
    assert c1.versions.tolist() == [0, 1] and c1.hosts.tolist() == [0, 2]
    assert c2.versions.tolist() == [1, 0] and c2.hosts.tolist() == [2, 0]


def test_crossover_of_twins_is_identity():
    inst = generate(tiny_scale(y=4), 0)
    a = random_placement(inst, 3)
    c1, c2 = moga.single_point_crossover(a, a, np.random.default_rng(5))
    assert c1 == a and c2 == a


@settings(max_examples=50, deadline=None)
@given(s1=st.integers(0, 10_000), s2=st.integers(0, 10_000), s3=st.integers(0, 10_000))
def test_crossover_conserves_genes_per_position(s1, s2, s3):
    inst = generate(tiny_scale(y=4, v=3), 1)
    a, b = random_placement(inst, s1), random_placement(inst, s2)
    c1, c2 = moga.single_point_crossover(a, b, np.random.default_rng(s3))
    for g in range(len(a)):
        assert sorted([a.gene(g), b.gene(g)]) == sorted([c1.gene(g), c2.gene(g)])
    # gene 0 always stays with its parent since the cut lies in [1, G-1]
    assert c1.gene(0) == a.gene(0) and c2.gene(0) == b.gene(0)


def test_mutation_zero_rate_is_identity():
    inst = generate(tiny_scale(y=4), 2)
    p = random_placement(inst, 0)
    assert moga.insertion_mutation(p, 0.0, np.random.default_rng(0), inst) == p


def test_mutation_draws_legal_genes():
    inst = generate(tiny_scale(y=4), 2)
    p = random_placement(inst, 0)
    q = moga.insertion_mutation(p, 1.0, np.random.default_rng(1), inst)
    # capacity may break before healing; ownership never does
    assert all(v.kind == "capacity" for v in check_constraints(inst, q))


def test_mutation_count_is_binomial():
    # 3 compute nodes + 2 own devices = 5 legal hosts
    inst = _layout_instance(Y=4)
    rng = np.random.default_rng(3)
    p = Placement.for_instance(inst, [0] * 4, [0] * 4)
    mr, trials, G = 0.05, 10_000, 4
    changed = sum(int((moga.insertion_mutation(p, mr, rng, inst).hosts != p.hosts).sum())
                  for _ in range(trials))
    # a re-drawn gene keeps its host w.p. 1/5
    q = mr * (1 - 1 / 5)
    mean, sd = trials * G * q, math.sqrt(trials * G * q * (1 - q))
    assert abs(changed - mean) < 3 * sd


# ---------------------------------------------------------------------------
# run


@pytest.fixture(scope="module")
def tiny():
    return generate(tiny_scale(y=3, v=2), 4)


def test_run_is_deterministic(tiny):
    cfg = moga.SolverConfig(ps=20, ss=3, it=10, seed=42)
    p1, r1, h1 = moga.run(tiny, cfg)
    p2, r2, h2 = moga.run(tiny, cfg)
    assert p1 == p2 and r1 == r2
    assert (h1.best, h1.median, h1.worst) == (h2.best, h2.median, h2.worst)


def test_trivial_instance_has_constant_history():
    inst = build([node(cc=10_000, mc=64, dc=640)], [([[version(cr=10, mr=1)]] * 2, chain(2))],
                 users=[device(mc=0.1)], helpers=[device(mc=0.1, kind="helper")])
    p, report, hist = moga.run(inst, moga.SolverConfig(ps=6, ss=2, it=5))
    assert p.hosts.tolist() == [0, 0]
    assert len(set(hist.best)) == 1 and len(hist) == 6
    assert report.fitness == hist.best[-1]


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), iseed=st.integers(0, 1000))
def test_history_is_monotone_and_ordered(seed, iseed):
    inst = generate(tiny_scale(y=4, v=2), iseed)
    _, report, hist = moga.run(inst, moga.SolverConfig(ps=16, ss=3, it=15, seed=seed, mr=0.1))
    assert all(b2 <= b1 for b1, b2 in zip(hist.best, hist.best[1:]))
    assert all(b <= m <= w for b, m, w in zip(hist.best, hist.median, hist.worst))
    assert report.fitness == pytest.approx(hist.best[-1])


def test_returned_placement_is_feasible():
    inst = generate(builtin_scale("small"), 5)
    p, _, hist = moga.run(inst, moga.SolverConfig(ps=30, ss=3, it=5))
    assert check_constraints(inst, p) == []
    assert hist.best_placement == p and hist.runtime_s > 0


def test_csv_export(tiny):
    _, _, hist = moga.run(tiny, moga.SolverConfig(ps=10, ss=2, it=3))
    lines = hist.to_csv().splitlines()
    assert lines[0] == "iter,best,median,worst"
    assert len(lines) == 5 and lines[1].startswith("0,")
    assert "runtime_s" not in hist.to_json(include_timing=False)
