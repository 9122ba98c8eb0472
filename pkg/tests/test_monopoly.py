import math

import pytest

from pmplab import congestion as cg
from pmplab import monopoly as mono
from pmplab.equilibrium import MarketScenario
from pmplab.errors import ConvergenceError, DomainError, PreconditionError


def market(model, caps, v=2.0):
    return MarketScenario(v, caps, model)


# ---------------------------------------------------------------------------
# single-price maximization
# ---------------------------------------------------------------------------

def test_profit_maximum_closed_form():
    p, v = mono.maximize_single_price(market(cg.utilization(), (1.0,)), "profit")
    assert p == pytest.approx(4.0 / 3.0, abs=1e-4)
    assert v == pytest.approx(4.0 * math.sqrt(6.0) / 9.0, abs=1e-7)


def test_welfare_plateau_edge():
    p, v = mono.maximize_single_price(market(cg.utilization(), (1.0,)), "welfare")
    assert v == pytest.approx(1.5, abs=1e-9)
    assert p == pytest.approx(1.0, abs=1e-6)   # largest maximizing price


def test_latency_profit_lower_bound():
    _p, v = mono.maximize_single_price(market(cg.latency(), (1.0,)), "profit")
    assert v >= 0.5 - 1e-9
    assert v == pytest.approx(2.0 * (2.0 - math.sqrt(3.0)), abs=1e-6)


def test_single_price_requires_one_class():
    with pytest.raises(PreconditionError):
        mono.maximize_single_price(market(cg.utilization(), (0.5, 0.5)))


# ---------------------------------------------------------------------------
# ratio sweep
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def utl_sweep():
    sc = market(cg.utilization(), (0.3, 0.7))
    return mono.ratio_sweep(sc, (0.5, 0.9, 1.0), "profit", grid=256)


def test_sweep_identical_ratio_matches_single(utl_sweep):
    at_one = [pt for pt in utl_sweep.points if pt.ratio == 1.0][0]
    assert at_one.best_value == pytest.approx(utl_sweep.baseline_single, abs=1e-6)


def test_sweep_finds_differentiated_gain(utl_sweep):
    best = utl_sweep.best()
    assert best.ratio < 1.0
    assert best.best_value > utl_sweep.baseline_single + 1e-4


def test_latency_sweep_never_beats_single():
    sc = market(cg.latency(), (0.3, 0.7))
    curve = mono.ratio_sweep(sc, (0.5, 0.9, 1.0), "profit", grid=256)
    assert curve.best().best_value <= curve.baseline_single + 1e-6


def test_sweep_validates_inputs():
    sc = market(cg.utilization(), (0.3, 0.7))
    with pytest.raises(PreconditionError):
        mono.ratio_sweep(sc, (), "profit")
    with pytest.raises(DomainError):
        mono.ratio_sweep(sc, (1.5,), "profit")


# ---------------------------------------------------------------------------
# free-price maximization
# ---------------------------------------------------------------------------

def test_free_prices_beat_identical_pricing():
    sc = market(cg.utilization(), (0.3, 0.7))
    for objective, floor in (("profit", 1.0886621), ("welfare", 1.5)):
        prices, value, cutoffs = mono.maximize_free_prices(sc, objective)
        assert value > floor + 1e-4
        assert prices[0] >= prices[1] - 1e-9
        assert cutoffs[0] > cutoffs[1]


def test_free_prices_dominate_sweep(utl_sweep):
    sc = market(cg.utilization(), (0.3, 0.7))
    _prices, value, _th = mono.maximize_free_prices(sc, "profit")
    for pt in utl_sweep.points:
        assert value >= pt.best_value - 1e-9


def test_free_prices_vanishing_class():
    sc = market(cg.utilization(), (1.0, 1e-7))
    _prices, value, _th = mono.maximize_free_prices(sc, "profit")
    assert value == pytest.approx(4.0 * math.sqrt(6.0) / 9.0, abs=1e-4)


# ---------------------------------------------------------------------------
# partition comparison
# ---------------------------------------------------------------------------

def test_partition_latency_closed_forms():
    sc = market(cg.latency(), (1.0,))
    pc = mono.partition_comparison(sc, 1.0, (0.5, 0.5))
    assert pc.single_welfare == pytest.approx(0.75, abs=1e-8)
    assert pc.single_profit == pytest.approx(0.5, abs=1e-8)
    assert pc.split_welfare == pytest.approx(0.5, abs=1e-8)
    assert pc.split_profit == pytest.approx(1.0 / 3.0, abs=1e-8)


def test_partition_utilization_indifferent():
    sc = market(cg.utilization(), (1.0,))
    pc = mono.partition_comparison(sc, 1.0, (0.5, 0.5))
    assert pc.split_welfare == pytest.approx(pc.single_welfare, abs=1e-8)
    assert pc.split_profit == pytest.approx(pc.single_profit, abs=1e-8)


def test_partition_degenerate_split_is_single():
    sc = market(cg.utilization(), (1.0,))
    pc = mono.partition_comparison(sc, 0.8, (1.0, 0.0))
    assert pc.split_welfare == pc.single_welfare
    assert pc.split_profit == pc.single_profit


def test_partition_split_mismatch():
    sc = market(cg.utilization(), (1.0,))
    with pytest.raises(DomainError):
        mono.partition_comparison(sc, 1.0, (0.5, 0.4))


@pytest.mark.parametrize("model,direction", [
    (cg.latency(), -1),                 # splitting hurts
    (cg.general_latency(2.0), -1),
    (cg.utilization_default(0.1), +1),  # splitting helps
])
def test_partition_direction_matches_scaling_class(model, direction):
    sc = MarketScenario(2.0, (1.0,), model)
    for k in range(8):
        p = 2.0 * (k + 0.5) / 8
        pc = mono.partition_comparison(sc, p, (0.5, 0.5))
        assert direction * (pc.split_welfare - pc.single_welfare) >= -1e-9
        assert direction * (pc.split_profit - pc.single_profit) >= -1e-9


def test_three_way_latency_partition_never_helps():
    sc = market(cg.latency(), (1.0,))
    for k in range(8):
        p = 2.0 * (k + 0.5) / 8
        pc = mono.partition_comparison(sc, p, (1 / 3, 1 / 3, 1 / 3))
        assert pc.split_welfare <= pc.single_welfare + 1e-9
        assert pc.split_profit <= pc.single_profit + 1e-9


# ---------------------------------------------------------------------------
# improvement probe
# ---------------------------------------------------------------------------

def test_probe_improves_both_objectives():
    sc = market(cg.utilization(), (0.3, 0.7))
    res = mono.local_improvement_probe(sc, 0.9, 1e-3)
    assert res.case == "M2"
    assert res.d_welfare > 0.0
    assert res.d_profit > 0.0
    assert res.d_welfare == pytest.approx(4.9666e-4, rel=1e-3)
    assert res.d_profit == pytest.approx(9.9333e-4, rel=1e-3)


def test_probe_wrong_direction_hurts_welfare():
    sc = market(cg.utilization(), (0.3, 0.7))
    auto = mono.local_improvement_probe(sc, 0.9, 1e-3)
    wrong = mono.local_improvement_probe(sc, 0.9, 1e-3, direction=-auto.direction)
    assert wrong.d_welfare < 0.0


def test_probe_zero_delta():
    sc = market(cg.utilization(), (0.3, 0.7))
    res = mono.local_improvement_probe(sc, 0.9, 0.0)
    assert res.d_welfare == 0.0 and res.d_profit == 0.0


def test_probe_interior_price_too():
    # unsaturated identical pricing: the same contract must hold
    sc = market(cg.utilization(), (0.3, 0.7))
    res = mono.local_improvement_probe(sc, 1.2, 1e-3)
    assert res.d_welfare > 0.0 and res.d_profit > 0.0


def test_probe_rejects_empty_market():
    sc = market(cg.utilization(), (0.3, 0.7))
    with pytest.raises(PreconditionError):
        mono.local_improvement_probe(sc, 2.0, 1e-3)


def test_probe_loss_model():
    sc = market(cg.loss(2), (0.3, 0.7))
    res = mono.local_improvement_probe(sc, 1.2, 1e-3)
    assert res.d_welfare > 0.0 and res.d_profit > 0.0


# ---------------------------------------------------------------------------
# theorem-style grid properties
# ---------------------------------------------------------------------------

GRID_64 = [2.0 * k / 63 for k in range(64)]


def test_multiplexing_preferred_inequalities_on_grid():
    sc = market(cg.latency(), (1.0,))
    for p in GRID_64:
        pc = mono.partition_comparison(sc, p, (0.5, 0.5))
        assert pc.split_welfare <= pc.single_welfare + 1e-9
        assert pc.split_profit <= pc.single_profit + 1e-9


def test_indifferent_equalities_on_grid():
    for model in (cg.utilization(), cg.loss(2)):
        sc = MarketScenario(2.0, (1.0,), model)
        for split in ((0.5, 0.5), (0.3, 0.7)):
            for p in GRID_64[::4]:
                pc = mono.partition_comparison(sc, p, split)
                assert abs(pc.split_welfare - pc.single_welfare) <= 1e-8
                assert abs(pc.split_profit - pc.single_profit) <= 1e-8


def test_partition_preferred_inequalities_on_grid():
    sc = market(cg.utilization_default(0.05), (1.0,))
    for p in GRID_64[::4]:
        pc = mono.partition_comparison(sc, p, (0.5, 0.5))
        assert pc.split_welfare >= pc.single_welfare - 1e-9
        assert pc.split_profit >= pc.single_profit - 1e-9


# ---------------------------------------------------------------------------
# viability report
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("model,verdict", [
    (cg.utilization(), "PMP-viable"),
    (cg.loss(2), "PMP-viable"),
    (cg.latency(), "PMP-nonviable"),
])
def test_viability_verdicts(model, verdict):
    sc = MarketScenario(2.0, (1.0,), model)
    rep = mono.viability_report(sc, splits=((0.3, 0.7),),
                                a_grid=(0.5, 0.9, 1.0), price_grid=8, sweep_grid=128)
    assert rep.verdict == verdict
