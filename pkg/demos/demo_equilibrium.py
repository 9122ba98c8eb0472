"""Solving user equilibria in both directions.

A market posts prices; users of type theta pick the class maximizing
V - p_i - theta * K_i or opt out.  The equilibrium is a chain of cutoff
types.  Given cutoffs, prices follow in closed form; given prices, the
cutoffs are solved numerically.  This script walks through:

* the forward and reverse maps agreeing (bijection roundtrip),
* a saturated market (everyone joins, the top relation goes slack),
* equal-price classes resolved by congestion-level matching,
* a corner where an overpriced premium class stays empty,
* welfare / profit evaluation and the constraint report.
"""

from pmplab import congestion as cg
from pmplab.equilibrium import (
    MarketScenario,
    cutoffs_from_prices,
    identical_price_equilibrium,
    prices_from_cutoffs,
    provider_profit,
    social_welfare,
    validate,
)


def show(name, sc, eq):
    rep = validate(sc, eq)
    print(f"--- {name}")
    print(f"  cutoffs {tuple(round(t, 6) for t in eq.cutoffs)}"
          f"  prices {tuple(round(p, 6) for p in eq.prices)}")
    print(f"  usages {tuple(round(q, 6) for q in eq.usages)}"
          f"  levels {tuple(round(k, 6) for k in eq.levels)}")
    print(f"  saturated={eq.saturated} degenerate={eq.degenerate}"
          f"  opt_out={eq.opt_out:.6f}")
    print(f"  welfare {social_welfare(sc, eq):.6f}  profit {provider_profit(eq):.6f}"
          f"  constraints ok={rep.all_ok}")


def main():
    # 1. forward then reverse
    sc = MarketScenario(2.0, (0.7, 0.3), cg.utilization())
    eq = prices_from_cutoffs(sc, (0.8, 0.4))
    show("two-class utilization, cutoffs (0.8, 0.4)", sc, eq)
    back = cutoffs_from_prices(sc, eq.prices)
    print(f"  roundtrip cutoffs {tuple(round(t, 12) for t in back.cutoffs)}")

    # 2. saturated duopoly-style market
    sc2 = MarketScenario(2.0, (1.0, 1.0), cg.utilization())
    show("prices (1.2, 1.0), ample capacity", sc2, cutoffs_from_prices(sc2, (1.2, 1.0)))

    # 3. identical pricing with level matching
    sc3 = MarketScenario(2.0, (0.5, 0.5), cg.latency())
    show("latency split, common price 1.0", sc3, identical_price_equilibrium(sc3, 1.0))

    # 4. an empty premium class (corner)
    sc4 = MarketScenario(2.0, (0.3, 0.7), cg.latency())
    show("latency, small dear premium class", sc4, cutoffs_from_prices(sc4, (1.4, 1.1)))


if __name__ == "__main__":
    main()
