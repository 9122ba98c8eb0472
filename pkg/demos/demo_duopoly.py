"""Two providers competing for one user population.

Provider I posts a single class; provider II may split its capacity into
two classes with separate prices.  This script reproduces the flavour of
the competitive study: best-response profit curves over provider I's
price (with and without splitting), the profit derivative with the
published closed form cross-checked, and an alternating best-response
search for a one-class Nash point with neighbourhood verification.
"""

from pmplab import congestion as cg
from pmplab.duopoly import (
    DuopolyScenario,
    ProviderStrategy,
    best_response_II,
    duopoly_curve,
    find_nash,
    market_equilibrium,
    profit_derivative_I,
)


def main():
    duo = DuopolyScenario(2.0, 1.0, 1.0, cg.utilization())

    print("=== a hand-checkable merged market (pI=1.2, pII=1.0) ===")
    me = market_equilibrium(duo, ProviderStrategy.one(1.2, 1.0),
                            ProviderStrategy.one(1.0, 1.0))
    print(f"  saturated={me.eq.saturated}  piI={me.pi_i:.6f}  piII={me.pi_ii:.6f}")

    print("\n=== profit derivative of provider I at an interior point ===")
    rep = profit_derivative_I(duo, 1.7, ProviderStrategy.one(1.6, 1.0))
    print(f"  case {rep.case}: finite difference {rep.finite_difference:.6f}, "
          f"closed form {rep.closed_form:.6f} ({rep.closed_form_status})")

    print("\n=== best-response curves (1 vs 2 classes for provider II) ===")
    for model, label in ((cg.utilization(), "utilization"),
                         (cg.utilization_default(0.1), "with default consumption 0.1")):
        d = DuopolyScenario(2.0, 1.0, 1.0, model)
        pts = duopoly_curve(d, [0.5, 1.0, 1.5], grid=128)
        print(f"  {label}:")
        for pt in pts:
            print(f"    pI={pt.p_i:.2f}  piI={pt.pi_i:.4f}  "
                  f"II one-class {pt.pi_ii_one:.4f}  two-class {pt.pi_ii_two:.4f}  "
                  f"gap {pt.pi_ii_two - pt.pi_ii_one:+.4f}")

    print("\n=== one-class Nash search, symmetric utilization market ===")
    res = find_nash(duo, mode="one")
    p_ii = res.strat_ii.classes[0][0]
    print(f"  converged in {res.rounds} rounds: pI={res.p_i:.6f}, pII={p_ii:.6f}")
    print(f"  profits piI={res.pi_i:.6f} piII={res.pi_ii:.6f}; "
          f"neighbourhood verification passed={res.verified}")


if __name__ == "__main__":
    main()
