"""Two competing providers sharing one pool of users.

Provider I offers a single undivided class of capacity C_I.  Provider II
owns capacity C_II and may offer it as one class or split it into two
classes with separate prices.  All offered classes enter one merged market
(sorted by price, equal prices resolved by congestion-level matching) and
the usage each class attracts at the user equilibrium determines each
provider's profit.

The module provides the building blocks of a price competition study:
per-provider profit derivatives (finite differences, with the tabulated
closed forms cross-checked where their source is legible), best responses
by deterministic grid/golden search, alternating-best-response Nash search
with an explicit neighbourhood verification step, and the best-response
profit curves over a grid of provider-I prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .equilibrium import (
    MarketScenario,
    cutoffs_from_prices,
)
from .errors import (
    BoundaryError,
    ConvergenceError,
    DomainError,
    NoConvergenceError,
    PmplabError,
    PreconditionError,
)
from .monopoly import _grid_golden_max
from .population import TypeDistribution, uniform
from .congestion import CongestionModel

__all__ = [
    "DuopolyScenario",
    "ProviderStrategy",
    "MarketEquilibrium",
    "DerivativeReport",
    "NashResult",
    "CurvePoint",
    "market_equilibrium",
    "profit_derivative_I",
    "best_response_I",
    "best_response_II",
    "find_nash",
    "duopoly_curve",
]


@dataclass(frozen=True)
class DuopolyScenario:
    """Market primitives shared by both providers."""

    v: float
    cap_i: float
    cap_ii: float
    model: CongestionModel
    dist: TypeDistribution = None

    def __post_init__(self):
        if self.dist is None:
            object.__setattr__(self, "dist", uniform())
        if self.v <= 0.0:
            raise DomainError("access value must be positive")
        if self.cap_i < 0.0 or self.cap_ii < 0.0:
            raise DomainError("capacities must be nonnegative")


@dataclass(frozen=True)
class ProviderStrategy:
    """A provider's offer: one or two (price, capacity) classes.

    Prices must be nonincreasing across the classes; zero-capacity entries
    are dropped (an empty tuple is a provider sitting out).
    """

    classes: tuple

    def __post_init__(self):
        cls = tuple((float(p), float(c)) for p, c in self.classes if c > 0.0)
        for p, c in cls:
            if p < 0.0:
                raise DomainError(f"negative price {p}")
            if c <= 0.0:
                raise DomainError(f"capacity must be positive, got {c}")
        for (pa, _), (pb, _) in zip(cls, cls[1:]):
            if pb > pa + 1e-12:
                raise DomainError("strategy prices must be nonincreasing")
        object.__setattr__(self, "classes", cls)

    @staticmethod
    def one(price, capacity) -> "ProviderStrategy":
        return ProviderStrategy(((price, capacity),))

    @staticmethod
    def two(p1, c1, p2, c2) -> "ProviderStrategy":
        return ProviderStrategy(((p1, c1), (p2, c2)))

    @property
    def total_capacity(self) -> float:
        return sum(c for _p, c in self.classes)


@dataclass(frozen=True)
class MarketEquilibrium:
    """Merged-market equilibrium with ownership attribution."""

    eq: object                 # Equilibrium over the merged classes
    owners: tuple              # 'I' / 'II' per merged class
    pi_i: float
    pi_ii: float

    def usage_of(self, owner: str) -> float:
        return sum(q for q, o in zip(self.eq.usages, self.owners) if o == owner)


def market_equilibrium(
    duo: DuopolyScenario,
    strat_i: ProviderStrategy,
    strat_ii: ProviderStrategy,
) -> MarketEquilibrium:
    """Solve the merged market for the two posted strategies.

    Classes are ranked by price (descending); identical prices across
    providers stay distinct classes and share users through level
    matching.  Profits are attributed by ownership.
    """
    entries = [(p, c, "I") for p, c in strat_i.classes]
    entries += [(p, c, "II") for p, c in strat_ii.classes]
    if not entries:
        raise PreconditionError("no classes offered by either provider")
    if any(p > duo.v + 1e-12 for p, _c, _o in entries):
        raise DomainError("prices must not exceed the access value")
    if len(entries) > 3:
        raise PreconditionError("at most three merged classes are supported")
    order = sorted(range(len(entries)), key=lambda i: (-entries[i][0], entries[i][2], i))
    merged = [entries[i] for i in order]
    scenario = MarketScenario(
        duo.v, tuple(c for _p, c, _o in merged), duo.model, duo.dist
    )
    eq = cutoffs_from_prices(scenario, [p for p, _c, _o in merged])
    owners = tuple(o for _p, _c, o in merged)
    pi = {"I": 0.0, "II": 0.0}
    for price, usage, owner in zip(eq.prices, eq.usages, owners):
        pi[owner] += price * usage
    return MarketEquilibrium(eq=eq, owners=owners, pi_i=pi["I"], pi_ii=pi["II"])


def _profit_i(duo, p_i, strat_ii):
    me = market_equilibrium(duo, ProviderStrategy.one(p_i, duo.cap_i), strat_ii)
    return me.pi_i


def _profit_ii(duo, p_i, strat_ii):
    me = market_equilibrium(duo, ProviderStrategy.one(p_i, duo.cap_i), strat_ii)
    return me.pi_ii


# ---------------------------------------------------------------------------
# profit derivative of provider I, with tabulated cross-check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeReport:
    finite_difference: float
    closed_form: Optional[float]     # None when the tabulated row is unusable
    case: str
    closed_form_status: str          # 'agrees' | 'mismatch' | 'corrupted-source' | 'inapplicable'

    @property
    def relative_gap(self) -> Optional[float]:
        if self.closed_form is None:
            return None
        scale = max(abs(self.finite_difference), 1e-12)
        return abs(self.closed_form - self.finite_difference) / scale


def _case_label(p_i, ii_prices):
    if len(ii_prices) == 2:
        a, b = ii_prices
        if p_i >= a:
            return "I>=II1>=II2"
        if p_i >= b:
            return "II1>=I>=II2"
        return "II1>=II2>=I"
    if len(ii_prices) == 1:
        return "I>=II" if p_i >= ii_prices[0] else "II>=I"
    return "monopoly"


def profit_derivative_I(
    duo: DuopolyScenario,
    p_i: float,
    strat_ii: ProviderStrategy,
    h: Optional[float] = None,
    cross_check: bool = True,
) -> DerivativeReport:
    """Central finite difference of provider I's profit in its own price.

    The step must not straddle a price-ordering case boundary (one of
    provider II's prices, or the ends of [0, V]); :class:`BoundaryError`
    protects against differencing across the kink.  When ``cross_check``
    is set and a legible tabulated closed form exists for the active case,
    it is evaluated on the equilibrium quantities and compared; rows whose
    published source is garbled are reported as 'corrupted-source' rather
    than guessed at.
    """
    v = duo.v
    step = h if h is not None else 1e-5 * v
    ii_prices = [p for p, _c in strat_ii.classes]
    for boundary in ii_prices + [0.0, v]:
        if abs(p_i - boundary) < step and abs(p_i - boundary) > 0:
            raise BoundaryError(
                f"step {step} straddles the case boundary at price {boundary}"
            )
    if p_i - step < 0.0 or p_i + step > v:
        raise BoundaryError("step leaves the admissible price range")

    up = _profit_i(duo, p_i + step, strat_ii)
    dn = _profit_i(duo, p_i - step, strat_ii)
    fd = (up - dn) / (2.0 * step)

    case = _case_label(p_i, ii_prices)
    if not cross_check:
        return DerivativeReport(fd, None, case, "inapplicable")

    closed, status = _closed_form_derivative(duo, p_i, strat_ii, case)
    if closed is not None:
        rel = abs(closed - fd) / max(abs(fd), 1e-12)
        status = "agrees" if rel <= 1e-3 else "mismatch"
    return DerivativeReport(fd, closed, case, status)


def _closed_form_derivative(duo, p_i, strat_ii, case):
    """Evaluate the published derivative row for the active case, if legible.

    The two-class rows for 'II1>=II2>=I' and the one-class row for 'II>=I'
    contain stray tokens in the source table and are never evaluated.
    The remaining rows are transcribed literally; they are reported even
    when they disagree with the finite difference (the disagreement itself
    is the point of the cross-check).
    """
    if case in ("II1>=II2>=I", "II>=I", "monopoly"):
        return None, "corrupted-source" if case != "monopoly" else "inapplicable"
    me = market_equilibrium(duo, ProviderStrategy.one(p_i, duo.cap_i), strat_ii)
    eq = me.eq
    if eq.saturated or eq.degenerate:
        return None, "inapplicable"
    model = duo.model
    caps_sorted = []
    entries = [(p_i, duo.cap_i, "I")] + [(p, c, "II") for p, c in strat_ii.classes]
    entries.sort(key=lambda e: (-e[0], e[2]))
    caps_sorted = [c for _p, c, _o in entries]
    th = list(eq.cutoffs)
    K = list(eq.levels)
    k = [model._slope(q, c) for q, c in zip(eq.usages, caps_sorted)]
    Q = list(eq.usages)

    if case == "I>=II" and len(th) == 2:
        t1, t2 = th
        K1, K2 = K
        k1, k2 = k
        num = (K1 * K1 * Q[0] + K2 * (p_i - Q[0] * (K1 + k1 * t1))
               + k2 * (p_i - k1 * Q[0] * t1) * t2 + K1 * Q[0] * (k1 * t1 - 2 * k2 * t2))
        den = (K1 * K1 - k1 * t1 * (K2 + k2 * t2)
               - K1 * (K2 - k1 * t1 + 2 * k2 * t2))
        return num / den, ""
    if case == "I>=II1>=II2" and len(th) == 3:
        t1, t2, t3 = th
        K1, K2, K3 = K
        k1, k2, k3 = k
        a2 = K2 - K3 - 2 * k3 * t3
        a1 = K1 - K2 - 2 * k2 * t2
        num = K1 * p_i * (-k2 * k3 * t2 * t3 + k1 * t1 * a2 + a1 * a2)
        den = (k1 * k2 * t1 * t2 * a2
               - (K1 + k1 * t1) * (k2 * k3 * t2 * t3 - a1 * a2))
        return (1.0 / (k1 * t1)) * (-p_i + k1 * Q[0] * t1 + num / den), ""
    if case == "II1>=I>=II2" and len(th) == 3:
        t1, t2, t3 = th
        K1, K2, K3 = K
        k1, k2, k3 = k
        a2 = K2 - K3 - 2 * k3 * t3
        num = (p_i * (K1 + k1 * t1) * (K2 - K3 + k2 * t2 - 2 * k3 * t3)
               * (-K2 + K3 + k3 * t3))
        den = ((-K2 + K3 + 2 * k3 * t3)
               * (k2 * k3 * (K1 + k1 * t1) * t2 * t3
                  + (-k1 * k2 * t1 * t2 - (K1 + k1 * t1) * (K1 - K2 - 2 * k2 * t2)) * a2))
        return Q[1] + p_i / a2 - num / den, ""
    return None, "inapplicable"


# ---------------------------------------------------------------------------
# best responses
# ---------------------------------------------------------------------------

def _segmented_price_max(f, v, boundaries, grid=256, xtol=1e-7):
    """Maximize f over [0, v], scanning each price-ordering case separately."""
    cuts = sorted({0.0, v, *(b for b in boundaries if 0.0 < b < v)})
    best_x = best_v = None
    for lo, hi in zip(cuts, cuts[1:]):
        n = max(32, int(grid * (hi - lo) / v))
        x, val, _ = _grid_golden_max(f, lo, hi, n=n, xtol=xtol)
        if val is not None and (best_v is None or val > best_v
                                or (val >= best_v - 1e-12 and x > best_x)):
            best_x, best_v = x, val
    if best_x is None:
        raise ConvergenceError("no feasible price in any case segment")
    return best_x, best_v


def best_response_I(duo: DuopolyScenario, strat_ii: ProviderStrategy,
                    grid: int = 256, xtol: float = 1e-7):
    """Provider I's profit-maximizing price against a fixed rival offer."""
    def f(p):
        try:
            return _profit_i(duo, p, strat_ii)
        except PmplabError:
            return None

    boundaries = [p for p, _c in strat_ii.classes]
    return _segmented_price_max(f, duo.v, boundaries, grid=grid, xtol=xtol)


def best_response_II(duo: DuopolyScenario, p_i: float, mode: str = "two",
                     grid: int = 192, xtol: float = 1e-7,
                     split_grid: int = 33, cycles: int = 3):
    """Provider II's best offer against a fixed provider-I price.

    mode 'one': a single class at capacity C_II, price optimized per case
    segment.  mode 'two': both prices and the capacity split optimized by
    coordinate ascent from five deterministic starts; the one-class
    optimum embedded as an equal-price strategy is always among the
    candidates, so the two-class value never falls below it (beyond the
    ascent tolerance).

    Returns (strategy, profit).
    """
    if duo.cap_ii <= 0.0:
        return ProviderStrategy(()), 0.0
    v = duo.v

    def f_one(p):
        try:
            return _profit_ii(duo, p_i, ProviderStrategy.one(p, duo.cap_ii))
        except PmplabError:
            return None

    p_one, v_one = _segmented_price_max(f_one, v, [p_i], grid=grid, xtol=xtol)
    if mode == "one":
        return ProviderStrategy.one(p_one, duo.cap_ii), v_one
    if mode != "two":
        raise DomainError(f"mode must be 'one' or 'two', got {mode!r}")

    def value(p1, p2, s):
        if not (0.0 <= p2 <= p1 <= v and 0.0 <= s <= 1.0):
            return None
        strat = ProviderStrategy.two(p1, s * duo.cap_ii, p2, (1.0 - s) * duo.cap_ii)
        try:
            return _profit_ii(duo, p_i, strat)
        except PmplabError:
            return None

    # the first two seeds embed the one-class optimum into the two-class
    # space (a zero split IS a single class, equal prices level-match),
    # so the search result never falls below the one-class value
    seeds = [
        (p_one, p_one, 0.0),
        (p_one, p_one, 0.5),
        (0.75 * v, 0.5 * v, 0.5),
        (0.5 * v, 0.25 * v, 0.5),
        (0.9 * v, 0.6 * v, 0.25),
    ]
    best = None
    for seed in seeds:
        p1, p2, s = seed
        val = value(p1, p2, s)
        if val is None:
            val = -math.inf  # let the first feasible move adopt the seed
        for _ in range(cycles):
            moved = False
            x, fx, _ = _grid_golden_max(lambda t: value(t, p2, s), p2, v, n=24, xtol=xtol)
            if x is not None and fx is not None and fx > val + 1e-12:
                p1, val, moved = x, fx, True
            x, fx, _ = _grid_golden_max(lambda t: value(p1, t, s), 0.0, p1, n=24, xtol=xtol)
            if x is not None and fx is not None and fx > val + 1e-12:
                p2, val, moved = x, fx, True
            # scan the equal-price diagonal too: profit ridges sit on the
            # tie line whenever splitting pays through level matching
            # alone, and single-axis moves cannot walk along it
            x, fx, _ = _grid_golden_max(lambda t: value(t, t, s),
                                        0.0, v, n=24, xtol=xtol)
            if x is not None and fx is not None and fx > val + 1e-12:
                p1, p2, val, moved = x, x, fx, True
            x, fx, _ = _grid_golden_max(lambda t: value(p1, p2, t), 0.0, 1.0,
                                        n=split_grid - 1, xtol=1e-6)
            if x is not None and fx is not None and fx > val + 1e-12:
                s, val, moved = x, fx, True
            if not moved:
                break
        if val > -math.inf and (best is None or val > best[3]):
            best = (p1, p2, s, val)

    if best is None:
        raise ConvergenceError("no feasible two-class strategy found")
    p1, p2, s, val = best
    return ProviderStrategy.two(p1, s * duo.cap_ii, p2, (1.0 - s) * duo.cap_ii), val


# ---------------------------------------------------------------------------
# Nash search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NashResult:
    p_i: float
    strat_ii: ProviderStrategy
    pi_i: float
    pi_ii: float
    rounds: int
    verified: bool
    trajectory: tuple


def find_nash(duo: DuopolyScenario, mode: str = "one", start_p_i: Optional[float] = None,
              tol: float = 1e-6, max_rounds: int = 100) -> NashResult:
    """Alternating best responses until neither provider moves.

    Starts from a deterministic provider-I price (V/2 unless given), lets
    II best-respond, then I, and repeats.  Convergence means the largest
    strategy coordinate change in a round fell below ``tol``; the result
    then undergoes a neighbourhood local-maximum verification.  Cycles and
    exhausted budgets raise :class:`NoConvergenceError` carrying the
    visited trajectory.
    """
    p_i = duo.v / 2.0 if start_p_i is None else float(start_p_i)
    trajectory = []
    seen = {}
    strat_ii = ProviderStrategy(())
    if duo.cap_ii <= 0.0:
        p_star, pi_star = best_response_I(duo, strat_ii)
        return NashResult(p_star, strat_ii, pi_star, 0.0, 1,
                          _verify_nash(duo, p_star, strat_ii), ((p_star, ()),))

    for rounds in range(1, max_rounds + 1):
        strat_ii_new, _pi_ii = best_response_II(duo, p_i, mode=mode)
        p_i_new, _pi_i = best_response_I(duo, strat_ii_new)
        state = (round(p_i_new, 9), tuple((round(p, 9), round(c, 9))
                                          for p, c in strat_ii_new.classes))
        trajectory.append(state)
        change = abs(p_i_new - p_i)
        prev_cls = strat_ii.classes or strat_ii_new.classes
        if len(prev_cls) != len(strat_ii_new.classes):
            change = math.inf  # strategy structure changed: not converged
        else:
            for (pa, ca), (pb, cb) in zip(prev_cls, strat_ii_new.classes):
                change = max(change, abs(pa - pb), abs(ca - cb))
        p_i, strat_ii = p_i_new, strat_ii_new
        if change < tol:
            me = market_equilibrium(duo, ProviderStrategy.one(p_i, duo.cap_i), strat_ii)
            verified = _verify_nash(duo, p_i, strat_ii)
            return NashResult(p_i, strat_ii, me.pi_i, me.pi_ii, rounds,
                              verified, tuple(trajectory))
        if state in seen:
            raise NoConvergenceError(
                f"best-response cycle detected after {rounds} rounds",
                trajectory=trajectory,
            )
        seen[state] = rounds
    raise NoConvergenceError(
        f"no convergence in {max_rounds} rounds", trajectory=trajectory
    )


def _verify_nash(duo: DuopolyScenario, p_i: float, strat_ii: ProviderStrategy,
                 radius: float = 1e-3, slack: float = 1e-8) -> bool:
    """Sample a small neighbourhood: no unilateral improvement allowed."""
    offsets = [-radius, -radius / 2.0, 0.0, radius / 2.0, radius]

    def clip(p):
        return min(max(p, 0.0), duo.v)

    try:
        base_i = _profit_i(duo, p_i, strat_ii)
    except PmplabError:
        return False
    for d in offsets:
        try:
            if _profit_i(duo, clip(p_i + d), strat_ii) > base_i + slack:
                return False
        except PmplabError:
            continue

    if not strat_ii.classes:
        return True
    try:
        base_ii = _profit_ii(duo, p_i, strat_ii)
    except PmplabError:
        return False
    cls = strat_ii.classes
    if len(cls) == 1:
        (p, c) = cls[0]
        for d in offsets:
            try:
                cand = ProviderStrategy.one(clip(p + d), c)
                if _profit_ii(duo, p_i, cand) > base_ii + slack:
                    return False
            except PmplabError:
                continue
        return True
    (p1, c1), (p2, c2) = cls
    for d1 in offsets:
        for d2 in offsets:
            q1, q2 = clip(p1 + d1), clip(p2 + d2)
            if q2 > q1:
                continue
            try:
                cand = ProviderStrategy.two(q1, c1, q2, c2)
                if _profit_ii(duo, p_i, cand) > base_ii + slack:
                    return False
            except PmplabError:
                continue
    total = c1 + c2
    for d in offsets:
        c1_new = min(max(c1 + d * total, 1e-6 * total), (1.0 - 1e-6) * total)
        try:
            cand = ProviderStrategy.two(p1, c1_new, p2, total - c1_new)
            if _profit_ii(duo, p_i, cand) > base_ii + slack:
                return False
        except PmplabError:
            continue
    return True


# ---------------------------------------------------------------------------
# best-response profit curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    p_i: float
    pi_i: float                 # provider I profit at II's best two-class reply
    pi_ii_one: float
    pi_ii_two: float
    error: Optional[str] = None


def duopoly_curve(duo: DuopolyScenario, p_i_grid: Sequence[float],
                  grid: int = 192) -> tuple:
    """Best-response profits of provider II along a grid of provider-I prices.

    For each grid price, provider II best-responds once restricted to a
    single class and once allowed to split; the returned points carry both
    profits plus provider I's profit against the two-class reply.  Errors
    at individual grid points are recorded on the point, not raised.
    """
    points = []
    for p_i in p_i_grid:
        try:
            _s1, pi_one = best_response_II(duo, p_i, mode="one", grid=grid)
            s2, pi_two = best_response_II(duo, p_i, mode="two", grid=grid)
            me = market_equilibrium(duo, ProviderStrategy.one(p_i, duo.cap_i), s2)
            points.append(CurvePoint(float(p_i), me.pi_i, pi_one, pi_two))
        except PmplabError as exc:
            points.append(CurvePoint(float(p_i), math.nan, math.nan, math.nan, str(exc)))
    return tuple(points)
