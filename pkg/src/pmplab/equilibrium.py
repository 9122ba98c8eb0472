"""Multi-class user equilibria: cutoffs <-> prices, welfare and profit.

A market offers m service classes with capacities (C_1, ..., C_m) at prices
p_1 >= ... >= p_m >= 0, all at or below the access value V.  A user of type
theta joining class i enjoys utility V - p_i - theta * K(Q_i, C_i); users
pick the best class or opt out.  At equilibrium the population splits at
cutoff types theta_1 > theta_2 > ... > theta_m > 0:

* class i serves the types in [theta_{i+1}, theta_i] (theta_{m+1} = 0), so
  its usage is Q_i = F(theta_i) - F(theta_{i+1});
* each cutoff user is indifferent between the neighbouring classes:
  p_{i-1} - p_i = theta_i * (K_i - K_{i-1});
* the top cutoff user is indifferent to opting out: p_1 = V - theta_1 * K_1,
  unless everyone joins (saturated market, theta_1 pinned at the support
  end, in which case the relation relaxes to p_1 <= V - theta_1 * K_1).

Equal-price classes form a tie group: their common congestion level is
found by matching K across the members (the only split users cannot
arbitrage), and the group behaves like one composite class in the cutoff
chain.  Classes that attract nobody at the posted prices are dropped from
the chain and flagged degenerate, with a no-deviation check confirming the
drop is consistent.

The forward map (cutoffs -> prices) is closed form.  The reverse map is
solved in theta space: a damped Newton iteration with analytic Jacobian
covers the common interior and saturated cases fast, with a nested
bisection as the unconditional fallback.  The bisection is sound because
each level's indifference residual is strictly increasing in its own
boundary once every deeper boundary is re-solved: suppose K_j failed to
rise as its boundary rises -- then the deeper boundary must have risen by
at least as much mass, forcing the deeper residual strictly up, which
contradicts it being re-solved to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from scipy.optimize import brentq

from .congestion import CongestionModel
from .errors import (
    ConvergenceError,
    DomainError,
    NoEquilibriumError,
    OrderError,
)
from .population import TypeDistribution, uniform

__all__ = [
    "MarketScenario",
    "Equilibrium",
    "ConstraintReport",
    "prices_from_cutoffs",
    "cutoffs_from_prices",
    "identical_price_equilibrium",
    "social_welfare",
    "provider_profit",
    "validate",
]

_PRICE_TOL = 1e-9      # accepted residual on the indifference equations
_THETA_TOL = 1e-12     # bisection resolution on cutoffs
_TIE_TOL = 1e-12       # cutoff ties flagged as degenerate below this gap


# ---------------------------------------------------------------------------
# scenario and result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarketScenario:
    """Everything needed to pose the equilibrium problem.

    ``capacities`` are listed premium-first: class 1 is the one that will
    carry the highest price.
    """

    v: float
    capacities: tuple
    model: CongestionModel
    dist: TypeDistribution = field(default_factory=uniform)

    def __post_init__(self):
        if self.v <= 0.0:
            raise DomainError(f"access value must be positive, got {self.v}")
        if len(self.capacities) < 1:
            raise DomainError("at least one service class is required")
        if any(c <= 0.0 for c in self.capacities):
            raise DomainError(f"capacities must be positive, got {self.capacities}")
        object.__setattr__(self, "capacities", tuple(float(c) for c in self.capacities))

    @property
    def m(self) -> int:
        return len(self.capacities)

    def merged(self) -> "MarketScenario":
        """Same market with all capacity pooled into a single class."""
        return MarketScenario(self.v, (sum(self.capacities),), self.model, self.dist)

    def with_capacities(self, capacities) -> "MarketScenario":
        return MarketScenario(self.v, tuple(capacities), self.model, self.dist)


@dataclass(frozen=True)
class Equilibrium:
    """A solved market split, premium class first.

    ``saturated`` marks full participation (top cutoff at the support end);
    ``degenerate`` marks empty classes or cutoff ties.  ``opt_out`` is the
    user mass joining nothing.
    """

    cutoffs: tuple
    prices: tuple
    usages: tuple
    levels: tuple
    saturated: bool
    degenerate: bool
    opt_out: float

    @property
    def m(self) -> int:
        return len(self.cutoffs)

    @property
    def total_usage(self) -> float:
        return sum(self.usages)


@dataclass(frozen=True)
class ConstraintReport:
    """Per-constraint diagnosis of a candidate equilibrium."""

    c1_ok: bool
    c2_ok: bool
    c3_ok: bool
    c1_min_gap: float          # smallest cutoff decrement (negative = inversion)
    c2_violation: float        # worst K_i - K_{i+1} excess (0 = fine)
    c3_residuals: tuple        # per-cutoff indifference residuals, price units
    degenerate_ties: tuple     # indices i where theta_i ~= theta_{i+1}
    saturated: bool

    @property
    def all_ok(self) -> bool:
        return self.c1_ok and self.c2_ok and self.c3_ok


# ---------------------------------------------------------------------------
# tie groups
# ---------------------------------------------------------------------------

@dataclass
class _Group:
    price: float
    caps: list          # member capacities, scenario order
    idx: list           # member class indices

    def floor_level(self, model: CongestionModel) -> float:
        return min(model.level_floor(c) for c in self.caps)

    def max_usage(self, model: CongestionModel) -> float:
        if model.kind in ("latency", "general_latency"):
            return sum(self.caps)
        return math.inf

    def level(self, model: CongestionModel, q: float) -> float:
        """Common congestion level when the group as a whole serves mass q.

        Members share q so that their levels match (no member may offer a
        strictly better deal at the same price).  Utilization, default
        consumption and loss kinds admit closed forms; the latency kinds
        are inverted numerically, returning a huge finite level once q
        reaches the pooled capacity so the solvers can bracket.
        """
        q = max(q, 0.0)
        if len(self.caps) == 1:
            return model._value_capped(q, self.caps[0])
        total = sum(self.caps)
        kind = model.kind
        if kind == "utilization":
            return q / total
        if kind == "utilization_default":
            spare = q - len(self.caps) * model.eps_default
            return max(spare, 0.0) / total
        if kind == "loss":
            return model._value_capped(q / total, 1.0)
        cap = self.max_usage(model)
        if q >= cap:
            return 1e12 * (1.0 + q - cap)
        lo = self.floor_level(model)
        if q <= 0.0:
            return lo
        hi = max(lo * 2.0, 1e-6)
        while self._usage_at(model, hi) < q:
            hi *= 2.0
            if hi > 1e14:
                return hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._usage_at(model, mid) < q:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _usage_at(self, model: CongestionModel, lev: float) -> float:
        return sum(model.usage_at_level(lev, c) for c in self.caps)

    def split(self, model: CongestionModel, q: float) -> list:
        """Member usages at the matched level, summing to q exactly."""
        if len(self.caps) == 1:
            return [q]
        lev = self.level(model, q)
        parts = [model.usage_at_level(lev, c) for c in self.caps]
        total = sum(parts)
        if total > 0.0:
            # absorb the inversion residue into the largest member so the
            # parts sum to q bit-exactly
            j = max(range(len(parts)), key=lambda i: parts[i])
            parts[j] += q - total
        elif parts:
            parts[0] = q
        return parts


def _group_by_price(prices, capacities):
    groups = []
    for i, (p, c) in enumerate(zip(prices, capacities)):
        if groups and groups[-1].price == p:
            groups[-1].caps.append(c)
            groups[-1].idx.append(i)
        else:
            groups.append(_Group(p, [c], [i]))
    return groups


# ---------------------------------------------------------------------------
# forward map: cutoffs -> prices
# ---------------------------------------------------------------------------

def prices_from_cutoffs(
    scenario: MarketScenario,
    cutoffs: Sequence[float],
    enforce_order: bool = True,
) -> Equilibrium:
    """Price a given cutoff vector by forward substitution.

    The top price makes the top cutoff user indifferent to opting out; each
    further price difference makes the boundary user indifferent between
    neighbouring classes, so the indifference constraints hold exactly by
    construction.  With ``enforce_order`` the resulting prices must be
    nonincreasing and nonnegative and the congestion levels nondecreasing,
    otherwise :class:`OrderError` signals that the cutoffs are not an
    equilibrium.  A top cutoff at the support end marks a saturated market
    and receives the boundary (largest admissible) top price.
    """
    theta_bar = scenario.dist.support_end
    m = scenario.m
    if len(cutoffs) != m:
        raise OrderError(f"expected {m} cutoffs, got {len(cutoffs)}")
    th = [float(t) for t in cutoffs]
    if th[0] > theta_bar + 1e-12:
        raise OrderError(f"top cutoff {th[0]} beyond support end {theta_bar}")
    for a, b in zip(th, th[1:]):
        if b > a + 1e-15:
            raise OrderError(f"cutoffs must be nonincreasing, got {cutoffs}")
    if th[-1] < -1e-15:
        raise OrderError("cutoffs must be nonnegative")

    F = scenario.dist.cdf
    bounds = th + [0.0]
    usages = [F(bounds[i]) - F(bounds[i + 1]) for i in range(m)]
    levels = []
    for q, c in zip(usages, scenario.capacities):
        if q <= 1e-15:
            levels.append(scenario.model._value_capped(max(q, 0.0), c))
        else:
            levels.append(scenario.model.evaluate(q, c))

    prices = [scenario.v - th[0] * levels[0]]
    for i in range(1, m):
        prices.append(prices[i - 1] - th[i] * (levels[i] - levels[i - 1]))

    degenerate = any(a - b <= _TIE_TOL for a, b in zip(th, bounds[1:]))
    if enforce_order:
        for a, b in zip(prices, prices[1:]):
            if b > a + _PRICE_TOL:
                raise OrderError(f"cutoffs {cutoffs} induce increasing prices {prices}")
        if prices[-1] < -_PRICE_TOL:
            raise OrderError(f"cutoffs {cutoffs} induce a negative bottom price")
        for i in range(m - 1):
            if levels[i] > levels[i + 1] + _PRICE_TOL:
                raise OrderError(
                    f"congestion levels {levels} violate premium ordering at class {i + 1}"
                )
    saturated = th[0] >= theta_bar - 1e-14
    return Equilibrium(
        cutoffs=tuple(th),
        prices=tuple(prices),
        usages=tuple(usages),
        levels=tuple(levels),
        saturated=saturated,
        degenerate=degenerate,
        opt_out=1.0 - sum(usages),
    )


# ---------------------------------------------------------------------------
# reverse map: prices -> cutoffs
# ---------------------------------------------------------------------------

def cutoffs_from_prices(scenario: MarketScenario, prices: Sequence[float]) -> Equilibrium:
    """Solve for the cutoffs that make the posted prices an equilibrium.

    Requires V >= p_1 >= ... >= p_m >= 0.  Equal-price classes are solved
    jointly by congestion-level matching.  Classes nobody joins at these
    prices are dropped from the cutoff chain (their cutoff ties with the
    boundary below and their usage is zero) and the result is flagged
    degenerate.  If the whole population joins, the market saturates with
    the top cutoff pinned at the support end.
    """
    m = scenario.m
    if len(prices) != m:
        raise OrderError(f"expected {m} prices, got {len(prices)}")
    p = [float(x) for x in prices]
    if p[0] > scenario.v + 1e-12:
        raise OrderError(f"top price {p[0]} exceeds access value {scenario.v}")
    for a, b in zip(p, p[1:]):
        if b > a + 1e-15:
            raise OrderError(f"prices must be nonincreasing, got {prices}")
    if p[-1] < 0.0:
        raise OrderError(f"prices must be nonnegative, got {prices}")

    groups = _group_by_price(p, scenario.capacities)
    solution = _solve_group_chain(scenario, groups)
    return _assemble(scenario, groups, solution)


def identical_price_equilibrium(scenario: MarketScenario, price: float) -> Equilibrium:
    """Equilibrium when every class posts the same price.

    All classes form one tie group, so their congestion levels match and
    the single remaining unknown is the participation cutoff.
    """
    return cutoffs_from_prices(scenario, [float(price)] * scenario.m)


# -- solver result ----------------------------------------------------------

@dataclass
class _ChainSolution:
    boundaries: list      # active-group interval tops, premium first
    levels: list          # active-group congestion levels
    active: list          # active positions into the original group list
    dropped: list         # dropped (empty) positions
    saturated: bool


def _solve_group_chain(scenario: MarketScenario, groups) -> _ChainSolution:
    dropped = [gi for gi, g in enumerate(groups) if g.price >= scenario.v]
    active = [gi for gi in range(len(groups)) if gi not in dropped]

    # fast path: damped Newton over singleton groups, shedding collapsed
    # classes between attempts
    if all(len(groups[gi].caps) == 1 for gi in active):
        act = list(active)
        for _ in range(len(act) + 1):
            if not act:
                break
            status, payload = _newton_chain(scenario, [groups[gi] for gi in act])
            if status == "corner":
                act = [gi for k, gi in enumerate(act) if k != payload]
                continue
            if status == "ok":
                boundaries, levels, saturated = payload
                sol = _ChainSolution(
                    boundaries, levels, act,
                    sorted(dropped + [gi for gi in active if gi not in act]),
                    saturated,
                )
                try:
                    _check_no_deviation(scenario, groups, sol)
                except NoEquilibriumError:
                    break  # wrong shedding guess: fall through to bisection
                return sol
            break

    candidates = list(active)
    try:
        while active:
            result = _solve_active_bisect(scenario, groups, active)
            if isinstance(result, int):
                dropped.append(result)
                active = [gi for gi in active if gi != result]
                continue
            boundaries, levels, saturated = result
            sol = _ChainSolution(boundaries, levels, active, sorted(dropped), saturated)
            _check_no_deviation(scenario, groups, sol)
            return sol
        return _ChainSolution([], [], [], sorted(dropped), False)
    except NoEquilibriumError:
        # the incremental shedding guessed wrong: try every ordered active
        # subset and keep the first internally consistent one
        return _solve_by_enumeration(scenario, groups, candidates)


def _solve_by_enumeration(scenario: MarketScenario, groups, candidates):
    from itertools import combinations

    all_dropped = [gi for gi in range(len(groups)) if gi not in candidates]
    for size in range(len(candidates), 0, -1):
        for subset in combinations(candidates, size):
            result = _solve_active_bisect(scenario, groups, list(subset))
            if isinstance(result, int):
                continue
            boundaries, levels, saturated = result
            dropped = sorted(all_dropped + [gi for gi in candidates if gi not in subset])
            sol = _ChainSolution(boundaries, levels, list(subset), dropped, saturated)
            try:
                _check_no_deviation(scenario, groups, sol)
            except NoEquilibriumError:
                continue
            return sol
    raise NoEquilibriumError(
        f"no consistent active set among classes priced "
        f"{[groups[gi].price for gi in candidates]}"
    )


# -- damped Newton ----------------------------------------------------------

def _solve_linear(a, b):
    """Gaussian elimination with partial pivoting for tiny systems."""
    n = len(b)
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[piv][col]) < 1e-300:
            return None
        m[col], m[piv] = m[piv], m[col]
        inv = 1.0 / m[col][col]
        for r in range(col + 1, n):
            fac = m[r][col] * inv
            if fac != 0.0:
                for c in range(col, n + 1):
                    m[r][c] -= fac * m[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = m[r][n] - sum(m[r][c] * x[c] for c in range(r + 1, n))
        x[r] = acc / m[r][r]
    return x


def _newton_chain(scenario: MarketScenario, act_groups):
    """Newton solve of the cutoff chain for singleton groups.

    Returns ("ok", (boundaries, levels, saturated)), ("corner", k) when the
    k-th active group's interval collapses (signalling it should be empty),
    or ("fail", None) when the robust path should take over.
    """
    v = scenario.v
    dist = scenario.dist
    model = scenario.model
    theta_bar = dist.support_end
    prices = [g.price for g in act_groups]
    caps = [g.caps[0] for g in act_groups]
    n = len(act_groups)
    min_q = model.min_usage()

    def residual_jacobian(x, pinned):
        """Residuals and Jacobian at cutoff vector x; row 0 dropped if pinned."""
        xs = list(x) + [0.0]
        qs = [dist.cdf(xs[i]) - dist.cdf(xs[i + 1]) for i in range(n)]
        if model.kind in ("latency", "general_latency"):
            for q, c in zip(qs, caps):
                if q >= c:
                    return None, None, None
        ks = [model._value_capped(q, c) for q, c in zip(qs, caps)]
        sl = [model._slope(max(q, min_q + 1e-13), c) for q, c in zip(qs, caps)]
        fs = [dist.density(t) for t in xs]
        rows = [] if pinned else [0]
        rows += list(range(1, n))
        res = []
        jac = []
        for i in rows:
            if i == 0:
                res.append(v - prices[0] - xs[0] * ks[0])
            else:
                res.append((prices[i - 1] - prices[i]) - xs[i] * (ks[i] - ks[i - 1]))
            row = [0.0] * n
            if i == 0:
                row[0] = -ks[0] - xs[0] * sl[0] * fs[0]
                if n > 1:
                    row[1] = xs[0] * sl[0] * fs[1]
            else:
                row[i - 1] = xs[i] * sl[i - 1] * fs[i - 1]
                row[i] = -(ks[i] - ks[i - 1]) - xs[i] * (sl[i] + sl[i - 1]) * fs[i]
                if i + 1 < n:
                    row[i + 1] = xs[i] * sl[i] * fs[i + 1]
            jac.append([row[j] for j in rows] if pinned else row)
        return res, jac, ks

    def capacity_seed():
        # fill a moderate fraction of each class, capped by population mass,
        # so latency classes start inside their service domains
        qs = [max(min(0.4 * c, 0.8 / n), min_q * 1.2 + 1e-4) for c in caps]
        total = sum(qs)
        if total > 0.9:
            qs = [q * 0.9 / total for q in qs]
        xs = [0.0] * n
        cum = 0.0
        for i in range(n - 1, -1, -1):
            cum += qs[i]
            xs[i] = dist.quantile(min(cum, 1.0)) * 0.98
        for i in range(n - 2, -1, -1):
            if xs[i] <= xs[i + 1]:
                xs[i] = min(xs[i + 1] * 1.05 + 1e-6, theta_bar)
        return xs

    def run(pinned, seed=None):
        if pinned and n == 1:
            k0 = model._value_capped(dist.cdf(theta_bar), caps[0])
            return [theta_bar], [k0]
        x = list(seed) if seed else [theta_bar * (n - i) / (n + 0.5) * 0.9 for i in range(n)]
        if pinned:
            x[0] = theta_bar
        top_cap = theta_bar * (3.0 if not pinned else 1.0)
        for _ in range(32):
            res, jac, _ks = residual_jacobian(x, pinned)
            if res is None:
                return None
            if max(abs(r) for r in res) < 1e-12:
                break
            step = _solve_linear(jac, [-r for r in res])
            if step is None:
                return None
            lam = 1.0
            base = list(x)
            for _damp in range(12):
                trial = list(base)
                off = 1 if pinned else 0
                for k, s in enumerate(step):
                    trial[k + off] = base[k + off] + lam * s
                ok = all(
                    trial[i] > trial[i + 1] - 1e-15 for i in range(n - 1)
                ) and trial[-1] >= -1e-15 and trial[0] <= top_cap
                if ok:
                    x = [min(max(t, 0.0), top_cap) for t in trial]
                    break
                lam *= 0.5
            else:
                return None
        else:
            return None
        res, _jac, ks = residual_jacobian(x, pinned)
        if res is None or max(abs(r) for r in res) > 1e-10:
            return None
        return x, ks

    out = run(pinned=False, seed=capacity_seed())
    if out is None:
        out = run(pinned=False)
    saturated = False
    if out is not None and out[0][0] > theta_bar + 1e-12:
        out = None
        saturated = True
    if out is None:
        got = run(pinned=True, seed=capacity_seed())
        if got is None:
            got = run(pinned=True)
        if got is None:
            return ("fail", None)
        x, ks = got
        slack = v - prices[0] - theta_bar * ks[0]
        if slack < -1e-9:
            return ("fail", None)
        saturated = True
    else:
        x, ks = out
        saturated = x[0] >= theta_bar - 1e-14

    # collapsed interval -> that group should be empty
    xs = list(x) + [0.0]
    for i in range(n):
        if xs[i] - xs[i + 1] <= 1e-10:
            return ("corner", i)
    qs = [dist.cdf(xs[i]) - dist.cdf(xs[i + 1]) for i in range(n)]
    if any(q < min_q - 1e-12 for q in qs):
        return ("fail", None)
    return ("ok", (list(x), list(ks), saturated))


# -- nested bisection -------------------------------------------------------

def _solve_active_bisect(scenario: MarketScenario, groups, active):
    """Robust chain solve for one candidate active set.

    Returns (boundaries, levels, saturated) or the original-list position
    of a group that must be empty.  Candidate boundaries below a level's
    feasibility threshold (where some deeper group cannot stay active) are
    treated as negative residuals, which is consistent because every
    emptiness margin grows with the boundary above it.
    """
    v = scenario.v
    F = scenario.dist.cdf
    theta_bar = scenario.dist.support_end
    model = scenario.model
    act = [groups[gi] for gi in active]
    n = len(act)
    prices = [g.price for g in act]

    def resolve(j, top):
        if j == n - 1:
            return [], [act[j].level(model, F(top))]
        dp = prices[j] - prices[j + 1]

        def resid(b):
            sub = resolve(j + 1, b)
            if isinstance(sub, int):
                return None, sub
            kj = act[j].level(model, F(top) - F(b))
            return b * (sub[1][0] - kj) - dp, sub

        r_top, sub_top = resid(top)
        if r_top is None:
            return sub_top
        if r_top < 0.0:
            return active[j]
        lo, hi = 0.0, top
        r_lo_val = None
        for _ in range(24):
            mid = 0.5 * (lo + hi)
            r_mid, _ = resid(mid)
            if r_mid is None or r_mid < 0.0:
                lo, r_lo_val = mid, r_mid
            else:
                hi = mid
            if hi - lo < _THETA_TOL:
                break
        if r_lo_val is not None and r_lo_val < 0.0 and hi - lo > _THETA_TOL:
            # feasible bracket isolated: hand it to a superlinear root finder
            hi = brentq(
                lambda b: (lambda rv: rv if rv is not None else -1.0)(resid(b)[0]),
                lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=120,
            )
        else:
            for _ in range(56):
                mid = 0.5 * (lo + hi)
                r_mid, _ = resid(mid)
                if r_mid is None or r_mid < 0.0:
                    lo, r_lo_val = mid, r_mid
                else:
                    hi = mid
                if hi - lo < _THETA_TOL:
                    break
            # a genuine root has a feasible negative residual just below it;
            # a feasibility threshold (some deeper group losing its last
            # user) makes the residual jump sign without crossing zero, and
            # the deeper corner must be resolved globally instead
            r_lo, sub_lo = resid(lo)
            if r_lo is None and lo > 0.0:
                return sub_lo
        r_fin, sub_fin = resid(hi)
        if r_fin is None:
            return sub_fin
        kj = act[j].level(model, F(top) - F(hi))
        return [hi] + sub_fin[0], [kj] + sub_fin[1]

    def top_gap(t1):
        sub = resolve(0, t1)
        if isinstance(sub, int):
            return None, sub
        return v - prices[0] - t1 * sub[1][0], sub

    g_bar, sub_bar = top_gap(theta_bar)
    if g_bar is None:
        return sub_bar
    if g_bar >= 0.0:
        return [theta_bar] + sub_bar[0], sub_bar[1], True

    lo, hi = 0.0, theta_bar
    g_lo_val = None
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        g_mid, _ = top_gap(mid)
        if g_mid is None or g_mid > 0.0:
            lo, g_lo_val = mid, g_mid
        else:
            hi = mid
        if hi - lo < _THETA_TOL:
            break
    if g_lo_val is not None and g_lo_val > 0.0 and hi - lo > _THETA_TOL:
        hi = brentq(
            lambda t: (lambda gv: gv if gv is not None else 1.0)(top_gap(t)[0]),
            lo, hi, xtol=1e-13, rtol=8.9e-16, maxiter=120,
        )
    else:
        for _ in range(76):
            mid = 0.5 * (lo + hi)
            g_mid, _ = top_gap(mid)
            if g_mid is None or g_mid > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < _THETA_TOL:
                break
    g_fin, sub_fin = top_gap(hi)
    if g_fin is None:
        return sub_fin
    if abs(g_fin) > 1e-6 * max(1.0, v):
        g_lo, sub_lo = top_gap(lo)
        if g_lo is None:
            return sub_lo
        raise ConvergenceError(
            f"cutoff chain residual {g_fin:.3e} above tolerance at prices {prices}"
        )
    return [hi] + sub_fin[0], sub_fin[1], False


def _check_no_deviation(scenario: MarketScenario, groups, sol: _ChainSolution) -> None:
    """Verify no user would enter a dropped (empty) group.

    The deviation utility line V - p_d - theta * floor_level must stay at
    or below the equilibrium utility envelope; both are piecewise linear,
    so checking at the envelope breakpoints suffices.
    """
    if not sol.dropped:
        return
    v = scenario.v
    model = scenario.model
    breakpoints = [0.0] + sol.boundaries
    segments = list(zip(sol.levels, [groups[gi].price for gi in sol.active]))

    def envelope(theta):
        best = 0.0  # opting out
        for lev, price in segments:
            best = max(best, v - price - theta * lev)
        return best

    for gi in sol.dropped:
        g = groups[gi]
        if g.price >= v:
            continue
        floor = g.floor_level(model)
        for theta in breakpoints:
            if v - g.price - theta * floor > envelope(theta) + 1e-7:
                raise NoEquilibriumError(
                    f"class group priced {g.price} cannot be empty at these prices"
                )


def _assemble(scenario: MarketScenario, groups, sol: _ChainSolution) -> Equilibrium:
    """Expand a group-level chain solution into per-class quantities."""
    F = scenario.dist.cdf
    model = scenario.model
    m = scenario.m

    usages = [0.0] * m
    levels = [0.0] * m
    cutoffs = [0.0] * m
    price_per_class = [0.0] * m
    for g in groups:
        for ci in g.idx:
            price_per_class[ci] = g.price

    bottoms = sol.boundaries[1:] + [0.0]
    for gi, top, bottom, lev in zip(sol.active, sol.boundaries, bottoms, sol.levels):
        g = groups[gi]
        q_group = F(top) - F(bottom)
        parts = g.split(model, q_group)
        cum = F(bottom)
        for ci, q in zip(reversed(g.idx), reversed(parts)):
            usages[ci] = q
            cum += q
            cutoffs[ci] = scenario.dist.quantile(min(cum, 1.0))
        for ci, q in zip(g.idx, parts):
            if q <= 1e-15:
                levels[ci] = model._value_capped(max(q, 0.0), scenario.capacities[ci])
            else:
                levels[ci] = model.evaluate(q, scenario.capacities[ci])
        cutoffs[g.idx[0]] = top  # pin exactly against quantile roundoff

    # a dropped group's members tie with the top boundary of the first
    # active group below it (or 0 when nothing is below)
    for gi in sol.dropped:
        tie_at = 0.0
        for pos, top in zip(sol.active, sol.boundaries):
            if pos > gi:
                tie_at = top
                break
        for ci in groups[gi].idx:
            cutoffs[ci] = tie_at
            usages[ci] = 0.0
            levels[ci] = model._value_capped(0.0, scenario.capacities[ci])

    degenerate = bool(sol.dropped)
    for a, b in zip(cutoffs, cutoffs[1:] + [0.0]):
        if a - b <= _TIE_TOL:
            degenerate = True

    eq = Equilibrium(
        cutoffs=tuple(cutoffs),
        prices=tuple(price_per_class),
        usages=tuple(usages),
        levels=tuple(levels),
        saturated=sol.saturated,
        degenerate=degenerate,
        opt_out=1.0 - sum(usages),
    )
    _verify_residuals(scenario, eq)
    return eq


def _verify_residuals(scenario: MarketScenario, eq: Equilibrium) -> None:
    rep = validate(scenario, eq)
    worst = max((abs(r) for r in rep.c3_residuals), default=0.0)
    if worst > 100 * _PRICE_TOL:
        raise ConvergenceError(f"indifference residual {worst:.3e} above tolerance")


# ---------------------------------------------------------------------------
# welfare, profit, validation
# ---------------------------------------------------------------------------

def social_welfare(scenario: MarketScenario, eq: Equilibrium) -> float:
    """Total user utility excluding payments.

    Sums, class by class, the utility mass of the types the class serves
    under its equilibrium congestion level.
    """
    total = 0.0
    bounds = list(eq.cutoffs) + [0.0]
    for i in range(eq.m):
        total += scenario.dist.welfare_integral(
            bounds[i + 1], bounds[i], scenario.v, eq.levels[i]
        )
    return total


def provider_profit(eq: Equilibrium) -> float:
    """Total payments collected: sum of price times usage over classes."""
    return sum(p * q for p, q in zip(eq.prices, eq.usages))


def validate(scenario: MarketScenario, eq: Equilibrium) -> ConstraintReport:
    """Report how well an equilibrium satisfies its defining constraints.

    Checks the strict cutoff ordering, the premium ordering of congestion
    levels, and the per-cutoff indifference residuals (the top one relaxes
    to an inequality when the market is saturated).  Ties within tolerance
    are reported as degenerate rather than failed.
    """
    th = list(eq.cutoffs) + [0.0]
    gaps = [a - b for a, b in zip(th, th[1:])]
    ties = tuple(i for i, gapv in enumerate(gaps) if abs(gapv) <= _TIE_TOL)
    c1_min = min(gaps) if gaps else 0.0
    c1_ok = all(gapv > -_TIE_TOL for gapv in gaps)

    c2_violation = 0.0
    for i in range(eq.m - 1):
        if eq.usages[i] <= _TIE_TOL or eq.usages[i + 1] <= _TIE_TOL:
            continue
        c2_violation = max(c2_violation, eq.levels[i] - eq.levels[i + 1])
    c2_ok = c2_violation <= _PRICE_TOL

    residuals = []
    lead = next((i for i in range(eq.m) if eq.usages[i] > _TIE_TOL), None)
    if lead is None:
        residuals.append(0.0)  # empty market: no participation equation binds
    else:
        top = scenario.v - th[lead] * eq.levels[lead] - eq.prices[lead]
        if eq.saturated:
            residuals.append(min(top, 0.0))  # only a shortfall counts when saturated
        else:
            residuals.append(top)
    for i in range(1, eq.m):
        upper_empty = eq.usages[i - 1] <= _TIE_TOL
        lower_empty = eq.usages[i] <= _TIE_TOL
        lhs = eq.prices[i - 1] - eq.prices[i]
        rhs = th[i] * (eq.levels[i] - eq.levels[i - 1])
        if upper_empty and lower_empty:
            residuals.append(0.0)
        elif upper_empty:
            # nobody may prefer the empty premium side: lhs >= rhs
            residuals.append(min(lhs - rhs, 0.0))
        elif lower_empty:
            residuals.append(max(lhs - rhs, 0.0))
        else:
            residuals.append(lhs - rhs)
    c3_ok = all(abs(r) <= _PRICE_TOL for r in residuals)

    return ConstraintReport(
        c1_ok=c1_ok,
        c2_ok=c2_ok,
        c3_ok=c3_ok,
        c1_min_gap=c1_min,
        c2_violation=c2_violation,
        c3_residuals=tuple(residuals),
        degenerate_ties=ties,
        saturated=eq.saturated,
    )
