"""Congestion (negative-externality) functions and their structural classifiers.

A congestion function K(Q, C) maps the usage Q of a service class with
capacity C to the performance penalty its users perceive.  K is strictly
increasing in Q and decreasing in C.  The families implemented here:

========================  =====================================================
utilization               Q / C
latency                   1 / (C - Q)                    (M/M/1 sojourn time)
general_latency(delta2)   Q (1 + delta2) / (2 C (C - Q)) + 1 / C
                          (M/G/1 Pollaczek-Khinchine; delta2 = squared
                          coefficient of variation of service time)
loss(kappa)               rho^kappa / (1 + rho + ... + rho^kappa), rho = Q / C
                          (M/M/1/kappa blocking probability; written this way
                          the formula is continuous at rho = 1 where the
                          textbook ratio form is 0/0)
outage(eps)               (eps Q / C)^C   (all-of-C-servers failure, each
                          failing in proportion eps to its utilization)
utilization_default(eps)  (Q - eps) / C   (a default consumption eps is
                          incurred whenever the class is accessed, so Q >= eps)
========================  =====================================================

Domain notes.  Capacity must be positive and usage nonnegative (at least
``eps`` for utilization_default).  The latency kinds additionally require
Q < C: the queue diverges at saturation.  The remaining kinds stay finite,
monotone and meaningful for Q > C (overload), and equilibrium computations
do push class usage slightly past the nominal capacity share, so no upper
cap is enforced for them.

Two classifiers probe the structure that decides whether splitting a class
into smaller ones can help:

* :func:`classify_scaling` compares K(Q, C) against K(aQ, aC) for scale
  factors a < 1 — does congestion fall or rise when a class is scaled down?
* :func:`monotone_case` / :func:`global_monotone` check whether the usage
  ordering of classes implies a consistent ordering of the marginal slopes
  dK/dQ across classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DegenerateError, DomainError

__all__ = [
    "CongestionModel",
    "ScalingClass",
    "MonotoneReport",
    "utilization",
    "latency",
    "general_latency",
    "loss",
    "outage",
    "utilization_default",
    "classify_scaling",
    "monotone_case",
    "global_monotone",
    "c2_profile_filter",
    "PARTITION_PREFERRED",
    "MULTIPLEXING_PREFERRED",
    "INDIFFERENT",
    "MIXED",
]

PARTITION_PREFERRED = "PartitionPreferred"
MULTIPLEXING_PREFERRED = "MultiplexingPreferred"
INDIFFERENT = "Indifferent"
MIXED = "Mixed"

_LATENCY_KINDS = ("latency", "general_latency")
_ALL_KINDS = (
    "utilization",
    "latency",
    "general_latency",
    "loss",
    "outage",
    "utilization_default",
)

# Finite stand-in for a diverged latency level inside solvers (never exposed).
_HUGE_LEVEL = 1e12


@dataclass(frozen=True)
class CongestionModel:
    """One congestion family plus its parameters.

    Instances are immutable; all methods are pure functions of their
    arguments, so a model can be shared freely across threads.
    """

    kind: str
    delta2: float = 0.0   # general_latency: squared CoV of service time
    kappa: int = 1        # loss: queue length
    eps: float = 1.0      # outage: failure factor in (0, 1]
    eps_default: float = 0.0  # utilization_default: default consumption >= 0

    def __post_init__(self):
        if self.kind not in _ALL_KINDS:
            raise DomainError(f"unknown congestion kind {self.kind!r}")
        if self.kind == "general_latency" and self.delta2 < 0.0:
            raise DomainError("delta2 must be nonnegative")
        if self.kind == "loss" and (self.kappa < 1 or int(self.kappa) != self.kappa):
            raise DomainError("kappa must be a positive integer")
        if self.kind == "outage" and not 0.0 < self.eps <= 1.0:
            raise DomainError("eps must lie in (0, 1]")
        if self.kind == "utilization_default" and self.eps_default < 0.0:
            raise DomainError("default consumption must be nonnegative")

    # -- domain -------------------------------------------------------------

    def min_usage(self) -> float:
        """Smallest admissible usage (0, or the default consumption)."""
        return self.eps_default if self.kind == "utilization_default" else 0.0

    def check_domain(self, q: float, c: float) -> None:
        if c <= 0.0:
            raise DomainError(f"capacity must be positive, got {c}")
        lo = self.min_usage()
        if q < lo:
            raise DomainError(f"usage {q} below the minimum {lo} for kind {self.kind!r}")
        if self.kind in _LATENCY_KINDS and q >= c:
            raise DomainError(f"latency diverges at saturation: usage {q} >= capacity {c}")

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, q: float, c: float) -> float:
        """Congestion level K(q, c)."""
        self.check_domain(q, c)
        return self._value(q, c)

    def _value(self, q: float, c: float) -> float:
        kind = self.kind
        if kind == "utilization":
            return q / c
        if kind == "utilization_default":
            return (q - self.eps_default) / c
        if kind == "latency":
            return 1.0 / (c - q)
        if kind == "general_latency":
            return q * (1.0 + self.delta2) / (2.0 * c * (c - q)) + 1.0 / c
        if kind == "loss":
            rho = q / c
            powers = 1.0
            acc = 1.0
            for _ in range(self.kappa):
                powers *= rho
                acc += powers
            return powers / acc
        # outage
        return (self.eps * q / c) ** c

    def _value_capped(self, q: float, c: float) -> float:
        """Solver-internal evaluation: diverged latency maps to a huge finite
        level instead of raising, and sub-default usage clamps to level 0."""
        if self.kind in _LATENCY_KINDS and q >= c:
            return _HUGE_LEVEL * (1.0 + q - c)
        if self.kind == "utilization_default" and q < self.eps_default:
            return 0.0
        if q <= 0.0:
            q = 0.0
        return self._value(q, c)

    # -- derivatives --------------------------------------------------------

    def marginal(self, q: float, c: float, fd_step: Optional[float] = None) -> float:
        """Slope dK/dQ at (q, c).

        Utilization kinds and plain latency use their closed forms (1/c and
        1/(c-q)^2).  The other kinds are differenced centrally with step
        ``max(1e-6, 1e-6 c)``; a :class:`DegenerateError` is raised when q
        sits within one step of a domain boundary.
        """
        self.check_domain(q, c)
        kind = self.kind
        if kind in ("utilization", "utilization_default"):
            return 1.0 / c
        if kind == "latency":
            return 1.0 / ((c - q) ** 2)
        h = fd_step if fd_step is not None else max(1e-6, 1e-6 * c)
        lo = self.min_usage()
        if q - h < lo or (kind in _LATENCY_KINDS and q + h >= c):
            raise DegenerateError(
                f"usage {q} within finite-difference step {h} of a domain boundary"
            )
        return (self._value(q + h, c) - self._value(q - h, c)) / (2.0 * h)

    def _slope(self, q: float, c: float) -> float:
        """Analytic dK/dQ for every kind; solver-internal."""
        kind = self.kind
        if kind in ("utilization", "utilization_default"):
            return 1.0 / c
        if kind == "latency":
            return 1.0 / ((c - q) ** 2)
        if kind == "general_latency":
            return (1.0 + self.delta2) / (2.0 * (c - q) ** 2)
        if kind == "loss":
            rho = q / c
            powers = [1.0]
            for _ in range(self.kappa):
                powers.append(powers[-1] * rho)
            s = sum(powers)
            sprime = sum(j * powers[j - 1] for j in range(1, self.kappa + 1))
            grho = (self.kappa * powers[self.kappa - 1] * s - powers[self.kappa] * sprime) / (s * s)
            return grho / c
        # outage: d/dq (eps q / c)^c = (eps/c) * c * (eps q / c)^(c-1)
        base = self.eps * q / c
        if base == 0.0:
            return 0.0 if c > 1.0 else (self.eps if c == 1.0 else float("inf"))
        return self.eps * (base ** (c - 1.0))

    # -- inversion ----------------------------------------------------------

    def usage_at_level(self, level: float, c: float) -> float:
        """Inverse of ``evaluate`` in Q at fixed capacity.

        Returns the smallest usage producing the given level; levels below
        the empty-class floor map to the minimum usage.
        """
        if c <= 0.0:
            raise DomainError(f"capacity must be positive, got {c}")
        floor = self.level_floor(c)
        if level <= floor:
            return self.min_usage()
        kind = self.kind
        if kind == "utilization":
            return level * c
        if kind == "utilization_default":
            return level * c + self.eps_default
        if kind == "latency":
            return c - 1.0 / level
        if kind == "general_latency":
            a = 2.0 * c * level - 2.0
            return a * c / (1.0 + self.delta2 + a)
        if kind == "outage":
            return c * (level ** (1.0 / c)) / self.eps
        # loss: monotone in rho on (0, inf); cap the bracket where K -> 1
        if level >= 1.0:
            raise DomainError(f"loss level must be below 1, got {level}")
        lo, hi = 0.0, 1.0
        while self._value(hi * c, c) < level:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self._value(mid * c, c) < level:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi) * c

    def level_floor(self, c: float) -> float:
        """Level seen by the first infinitesimal user of an empty class."""
        if self.kind in _LATENCY_KINDS:
            return self._value(0.0, c)
        return 0.0

    # -- misc ---------------------------------------------------------------

    def describe(self) -> str:
        kind = self.kind
        if kind == "general_latency":
            return f"general_latency(delta2={self.delta2:g})"
        if kind == "loss":
            return f"loss(kappa={self.kappa})"
        if kind == "outage":
            return f"outage(eps={self.eps:g})"
        if kind == "utilization_default":
            return f"utilization_default(eps={self.eps_default:g})"
        return kind


def utilization() -> CongestionModel:
    return CongestionModel("utilization")


def latency() -> CongestionModel:
    return CongestionModel("latency")


def general_latency(delta2: float) -> CongestionModel:
    return CongestionModel("general_latency", delta2=float(delta2))


def loss(kappa: int) -> CongestionModel:
    return CongestionModel("loss", kappa=int(kappa))


def outage(eps: float) -> CongestionModel:
    return CongestionModel("outage", eps=float(eps))


def utilization_default(eps: float) -> CongestionModel:
    return CongestionModel("utilization_default", eps_default=float(eps))


# ---------------------------------------------------------------------------
# scaling classifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalingClass:
    """Verdict of the scale-down comparison K(Q, C) vs K(aQ, aC).

    ``witness_down`` is a (Q, C, a) point where scaling down strictly
    lowers congestion (the partition-preferred direction), ``witness_up``
    one where it strictly raises it.  A Mixed verdict carries both.
    """

    verdict: str
    witness_down: Optional[tuple] = None
    witness_up: Optional[tuple] = None
    max_gap: float = 0.0
    min_gap: float = 0.0


def _default_scaling_grid(model: CongestionModel):
    points = []
    for i in range(20):
        c = 0.2 + (2.0 - 0.2) * i / 19
        for j in range(20):
            q = (0.05 + 0.90 * j / 19) * c
            points.append((q, c))
    return points


def classify_scaling(
    model: CongestionModel,
    q_grid: Optional[Sequence[tuple]] = None,
    alpha_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-9,
    indifferent_tol: float = 1e-12,
) -> ScalingClass:
    """Classify how congestion responds to scaling a class down.

    For every grid point (Q, C) and every scale factor a the gap
    ``K(Q, C) - K(aQ, aC)`` is evaluated.  All gaps within
    ``indifferent_tol`` of zero: Indifferent.  All gaps >= -tol with at
    least one above tol: PartitionPreferred (scaled-down copies are no more
    congested).  The mirror image: MultiplexingPreferred.  Anything else:
    Mixed, with one witness in each direction.

    Grid points whose scaled image leaves the model's domain are skipped;
    with the default grids this only affects utilization_default, whose
    minimum-usage bound must hold on both sides of the comparison.
    """
    if q_grid is None:
        q_grid = _default_scaling_grid(model)
    if alpha_grid is None:
        alpha_grid = [0.1 * k for k in range(1, 10)]
    lo = model.min_usage()
    max_gap, min_gap = 0.0, 0.0
    witness_down = witness_up = None
    evaluated = 0
    for q, c in q_grid:
        if q < lo or (model.kind in _LATENCY_KINDS and q >= c):
            continue
        base = model.evaluate(q, c)
        for a in alpha_grid:
            if a * q < lo:
                continue
            gap = base - model.evaluate(a * q, a * c)
            evaluated += 1
            if gap > max_gap:
                max_gap, witness_down = gap, (q, c, a)
            if gap < min_gap:
                min_gap, witness_up = gap, (q, c, a)
    if evaluated == 0:
        raise DomainError("no admissible grid points for scaling classification")
    if max_gap <= indifferent_tol and -min_gap <= indifferent_tol:
        return ScalingClass(INDIFFERENT, max_gap=max_gap, min_gap=min_gap)
    if min_gap >= -tol and max_gap > tol:
        return ScalingClass(PARTITION_PREFERRED, witness_down=witness_down,
                            max_gap=max_gap, min_gap=min_gap)
    if max_gap <= tol and min_gap < -tol:
        return ScalingClass(MULTIPLEXING_PREFERRED, witness_up=witness_up,
                            max_gap=max_gap, min_gap=min_gap)
    return ScalingClass(MIXED, witness_down=witness_down, witness_up=witness_up,
                        max_gap=max_gap, min_gap=min_gap)


# ---------------------------------------------------------------------------
# monotone-preference classifier
# ---------------------------------------------------------------------------

def monotone_case(
    model: CongestionModel,
    capacities: Sequence[float],
    usage_profile: Sequence[float],
    tie_tol: float = 1e-12,
) -> str:
    """Monotone-preference case of one concrete usage profile.

    Over every class pair with distinct usages, tests whether the larger
    usage always carries the larger marginal slope ("M1"), always the
    smaller ("M2"), or neither.  Profiles with no distinct-usage pair
    return "Both".  Slope ties within ``tie_tol`` satisfy both directions
    rather than spoiling either.
    """
    if len(capacities) != len(usage_profile):
        raise DomainError("capacities and usage profile must have equal length")
    for q, c in zip(usage_profile, capacities):
        model.check_domain(q, c)
    slopes = [model._slope(q, c) for q, c in zip(usage_profile, capacities)]
    m1_ok = m2_ok = True
    any_pair = False
    n = len(capacities)
    for i in range(n):
        for j in range(n):
            if usage_profile[i] > usage_profile[j] + tie_tol:
                any_pair = True
                if abs(slopes[i] - slopes[j]) <= tie_tol:
                    continue
                if slopes[i] > slopes[j]:
                    m2_ok = False
                else:
                    m1_ok = False
    if not any_pair or (m1_ok and m2_ok):
        return "Both"
    if m1_ok:
        return "M1"
    if m2_ok:
        return "M2"
    return "Neither"


@dataclass(frozen=True)
class MonotoneReport:
    """Outcome of a profile sweep: verdict plus the offending profiles.

    ``witnesses`` holds (profile, case) pairs: on a Violated verdict either
    one profile whose case is Neither, or an M1 profile and an M2 profile.
    """

    verdict: str
    witnesses: tuple = ()


_DEFAULT_FRACTIONS = (1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0, 2.0 / 3.0, 5.0 / 7.0, 9.0 / 10.0)


def _default_profiles(model: CongestionModel, capacities):
    """Deterministic lattice of usage profiles: every combination of
    per-class usage fractions, skipping sub-minimum points."""
    lo = model.min_usage()
    m = len(capacities)
    profiles = []

    def rec(prefix):
        if len(prefix) == m:
            profiles.append(tuple(prefix))
            return
        c = capacities[len(prefix)]
        for f in _DEFAULT_FRACTIONS:
            q = f * c
            if q >= lo:
                rec(prefix + [q])

    rec([])
    return profiles


def c2_profile_filter(model: CongestionModel, capacities, profiles):
    """Keep only profiles whose congestion levels are nondecreasing from
    class 1 to class m — the ordering an equilibrium can actually produce."""
    kept = []
    for prof in profiles:
        levels = [model._value_capped(q, c) for q, c in zip(prof, capacities)]
        if all(levels[i] <= levels[i + 1] + 1e-12 for i in range(len(levels) - 1)):
            kept.append(prof)
    return kept


def global_monotone(
    model: CongestionModel,
    capacities: Sequence[float],
    profiles: Optional[Sequence[Sequence[float]]] = None,
    tie_tol: float = 1e-12,
) -> MonotoneReport:
    """Sweep usage profiles and test for a globally consistent monotone case.

    Violated means either some profile is Neither, or two profiles disagree
    (one M1, one M2); the witnesses name the profiles.  Profiles that are
    "Both" are compatible with every verdict.
    """
    if profiles is None:
        profiles = _default_profiles(model, list(capacities))
    first_m1 = first_m2 = None
    for prof in profiles:
        case = monotone_case(model, capacities, prof, tie_tol)
        if case == "Neither":
            return MonotoneReport("Violated", ((tuple(prof), "Neither"),))
        if case == "M1" and first_m1 is None:
            first_m1 = tuple(prof)
        elif case == "M2" and first_m2 is None:
            first_m2 = tuple(prof)
        if first_m1 is not None and first_m2 is not None:
            return MonotoneReport(
                "Violated", ((first_m1, "M1"), (first_m2, "M2"))
            )
    if first_m1 is not None:
        return MonotoneReport("ConsistentM1", ((first_m1, "M1"),))
    if first_m2 is not None:
        return MonotoneReport("ConsistentM2", ((first_m2, "M2"),))
    return MonotoneReport("ConsistentM2", ())
