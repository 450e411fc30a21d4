"""Lotteries evaluated under a 1-D member or organizational utility."""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from components.aggregation import MONOTONE_GRID_POINTS, MONOTONE_TOL
from components.errors import (
    DegenerateBet,
    DimensionMismatch,
    DomainExceeded,
    InvalidLottery,
    NonMonotonicUtility,
    NumericalFailure,
    RangeExceeded,
)
from components.utils import config_section

_RISK_CFG = config_section("risk")
CE_DOMAIN = tuple(_RISK_CFG.get("ce_domain", (-50.0, 50.0)))
CE_MAX_EXPANSION = float(_RISK_CFG.get("ce_max_expansion", 4))
CE_TOL = float(_RISK_CFG.get("ce_tol", 1e-9))

PROB_SUM_TOL = 1e-12


# --- LOTTERY ---
@dataclass(frozen=True)
class Lottery:
    branches: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        branches = tuple((float(o), float(p)) for o, p in self.branches)
        if not branches:
            raise InvalidLottery("lottery needs at least one branch")
        for o, p in branches:
            if not math.isfinite(o):
                raise InvalidLottery(f"branch outcome must be finite, got {o}")
            if not (0.0 <= p <= 1.0):
                raise InvalidLottery(f"branch probability must be in [0, 1], got {p}")
        total = math.fsum(p for _, p in branches)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise InvalidLottery(f"branch probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "branches", branches)

    @property
    def outcomes(self):
        return np.array([o for o, _ in self.branches])

    @property
    def probs(self):
        return np.array([p for _, p in self.branches])

    @classmethod
    def sure(cls, outcome):
        return cls(((outcome, 1.0),))

    @classmethod
    def bet(cls, win, loss, p_win=0.5):
        return cls(((win, p_win), (loss, 1.0 - p_win)))

    def to_json(self):
        return {"branches": [{"outcome": o, "prob": p} for o, p in self.branches]}

    @classmethod
    def from_json(cls, data):
        try:
            return cls(tuple((b["outcome"], b["prob"]) for b in data["branches"]))
        except (KeyError, TypeError) as e:
            raise InvalidLottery(f"malformed lottery: {e}")


# --- EVALUABLE UTILITY ---
@dataclass(frozen=True)
class EvaluableUtility:
    """A 1-D utility (UtilityExpr or OrgUtility) with the interval used for root-finding."""

    u: object
    domain: Tuple[float, float] = CE_DOMAIN

    def __post_init__(self):
        if getattr(self.u, "dimension", 1) > 1:
            raise DimensionMismatch(1, self.u.dimension)
        lo, hi = float(self.domain[0]), float(self.domain[1])
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DomainExceeded(f"utility domain must be a finite interval, got [{lo}, {hi}]")
        object.__setattr__(self, "domain", (lo, hi))

    def values(self, xs):
        return np.asarray(self.u.values(np.asarray(xs, dtype=float)), dtype=float)

    def __call__(self, x):
        return float(self.values([x])[0])


def as_evaluable(u, domain=None):
    if isinstance(u, EvaluableUtility):
        return u if domain is None else EvaluableUtility(u.u, domain)
    return EvaluableUtility(u, CE_DOMAIN if domain is None else domain)


def _check_outcomes(ev, lottery):
    lo, hi = ev.domain
    out = lottery.outcomes
    if np.any(out < lo) or np.any(out > hi):
        raise DomainExceeded(f"lottery outcomes {out.tolist()} leave the utility domain [{lo}, {hi}]")


# --- OPERATIONS ---
def expected_utility(u, lottery, domain=None):
    ev = as_evaluable(u, domain)
    _check_outcomes(ev, lottery)
    return math.fsum(ev.values(lottery.outcomes) * lottery.probs)


def acceptance_probability(u, lottery, domain=None):
    """P[EU + eps > 0] under Logistic(0, 1) evaluation noise."""
    return float(expit(expected_utility(u, lottery, domain)))


def _strictly_increasing(ev, lo, hi):
    grid = np.linspace(lo, hi, MONOTONE_GRID_POINTS)
    try:
        diffs = np.diff(ev.values(grid))
    except NumericalFailure:
        return False
    return bool(np.all(diffs > MONOTONE_TOL))


def certainty_equivalent(u, lottery, domain=None, tol=CE_TOL):
    """Sure outcome x* with u(x*) = EU, found by bisection on the utility domain."""
    ev = as_evaluable(u, domain)
    target = expected_utility(ev, lottery)
    lo, hi = ev.domain
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    factor = 1.0
    while True:
        a, b = center - factor * half, center + factor * half
        if not _strictly_increasing(ev, a, b):
            raise NonMonotonicUtility(f"utility is not strictly increasing on [{a}, {b}]")
        fa, fb = ev(a) - target, ev(b) - target
        if fa <= 0.0 <= fb:
            break
        if factor * 2.0 > CE_MAX_EXPANSION:
            raise RangeExceeded(f"expected utility {target} lies outside u([{a}, {b}]) = [{fa + target}, {fb + target}]")
        factor *= 2.0

    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    return float(bisect(lambda x: ev(x) - target, a, b, xtol=tol * 1e-3, maxiter=500))


def min_winning_probability(u, win, loss):
    """p with p * u(win) + (1 - p) * u(loss) = 0."""
    ev = as_evaluable(u, (min(win, loss, CE_DOMAIN[0]), max(win, loss, CE_DOMAIN[1])))
    uw, ul = ev(win), ev(loss)
    if uw <= 0.0:
        raise DegenerateBet(DegenerateBet.NEVER_ACCEPTS, f"u(win={win}) = {uw} <= 0, no winning probability makes the bet acceptable")
    if ul >= 0.0:
        raise DegenerateBet(DegenerateBet.ALWAYS_ACCEPTS, f"u(loss={loss}) = {ul} >= 0, the bet is accepted at any probability")
    return -ul / (uw - ul)


def risk_summary(u, lottery, domain=None):
    """EU, CE, acceptance and (for two-branch lotteries) the minimum winning probability."""
    ev = as_evaluable(u, domain)
    summary = {
        "expected_utility": expected_utility(ev, lottery),
        "acceptance_probability": acceptance_probability(ev, lottery),
        "tolerances": {"ce": CE_TOL, "prob_sum": PROB_SUM_TOL},
    }
    try:
        summary["certainty_equivalent"] = certainty_equivalent(ev, lottery)
    except NonMonotonicUtility:
        summary["certainty_equivalent"] = None
        summary["certainty_equivalent_reason"] = "non-monotone"
    except RangeExceeded as e:
        summary["certainty_equivalent"] = None
        summary["certainty_equivalent_reason"] = f"range exceeded: {e}"

    if len(lottery.branches) == 2:
        win, loss = float(lottery.outcomes.max()), float(lottery.outcomes.min())
        try:
            summary["min_winning_probability"] = min_winning_probability(ev, win, loss)
        except DegenerateBet as e:
            summary["min_winning_probability"] = None
            summary["min_winning_probability_reason"] = e.kind
    return summary
