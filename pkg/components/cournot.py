"""Cournot duopoly under demand-intercept uncertainty with organizational firm preferences.

Inverse demand P(Q) = max(a - bQ, 0) with a ~ Normal(a_mean, a_sd^2); firm i earns
(P - c) * q_i and ranks production plans by E[u(profit)]. Firms update quantities
sequentially until neither moves by more than convergence_tol.
"""
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from components.aggregation import And, Or, configured_leaves, derive_org_utility
from components.errors import (
    BoundHitWarning,
    InvalidStructure,
    NoConvergence,
    NonUnimodalObjective,
    QuantityOutOfBounds,
)
from components.quadrature import truncated_normal_rule
from components.utils import config_section

STRUCTURE_CODES = ("N", "U", "P")
STRUCTURE_NAMES = {"N": "risk-neutral", "U": "unanimity", "P": "polyarchy"}
BOUND_TOL = 1e-12
GOLDEN_RATIO = 2.0 / (1.0 + math.sqrt(5.0))


# --- CONFIG ---
@dataclass(frozen=True)
class CournotConfig:
    a_mean: float = 10.0
    a_sd: float = 2.0
    b: float = 0.5
    c: float = 1.0
    q_max: float = 12.0
    convergence_tol: float = 1e-7
    integration_halfwidth_sds: float = 10.0
    quadrature_nodes: int = 64
    scan_points: int = 512
    max_iterations: int = 10000
    price_floor: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type is float and not math.isfinite(float(v)):
                raise InvalidStructure(f"cournot {f.name} must be finite, got {v}")
        if self.a_sd < 0:
            raise InvalidStructure(f"a_sd must be >= 0, got {self.a_sd}")
        if self.b <= 0 or self.q_max <= 0:
            raise InvalidStructure("demand slope b and q_max must be positive")
        if self.c < 0:
            raise InvalidStructure(f"marginal cost must be >= 0, got {self.c}")
        if self.a_mean <= self.c:
            raise InvalidStructure(f"a_mean ({self.a_mean}) must exceed marginal cost ({self.c})")
        if self.scan_points < 3 or self.quadrature_nodes < 2:
            raise InvalidStructure("scan_points must be >= 3 and quadrature_nodes >= 2")

    @classmethod
    def from_dict(cls, data=None):
        merged = dict(config_section("cournot"))
        merged.update(data or {})
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for k, v in merged.items():
            if k not in known:
                continue
            kwargs[k] = bool(v) if known[k] is bool else int(v) if known[k] is int else float(v)
        return cls(**kwargs)

    @classmethod
    def from_config(cls):
        return cls.from_dict()

    def replace(self, **changes):
        return replace(self, **changes)


# --- PREFERENCES ---
@dataclass(frozen=True)
class FirmPreference:
    """Risk-neutral when `utility` is None, otherwise a derived 1-D utility of profit."""

    code: str = "N"
    utility: Optional[object] = None

    @property
    def risk_neutral(self):
        return self.utility is None

    def values(self, profits):
        profits = np.asarray(profits, dtype=float)
        if self.utility is None:
            return profits
        return self.utility._eval(profits.reshape(-1, 1)).reshape(profits.shape)

    def slopes(self, profits):
        profits = np.asarray(profits, dtype=float)
        if self.utility is None:
            return np.ones_like(profits)
        return self.utility._grad(profits.reshape(-1, 1), 0).reshape(profits.shape)

    @classmethod
    def neutral(cls):
        return cls("N", None)

    @classmethod
    def derived(cls, org_utility, code="D"):
        return cls(code, org_utility)


def structure_preference(code, leaves=None):
    """N = risk-neutral, U = unanimity, P = polyarchy over the configured members."""
    if code not in STRUCTURE_CODES:
        raise InvalidStructure(f"unknown structure code '{code}', expected one of {STRUCTURE_CODES}")
    if code == "N":
        return FirmPreference.neutral()
    leaves = tuple(leaves or configured_leaves())
    tree = And(leaves) if code == "U" else Or(leaves)
    return FirmPreference.derived(derive_org_utility(tree), code)


def all_structure_pairs():
    return [("N", "N"), ("N", "U"), ("N", "P"), ("U", "U"), ("U", "P"), ("P", "P")]


# --- EXPECTED UTILITY ---
def _check_quantity(name, q, cfg):
    if not (math.isfinite(q) and -BOUND_TOL <= q <= cfg.q_max + BOUND_TOL):
        raise QuantityOutOfBounds(f"{name}={q} outside [0, {cfg.q_max}]")
    return min(max(float(q), 0.0), cfg.q_max)


def _intercept_rule(cfg, kink=None):
    if cfg.a_sd == 0:
        return np.array([cfg.a_mean]), np.array([1.0])
    breaks = (kink,) if (cfg.price_floor and kink is not None) else ()
    return truncated_normal_rule(cfg.a_mean, cfg.a_sd, cfg.integration_halfwidth_sds, cfg.quadrature_nodes, breaks)


def _profit(a, q_own, q_other, cfg):
    price = a - cfg.b * (q_own + q_other)
    if cfg.price_floor:
        price = np.maximum(price, 0.0)
    return (price - cfg.c) * q_own


def _profit_slope(a, q_own, q_other, cfg):
    raw = a - cfg.b * (q_own + q_other)
    unfloored = raw - cfg.c - cfg.b * q_own
    if not cfg.price_floor:
        return unfloored
    return np.where(raw > 0.0, unfloored, -cfg.c)


def cournot_expected_utility(pref, q_own, q_other, cfg):
    q_own = _check_quantity("q_own", q_own, cfg)
    q_other = _check_quantity("q_other", q_other, cfg)
    a, w = _intercept_rule(cfg, cfg.b * (q_own + q_other))
    return float(w @ pref.values(_profit(a, q_own, q_other, cfg)))


def expected_profit(q_own, q_other, cfg):
    return cournot_expected_utility(FirmPreference.neutral(), q_own, q_other, cfg)


def _marginal_utility(pref, q_own, q_other, cfg):
    """d/dq_own of E[u(profit)]; the price kink is a node boundary so both pieces stay smooth."""
    a, w = _intercept_rule(cfg, cfg.b * (q_own + q_other))
    profit = _profit(a, q_own, q_other, cfg)
    return float(w @ (pref.slopes(profit) * _profit_slope(a, q_own, q_other, cfg)))


def _scan(pref, qs, q_other, cfg):
    a, w = _intercept_rule(cfg)
    profits = _profit(a[None, :], qs[:, None], q_other, cfg)
    return pref.values(profits) @ w


def _scan_peaks(vals):
    d = np.diff(vals)
    flat = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    moves = [(i, 1 if di > 0 else -1) for i, di in enumerate(d) if abs(di) > flat]
    if not moves:
        return [0]
    peaks = []
    if moves[0][1] < 0:
        peaks.append(0)
    for (i0, s0), (i1, s1) in zip(moves[:-1], moves[1:]):
        if s0 > 0 and s1 < 0:
            peaks.append(i0 + 1 + int(np.argmax(vals[i0 + 1: i1 + 1])))
    if moves[-1][1] > 0:
        peaks.append(len(vals) - 1)
    return peaks


def golden_section_max(f, lo, hi, tol=1e-10, max_iterations=200):
    x1 = hi - GOLDEN_RATIO * (hi - lo)
    x2 = lo + GOLDEN_RATIO * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iterations):
        if abs(hi - lo) <= tol:
            break
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN_RATIO * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN_RATIO * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def cournot_best_response(pref, q_other, cfg):
    """argmax over q_own in [0, q_max]: grid scan for the peak cell, then a root of the marginal utility."""
    q_other = _check_quantity("q_other", q_other, cfg)
    qs = np.linspace(0.0, cfg.q_max, cfg.scan_points)
    vals = _scan(pref, qs, q_other, cfg)
    peaks = _scan_peaks(vals)
    if len(peaks) > 1:
        raise NonUnimodalObjective(
            f"expected utility has {len(peaks)} separated maxima against q_other={q_other}",
            peaks=[float(qs[i]) for i in peaks],
        )
    i = peaks[0]
    slope = lambda q: _marginal_utility(pref, q, q_other, cfg)

    if i == 0 and slope(0.0) <= 0.0:
        return 0.0
    if i == len(qs) - 1 and slope(cfg.q_max) >= 0.0:
        warnings.warn(f"best response sits on q_max={cfg.q_max}", BoundHitWarning)
        return float(cfg.q_max)

    lo, hi = float(qs[max(i - 2, 0)]), float(qs[min(i + 2, len(qs) - 1)])
    g_lo, g_hi = slope(lo), slope(hi)
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if g_lo > 0.0 > g_hi:
        return float(brentq(slope, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200))
    return float(golden_section_max(lambda q: cournot_expected_utility(pref, q, q_other, cfg), lo, hi))


# --- EQUILIBRIUM ---
@dataclass
class EquilibriumResult:
    pair: str
    q_i: float
    q_j: float
    eu_i: float
    eu_j: float
    profit_i: float
    profit_j: float
    iterations: int
    converged: bool
    residual: float

    @property
    def total_quantity(self):
        return self.q_i + self.q_j

    def to_row(self):
        row = asdict(self)
        row["total_quantity"] = self.total_quantity
        return row


def cournot_equilibrium(pref_i, pref_j, cfg, verbose=False):
    q_i = q_j = min(max((cfg.a_mean - cfg.c) / (3.0 * cfg.b), 0.0), cfg.q_max)
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        new_i = cournot_best_response(pref_i, q_j, cfg)
        new_j = cournot_best_response(pref_j, new_i, cfg)
        change = max(abs(new_i - q_i), abs(new_j - q_j))
        q_i, q_j = new_i, new_j
        if verbose:
            print(f"🔄 iter {iterations}: q_i={q_i:.10f} q_j={q_j:.10f} change={change:.3e}")
        if change < cfg.convergence_tol:
            converged = True
            break

    residual = abs(cournot_best_response(pref_i, q_j, cfg) - q_i)
    result = EquilibriumResult(
        pair=f"{pref_i.code}{pref_j.code}",
        q_i=q_i,
        q_j=q_j,
        eu_i=cournot_expected_utility(pref_i, q_i, q_j, cfg),
        eu_j=cournot_expected_utility(pref_j, q_j, q_i, cfg),
        profit_i=expected_profit(q_i, q_j, cfg),
        profit_j=expected_profit(q_j, q_i, cfg),
        iterations=iterations,
        converged=converged,
        residual=residual,
    )
    if not converged:
        raise NoConvergence(f"no equilibrium within {cfg.max_iterations} iterations", result=result)
    return result


def solve_structure_pair(pair, cfg):
    """Equilibrium for a pair of structure codes such as ('U', 'P'); process-pool friendly."""
    code_i, code_j = pair
    return cournot_equilibrium(structure_preference(code_i), structure_preference(code_j), cfg)


def floored_symmetric_equilibrium(cfg):
    """Symmetric risk-neutral equilibrium from E[P] - c - q * b * Phi((a_mean - bQ) / a_sd) = 0."""
    if cfg.a_sd == 0 or not cfg.price_floor:
        return (cfg.a_mean - cfg.c) / (3.0 * cfg.b)

    def foc(q):
        gap = cfg.a_mean - 2.0 * cfg.b * q
        z = gap / cfg.a_sd
        mean_price = gap * norm.cdf(z) + cfg.a_sd * norm.pdf(z)
        return mean_price - cfg.c - q * cfg.b * norm.cdf(z)

    return float(brentq(foc, 0.0, cfg.q_max, xtol=1e-13))
