"""Linear contracts w = w_F + w_V * R between an organizational principal and a CARA agent.

Output R ~ Normal(e, sigma^2). The agent picks effort e from its first-order
condition (IC) and must reach its reservation utility (PC). The principal
maximises E[u((1 - w_V) R - w_F)] over (w_F, w_V) by seeded annealing and a
coordinate-descent polish.
"""
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Tuple

import numpy as np
from scipy.optimize import brentq

from components.annealing import AnnealingSettings, SimulatedAnnealer
from components.cournot import structure_preference
from components.errors import (
    BadDomain,
    BoundHitWarning,
    Infeasible,
    InvalidStructure,
    NoInteriorSolution,
)
from components.quadrature import normal_hermite
from components.utils import config_section

PC_TOL = 1e-6
IC_TOL = 1e-6
POLISH_MIN_STEP = 1e-6


# --- CONFIG ---
@dataclass(frozen=True)
class ContractConfig:
    sigma: float = 3.0
    gamma: float = 0.5
    reservation_utility: float = -5.0
    w_f_bounds: Tuple[float, float] = (-5.0, 10.0)
    w_v_bounds: Tuple[float, float] = (0.0, 1.0)
    e_max: float = 5.0
    hermite_nodes: int = 61
    annealing: AnnealingSettings = field(default_factory=AnnealingSettings)

    def __post_init__(self):
        for name in ("sigma", "gamma", "reservation_utility", "e_max"):
            if not math.isfinite(float(getattr(self, name))):
                raise InvalidStructure(f"contract {name} must be finite")
        if self.sigma <= 0 or self.gamma <= 0 or self.e_max <= 0:
            raise InvalidStructure("sigma, gamma and e_max must be positive")
        for name in ("w_f_bounds", "w_v_bounds"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise InvalidStructure(f"{name} must be a finite increasing pair, got {getattr(self, name)}")
            object.__setattr__(self, name, (lo, hi))
        if self.hermite_nodes < 61:
            raise InvalidStructure(f"hermite_nodes must be >= 61, got {self.hermite_nodes}")

    @classmethod
    def from_dict(cls, data=None):
        base = dict(config_section("contract"))
        data = dict(data or {})
        annealing = AnnealingSettings.from_dict(data.pop("annealing", {}), base.pop("annealing", {}))
        base.update(data)
        known = {f.name for f in fields(cls)} - {"annealing"}
        kwargs = {k: v for k, v in base.items() if k in known}
        for k in ("w_f_bounds", "w_v_bounds"):
            if k in kwargs:
                kwargs[k] = tuple(float(v) for v in kwargs[k])
        if "hermite_nodes" in kwargs:
            kwargs["hermite_nodes"] = int(kwargs["hermite_nodes"])
        return cls(annealing=annealing, **kwargs)

    @classmethod
    def from_config(cls):
        return cls.from_dict()


# --- AGENT ---
def _cara_term(w_F, w_V, e, cfg):
    return math.exp(-cfg.gamma * (w_F + w_V * e) + 0.5 * (cfg.gamma * w_V * cfg.sigma) ** 2)


def agent_expected_utility(w_F, w_V, e, cfg):
    """-exp(-gamma (w_F + w_V e) + gamma^2 w_V^2 sigma^2 / 2) - e^2 / 2 (lognormal moment)."""
    return -_cara_term(w_F, w_V, e, cfg) - 0.5 * e * e


def agent_expected_utility_quadrature(w_F, w_V, e, cfg, nodes=101):
    r, w = normal_hermite(nodes, e, cfg.sigma)
    return float(w @ -np.exp(-cfg.gamma * (w_F + w_V * r))) - 0.5 * e * e


def effort_condition(w_F, w_V, e, cfg):
    """d/de of the agent's expected utility; zero at the incentive-compatible effort."""
    return cfg.gamma * w_V * _cara_term(w_F, w_V, e, cfg) - e


def agent_optimal_effort(w_F, w_V, cfg):
    if w_V < 0:
        raise BadDomain(f"variable pay w_V must be >= 0, got {w_V}")
    if w_V == 0:
        return 0.0
    # the condition is strictly decreasing in e and positive at e = 0
    if effort_condition(w_F, w_V, cfg.e_max, cfg) > 0.0:
        raise NoInteriorSolution(f"agent effort exceeds e_max={cfg.e_max} at w_F={w_F}, w_V={w_V}", boundary_effort=cfg.e_max)
    return float(brentq(lambda e: effort_condition(w_F, w_V, e, cfg), 0.0, cfg.e_max, xtol=1e-14, maxiter=200))


def _agent_choice(w_F, w_V, cfg):
    """(effort, agent EU, interior?) with effort capped at e_max when the condition has no root."""
    try:
        e = agent_optimal_effort(w_F, w_V, cfg)
        interior = True
    except NoInteriorSolution as exc:
        e, interior = exc.boundary_effort, False
    return e, agent_expected_utility(w_F, w_V, e, cfg), interior


def participation_wage(w_V, cfg):
    """Lowest fixed pay in bounds that meets the reservation utility, or None."""
    lo, hi = cfg.w_f_bounds
    slack = lambda w_F: _agent_choice(w_F, w_V, cfg)[1] - cfg.reservation_utility
    if slack(hi) < 0.0:
        return None
    if slack(lo) >= 0.0:
        return lo
    w_F = brentq(slack, lo, hi, xtol=1e-13, maxiter=200)
    if slack(w_F) < 0.0:
        w_F = min(w_F + 1e-12, hi)
    return float(w_F)


# --- PRINCIPAL ---
def principal_expected_utility(pref, w_F, w_V, e, cfg):
    """E[u((1 - w_V) R - w_F)] by Gauss-Hermite quadrature, R ~ Normal(e, sigma^2)."""
    r, w = normal_hermite(cfg.hermite_nodes, e, cfg.sigma)
    return float(w @ pref.values((1.0 - w_V) * r - w_F))


@dataclass
class ContractResult:
    principal: str
    w_F: float
    w_V: float
    effort: float
    principal_eu: float
    agent_eu: float
    ic_residual: float
    pc_slack: float
    annealing_accepted: int = 0
    annealing_feasible: int = 0

    def to_row(self):
        return asdict(self)


def _evaluate(pref, w_F, w_V, cfg):
    """Principal EU of an incentive-compatible, participating contract; None otherwise."""
    e, agent_eu, interior = _agent_choice(w_F, w_V, cfg)
    if not interior or agent_eu < cfg.reservation_utility:
        return None
    return principal_expected_utility(pref, w_F, w_V, e, cfg)


def _polish(pref, w_F, w_V, value, cfg):
    """Coordinate descent; every w_V move re-projects w_F onto the participation boundary."""
    (f_lo, f_hi), (v_lo, v_hi) = cfg.w_f_bounds, cfg.w_v_bounds
    step = 0.1 * min(f_hi - f_lo, v_hi - v_lo)
    while step >= POLISH_MIN_STEP:
        improved = False
        for d in (-step, step):
            cand = min(max(w_F + d, f_lo), f_hi)
            val = _evaluate(pref, cand, w_V, cfg)
            if val is not None and val > value:
                w_F, value, improved = cand, val, True
        for d in (-step, step):
            cand_v = min(max(w_V + d, v_lo), v_hi)
            cand_f = participation_wage(cand_v, cfg)
            if cand_f is None:
                continue
            val = _evaluate(pref, cand_f, cand_v, cfg)
            if val is not None and val > value:
                w_F, w_V, value, improved = cand_f, cand_v, val, True
        if not improved:
            step *= 0.5
    return w_F, w_V, value


def _result(pref, w_F, w_V, cfg, accepted=0, feasible=0):
    e = agent_optimal_effort(w_F, w_V, cfg)
    agent_eu = agent_expected_utility(w_F, w_V, e, cfg)
    return ContractResult(
        principal=pref.code,
        w_F=w_F,
        w_V=w_V,
        effort=e,
        principal_eu=principal_expected_utility(pref, w_F, w_V, e, cfg),
        agent_eu=agent_eu,
        ic_residual=abs(effort_condition(w_F, w_V, e, cfg)),
        pc_slack=agent_eu - cfg.reservation_utility,
        annealing_accepted=accepted,
        annealing_feasible=feasible,
    )


def _warn_on_bounds(result, cfg):
    for name, value, (lo, hi) in (("w_F", result.w_F, cfg.w_f_bounds), ("w_V", result.w_V, cfg.w_v_bounds)):
        if min(abs(value - lo), abs(value - hi)) < POLISH_MIN_STEP:
            warnings.warn(f"optimal {name}={value} sits on its search bound [{lo}, {hi}]", BoundHitWarning)


def optimal_contract(pref, cfg, verbose=False):
    bounds = [cfg.w_f_bounds, cfg.w_v_bounds]
    objective = lambda x: _evaluate(pref, float(x[0]), float(x[1]), cfg)

    mid_v = 0.5 * sum(cfg.w_v_bounds)
    start_f = participation_wage(mid_v, cfg)
    x0 = None if start_f is None else (start_f, mid_v)

    annealer = SimulatedAnnealer(cfg.annealing)
    run = annealer.run(objective, bounds, x0=x0)
    if verbose:
        print(f"🔄 annealing ({pref.code}): best={run.value:.6f} accepted={run.accepted} feasible={run.feasible_seen}")

    w_F, w_V, value = _polish(pref, float(run.x[0]), float(run.x[1]), run.value, cfg)
    # the principal's payoff falls in w_F, so the optimum sits on the participation boundary
    boundary = participation_wage(w_V, cfg)
    if boundary is not None and boundary < w_F:
        val = _evaluate(pref, boundary, w_V, cfg)
        if val is not None and val >= value:
            w_F, value = boundary, val

    result = _result(pref, w_F, w_V, cfg, run.accepted, run.feasible_seen)
    if result.pc_slack < -PC_TOL:
        raise Infeasible(f"contract for principal {pref.code} violates participation by {-result.pc_slack}")
    _warn_on_bounds(result, cfg)
    return result


def contract_grid_oracle(pref, cfg, points=201):
    """Best contract over a w_V grid with w_F pinned to the participation boundary."""
    best = None
    for w_V in np.linspace(cfg.w_v_bounds[0], cfg.w_v_bounds[1], points):
        w_F = participation_wage(float(w_V), cfg)
        if w_F is None:
            continue
        val = _evaluate(pref, w_F, float(w_V), cfg)
        if val is not None and (best is None or val > best[2]):
            best = (w_F, float(w_V), val)
    if best is None:
        raise Infeasible("no grid contract satisfies participation and incentive compatibility")
    return _result(pref, best[0], best[1], cfg)


def solve_principal(code, cfg):
    """Optimal contract for structure code N / U / P; process-pool friendly."""
    return optimal_contract(structure_preference(code), cfg)
