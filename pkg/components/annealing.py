"""Seeded simulated annealing over a box, with hard-rejection of infeasible proposals."""
import math
from dataclasses import dataclass, fields

import numpy as np

from components.errors import Infeasible


@dataclass(frozen=True)
class AnnealingSettings:
    initial_temp: float = 1.0
    cooling: float = 0.95
    cooling_every: int = 100
    iterations: int = 50000
    step_fraction: float = 0.1
    seed: int = 42

    @classmethod
    def from_dict(cls, data, defaults=None):
        merged = dict(defaults or {})
        merged.update(data or {})
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in merged.items() if k in known})


@dataclass
class AnnealingResult:
    x: np.ndarray
    value: float
    accepted: int
    evaluated: int
    feasible_seen: int


class SimulatedAnnealer:
    """Maximises `objective` over `bounds`; `objective` returns None for infeasible points.

    Proposals are Gaussian steps scaled to step_fraction of each bound width,
    clipped to the box. The temperature is multiplied by `cooling` every
    `cooling_every` proposals.
    """

    def __init__(self, settings: AnnealingSettings):
        self.settings = settings
        self.rng = np.random.default_rng(settings.seed)

    def _start(self, objective, lo, hi, x0):
        if x0 is not None:
            x = np.clip(np.asarray(x0, dtype=float), lo, hi)
            fx = objective(x)
            if fx is not None:
                return x, fx
        # random restarts until something feasible turns up
        for _ in range(max(1000, self.settings.iterations // 10)):
            x = self.rng.uniform(lo, hi)
            fx = objective(x)
            if fx is not None:
                return x, fx
        raise Infeasible("no feasible starting point found inside the search bounds")

    def run(self, objective, bounds, x0=None):
        s = self.settings
        lo = np.array([b[0] for b in bounds], dtype=float)
        hi = np.array([b[1] for b in bounds], dtype=float)
        scale = s.step_fraction * (hi - lo)

        x, fx = self._start(objective, lo, hi, x0)
        best_x, best_f = x.copy(), fx
        temp = s.initial_temp
        accepted = feasible = 0

        for i in range(1, s.iterations + 1):
            cand = np.clip(x + self.rng.normal(0.0, 1.0, size=x.shape) * scale, lo, hi)
            fc = objective(cand)
            if fc is not None:
                feasible += 1
                if fc >= fx or self.rng.random() < math.exp((fc - fx) / max(temp, 1e-300)):
                    x, fx = cand, fc
                    accepted += 1
                    if fx > best_f:
                        best_x, best_f = x.copy(), fx
            if i % s.cooling_every == 0:
                temp *= s.cooling

        return AnnealingResult(best_x, best_f, accepted, s.iterations, feasible)
