"""Deterministic utility components and the utility <-> screening conversions.

A member's random utility is U(x) = u(x) + eps with eps ~ Logistic(0, 1), so the
probability of approving outcome x is the logistic CDF of u(x) and the utility
behind an approval probability p is logit(p).
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit, log_expit

from components.errors import (
    BadDomain,
    DegenerateProbability,
    DimensionMismatch,
    InvalidOutcome,
    InvalidStructure,
)
from components.utils import config_section

_UTILITY_CFG = config_section("utility")
DEFAULT_DOMAIN = tuple(_UTILITY_CFG.get("default_domain", (-10.0, 10.0)))
QUADRATURE_NODES = int(_UTILITY_CFG.get("quadrature_nodes", 2001))
QUADRATURE_RTOL = float(_UTILITY_CFG.get("quadrature_rtol", 1e-6))


def as_outcome_vector(x):
    """One outcome vector as a (1, d) array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidOutcome(f"outcome vector must be a non-empty 1-D sequence, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidOutcome(f"outcome vector has non-finite components: {arr.tolist()}")
    return arr.reshape(1, -1)


def as_outcome_rows(xs):
    """Many outcomes as an (n, d) array; a flat sequence is read as n scalar outcomes."""
    arr = np.asarray(xs, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InvalidOutcome(f"outcomes must be 1-D or 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidOutcome("outcomes contain non-finite values")
    return arr


class UtilityExpr:
    """Base node of a utility expression tree. Nodes are immutable."""

    kind = "expr"

    @property
    def dimension(self):
        """Smallest outcome dimension this expression can be evaluated on."""
        raise NotImplementedError

    def _eval(self, X):
        raise NotImplementedError

    def _grad(self, X, dim):
        raise NotImplementedError

    def _check(self, X):
        if X.shape[1] < self.dimension:
            raise DimensionMismatch(self.dimension, X.shape[1])

    def values(self, xs):
        X = as_outcome_rows(xs)
        self._check(X)
        return self._eval(X)

    def derivatives(self, xs, dim=0):
        X = as_outcome_rows(xs)
        self._check(X)
        return self._grad(X, dim)

    def value(self, x):
        X = as_outcome_vector(x)
        self._check(X)
        return float(self._eval(X)[0])

    def derivative(self, x, dim=0):
        X = as_outcome_vector(x)
        self._check(X)
        return float(self._grad(X, dim)[0])

    def screening_values(self, xs):
        return expit(self.values(xs))

    def is_affine(self):
        return False

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other):
        return Sum((self, _lift(other)))

    def __radd__(self, other):
        return Sum((_lift(other), self))

    def __neg__(self):
        return Negate(self)

    def __sub__(self, other):
        return Sum((self, Negate(_lift(other))))

    def __mul__(self, factor):
        return Scale(float(factor), self)

    __rmul__ = __mul__


def _lift(other):
    if isinstance(other, UtilityExpr):
        return other
    return Constant(float(other))


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise InvalidStructure(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True, eq=True)
class Constant(UtilityExpr):
    level: float
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "level", _finite("constant", self.level))

    @property
    def dimension(self):
        return 0

    def _eval(self, X):
        return np.full(X.shape[0], self.level)

    def _grad(self, X, dim):
        return np.zeros(X.shape[0])


@dataclass(frozen=True, eq=True)
class Var(UtilityExpr):
    index: int = 0
    kind = "var"

    def __post_init__(self):
        object.__setattr__(self, "index", int(self.index))
        if self.index < 0:
            raise InvalidStructure(f"variable index must be >= 0, got {self.index}")

    @property
    def dimension(self):
        return self.index + 1

    def _eval(self, X):
        return X[:, self.index].copy()

    def _grad(self, X, dim):
        return np.full(X.shape[0], 1.0 if dim == self.index else 0.0)


@dataclass(frozen=True, eq=True)
class Affine(UtilityExpr):
    """alpha + beta . x over the leading len(beta) outcome dimensions."""

    alpha: float
    beta: Tuple[float, ...] = (1.0,)
    kind = "affine"

    def __post_init__(self):
        beta = tuple(_finite("beta", b) for b in np.atleast_1d(self.beta))
        if not beta:
            raise InvalidStructure("affine beta needs at least one slope")
        object.__setattr__(self, "alpha", _finite("alpha", self.alpha))
        object.__setattr__(self, "beta", beta)

    @property
    def dimension(self):
        return len(self.beta)

    def is_affine(self):
        return True

    def _eval(self, X):
        return self.alpha + X[:, : len(self.beta)] @ np.asarray(self.beta)

    def _grad(self, X, dim):
        slope = self.beta[dim] if dim < len(self.beta) else 0.0
        return np.full(X.shape[0], slope)

    def shifted(self, other):
        """Sum of two affine utilities as a single Affine (slopes padded with zeros)."""
        n = max(len(self.beta), len(other.beta))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.beta)] = self.beta
        b[: len(other.beta)] = other.beta
        return Affine(self.alpha + other.alpha, tuple(a + b))

    def negated(self):
        return Affine(-self.alpha, tuple(-b for b in self.beta))


@dataclass(frozen=True, eq=True)
class ExpCara(UtilityExpr):
    """scale * (1 - exp(-x / rate)) on outcome dimension `index`."""

    scale: float
    rate: float
    index: int = 0
    kind = "exp_cara"

    def __post_init__(self):
        object.__setattr__(self, "scale", _finite("scale", self.scale))
        object.__setattr__(self, "rate", _finite("rate", self.rate))
        if self.rate == 0.0:
            raise InvalidStructure("exp_cara rate must be non-zero")

    @property
    def dimension(self):
        return self.index + 1

    def _eval(self, X):
        return -self.scale * np.expm1(-X[:, self.index] / self.rate)

    def _grad(self, X, dim):
        if dim != self.index:
            return np.zeros(X.shape[0])
        return (self.scale / self.rate) * np.exp(-X[:, self.index] / self.rate)


@dataclass(frozen=True, eq=True)
class Sum(UtilityExpr):
    children: Tuple[UtilityExpr, ...]
    kind = "sum"

    def __post_init__(self):
        children = tuple(self.children)
        if not children:
            raise InvalidStructure("sum needs at least one child")
        object.__setattr__(self, "children", children)

    @property
    def dimension(self):
        return max(c.dimension for c in self.children)

    def is_affine(self):
        return all(c.is_affine() for c in self.children)

    def _eval(self, X):
        total = self.children[0]._eval(X)
        for child in self.children[1:]:
            total = total + child._eval(X)
        return total

    def _grad(self, X, dim):
        total = self.children[0]._grad(X, dim)
        for child in self.children[1:]:
            total = total + child._grad(X, dim)
        return total


@dataclass(frozen=True, eq=True)
class Scale(UtilityExpr):
    factor: float
    child: UtilityExpr
    kind = "scale"

    def __post_init__(self):
        object.__setattr__(self, "factor", _finite("scale factor", self.factor))

    @property
    def dimension(self):
        return self.child.dimension

    def is_affine(self):
        return self.child.is_affine()

    def _eval(self, X):
        return self.factor * self.child._eval(X)

    def _grad(self, X, dim):
        return self.factor * self.child._grad(X, dim)


@dataclass(frozen=True, eq=True)
class Negate(UtilityExpr):
    child: UtilityExpr
    kind = "negate"

    @property
    def dimension(self):
        return self.child.dimension

    def is_affine(self):
        return self.child.is_affine()

    def _eval(self, X):
        return -self.child._eval(X)

    def _grad(self, X, dim):
        return -self.child._grad(X, dim)


def as_affine(u):
    """Collapses an affine-valued expression (Affine/Constant/Var and sums of them) into one Affine."""
    if isinstance(u, Affine):
        return u
    if isinstance(u, Constant):
        return Affine(u.level, (0.0,))
    if isinstance(u, Var):
        beta = [0.0] * (u.index + 1)
        beta[u.index] = 1.0
        return Affine(0.0, tuple(beta))
    if isinstance(u, Negate):
        inner = as_affine(u.child)
        return None if inner is None else inner.negated()
    if isinstance(u, Scale):
        inner = as_affine(u.child)
        if inner is None:
            return None
        return Affine(u.factor * inner.alpha, tuple(u.factor * b for b in inner.beta))
    if isinstance(u, Sum):
        parts = [as_affine(c) for c in u.children]
        if any(p is None for p in parts):
            return None
        total = parts[0]
        for p in parts[1:]:
            total = total.shifted(p)
        return total
    return None


# --- OPERATIONS ---
def eval_utility(u, x):
    return u.value(x)


def evaluate_many(u, xs):
    return u.values(xs)


def screening_prob(u, x):
    """P[u(x) + eps > 0] for eps ~ Logistic(0, 1)."""
    return float(expit(u.value(x)))


def log_screening_pair(utilities):
    """(log p, log(1 - p)) of the logistic link, exact in both tails."""
    utilities = np.asarray(utilities, dtype=float)
    return log_expit(utilities), log_expit(-utilities)


def utility_from_prob(p, x=None):
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DegenerateProbability(f"probability {p!r} has no finite utility", x=x)
    return math.log(p) - math.log1p(-p)


def utility_from_log_pair(log_p, log_q):
    """logit from (log p, log(1 - p)); stays exact where 1 - p is below double spacing around 1."""
    return np.asarray(log_p, dtype=float) - np.asarray(log_q, dtype=float)


def error_rates(u, domain=DEFAULT_DOMAIN, quality_density=None, nodes=QUADRATURE_NODES, rtol=QUADRATURE_RTOL):
    """Omission and commission error probabilities of a 1-D screening function.

    omission = integral over x > 0 of (1 - s(x)) * density, commission = integral
    over x < 0 of s(x) * density. `u` is anything exposing `screening_values`
    (a UtilityExpr or an OrgUtility). The density defaults to uniform and is
    normalised over the domain.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or not (lo < 0.0 < hi):
        raise BadDomain(f"error-rate domain must be a finite interval straddling 0, got [{lo}, {hi}]")
    if getattr(u, "dimension", 1) > 1:
        raise BadDomain("error rates are defined for 1-D utilities only")

    if quality_density is None:
        def quality_density(xs):
            return np.full_like(xs, 1.0 / (hi - lo))

    def integrate(n):
        left = np.linspace(lo, 0.0, n)
        right = np.linspace(0.0, hi, n)
        dl = np.asarray(quality_density(left), dtype=float)
        dr = np.asarray(quality_density(right), dtype=float)
        mass = trapezoid(dl, left) + trapezoid(dr, right)
        if not mass > 0.0:
            raise BadDomain("quality density integrates to zero on the domain")
        commission = trapezoid(u.screening_values(left) * dl, left) / mass
        omission = trapezoid((1.0 - u.screening_values(right)) * dr, right) / mass
        return omission, commission

    n = max(int(nodes), 2001)
    omission, commission = integrate(n)
    # refine until both areas are stable to rtol
    for _ in range(6):
        n = 2 * n - 1
        o2, c2 = integrate(n)
        done = abs(o2 - omission) <= rtol * max(abs(o2), 1e-300) and abs(c2 - commission) <= rtol * max(abs(c2), 1e-300)
        omission, commission = o2, c2
        if done:
            break
    return {
        "omission": float(min(max(omission, 0.0), 1.0)),
        "commission": float(min(max(commission, 0.0), 1.0)),
    }


# --- JSON ---
def utility_to_json(u):
    if isinstance(u, Constant):
        return {"kind": "constant", "value": u.level}
    if isinstance(u, Var):
        return {"kind": "var", "index": u.index}
    if isinstance(u, Affine):
        return {"kind": "affine", "alpha": u.alpha, "beta": list(u.beta)}
    if isinstance(u, ExpCara):
        out = {"kind": "exp_cara", "scale": u.scale, "rate": u.rate}
        if u.index:
            out["index"] = u.index
        return out
    if isinstance(u, Sum):
        return {"kind": "sum", "children": [utility_to_json(c) for c in u.children]}
    if isinstance(u, Scale):
        return {"kind": "scale", "factor": u.factor, "child": utility_to_json(u.child)}
    if isinstance(u, Negate):
        return {"kind": "negate", "child": utility_to_json(u.child)}
    raise InvalidStructure(f"cannot serialise {type(u).__name__}")


def utility_from_json(data):
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidStructure(f"utility must be an object with a 'kind' field, got {data!r}")
    kind = data["kind"]
    try:
        if kind == "constant":
            return Constant(data["value"])
        if kind == "var":
            return Var(int(data.get("index", 0)))
        if kind == "affine":
            return Affine(data["alpha"], tuple(data["beta"]))
        if kind == "exp_cara":
            return ExpCara(data["scale"], data["rate"], int(data.get("index", 0)))
        if kind == "sum":
            return Sum(tuple(utility_from_json(c) for c in data["children"]))
        if kind == "scale":
            return Scale(data["factor"], utility_from_json(data["child"]))
        if kind == "negate":
            return Negate(utility_from_json(data["child"]))
    except (KeyError, TypeError) as e:
        raise InvalidStructure(f"malformed '{kind}' utility: {e}")
    raise InvalidStructure(f"unknown utility kind '{kind}'")
