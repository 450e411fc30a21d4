"""Gaussian-measure quadrature rules shared by the game solvers."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_hermite, roots_legendre
from scipy.stats import norm


@lru_cache(maxsize=32)
def _hermite(n):
    return roots_hermite(n)


@lru_cache(maxsize=32)
def _legendre(n):
    return roots_legendre(n)


def normal_hermite(n, mean=0.0, sd=1.0):
    """Nodes and weights with sum(w * f(z)) ~ E[f(Z)], Z ~ Normal(mean, sd^2)."""
    x, w = _hermite(int(n))
    return mean + np.sqrt(2.0) * sd * x, w / np.sqrt(np.pi)


def legendre_interval(a, b, n):
    """Gauss-Legendre nodes and weights mapped onto [a, b]."""
    x, w = _legendre(int(n))
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def truncated_normal_rule(mean, sd, halfwidth_sds, n, breaks=()):
    """Legendre rule for E[f(A)], A ~ Normal(mean, sd^2), over mean +/- halfwidth_sds * sd.

    The range is split at every break point that falls inside it, so an integrand
    with a kink there keeps its spectral accuracy. Weights carry the normal density
    and are renormalised to the truncated mass.
    """
    lo, hi = mean - halfwidth_sds * sd, mean + halfwidth_sds * sd
    cuts = sorted(b for b in breaks if lo < b < hi)
    edges = [lo] + cuts + [hi]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = legendre_interval(a, b, n)
        nodes.append(x)
        weights.append(w * norm.pdf(x, loc=mean, scale=sd))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    return nodes, weights / weights.sum()
