"""Distributionally robust regression view of nu-SVR.

The ambiguity set ``Q_alpha`` holds reweightings ``q`` of an equiprobable
sample with ``0 <= q_i <= 1/(l(1 - alpha))`` and ``sum(q) = 1``.  The worst
case ``max_{q in Q_alpha} sum q_i |z_i|`` is ``CVaR_alpha(|z|)``, so
minimizing it plus a ridge term is nu-SVR with rescaled regularization.

The module also implements the recipe for choosing ``alpha`` when the noise
law is known.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .distribution import (
    PROB_TOL,
    EmpiricalSample,
    QuantileInterval,
    cdf_pair,
    cvar,
    quantile_interval,
)
from .qp import ConvexQp, QpError, solve_qp
from .quadrangle import _alpha_breakpoints

__all__ = [
    "WeightVector",
    "Laplace",
    "Gaussian",
    "ShiftedExponential",
    "EmpiricalNoise",
    "parse_noise",
    "NoFeasibleAlpha",
    "AlphaSelection",
    "optimal_weights",
    "worst_case_objective",
    "worst_case_lp",
    "k_from_alpha",
    "is_integral_k",
    "stable_objective",
    "stable_lp",
    "select_alpha",
    "drr_lambda_from_nu",
    "nu_lambda_from_drr",
    "drr_objective",
]


class NoFeasibleAlpha(ValueError):
    """The quantile-average equation has no root in [0, 1)."""


@dataclass(frozen=True)
class WeightVector:
    """Probability weights over the observations, bounded by ``1/(l(1-alpha))``."""

    weights: np.ndarray
    alpha: float

    def __post_init__(self):
        q = np.array(self.weights, dtype=float).ravel()
        q.setflags(write=False)
        object.__setattr__(self, "weights", q)
        if np.any(q < 0):
            raise ValueError("weights must be nonnegative")
        if abs(q.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"weights sum to {q.sum()!r}, not 1")
        cap = 1.0 / (q.size * (1.0 - self.alpha))
        if np.any(q > cap + PROB_TOL):
            raise ValueError("weights exceed the density bound of the ambiguity set")

    def __len__(self):
        return self.weights.size

    @property
    def support(self) -> np.ndarray:
        """Indices with nonzero weight."""
        return np.flatnonzero(self.weights)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "weight"])
            for i, v in enumerate(self.weights):
                w.writerow([i, repr(float(v))])


def _abs_equiprobable(residuals) -> np.ndarray:
    s = residuals if isinstance(residuals, EmpiricalSample) else EmpiricalSample(residuals)
    w = s.weights
    if np.any(np.abs(w - 1.0 / w.size) > PROB_TOL):
        raise ValueError("residuals must be equiprobable")
    return np.abs(s.values)


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def optimal_weights(residuals, alpha: float) -> WeightVector:
    """Worst-case weights in ``Q_alpha`` for the observed ``|z|``.

    Observations with ``|z_i|`` above ``q = q_alpha^+(|z|)`` get the cap
    ``1/(l(1-alpha))``; the ``m`` observations tied at ``q`` share the
    remaining mass ``(P(|z| <= q) - alpha)/(1 - alpha)``.
    """
    _check_alpha(alpha)
    a = _abs_equiprobable(residuals)
    l = a.size
    q_plus = quantile_interval(EmpiricalSample(a), alpha).hi
    above = a > q_plus
    tied = a == q_plus
    m = int(tied.sum())
    p_q = np.count_nonzero(a <= q_plus) / l
    q = np.zeros(l)
    q[above] = 1.0 / (l * (1.0 - alpha))
    q[tied] = (p_q - alpha) / (m * (1.0 - alpha))
    return WeightVector(q, alpha)


def worst_case_objective(residuals, alpha: float) -> float:
    """``max_{q in Q_alpha} sum q_i |z_i|`` via the closed-form weights."""
    a = _abs_equiprobable(residuals)
    return float(optimal_weights(residuals, alpha).weights @ a)


def worst_case_lp(residuals, alpha: float):
    """Solve the worst-case problem as an LP; returns ``(value, q)``."""
    _check_alpha(alpha)
    a = _abs_equiprobable(residuals)
    l = a.size
    cap = 1.0 / (l * (1.0 - alpha))
    G = sp.vstack([sp.identity(l), -sp.identity(l)], format="csr")
    h = np.r_[np.full(l, cap), np.zeros(l)]
    qp = ConvexQp(sp.csc_matrix((l, l)), -a, A=np.ones((1, l)), b=[1.0], G=G, h=h)
    sol = solve_qp(qp)
    if not sol.optimal:
        raise QpError(f"worst-case LP: {sol.status.value}")
    return -sol.objective, sol.x


def k_from_alpha(l: int, alpha: float) -> int:
    """``floor(l (1 - alpha))``, guarded against round-off just below an integer."""
    _check_alpha(alpha)
    if l < 1:
        raise ValueError("l must be positive")
    return int(math.floor(l * (1.0 - alpha) + 1e-9))


def is_integral_k(l: int, alpha: float) -> bool:
    v = l * (1.0 - alpha)
    return abs(v - round(v)) <= 1e-9


def stable_objective(residuals, k: int) -> float:
    """Sum of the ``k`` largest ``|z_i|``, the optimum over ``Q_k``."""
    a = np.sort(_abs_equiprobable(residuals))
    if not 0 <= k <= a.size:
        raise ValueError("k must lie in [0, l]")
    return float(a[a.size - k:].sum()) if k else 0.0


def stable_lp(residuals, k: int) -> float:
    """LP over ``Q_k = {0 <= q <= 1, sum q = k}``."""
    a = _abs_equiprobable(residuals)
    l = a.size
    G = sp.vstack([sp.identity(l), -sp.identity(l)], format="csr")
    h = np.r_[np.ones(l), np.zeros(l)]
    qp = ConvexQp(sp.csc_matrix((l, l)), -a, A=np.ones((1, l)), b=[float(k)], G=G, h=h)
    sol = solve_qp(qp)
    if not sol.optimal:
        raise QpError(f"stable-regression LP: {sol.status.value}")
    return -sol.objective


# ---------------------------------------------------------------------------
# regularization maps


def drr_lambda_from_nu(lam_nu: float, alpha: float) -> float:
    """``lam`` of ``CVaR(|z|) + lam |w|^2`` matching nu-SVR's ``(lam_nu/2)|w|^2``.

    nu-SVR minimizes ``(1-alpha) CVaR_alpha(|z|) + (lam_nu/2)|w|^2``; dividing
    by ``1 - alpha`` gives ``lam = lam_nu / (2 (1 - alpha))``.
    """
    _check_alpha(alpha)
    return lam_nu / (2.0 * (1.0 - alpha))


def nu_lambda_from_drr(lam_drr: float, alpha: float) -> float:
    _check_alpha(alpha)
    return 2.0 * (1.0 - alpha) * lam_drr


def drr_objective(features, targets, w, b, alpha: float, lam: float) -> float:
    """``max_{q in Q_alpha} sum q_i |y_i - w'x_i - b| + lam |w|^2``."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    if X.shape[0] != np.size(targets):
        X = X.T
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z = np.asarray(targets, dtype=float) - X @ w - b
    return cvar(EmpiricalSample(np.abs(z)), alpha) + lam * float(w @ w)


# ---------------------------------------------------------------------------
# noise laws and alpha selection


@dataclass(frozen=True)
class Laplace:
    """Laplace law with density ``exp(-|x - location|/scale) / (2 scale)``."""

    location: float = 0.0
    scale: float = 1.0
    symmetric = True

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def mean(self) -> float:
        return self.location

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return self.location - self.scale * np.sign(p - 0.5) * np.log1p(-2.0 * np.abs(p - 0.5))

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.location) / self.scale
        return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    sd: float = 1.0
    symmetric = True

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError("sd must be positive")

    def quantile(self, p):
        return stats.norm.ppf(p, loc=self.mean, scale=self.sd)

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mean, scale=self.sd)


@dataclass(frozen=True)
class ShiftedExponential:
    """``shift + Exp(rate)``."""

    rate: float = 1.0
    shift: float = 0.0
    symmetric = False

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    @property
    def mean(self) -> float:
        return self.shift + 1.0 / self.rate

    def quantile(self, p):
        return self.shift - np.log1p(-np.asarray(p, dtype=float)) / self.rate

    def cdf(self, x):
        t = np.asarray(x, dtype=float) - self.shift
        return np.where(t < 0, 0.0, -np.expm1(-self.rate * np.maximum(t, 0.0)))


@dataclass(frozen=True)
class EmpiricalNoise:
    sample: EmpiricalSample

    @property
    def mean(self) -> float:
        return self.sample.mean

    @property
    def symmetric(self) -> bool:
        c = self.sample.centered()
        tol = 1e-12 * max(1.0, float(np.abs(c.values).max()))
        return c.same_distribution(c.scale(-1.0), tol)

    def quantile(self, p) -> QuantileInterval:
        return quantile_interval(self.sample, float(p))


def parse_noise(text: str):
    """``laplace:a,d``, ``gauss:mu,sigma``, ``expshift:rate,shift`` or ``empirical:FILE``.

    Empirical files hold one value per line, optionally with a weight column.
    """
    name, _, args = text.strip().partition(":")
    name = name.lower()
    if name == "empirical":
        data = np.loadtxt(args, delimiter=",", ndmin=2, comments="#")
        if data.shape[1] == 1:
            return EmpiricalNoise(EmpiricalSample(data[:, 0]))
        return EmpiricalNoise(EmpiricalSample(data[:, 0], data[:, 1]))
    vals = [float(v) for v in args.split(",")] if args else []
    if name == "laplace":
        return Laplace(*vals)
    if name in ("gauss", "gaussian", "normal"):
        return Gaussian(*vals)
    if name in ("expshift", "exponential"):
        return ShiftedExponential(*vals)
    raise ValueError(f"unknown noise model {text!r}")


@dataclass(frozen=True)
class AlphaSelection:
    alpha_star: float
    nu: float
    eps: float
    symmetric: bool
    root_alpha: float | None = None
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "alpha_star": self.alpha_star,
            "nu": self.nu,
            "eps": self.eps,
            "symmetric": self.symmetric,
            "root_alpha": self.root_alpha,
            "residual": self.residual,
        }


def quantile_average_gap(noise, alpha: float) -> float:
    """``(q_{(1+alpha)/2} + q_{(1-alpha)/2})/2 - E[noise]`` for a parametric law."""
    return 0.5 * float(noise.quantile(0.5 * (1 + alpha)) + noise.quantile(0.5 * (1 - alpha))) \
        - noise.mean


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _parametric_root(noise, tol: float) -> float:
    grid = np.linspace(0.0, 1.0 - 1e-9, 2001)
    g = np.array([quantile_average_gap(noise, a) for a in grid])
    hit = np.flatnonzero(g == 0)
    if hit.size:
        return float(grid[hit[0]])
    change = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    if not change.size:
        raise NoFeasibleAlpha("no alpha in [0, 1) balances the quantile average and the mean")
    k = change[0]
    return float(_bisect(lambda a: quantile_average_gap(noise, a), grid[k], grid[k + 1], tol))


def _empirical_root(noise: EmpiricalNoise):
    s = noise.sample
    mu = s.mean
    scale = max(1.0, float(np.abs(s.values).max()))
    tol = 1e-12 * scale
    bps = _alpha_breakpoints(s)
    cands = []
    for i, a in enumerate(bps):
        cands.append((float(a), float(a)))
        nxt = bps[i + 1] if i + 1 < bps.size else 1.0
        if nxt > a:
            cands.append((float(a), float(nxt)))
    for lo, hi in cands:
        a = 0.5 * (lo + hi)
        total = noise.quantile(0.5 * (1 + a)) + noise.quantile(0.5 * (1 - a))
        if total.contains(2.0 * mu, tol):
            return a, total
    raise NoFeasibleAlpha("no alpha in [0, 1) puts the mean in the quantile average")


def select_alpha(noise, default_alpha: float = 0.6, tol: float = 1e-10) -> AlphaSelection:
    """Choose ``(alpha*, nu, eps)`` for a known noise law.

    1. ``mu = E[noise]``.
    2. Find ``alpha`` with ``q_{(1+alpha)/2} + q_{(1-alpha)/2} = 2 mu``.
    3. ``x`` is half the distance between those two quantiles.
    4. ``alpha* = P(|noise| <= x)``, ``nu = 1 - alpha*``, ``eps = x``.

    Symmetric laws satisfy step 2 at every ``alpha``; then ``default_alpha``
    is returned with ``eps`` the half-width at that level.
    """
    _check_alpha(default_alpha)
    if noise.symmetric:
        a = default_alpha
        hi, lo = noise.quantile(0.5 * (1 + a)), noise.quantile(0.5 * (1 - a))
        if isinstance(hi, QuantileInterval):
            x = 0.5 * (hi - lo).midpoint
        else:
            x = 0.5 * float(hi - lo)
        return AlphaSelection(a, 1.0 - a, x, True, root_alpha=a)
    if isinstance(noise, EmpiricalNoise):
        a, total = _empirical_root(noise)
        hi, lo = noise.quantile(0.5 * (1 + a)), noise.quantile(0.5 * (1 - a))
        x = 0.5 * (hi - lo).midpoint
        a_star = cdf_pair(noise.sample.abs(), x)[1]
        resid = 0.0 if total.contains(2.0 * noise.mean) else \
            min(abs(total.lo - 2 * noise.mean), abs(total.hi - 2 * noise.mean)) / 2
        a_star = min(a_star, np.nextafter(1.0, 0.0))
        return AlphaSelection(float(a_star), 1.0 - float(a_star), float(x), False, a, resid)
    a = _parametric_root(noise, tol)
    x = 0.5 * float(noise.quantile(0.5 * (1 + a)) - noise.quantile(0.5 * (1 - a)))
    a_star = float(noise.cdf(x) - noise.cdf(-x))
    return AlphaSelection(a_star, 1.0 - a_star, x, False, a, abs(quantile_average_gap(noise, a)))
