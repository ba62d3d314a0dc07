"""Exact quantile / CVaR calculus on finite weighted empirical distributions.

Every random variable in this package is an :class:`EmpiricalSample`: a
finite list of atoms with strictly positive probabilities.  Integrals become
finite sums, so quantile intervals, superquantiles (CVaR) and the related
optimization formulas can be evaluated exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "PROB_TOL",
    "EmpiricalSample",
    "QuantileInterval",
    "AlphaInterval",
    "cdf_pair",
    "quantile_interval",
    "cvar",
    "cvar_via_min",
    "mean_excess",
    "dual_cvar_max",
    "cvar_norm",
    "vapnik_error",
]

#: Probability levels closer than this are treated as equal when compared
#: against cumulative weights (cumulative sums carry rounding noise).
PROB_TOL = 1e-12


@dataclass(frozen=True)
class QuantileInterval:
    """Closed real interval ``[lo, hi]``; houses set-valued quantiles."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x: float) -> "QuantileInterval":
        return cls(float(x), float(x))

    def __add__(self, other):
        # Minkowski sum; a plain number is treated as a degenerate interval
        if isinstance(other, QuantileInterval):
            return QuantileInterval(self.lo + other.lo, self.hi + other.hi)
        return QuantileInterval(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, k: float) -> "QuantileInterval":
        a, b = k * self.lo, k * self.hi
        return QuantileInterval(min(a, b), max(a, b))

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def intersect(self, other: "QuantileInterval", tol: float = 0.0):
        """Intersection, or ``None`` when the gap exceeds ``tol``."""
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi + tol:
            return None
        if lo > hi:
            lo = hi = 0.5 * (lo + hi)
        return QuantileInterval(lo, hi)

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class AlphaInterval:
    """Interval of probability levels ``[lo, hi]`` or ``[lo, hi)``."""

    lo: float
    hi: float
    hi_inclusive: bool = True

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"invalid probability interval [{self.lo}, {self.hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def degenerate(self) -> bool:
        """True for an empty half-open interval ``[p, p)``."""
        return self.lo == self.hi and not self.hi_inclusive

    def contains(self, a: float, tol: float = 0.0) -> bool:
        if a < self.lo - tol:
            return False
        if self.hi_inclusive or tol > 0:
            return a <= self.hi + tol
        return a < self.hi

    def as_list(self) -> list[float]:
        return [self.lo, self.hi]


def _rounded_prefix_sums(w, ends) -> np.ndarray:
    """Correctly rounded ``sum(w[:e])`` for each ``e`` in ``ends``.

    Keeps Shewchuk's nonoverlapping partials (the ``math.fsum`` algorithm)
    so that probabilities such as ``P(X < x)`` carry no accumulated error.
    """
    partials: list[float] = []
    out = np.empty(len(ends))
    j = 0
    for i, x in enumerate(w.tolist(), 1):
        k = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[k] = lo
                k += 1
            x = hi
        partials[k:] = [x]
        while j < len(ends) and ends[j] == i:
            out[j] = math.fsum(partials)
            j += 1
    return out


class EmpiricalSample:
    """Finite discrete distribution with atoms ``values`` and ``weights``.

    Atoms are kept in the order given (so a sample of regression residuals
    keeps its observation index); the sorted form with merged duplicates is
    available through :meth:`canonical` and is what every statistic uses.

    Parameters
    ----------
    values : array_like
        Atoms.
    weights : array_like, optional
        Probabilities, strictly positive and summing to one within 1e-12.
        Defaults to equal weights.
    """

    def __init__(self, values, weights=None):
        v = np.asarray(values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("a sample needs at least one atom")
        if not np.all(np.isfinite(v)):
            raise ValueError("atoms must be finite")
        self._equal = weights is None
        if weights is None:
            w = np.full(v.size, 1.0 / v.size)
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != v.shape:
                raise ValueError("values and weights differ in length")
            if np.any(~(w > 0)):
                raise ValueError("weights must be strictly positive")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        v.setflags(write=False)
        w.setflags(write=False)
        self._values = v
        self._weights = w

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    def __len__(self):
        return self._values.size

    def __repr__(self):
        return f"EmpiricalSample(n_atoms={len(self)}, mean={self.mean:.6g})"

    @cached_property
    def _sorted(self):
        atoms, inv, counts = np.unique(self._values, return_inverse=True, return_counts=True)
        if self._equal:
            n = self._values.size
            return atoms, counts / n, np.cumsum(counts) / n
        order = np.argsort(inv.ravel(), kind="stable")
        ends = np.cumsum(counts)
        cum = _rounded_prefix_sums(self._weights[order], ends)
        cum[-1] = 1.0
        probs = np.bincount(inv.ravel(), weights=self._weights, minlength=atoms.size)
        return atoms, probs, cum

    @property
    def atoms(self) -> np.ndarray:
        """Sorted distinct atoms."""
        return self._sorted[0]

    @property
    def probs(self) -> np.ndarray:
        """Probabilities of :attr:`atoms`."""
        return self._sorted[1]

    @property
    def cumulative(self) -> np.ndarray:
        """``F(atoms)``; the last entry is exactly 1."""
        return self._sorted[2]

    def canonical(self) -> "EmpiricalSample":
        atoms, probs, _ = self._sorted
        return EmpiricalSample(atoms, probs / probs.sum())

    @cached_property
    def mean(self) -> float:
        return float(self._weights @ self._values)

    @property
    def min(self) -> float:
        return float(self.atoms[0])

    @property
    def max(self) -> float:
        return float(self.atoms[-1])

    @property
    def half_range(self) -> float:
        return 0.5 * (self.max - self.min)

    def abs(self) -> "EmpiricalSample":
        return EmpiricalSample(np.abs(self._values), self._weights)

    def shift(self, c: float) -> "EmpiricalSample":
        return EmpiricalSample(self._values + c, self._weights)

    def scale(self, k: float) -> "EmpiricalSample":
        return EmpiricalSample(self._values * k, self._weights)

    def centered(self) -> "EmpiricalSample":
        return self.shift(-self.mean)

    def same_distribution(self, other: "EmpiricalSample", tol: float = 0.0) -> bool:
        a, b = self.canonical(), other.canonical()
        return (
            len(a) == len(b)
            and np.allclose(a.values, b.values, rtol=0, atol=tol)
            and np.allclose(a.weights, b.weights, rtol=0, atol=1e-12)
        )


def _as_sample(s) -> EmpiricalSample:
    return s if isinstance(s, EmpiricalSample) else EmpiricalSample(s)


def _check_level(alpha: float, name: str = "alpha"):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {alpha}")


def cdf_pair(s: EmpiricalSample, x: float, tol: float = 0.0) -> tuple[float, float]:
    """Return ``(P(X < x), P(X <= x))``.

    ``tol`` widens the notion of "equal to x": atoms within ``tol`` of ``x``
    count as ties.  Exact comparison (``tol=0``) is the default.
    """
    s = _as_sample(s)
    atoms, _, cum = s._sorted
    k_strict = int(np.searchsorted(atoms, x - tol, side="left"))
    k_weak = int(np.searchsorted(atoms, x + tol, side="right"))
    strict = float(cum[k_strict - 1]) if k_strict > 0 else 0.0
    weak = float(cum[k_weak - 1]) if k_weak > 0 else 0.0
    return strict, weak


def quantile_interval(s: EmpiricalSample, alpha: float) -> QuantileInterval:
    """Left/right quantiles ``[q-_alpha, q+_alpha]``.

    ``q-`` is ``sup{x : F(x) < alpha}`` (ess inf at alpha=0) and ``q+`` is
    ``inf{x : F(x) > alpha}`` (ess sup at alpha=1).  Levels within
    :data:`PROB_TOL` of a cumulative weight are treated as hitting it.
    """
    _check_level(alpha)
    s = _as_sample(s)
    atoms, _, cum = s._sorted
    if alpha <= 0.0:
        lo = atoms[0]
    else:
        k = int(np.searchsorted(cum, alpha - PROB_TOL, side="left"))
        lo = atoms[min(k, atoms.size - 1)]
    if alpha >= 1.0:
        hi = atoms[-1]
    else:
        k = int(np.searchsorted(cum, alpha + PROB_TOL, side="right"))
        hi = atoms[min(k, atoms.size - 1)]
    return QuantileInterval(float(lo), float(hi))


def _tail_integral(s: EmpiricalSample, alpha: float) -> float:
    """``int_alpha^1 q_beta d beta`` summed over sorted-atom segments."""
    atoms, _, cum = s._sorted
    prev = np.concatenate(([0.0], cum[:-1]))
    seg = np.clip(cum - np.maximum(prev, alpha), 0.0, None)
    return float(seg @ atoms)


def cvar(s: EmpiricalSample, alpha: float) -> float:
    """Superquantile ``(1/(1-alpha)) int_alpha^1 q_beta d beta``.

    Equals the mean at ``alpha=0`` and the largest atom at ``alpha=1``.
    """
    _check_level(alpha)
    s = _as_sample(s)
    if alpha >= 1.0:
        return s.max
    if alpha <= 0.0:
        return s.mean
    return _tail_integral(s, alpha) / (1.0 - alpha)


def mean_excess(s: EmpiricalSample, x: float) -> float:
    """``E[X - x]_+``."""
    s = _as_sample(s)
    return float(s.weights @ np.maximum(s.values - x, 0.0))


def cvar_via_min(s: EmpiricalSample, alpha: float) -> tuple[float, QuantileInterval]:
    """Minimize ``C + E[X - C]_+ / (1 - alpha)`` over ``C``.

    The objective is piecewise linear with kinks at the atoms, so scanning
    the atoms finds both the minimum and the whole set of minimizers.

    Returns
    -------
    value : float
        The minimum; equals ``cvar(s, alpha)``.
    argmin : QuantileInterval
        Hull of the atoms attaining it; equals ``quantile_interval(s, alpha)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    s = _as_sample(s)
    atoms = s.atoms
    excess = np.maximum(s.values[None, :] - atoms[:, None], 0.0) @ s.weights
    phi = atoms + excess / (1.0 - alpha)
    best = phi.min()
    scale = max(1.0, float(np.abs(atoms).max()))
    hit = atoms[phi <= best + 1e-12 * scale / (1.0 - alpha)]
    return float(best), QuantileInterval(float(hit.min()), float(hit.max()))


def dual_cvar_max(s: EmpiricalSample, x: float) -> tuple[float, AlphaInterval]:
    """Maximize ``(1 - alpha)(cvar(s, alpha) - x)`` over ``alpha in [0, 1]``.

    The objective is concave and piecewise linear in alpha with breakpoints
    at the cumulative weights, so the scan over ``{0} U {F(atoms)}`` is
    exact.  The maximum equals ``mean_excess(s, x)`` and the maximizers form
    ``[P(X < x), P(X <= x)]``.
    """
    s = _as_sample(s)
    atoms, probs, cum = s._sorted
    levels = np.concatenate(([0.0], cum))
    # (1 - F_k) * cvar(F_k) is the mass-weighted sum of atoms above index k
    upper = np.concatenate((np.cumsum((probs * atoms)[::-1])[::-1], [0.0]))
    vals = upper - (1.0 - levels) * x
    # the piece crossing atom k has slope x - atom_k; a level is a maximizer
    # when the slope before it is >= 0 and the slope after it is <= 0
    slope = x - atoms
    ok = np.ones(levels.size, dtype=bool)
    ok[1:] &= slope >= 0
    ok[:-1] &= slope <= 0
    hit = levels[ok]
    return float(vals.max()), AlphaInterval(float(hit.min()), float(hit.max()))


def cvar_norm(s: EmpiricalSample, alpha: float, scaled: bool = True) -> float:
    """CVaR norm of ``X``: ``cvar(|X|, alpha)``, times ``1 - alpha`` if not scaled."""
    _check_level(alpha)
    s = _as_sample(s)
    if scaled:
        return cvar(s.abs(), alpha)
    if alpha >= 1.0:
        raise ValueError("the non-scaled CVaR norm needs alpha < 1")
    if alpha <= 0.0:
        return float(s.weights @ np.abs(s.values))
    return _tail_integral(s.abs(), alpha)


def vapnik_error(s: EmpiricalSample, eps: float) -> float:
    """Expected epsilon-insensitive loss ``E[|X| - eps]_+``."""
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    s = _as_sample(s)
    return float(s.weights @ np.maximum(np.abs(s.values) - eps, 0.0))
