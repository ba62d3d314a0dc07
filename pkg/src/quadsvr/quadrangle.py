"""CVaR-norm and Quantile-Symmetric-Average quadrangles on empirical samples.

Both quadrangles have the average of two symmetric quantiles as their
statistic.  The alpha-quadrangle is generated by the non-scaled CVaR norm;
the epsilon-quadrangle by the Vapnik error ``E[|X| - eps]_+``.  Each is
returned as a :class:`QuadrangleQuartet` and can be checked against the
relationship formulae with :func:`check_quadrangle_identities`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distribution import (
    PROB_TOL,
    AlphaInterval,
    EmpiricalSample,
    QuantileInterval,
    cvar,
    cvar_norm,
    quantile_interval,
    vapnik_error,
)

__all__ = [
    "QuadrangleQuartet",
    "EpsilonAlphaSet",
    "EpsilonRangeError",
    "IdentityReport",
    "statistic_avg_quantiles",
    "risk_alpha",
    "deviation_alpha",
    "cvar_norm_quadrangle",
    "alpha_set",
    "vapnik_statistic",
    "avg_quantile_union",
    "qsa_quadrangle",
    "statistic_contains_zero",
    "check_quadrangle_identities",
    "merge_intervals",
]


class EpsilonRangeError(ValueError):
    """``eps`` lies outside ``[0, half-range)``, so the epsilon set is empty."""


@dataclass(frozen=True)
class QuadrangleQuartet:
    risk: float
    deviation: float
    regret: float
    error: float
    statistic: tuple[QuantileInterval, ...]
    kind: str  # "alpha" or "eps"
    parameter: float
    mean: float = field(default=0.0)

    @property
    def statistic_hull(self) -> QuantileInterval:
        return QuantileInterval(
            min(i.lo for i in self.statistic), max(i.hi for i in self.statistic)
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "risk": self.risk,
            "deviation": self.deviation,
            "regret": self.regret,
            "error": self.error,
            "mean": self.mean,
            "statistic": [i.as_list() for i in self.statistic],
        }


@dataclass(frozen=True)
class EpsilonAlphaSet:
    """The levels alpha whose half inter-quantile width contains ``eps``."""

    intervals: tuple[AlphaInterval, ...]

    def __bool__(self):
        return bool(self.intervals)

    def contains(self, a: float, tol: float = 0.0) -> bool:
        return any(i.contains(a, tol) for i in self.intervals)

    def representative(self) -> float:
        return float(self.intervals[0].lo)


def merge_intervals(intervals, tol: float = 0.0) -> tuple[QuantileInterval, ...]:
    """Sort by ``lo`` and merge overlapping (or ``tol``-close) intervals."""
    out: list[QuantileInterval] = []
    for iv in sorted(intervals, key=lambda i: (i.lo, i.hi)):
        if out and iv.lo <= out[-1].hi + tol:
            last = out[-1]
            out[-1] = QuantileInterval(last.lo, max(last.hi, iv.hi))
        else:
            out.append(iv)
    return tuple(out)


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def statistic_avg_quantiles(s: EmpiricalSample, alpha: float) -> QuantileInterval:
    """``(q_{(1-alpha)/2} + q_{(1+alpha)/2}) / 2`` as a Minkowski average."""
    _check_alpha(alpha)
    low = quantile_interval(s, 0.5 * (1.0 - alpha))
    up = quantile_interval(s, 0.5 * (1.0 + alpha))
    return 0.5 * (low + up)


def risk_alpha(s: EmpiricalSample, alpha: float) -> float:
    _check_alpha(alpha)
    return 0.5 * (
        (1.0 + alpha) * cvar(s, 0.5 * (1.0 - alpha))
        + (1.0 - alpha) * cvar(s, 0.5 * (1.0 + alpha))
    )


def deviation_alpha(s: EmpiricalSample, alpha: float) -> float:
    return risk_alpha(s.centered(), alpha)


def cvar_norm_quadrangle(s: EmpiricalSample, alpha: float) -> QuadrangleQuartet:
    """Quartet generated by the non-scaled CVaR norm at level ``alpha``."""
    _check_alpha(alpha)
    err = cvar_norm(s, alpha, scaled=False)
    return QuadrangleQuartet(
        risk=risk_alpha(s, alpha),
        deviation=deviation_alpha(s, alpha),
        regret=err + s.mean,
        error=err,
        statistic=(statistic_avg_quantiles(s, alpha),),
        kind="alpha",
        parameter=float(alpha),
        mean=s.mean,
    )


def _alpha_breakpoints(s: EmpiricalSample) -> np.ndarray:
    """Levels where either symmetric quantile ``q_{(1-+a)/2}`` can jump."""
    cum = s.cumulative[:-1]
    pts = np.concatenate(([0.0], 2.0 * cum[cum > 0.5] - 1.0, 1.0 - 2.0 * cum[cum < 0.5]))
    pts = np.sort(pts[(pts >= 0.0) & (pts < 1.0)])
    keep = np.concatenate(([True], np.diff(pts) > PROB_TOL))
    return pts[keep]


def _half_width(s: EmpiricalSample, alpha: float) -> QuantileInterval:
    """``(q_{(1+a)/2} - q_{(1-a)/2}) / 2`` as an interval."""
    up = quantile_interval(s, 0.5 * (1.0 + alpha))
    low = quantile_interval(s, 0.5 * (1.0 - alpha))
    return 0.5 * (up - low)


def _eps_tol(s: EmpiricalSample) -> float:
    return 1e-12 * max(1.0, float(np.abs(s.atoms).max()))


def alpha_set(s: EmpiricalSample, eps: float) -> EpsilonAlphaSet:
    """All ``alpha in [0, 1)`` with ``eps in (q_{(1+a)/2} - q_{(1-a)/2}) / 2``.

    The symmetric quantiles are step functions of alpha, so the set is found
    by checking every breakpoint (where the half-width is an interval) and
    every plateau between breakpoints (where it is a single value).

    Raises
    ------
    EpsilonRangeError
        If ``eps`` is outside ``[0, (max - min) / 2)``.
    """
    if not 0.0 <= eps < s.half_range:
        raise EpsilonRangeError(
            f"eps={eps} outside [0, {s.half_range}) for this sample"
        )
    tol = _eps_tol(s)
    bps = _alpha_breakpoints(s)
    edges = np.append(bps, 1.0)
    pieces: list[tuple[float, float]] = []
    for j, beta in enumerate(bps):
        if _half_width(s, beta).contains(eps, tol):
            pieces.append((beta, beta))
        mid = 0.5 * (edges[j] + edges[j + 1])
        if abs(_half_width(s, mid).midpoint - eps) <= tol:
            pieces.append((beta, edges[j + 1]))
    merged: list[list[float]] = []
    for lo, hi in pieces:
        if merged and lo <= merged[-1][1] + PROB_TOL:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return EpsilonAlphaSet(tuple(AlphaInterval(float(lo), float(hi)) for lo, hi in merged))


def vapnik_statistic(s: EmpiricalSample, eps: float) -> tuple[QuantileInterval, ...]:
    """Exact minimizer set of ``C -> E[|X - C| - eps]_+``.

    ``C`` is a minimizer iff, for some level alpha, ``C - eps`` is a
    ``(1-alpha)/2``-quantile and ``C + eps`` a ``(1+alpha)/2``-quantile.  Over
    each plateau and breakpoint of alpha this gives the intersection
    ``(q_low + eps) & (q_up - eps)``; the union of those pieces is returned
    as merged disjoint intervals.  For ``eps >= (max - min) / 2`` every
    ``C`` in ``[max - eps, min + eps]`` has zero loss and that interval is
    returned.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if eps >= s.half_range:
        return (QuantileInterval(s.max - eps, s.min + eps),)
    tol = _eps_tol(s)
    bps = _alpha_breakpoints(s)
    edges = np.append(bps, 1.0)
    levels = list(bps) + [0.5 * (edges[j] + edges[j + 1]) for j in range(bps.size)]
    pieces = []
    for a in levels:
        low = quantile_interval(s, 0.5 * (1.0 - a))
        up = quantile_interval(s, 0.5 * (1.0 + a))
        piece = (low + eps).intersect(up - eps, tol)
        if piece is not None:
            pieces.append(piece)
    return merge_intervals(pieces, tol)


def avg_quantile_union(s: EmpiricalSample, eps: float) -> tuple[QuantileInterval, ...]:
    """Union of ``statistic_avg_quantiles(s, a)`` over ``a`` in :func:`alpha_set`.

    For samples with atoms this can be strictly larger than the minimizer
    set returned by :func:`vapnik_statistic` (which it always contains); for
    continuous laws the two coincide.
    """
    aset = alpha_set(s, eps)
    pieces = []
    for iv in aset.intervals:
        pieces.append(statistic_avg_quantiles(s, iv.lo))
        if iv.hi > iv.lo:
            pieces.append(statistic_avg_quantiles(s, iv.hi))
            pieces.append(statistic_avg_quantiles(s, 0.5 * (iv.lo + iv.hi)))
    return merge_intervals(pieces, _eps_tol(s))


def qsa_quadrangle(s: EmpiricalSample, eps: float) -> QuadrangleQuartet:
    """Quartet generated by the Vapnik error with tube half-width ``eps``.

    Risk and deviation are ``R_a - (1-a) eps`` and ``D_a - (1-a) eps`` for any
    ``a`` in :func:`alpha_set` (the value does not depend on the choice).
    """
    aset = alpha_set(s, eps)
    a = aset.representative()
    err = vapnik_error(s, eps)
    return QuadrangleQuartet(
        risk=risk_alpha(s, a) - (1.0 - a) * eps,
        deviation=deviation_alpha(s, a) - (1.0 - a) * eps,
        regret=err + s.mean,
        error=err,
        statistic=vapnik_statistic(s, eps),
        kind="eps",
        parameter=float(eps),
        mean=s.mean,
    )


def statistic_contains_zero(s: EmpiricalSample, alpha: float, tol: float = 0.0) -> bool:
    return statistic_avg_quantiles(s, alpha).contains(0.0, tol)


@dataclass(frozen=True)
class IdentityReport:
    residuals: dict
    tol: float
    grid_argmin: QuantileInterval

    @property
    def passed(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())

    def failures(self) -> list[str]:
        return [k for k, r in self.residuals.items() if r > self.tol]

    def lines(self) -> list[str]:
        return [
            f"{k:<28s} {r:.3e} {'PASS' if r <= self.tol else 'FAIL'}"
            for k, r in self.residuals.items()
        ]


def _candidate_centers(s: EmpiricalSample, eps: float | None) -> np.ndarray:
    a = s.atoms
    mids = 0.5 * (a[:, None] + a[None, :])
    cands = [mids[np.triu_indices(a.size)]]
    if eps is not None:
        cands += [a - eps, a + eps]
    return np.unique(np.concatenate(cands))


def _error_at(s: EmpiricalSample, quartet: QuadrangleQuartet, centers: np.ndarray):
    dev = np.abs(s.values[None, :] - centers[:, None])
    if quartet.kind == "eps":
        return np.maximum(dev - quartet.parameter, 0.0) @ s.weights
    # (1 - a) * cvar_a(|X - C|) row by row: tail mass above level a times atoms
    order = np.argsort(dev, axis=1)
    vals = np.take_along_axis(dev, order, axis=1)
    w = s.weights[order]
    cum = np.cumsum(w, axis=1)
    seg = np.clip(cum - np.maximum(cum - w, quartet.parameter), 0.0, None)
    return (seg * vals).sum(axis=1)


def check_quadrangle_identities(
    s: EmpiricalSample, quartet: QuadrangleQuartet, tol: float = 1e-8
) -> IdentityReport:
    """Residuals of the relationship formulae against a brute-force oracle.

    ``min_C E(X - C)`` and ``min_C {C + V(X - C)}`` are evaluated over all
    kinks of the (piecewise linear) objective in ``C``: pairwise atom
    midpoints, plus ``atom -+ eps`` for the Vapnik error.  The minimizers
    found that way are compared with the quartet's statistic.
    """
    eps = quartet.parameter if quartet.kind == "eps" else None
    centers = _candidate_centers(s, eps)
    err = _error_at(s, quartet, centers)
    # regret V(Y) = E(Y) + mean(Y); mean(X - C) = mean - C
    regret = centers + err + (s.mean - centers)
    d_min = float(err.min())
    scale = max(1.0, float(np.abs(s.atoms).max()))
    hit = centers[err <= d_min + 1e-11 * scale]
    grid = QuantileInterval(float(hit.min()), float(hit.max()))
    hull = quartet.statistic_hull
    res = {
        "D = min_C E(X-C)": abs(quartet.deviation - d_min),
        "R = min_C C+V(X-C)": abs(quartet.risk - float(regret.min())),
        "D = R - EX": abs(quartet.deviation - (quartet.risk - s.mean)),
        "E = V - EX": abs(quartet.error - (quartet.regret - s.mean)),
        "D >= 0": max(0.0, -quartet.deviation),
        "E >= 0": max(0.0, -quartet.error),
        "argmin = statistic (lo)": abs(grid.lo - hull.lo),
        "argmin = statistic (hi)": abs(grid.hi - hull.hi),
        "statistic connected": 0.0 if len(quartet.statistic) == 1 else
        max(b.lo - a.hi for a, b in zip(quartet.statistic, quartet.statistic[1:])),
    }
    return IdentityReport(res, tol, grid)
