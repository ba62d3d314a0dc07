"""Support vector regression through the CVaR-norm and Vapnik quadrangles.

Four solve paths are provided, all reduced to :func:`quadsvr.qp.solve_qp`:

``eps-primal``
    minimize ``E[|Z| - eps]_+ + (lam/2)|w|^2`` over ``(w, b)``.
``nu-primal``
    minimize ``(1 - alpha) CVaR_alpha(|Z|) + (lam/2)|w|^2`` over ``(w, b)``,
    with the tube width ``eps`` as a free variable.
``nu-deviation``
    minimize ``D_alpha(Zbar(w)) + (lam/2)|w|^2`` over ``w`` only; the
    intercept is recovered from the statistic of ``Zbar(w)``.
``nu-dual``
    maximize ``mu'y - 1/2 mu'K mu`` over an l1/box constrained set with
    ``sum(mu) = 0``; accepts nonlinear kernels.

Here ``Z = Y - w'X - b`` and ``Zbar(w) = Y - w'X``.

Regularization conventions
--------------------------
Everything is canonicalized on ``lam`` in the ``(lam/2)|w|^2`` form.  The
two C-based conventions map to it as

* ``"case-study"``: ``lam = 1/(C l)``, i.e. a coefficient ``1/(2 C l)`` on
  ``|w|^2``.  The dual is then ``|mu|_1 <= C l (1-alpha)``, ``|mu_i| <= C``.
* ``"prop"``: ``lam = 1/C``.  The dual is ``|mu|_1 <= C (1-alpha)``,
  ``|mu_i| <= C/l``.

Under either convention the dual optimum equals ``1/lam`` times the
nu-primal optimum.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .distribution import (
    AlphaInterval,
    EmpiricalSample,
    QuantileInterval,
    cdf_pair,
    cvar,
    quantile_interval,
    vapnik_error,
)
from .qp import ConvexQp, QpError, QpSettings, solve_qp
from .quadrangle import deviation_alpha, statistic_avg_quantiles, vapnik_statistic

__all__ = [
    "Dataset",
    "KernelSpec",
    "Formulation",
    "SvrConfig",
    "SvrModel",
    "SCALINGS",
    "lambda_from_c",
    "c_from_lambda",
    "build_eps_primal_qp",
    "build_nu_primal_qp",
    "build_deviation_qp",
    "build_dual_qp",
    "intercept_from_statistic",
    "recover_primal_from_dual",
    "eps_from_alpha",
    "alpha_from_eps",
    "train",
    "predict",
    "model_objective",
]

log = logging.getLogger(__name__)

SCALINGS = ("case-study", "prop")

# residuals within this (relative) distance of eps count as lying on the tube
TUBE_TOL = 1e-7


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Training sample ``(x_i, y_i)``, ``i = 1..l``."""

    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.targets, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError(f"features {X.shape} and targets {y.shape} do not match")
        if y.size < 2:
            raise ValueError("a dataset needs at least two observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "features", _readonly(X))
        object.__setattr__(self, "targets", _readonly(y))

    @property
    def l(self) -> int:
        return self.targets.size

    @property
    def n(self) -> int:
        return self.features.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.features.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.n)] + ["y"])
            for row, y in zip(self.features, self.targets):
                w.writerow([repr(float(v)) for v in row] + [repr(float(y))])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = [h.strip() for h in rows[0]]
        if not header or header[-1] != "y":
            raise ValueError(f"{path}: expected header x1,...,xn,y")
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        return cls(data[:, :-1], data[:, -1])


@dataclass(frozen=True)
class KernelSpec:
    """``linear``: x'x'; ``rbf``: exp(-gamma |x - x'|^2); ``poly``: (x'x' + offset)^degree."""

    kind: str = "linear"
    gamma: float = 1.0
    degree: int = 1
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "poly"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf kernel needs gamma > 0")
        if self.kind == "poly" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError("polynomial kernel needs an integer degree >= 1")

    @classmethod
    def parse(cls, text: str) -> "KernelSpec":
        """Parse ``linear``, ``rbf:GAMMA`` or ``poly:DEGREE,OFFSET``."""
        name, _, args = text.strip().partition(":")
        name = name.lower()
        if name == "linear" and not args:
            return cls()
        if name == "rbf":
            return cls("rbf", gamma=float(args))
        if name == "poly":
            parts = args.split(",")
            offset = float(parts[1]) if len(parts) > 1 else 0.0
            return cls("poly", degree=int(parts[0]), offset=offset)
        raise ValueError(f"cannot parse kernel {text!r}")

    def __str__(self):
        if self.kind == "rbf":
            return f"rbf:{self.gamma!r}"
        if self.kind == "poly":
            return f"poly:{self.degree},{self.offset!r}"
        return "linear"

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def __call__(self, X1, X2) -> np.ndarray:
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        if self.kind == "linear":
            return X1 @ X2.T
        if self.kind == "rbf":
            sq = (X1 * X1).sum(1)[:, None] + (X2 * X2).sum(1)[None, :] - 2.0 * X1 @ X2.T
            return np.exp(-self.gamma * np.maximum(sq, 0.0))
        return (X1 @ X2.T + self.offset) ** int(self.degree)

    def gram(self, X) -> np.ndarray:
        """Symmetrized Gram matrix, shifted to be PSD under round-off.

        Raises ``ValueError`` if the smallest eigenvalue is below -1e-8.
        """
        K = self(X, X)
        K = 0.5 * (K + K.T)
        lam_min = la.eigvalsh(K, subset_by_index=[0, 0])[0]
        if lam_min < -1e-8:
            raise ValueError(f"kernel matrix is not PSD (min eigenvalue {lam_min:.3e})")
        if lam_min < 0:
            K[np.diag_indices_from(K)] += -lam_min + 1e-10
        return K


class Formulation(str, enum.Enum):
    EPS_PRIMAL = "eps-primal"
    NU_PRIMAL = "nu-primal"
    NU_DEVIATION = "nu-deviation"
    NU_DUAL = "nu-dual"

    @property
    def uses_alpha(self) -> bool:
        return self is not Formulation.EPS_PRIMAL


def lambda_from_c(capC: float, l: int, scaling: str = "case-study") -> float:
    """Regularization ``lam`` of the ``(lam/2)|w|^2`` form for a given C."""
    if not capC > 0:
        raise ValueError("C must be positive")
    if scaling == "case-study":
        return 1.0 / (capC * l)
    if scaling == "prop":
        return 1.0 / capC
    raise ValueError(f"unknown scaling {scaling!r}")


def c_from_lambda(lam: float, l: int, scaling: str = "case-study") -> float:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return lambda_from_c(lam, l, scaling)  # the map is an involution in (C, lam)


@dataclass(frozen=True)
class SvrConfig:
    """Training configuration.

    Exactly one of ``alpha``/``eps`` and one of ``lam``/``capC`` must be set.
    """

    formulation: Formulation
    alpha: float | None = None
    eps: float | None = None
    lam: float | None = None
    capC: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    scaling: str = "case-study"

    def __post_init__(self):
        object.__setattr__(self, "formulation", Formulation(self.formulation))
        if (self.alpha is None) == (self.eps is None):
            raise ValueError("set exactly one of alpha and eps")
        if (self.lam is None) == (self.capC is None):
            raise ValueError("set exactly one of lam and capC")
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.formulation.uses_alpha:
            if self.alpha is None:
                raise ValueError(f"{self.formulation.value} is parameterized by alpha")
            if not 0.0 <= self.alpha < 1.0:
                raise ValueError("alpha must lie in [0, 1)")
        else:
            if self.eps is None:
                raise ValueError("eps-primal is parameterized by eps")
            if not self.eps >= 0:
                raise ValueError("eps must be nonnegative")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.capC is not None and not self.capC > 0:
            raise ValueError("C must be positive")
        if not self.kernel.is_linear and self.formulation is not Formulation.NU_DUAL:
            raise ValueError("nonlinear kernels are only available with nu-dual")

    def lambda_for(self, l: int) -> float:
        return self.lam if self.lam is not None else lambda_from_c(self.capC, l, self.scaling)

    def capC_for(self, l: int) -> float:
        return self.capC if self.capC is not None else c_from_lambda(self.lam, l, self.scaling)


@dataclass(frozen=True)
class SvrModel:
    """Fitted regression ``f(x) + b``.

    ``weights`` is set for linear models, ``dual_coeffs`` (with the training
    features in ``support``) for kernel models fitted through the dual.
    """

    formulation: Formulation
    intercept: float
    residuals: EmpiricalSample
    pre_intercept_residuals: EmpiricalSample
    linked_eps: QuantileInterval
    linked_alpha: AlphaInterval
    objective: float
    alpha: float | None = None
    eps: float | None = None
    lam: float | None = None
    capC: float | None = None
    weights: np.ndarray | None = None
    dual_coeffs: np.ndarray | None = None
    support: np.ndarray | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    intercept_set: tuple = ()
    solver_objective: float | None = None
    solver_intercept: float | None = None
    kkt_residual: float | None = None
    solve_seconds: float = 0.0
    fingerprint: str = ""

    @property
    def is_linear(self) -> bool:
        return self.weights is not None

    @property
    def linked_alpha_value(self) -> float:
        return self.linked_alpha.midpoint

    @property
    def linked_eps_value(self) -> float:
        return self.linked_eps.midpoint

    def to_dict(self) -> dict:
        out = {
            "formulation": self.formulation.value,
            "alpha": self.alpha,
            "eps": self.eps,
            "lambda": self.lam,
            "C": self.capC,
            "b": self.intercept,
            "objective": self.objective,
            "linked_eps": self.linked_eps.as_list(),
            "linked_alpha": self.linked_alpha.as_list(),
            "kernel": str(self.kernel),
        }
        if self.weights is not None:
            out["w"] = [float(v) for v in self.weights]
        else:
            out["mu"] = [float(v) for v in self.dual_coeffs]
        return out


# ---------------------------------------------------------------------------
# QP builders


def _names(prefix, k):
    return [f"{prefix}{i + 1}" for i in range(k)]


def _check_alpha(alpha):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")


def _check_lam(lam):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")


def _tube_rows(d: Dataset, extra_cols):
    """Rows ``-x_i'w - b - ... - xi_i`` and ``x_i'w + b - ... - xi*_i``.

    ``extra_cols`` is a list of dense (l,) columns inserted after ``b``.
    """
    l = d.l
    X = sp.csr_matrix(d.features)
    one = sp.csr_matrix(np.ones((l, 1)))
    extra = [sp.csr_matrix(c.reshape(-1, 1)) for c in extra_cols]
    I = sp.identity(l, format="csr")
    Z = sp.csr_matrix((l, l))
    upper = sp.hstack([-X, -one, *extra, -I, Z])
    lower = sp.hstack([X, one, *extra, Z, -I])
    k = d.n + 1 + len(extra_cols)
    nonneg = sp.hstack([sp.csr_matrix((2 * l, k)), -sp.identity(2 * l)])
    return sp.vstack([upper, lower, nonneg], format="csr")


def build_eps_primal_qp(d: Dataset, eps: float, lam: float) -> ConvexQp:
    """Variables ``(w, b, xi, xi*)``; objective ``mean(xi + xi*) + (lam/2)|w|^2``."""
    if not eps >= 0:
        raise ValueError("eps must be nonnegative")
    _check_lam(lam)
    l, n = d.l, d.n
    nv = n + 1 + 2 * l
    P = sp.diags(np.r_[np.full(n, lam), np.zeros(nv - n)], format="csc")
    c = np.r_[np.zeros(n + 1), np.full(2 * l, 1.0 / l)]
    G = _tube_rows(d, [])
    h = np.r_[eps - d.targets, eps + d.targets, np.zeros(2 * l)]
    names = _names("w", n) + ["b"] + _names("xi", l) + _names("xis", l)
    return ConvexQp(P, c, G=G, h=h, variable_names=names)


def build_nu_primal_qp(d: Dataset, alpha: float, lam: float) -> ConvexQp:
    """Variables ``(w, b, eps, xi, xi*)``; objective adds ``(1 - alpha) eps``.

    ``eps`` is free for ``alpha > 0``.  At ``alpha = 0`` every
    ``eps <= min|z_i|`` is optimal, so the row ``eps >= 0`` is added to keep
    the optimal face bounded.
    """
    _check_alpha(alpha)
    _check_lam(lam)
    l, n = d.l, d.n
    nv = n + 2 + 2 * l
    P = sp.diags(np.r_[np.full(n, lam), np.zeros(nv - n)], format="csc")
    c = np.r_[np.zeros(n + 1), 1.0 - alpha, np.full(2 * l, 1.0 / l)]
    G = _tube_rows(d, [-np.ones(l)])
    h = np.r_[-d.targets, d.targets, np.zeros(2 * l)]
    if alpha == 0.0:
        row = sp.csr_matrix(([-1.0], ([0], [n + 1])), shape=(1, nv))
        G = sp.vstack([G, row], format="csr")
        h = np.r_[h, 0.0]
    names = _names("w", n) + ["b", "eps"] + _names("xi", l) + _names("xis", l)
    return ConvexQp(P, c, G=G, h=h, variable_names=names)


def build_deviation_qp(d: Dataset, alpha: float, lam: float) -> ConvexQp:
    """Variables ``(w, C1, C2, u, v)``, no intercept.

    The deviation ``R_alpha(Zbar) - mean(Zbar)`` is linearized with the two
    CVaR epigraphs at levels ``(1 -+ alpha)/2``::

        (1-a1) C1 + mean(u) + (1-a2) C2 + mean(v) + xbar'w - ybar
        u_i >= y_i - x_i'w - C1,  v_i >= y_i - x_i'w - C2,  u, v >= 0
    """
    _check_alpha(alpha)
    _check_lam(lam)
    l, n = d.l, d.n
    a1, a2 = 0.5 * (1.0 - alpha), 0.5 * (1.0 + alpha)
    nv = n + 2 + 2 * l
    P = sp.diags(np.r_[np.full(n, lam), np.zeros(nv - n)], format="csc")
    c = np.r_[d.features.mean(axis=0), 1.0 - a1, 1.0 - a2, np.full(2 * l, 1.0 / l)]
    X = sp.csr_matrix(d.features)
    e = sp.csr_matrix(np.ones((l, 1)))
    z1 = sp.csr_matrix((l, 1))
    I = sp.identity(l, format="csr")
    Z = sp.csr_matrix((l, l))
    G = sp.vstack([
        sp.hstack([-X, -e, z1, -I, Z]),
        sp.hstack([-X, z1, -e, Z, -I]),
        sp.hstack([sp.csr_matrix((2 * l, n + 2)), -sp.identity(2 * l)]),
    ], format="csr")
    h = np.r_[-d.targets, -d.targets, np.zeros(2 * l)]
    names = _names("w", n) + ["C1", "C2"] + _names("u", l) + _names("v", l)
    return ConvexQp(P, c, G=G, h=h, variable_names=names, constant=-d.targets.mean())


def dual_bounds(l: int, alpha: float, capC: float, scaling: str = "case-study"):
    """Return ``(l1_bound, box_bound)`` of the dual feasible set."""
    if scaling == "case-study":
        return capC * l * (1.0 - alpha), capC
    if scaling == "prop":
        return capC * (1.0 - alpha), capC / l
    raise ValueError(f"unknown scaling {scaling!r}")


def build_dual_qp(d: Dataset, alpha: float, capC: float, kernel: KernelSpec | None = None,
                  scaling: str = "case-study", gram: np.ndarray | None = None) -> ConvexQp:
    """Dual problem as a minimization over ``(mu, t)``.

    ``minimize 1/2 mu'K mu - y'mu`` subject to ``sum(mu) = 0``,
    ``-t <= mu <= t``, ``sum(t) <= l1_bound`` and ``|mu_i| <= box_bound``.
    """
    _check_alpha(alpha)
    if not capC > 0:
        raise ValueError("C must be positive")
    kernel = kernel or KernelSpec()
    l = d.l
    K = kernel.gram(d.features) if gram is None else gram
    P = np.zeros((2 * l, 2 * l))
    P[:l, :l] = K
    c = np.r_[-d.targets, np.zeros(l)]
    A = sp.hstack([sp.csr_matrix(np.ones((1, l))), sp.csr_matrix((1, l))], format="csr")
    l1, box = dual_bounds(l, alpha, capC, scaling)
    I = sp.identity(l, format="csr")
    Z = sp.csr_matrix((l, l))
    G = sp.vstack([
        sp.hstack([I, -I]),
        sp.hstack([-I, -I]),
        sp.hstack([sp.csr_matrix((1, l)), sp.csr_matrix(np.ones((1, l)))]),
        sp.hstack([I, Z]),
        sp.hstack([-I, Z]),
    ], format="csr")
    h = np.r_[np.zeros(2 * l), l1, np.full(2 * l, box)]
    names = _names("mu", l) + _names("t", l)
    return ConvexQp(P, c, A=A, b=[0.0], G=G, h=h, variable_names=names)


# ---------------------------------------------------------------------------
# intercepts and the eps <-> alpha link


def intercept_from_statistic(pre_intercept_residuals: EmpiricalSample, alpha: float):
    """Statistic interval of ``Zbar`` at ``alpha`` and its midpoint."""
    interval = statistic_avg_quantiles(pre_intercept_residuals, alpha)
    return interval, interval.midpoint


def _eps_intercept(pre: EmpiricalSample, eps: float):
    pieces = vapnik_statistic(pre, eps)
    hull = QuantileInterval(pieces[0].lo, pieces[-1].hi)
    # midpoint of the hull, moved onto the set when the set is disconnected
    b = hull.midpoint
    if not any(p.contains(b) for p in pieces):
        b = min((p.midpoint for p in pieces), key=lambda m: abs(m - hull.midpoint))
    return pieces, b


def eps_from_alpha(model: SvrModel, alpha: float) -> QuantileInterval:
    """``q_alpha(|Z|)`` of the fitted residuals."""
    _check_alpha(alpha)
    return quantile_interval(model.residuals.abs(), alpha)


def _alpha_link(abs_res: EmpiricalSample, eps: float, tol: float | None):
    if tol is None:
        tol = TUBE_TOL * max(1.0, abs(eps))
    lo, hi = cdf_pair(abs_res, eps, tol)
    return AlphaInterval(lo, hi, hi_inclusive=False)


def alpha_from_eps(model: SvrModel, eps: float, tol: float | None = None):
    """``[P(|Z| < eps), P(|Z| <= eps))`` and its midpoint.

    Residuals within ``tol`` of ``eps`` (default ``1e-7 max(1, eps)``) count
    as lying on the tube boundary, absorbing solver round-off.  A degenerate
    interval ``[p, p)`` is reported with midpoint ``p``; check
    ``interval.degenerate``.
    """
    if not eps >= 0:
        raise ValueError("eps must be nonnegative")
    interval = _alpha_link(model.residuals.abs(), eps, tol)
    return interval, interval.midpoint


# ---------------------------------------------------------------------------
# training


def model_objective(formulation: Formulation, pre: EmpiricalSample, b: float, lam: float,
                    wnorm2: float, alpha=None, eps=None, capC=None, dual_value=None) -> float:
    if formulation is Formulation.EPS_PRIMAL:
        return vapnik_error(pre.shift(-b), eps) + 0.5 * lam * wnorm2
    if formulation is Formulation.NU_PRIMAL:
        return (1.0 - alpha) * cvar(pre.shift(-b).abs(), alpha) + 0.5 * lam * wnorm2
    if formulation is Formulation.NU_DEVIATION:
        return deviation_alpha(pre, alpha) + 0.5 * lam * wnorm2
    return dual_value


def _assemble(formulation, d, cfg, lam, capC, pre, weights=None, mu=None, kernel=None,
              solver_objective=None, solver_b=None, kkt=None, seconds=0.0, dual_value=None):
    if formulation is Formulation.EPS_PRIMAL:
        pieces, b = _eps_intercept(pre, cfg.eps)
    else:
        interval, b = intercept_from_statistic(pre, cfg.alpha)
        pieces = (interval,)
    res = EmpiricalSample(pre.values - b)
    if formulation.uses_alpha:
        linked_eps = quantile_interval(res.abs(), cfg.alpha)
        linked_alpha = AlphaInterval(cfg.alpha, cfg.alpha)
    else:
        linked_eps = QuantileInterval.point(cfg.eps)
        linked_alpha = _alpha_link(res.abs(), cfg.eps, None)
    wnorm2 = float(weights @ weights) if weights is not None else 0.0
    obj = model_objective(formulation, pre, b, lam, wnorm2, cfg.alpha, cfg.eps, capC, dual_value)
    return SvrModel(
        formulation=formulation,
        intercept=float(b),
        residuals=res,
        pre_intercept_residuals=pre,
        linked_eps=linked_eps,
        linked_alpha=linked_alpha,
        objective=float(obj),
        alpha=cfg.alpha,
        eps=cfg.eps,
        lam=lam,
        capC=capC,
        weights=None if weights is None else _readonly(weights),
        dual_coeffs=None if mu is None else _readonly(mu),
        support=None if mu is None or weights is not None else d.features,
        kernel=kernel or KernelSpec(),
        intercept_set=tuple(pieces),
        solver_objective=solver_objective,
        solver_intercept=solver_b,
        kkt_residual=kkt,
        solve_seconds=seconds,
        fingerprint=d.fingerprint(),
    )


def recover_primal_from_dual(mu, d: Dataset, kernel: KernelSpec | None, alpha: float,
                             capC: float | None = None, lam: float | None = None,
                             dual_value: float | None = None) -> SvrModel:
    """Primal model from dual coefficients.

    Linear kernel: ``w = X'mu``.  Otherwise ``f(x) = sum_j mu_j k(x_j, x)``
    and the coefficients are kept.  The intercept is the statistic midpoint
    of the pre-intercept residuals.
    """
    _check_alpha(alpha)
    kernel = kernel or KernelSpec()
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size != d.l:
        raise ValueError("mu must have one entry per observation")
    if kernel.is_linear:
        w = d.features.T @ mu
        fitted = d.features @ w
    else:
        w = None
        fitted = kernel(d.features, d.features) @ mu
    pre = EmpiricalSample(d.targets - fitted)
    if dual_value is None:
        K = kernel(d.features, d.features)
        dual_value = float(mu @ d.targets - 0.5 * mu @ K @ mu)
    cfg = _ParamView(alpha=alpha, eps=None)
    return _assemble(Formulation.NU_DUAL, d, cfg, lam, capC, pre, weights=w, mu=mu,
                     kernel=kernel, dual_value=dual_value)


@dataclass(frozen=True)
class _ParamView:
    alpha: float | None
    eps: float | None


def _solve(qp: ConvexQp, formulation: Formulation, settings: QpSettings | None):
    t0 = time.perf_counter()
    sol = solve_qp(qp, settings)
    seconds = time.perf_counter() - t0
    if not sol.optimal:
        raise QpError(f"{formulation.value}: solver returned {sol.status.value} "
                      f"(KKT residual {sol.kkt_residual:.3e})")
    return sol, seconds


def train(d: Dataset, cfg: SvrConfig, settings: QpSettings | None = None) -> SvrModel:
    """Build, solve and assemble a model for ``cfg``.

    The stored objective is recomputed from ``(w, b)`` (or ``mu`` for the
    dual) rather than copied from the solver; ``solver_objective`` keeps the
    solver's value for comparison.
    """
    form = cfg.formulation
    lam = cfg.lambda_for(d.l)
    capC = cfg.capC_for(d.l)
    n = d.n
    if form is Formulation.EPS_PRIMAL:
        half = 0.5 * (d.targets.max() - d.targets.min())
        if cfg.eps > 0 and cfg.eps >= half:
            raise ValueError(f"eps={cfg.eps} is not below half the target range ({half})")
        qp = build_eps_primal_qp(d, cfg.eps, lam)
    elif form is Formulation.NU_PRIMAL:
        qp = build_nu_primal_qp(d, cfg.alpha, lam)
    elif form is Formulation.NU_DEVIATION:
        qp = build_deviation_qp(d, cfg.alpha, lam)
    else:
        K = cfg.kernel.gram(d.features)
        qp = build_dual_qp(d, cfg.alpha, capC, cfg.kernel, cfg.scaling, gram=K)
        sol, seconds = _solve(qp, form, settings)
        mu = sol.x[:d.l]
        dual_value = -sol.objective
        model = recover_primal_from_dual(mu, d, cfg.kernel, cfg.alpha, capC=capC, lam=lam,
                                         dual_value=float(mu @ d.targets - 0.5 * mu @ K @ mu))
        return _replace(model, solver_objective=dual_value, kkt_residual=sol.kkt_residual,
                        solve_seconds=seconds)

    sol, seconds = _solve(qp, form, settings)
    w = sol.x[:n].copy()
    pre = EmpiricalSample(d.targets - d.features @ w)
    solver_b = float(sol.x[n]) if form is not Formulation.NU_DEVIATION else None
    return _assemble(form, d, cfg, lam, capC, pre, weights=w, solver_objective=sol.objective,
                     solver_b=solver_b, kkt=sol.kkt_residual, seconds=seconds)


def _replace(model: SvrModel, **changes) -> SvrModel:
    import dataclasses

    return dataclasses.replace(model, **changes)


def predict(model: SvrModel, x, d_train: Dataset | None = None,
            kernel: KernelSpec | None = None):
    """Evaluate ``f(x) + b``.

    ``x`` may be a single point (returns a float) or a matrix of points.
    Kernel models use ``d_train`` (default: the stored training features).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    Xq = np.atleast_2d(x) if x.ndim == 2 else x.reshape(1, -1)
    if model.weights is not None:
        n = model.weights.size
        if Xq.shape[1] != n:
            raise ValueError(f"expected {n} features, got {Xq.shape[1]}")
        out = Xq @ model.weights + model.intercept
    else:
        support = d_train.features if d_train is not None else model.support
        kernel = kernel or model.kernel
        if Xq.shape[1] != support.shape[1]:
            raise ValueError(f"expected {support.shape[1]} features, got {Xq.shape[1]}")
        out = kernel(support, Xq).T @ model.dual_coeffs + model.intercept
    return float(out[0]) if single else out
