"""Convex quadratic programming substrate.

Problems are stated as::

    minimize    1/2 x'Px + c'x + constant
    subject to  Ax = b
                Gx <= h

and solved with a primal-dual interior-point method (Mehrotra
predictor-corrector).  The Newton systems are reduced to the quasi-definite
form ``[[P + G'WG, A'], [A, -delta]]`` and factorized with sparse LU when
``P`` is given as a scipy sparse matrix, dense LU otherwise.  No randomness is
involved, so identical inputs give identical outputs.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linprog

__all__ = [
    "ConvexQp",
    "QpSettings",
    "QpSolution",
    "QpStatus",
    "QpError",
    "solve_qp",
    "kkt_residual",
]

log = logging.getLogger(__name__)


class QpError(RuntimeError):
    """Raised by callers that require an optimal QP solution."""


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpSettings:
    tolerance: float = 1e-8
    max_iterations: int = 100
    # once the KKT residual is met, keep iterating (a few steps at most)
    # until s'z <= gap_tolerance * (1 + |objective|)
    gap_tolerance: float = 1e-11
    polish_iterations: int = 8


def _as_csr(M, rows, cols):
    if M is None:
        return sp.csr_matrix((rows, cols))
    M = sp.csr_matrix(M, dtype=float)
    if M.shape != (rows, cols):
        raise ValueError(f"constraint matrix has shape {M.shape}, expected {(rows, cols)}")
    return M


def _vec(v, size, name):
    if v is None:
        return np.zeros(size)
    v = np.asarray(v, dtype=float).ravel()
    if v.size != size:
        raise ValueError(f"{name} has length {v.size}, expected {size}")
    return v


class ConvexQp:
    """Standard-form convex QP.

    Parameters
    ----------
    P : (n, n) array_like or sparse matrix
        Symmetric positive semidefinite.  Passing a sparse matrix selects
        the sparse factorization path in :func:`solve_qp`.
    c : (n,) array_like
    A, b : equality constraints ``Ax = b`` (optional).
    G, h : inequality constraints ``Gx <= h`` (optional).
    variable_names : list of str, optional
        Labels used in diagnostics and :meth:`dump`.
    constant : float
        Objective offset.
    """

    def __init__(self, P, c, A=None, b=None, G=None, h=None,
                 variable_names=None, constant=0.0):
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        if sp.issparse(P):
            P = sp.csc_matrix(P, dtype=float)
        else:
            P = np.array(P, dtype=float).reshape(n, n) if n else np.zeros((0, 0))
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        n_eq = 0 if b is None else np.asarray(b).size
        n_in = 0 if h is None else np.asarray(h).size
        self.P = P
        self.c = c
        self.A = _as_csr(A, n_eq, n)
        self.b = _vec(b, n_eq, "b")
        self.G = _as_csr(G, n_in, n)
        self.h = _vec(h, n_in, "h")
        self.constant = float(constant)
        self.variable_names = list(variable_names) if variable_names is not None else [
            f"x{i}" for i in range(n)
        ]
        if len(self.variable_names) != n:
            raise ValueError("variable_names does not match the number of variables")
        self._check_psd()

    def _check_psd(self):
        P = self.P
        asym = abs(P - P.T)
        asym = asym.max() if asym.size else 0.0
        scale = max(1.0, abs(P).max() if P.size else 0.0)
        if asym > 1e-12 * scale:
            raise ValueError(f"P is not symmetric (max asymmetry {asym:.3e})")
        # zero rows add zero eigenvalues; check the remaining principal block
        rownnz = np.asarray(abs(P).sum(axis=1)).ravel()
        idx = np.flatnonzero(rownnz)
        if idx.size:
            block = P[idx][:, idx]
            block = block.toarray() if sp.issparse(block) else block
            lam_min = la.eigvalsh(0.5 * (block + block.T), subset_by_index=[0, 0])[0]
            if lam_min < -1e-9:
                raise ValueError(f"P is not positive semidefinite (min eigenvalue {lam_min:.3e})")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.b.size

    @property
    def n_ineq(self) -> int:
        return self.h.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P @ x) + self.c @ x + self.constant)

    def dump(self, path):
        """Write P, c, A, b, G, h as dense plain-text blocks."""
        def dense(M):
            return M.toarray() if sp.issparse(M) else np.asarray(M)
        with open(path, "w") as fh:
            fh.write(f"# variables {' '.join(self.variable_names)}\n")
            fh.write(f"# constant {self.constant!r}\n")
            for name, M in (("P", self.P), ("c", self.c[None, :]), ("A", self.A),
                            ("b", self.b[:, None]), ("G", self.G), ("h", self.h[:, None])):
                M = dense(M)
                fh.write(f"# {name} {M.shape[0]} {M.shape[1]}\n")
                np.savetxt(fh, M, fmt="%.17g")


@dataclass
class QpSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    objective: float
    kkt_residual: float
    status: QpStatus
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def _residual_parts(qp: ConvexQp, x, y, z):
    slack = qp.h - qp.G @ x
    parts = {
        "stationarity": qp.P @ x + qp.c + qp.A.T @ y + qp.G.T @ z,
        "primal_eq": qp.A @ x - qp.b,
        "primal_ineq": np.maximum(-slack, 0.0),
        "dual_sign": np.maximum(-z, 0.0),
        "complementarity": z * slack,
    }
    return {k: float(np.abs(v).max()) if v.size else 0.0 for k, v in parts.items()}


def kkt_residual(qp: ConvexQp, sol: QpSolution) -> float:
    """Infinity norm of stationarity, feasibility and complementarity violations.

    Computed from ``(x, eq_duals, ineq_duals)`` and the problem data only.
    """
    return max(_residual_parts(qp, sol.x, sol.eq_duals, sol.ineq_duals).values())


class _KktSystem:
    """Factorization of ``[[P + G'diag(d)G + rho, A'], [A, -delta]]``."""

    def __init__(self, qp: ConvexQp, d, rho=1e-11, delta=1e-11):
        n, p = qp.n, qp.n_eq
        self.qp = qp
        self.d = d
        GtDG = qp.G.T @ sp.diags(d) @ qp.G
        self.sparse = sp.issparse(qp.P)
        self.reg = np.concatenate((np.full(n, rho), np.full(p, -delta)))
        if self.sparse:
            H = (qp.P + GtDG).tocsc()
            K = sp.bmat([[H, qp.A.T], [qp.A, None]], format="csc") + sp.diags(self.reg)
            self.K = K.tocsc()
            self.lu = spla.splu(self.K, permc_spec="COLAMD")
        else:
            H = qp.P + GtDG.toarray()
            K = np.zeros((n + p, n + p))
            K[:n, :n] = H
            if p:
                At = qp.A.T.toarray()
                K[:n, n:] = At
                K[n:, :n] = At.T
            K[np.diag_indices(n + p)] += self.reg
            self.K = K
            self.lu = la.lu_factor(K, check_finite=False)

    def _raw(self, r):
        if self.sparse:
            return self.lu.solve(r)
        return la.lu_solve(self.lu, r, check_finite=False)

    def solve(self, rx, ry, refine=3):
        r = np.concatenate((rx, ry))
        v = self._raw(r)
        for _ in range(refine):
            # refine against the unregularized matrix
            res = r - (self.K @ v - self.reg * v)
            if not np.all(np.isfinite(res)) or np.abs(res).max() <= 1e-15 * max(1.0, np.abs(r).max()):
                break
            v = v + self._raw(res)
        n = self.qp.n
        return v[:n], v[n:]


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _solve_equality_only(qp: ConvexQp, settings: QpSettings) -> QpSolution:
    n, p = qp.n, qp.n_eq
    P = qp.P.toarray() if sp.issparse(qp.P) else qp.P
    K = np.zeros((n + p, n + p))
    K[:n, :n] = P
    if p:
        K[:n, n:] = qp.A.T.toarray()
        K[n:, :n] = qp.A.toarray()
    rhs = np.concatenate((-qp.c, qp.b))
    v = la.lstsq(K, rhs)[0]
    sol = QpSolution(v[:n], v[n:], np.zeros(0), qp.objective(v[:n]), 0.0, QpStatus.OPTIMAL)
    sol.kkt_residual = kkt_residual(qp, sol)
    if sol.kkt_residual > settings.tolerance:
        sol.status = QpStatus.INFEASIBLE if np.abs(qp.A @ sol.x - qp.b).max(initial=0) > settings.tolerance \
            else QpStatus.MAX_ITERATIONS
    return sol


def _feasible(qp: ConvexQp) -> bool:
    res = linprog(np.zeros(qp.n), A_ub=qp.G if qp.n_ineq else None,
                  b_ub=qp.h if qp.n_ineq else None,
                  A_eq=qp.A if qp.n_eq else None, b_eq=qp.b if qp.n_eq else None,
                  bounds=(None, None), method="highs")
    return res.status != 2


def _iterate(qp, st, x, y, z, s):
    G, h, m = qp.G, qp.h, qp.n_ineq
    best = None
    accepted = None
    status = QpStatus.MAX_ITERATIONS
    it = 0
    first_ok = None
    for it in range(st.max_iterations + 1):
        parts = _residual_parts(qp, x, y, z)
        res = max(parts.values())
        if best is None or res < best[0]:
            best = (res, x.copy(), y.copy(), z.copy())
        if res <= st.tolerance:
            accepted = (res, x.copy(), y.copy(), z.copy())
            first_ok = it if first_ok is None else first_ok
            gap = float(s @ z)
            if gap <= st.gap_tolerance * (1.0 + abs(qp.objective(x))) \
                    or it - first_ok >= st.polish_iterations:
                break
        if it == st.max_iterations:
            break
        r_d = qp.P @ x + qp.c + qp.A.T @ y + G.T @ z
        r_p = qp.A @ x - qp.b
        r_i = G @ x + s - h
        mu = float(s @ z) / m
        d = z / s
        try:
            kkt = _KktSystem(qp, d)
        except (RuntimeError, la.LinAlgError, ValueError) as exc:
            log.debug("factorization failed at iteration %d: %s", it, exc)
            break

        def direction(r_c):
            dx, dy = kkt.solve(-r_d - G.T @ (d * r_i - r_c / s), -r_p)
            gdx = G @ dx
            dz = d * (gdx + r_i) - r_c / s
            ds = -r_i - gdx
            return dx, dy, dz, ds

        dx, dy, dz, ds = direction(s * z)
        a_aff = min(_max_step(s, ds), _max_step(z, dz))
        mu_aff = float((s + a_aff * ds) @ (z + a_aff * dz)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, dy, dz, ds = direction(s * z + ds * dz - sigma * mu)
        step = min(1.0, 0.99 * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + step * dx
        y = y + step * dy
        z = z + step * dz
        s = s + step * ds
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))) or np.abs(x).max() > 1e15:
            log.debug("iterates diverged at iteration %d", it)
            break
    if accepted is not None:
        return QpStatus.OPTIMAL, it, accepted
    return status, it, best


def solve_qp(qp: ConvexQp, settings: QpSettings | None = None) -> QpSolution:
    """Solve ``qp`` to a KKT residual of ``settings.tolerance`` (default 1e-8).

    Returns a :class:`QpSolution` whose status is ``OPTIMAL``,
    ``INFEASIBLE`` (no point satisfies the constraints; checked with a
    phase-one LP once the interior-point iteration fails) or
    ``MAX_ITERATIONS`` (carrying the iterate with the smallest residual).
    """
    st = settings or QpSettings()
    n, m = qp.n, qp.n_ineq
    if m == 0:
        return _solve_equality_only(qp, st)
    G, h = qp.G, qp.h

    # initial point: minimize 1/2 x'Px + c'x + 1/2 |Gx - h|^2 s.t. Ax = b
    init = _KktSystem(qp, np.ones(m))
    x, y = init.solve(-qp.c + G.T @ h, qp.b)
    s = h - G @ x
    z = -s.copy()
    shift = -s.min()
    if shift >= 0:
        s += 1.0 + shift
    shift = -z.min()
    if shift >= 0:
        z += 1.0 + shift

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        status, it, best = _iterate(qp, st, x, y, z, s)

    res, x, y, z = best
    if status is not QpStatus.OPTIMAL and not _feasible(qp):
        status = QpStatus.INFEASIBLE
    sol = QpSolution(x, y, z, qp.objective(x), 0.0, status, it)
    sol.kkt_residual = kkt_residual(qp, sol)
    return sol
