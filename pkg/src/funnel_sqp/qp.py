"""Dense primal active-set solver for box-and-equality QPs.

    min 1/2 x^T W x + g^T x   s.t.  A^T x = b,  lb <= x <= ub

A holds the equality gradients column-wise (n x m). The working set is the
equalities plus a subset of active bounds; steps live in the null space of
the free-row Jacobian. The reduced Hessian is classified by eigenvalue:
positive definite blocks give Newton steps, negative or zero curvature gives
a ray walked to its blocking bound (no bound means the QP is unbounded).
Feasibility comes from an elastic l1 phase; its optimal residual doubles as
the infeasibility certificate. Anti-cycling: greedy pivot choice for the
first half of the pivot budget, Bland's rule afterwards.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, MaxPivots
from .linalg import nullspace_basis

ELASTIC_TOL = 1e-10          # phase-1 residual above this is infeasible
EIG_ZERO_REL = 1e-12         # reduced-Hessian eigenvalue zero band
STATIONARY_REL = 1e-10       # reduced-gradient zero test
MU_SIGN_REL = 1e-9           # bound-multiplier sign tolerance
DROP_ROW_REL = 1e-8          # post-solve residual bound for dropped equalities
FACE_ENUM_MAX = 6            # box-only nonconvex polish up to 3^6 faces

FREE, LOWER, UPPER, PINNED = 0, -1, 1, 2


@dataclass
class QpData:
    W: np.ndarray
    g: np.ndarray
    A: np.ndarray            # (n, m), column j = gradient of equality j
    b: np.ndarray            # (m,), A^T x = b
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]


@dataclass
class QpSolution:
    status: str              # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    objective: float
    n_pivots: int
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))


def qp_objective(qp: QpData, x: np.ndarray) -> float:
    return float(0.5 * x @ qp.W @ x + qp.g @ x)


def kkt_residual(qp: QpData, sol: QpSolution) -> float:
    """Max violation over stationarity, primal, bounds, sign, complementarity."""
    x, lam, mu = sol.x, sol.lam, sol.mu
    r_st = np.max(np.abs(qp.W @ x + qp.g - qp.A @ lam - mu), initial=0.0)
    r_eq = np.max(np.abs(qp.A.T @ x - qp.b), initial=0.0)
    r_lb = np.max(qp.lb - x, initial=0.0)
    r_ub = np.max(x - qp.ub, initial=0.0)
    r_sign = 0.0
    r_comp = 0.0
    for i in range(qp.n):
        if qp.lb[i] == qp.ub[i]:
            continue
        if mu[i] > 0.0:
            gap = x[i] - qp.lb[i]
            r_comp = max(r_comp, mu[i] * min(gap, 1e10))
        elif mu[i] < 0.0:
            gap = qp.ub[i] - x[i]
            r_comp = max(r_comp, -mu[i] * min(gap, 1e10))
    return max(r_st, r_eq, r_lb, r_ub, r_sign, r_comp)


class _Core:
    """Active-set iteration on a feasible point."""

    def __init__(self, W, g, A, b, lb, ub, max_pivots):
        self.W, self.g, self.A, self.b = W, g, A, b
        self.lb, self.ub = lb, ub
        self.n = g.shape[0]
        self.max_pivots = max_pivots
        self.half = max_pivots // 2
        self.pivots = 0

    def run(self, x, work):
        """Iterate to optimality. Returns (status, x, lam, mu, work)."""
        n = self.n
        while True:
            if self.pivots > self.max_pivots:
                raise MaxPivots(
                    f"active-set pivot budget {self.max_pivots} exhausted")
            grad = self.W @ x + self.g
            free = np.flatnonzero(work == FREE)
            move = self._direction(x, grad, free)
            if move is None:
                lam, mu, drop = self._multipliers(grad, work, free)
                if drop is None:
                    return "optimal", x, lam, mu, work
                work[drop] = FREE
                self.pivots += 1
                continue
            p, ray = move
            alpha, block = self._ratio(x, p, np.inf if ray else 1.0)
            if ray and block is None:
                return "unbounded", x, None, None, work
            if np.isfinite(alpha) and alpha > 0.0:
                x = x + alpha * p
            if block is not None:
                side = LOWER if p[block] < 0.0 else UPPER
                x[block] = self.lb[block] if side == LOWER else self.ub[block]
                work[block] = side
                self.pivots += 1
            # a full Newton step changes no working set; the next pass sees a
            # stationary reduced gradient and falls through to multipliers

    # -- direction choice --

    def _direction(self, x, grad, free):
        """Newton step, curvature ray, or None when reduced-stationary."""
        if free.size == 0:
            return None
        Z = nullspace_basis(self.A[free])
        if Z.shape[1] == 0:
            return None
        Wff = self.W[np.ix_(free, free)]
        H = Z.T @ Wff @ Z
        q = Z.T @ grad[free]
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        eig_tol = EIG_ZERO_REL * max(1.0, float(np.max(np.abs(w), initial=0.0)))
        q_tol = STATIONARY_REL * (1.0 + float(np.max(np.abs(grad), initial=0.0)))
        neg = w < -eig_tol
        zero = np.abs(w) <= eig_tol
        if np.any(neg):
            v = V[:, int(np.argmin(w))]
            return self._orient_ray(x, free, Z, v, q), True
        if np.any(zero):
            qz = V[:, zero] @ (V[:, zero].T @ q)
            if np.max(np.abs(qz), initial=0.0) > q_tol:
                v = -qz / np.linalg.norm(qz)
                return self._embed(free, Z @ v), True
        if np.max(np.abs(q), initial=0.0) <= q_tol:
            return None
        pos = ~(neg | zero)
        pz = np.zeros_like(q)
        if np.any(pos):
            Vp = V[:, pos]
            pz = -Vp @ ((Vp.T @ q) / w[pos])
        p = self._embed(free, Z @ pz)
        if np.max(np.abs(p), initial=0.0) <= q_tol:
            return None
        return p, False

    def _orient_ray(self, x, free, Z, v, q):
        slope = float(q @ v)
        tol = 1e-12 * (1.0 + abs(slope))
        if abs(slope) > tol:
            v = -v if slope > 0.0 else v
            return self._embed(free, Z @ v)
        # flat negative-curvature ray: march whichever endpoint is lower
        p_plus = self._embed(free, Z @ v)
        p_minus = -p_plus
        a_plus, _ = self._ratio(x, p_plus, np.inf)
        a_minus, _ = self._ratio(x, p_minus, np.inf)
        if not np.isfinite(a_plus):
            return p_plus
        if not np.isfinite(a_minus):
            return p_minus
        f_plus = self._phi(x + a_plus * p_plus)
        f_minus = self._phi(x + a_minus * p_minus)
        return p_plus if f_plus <= f_minus else p_minus

    def _phi(self, x):
        return float(0.5 * x @ self.W @ x + self.g @ x)

    def _embed(self, free, p_f):
        p = np.zeros(self.n)
        p[free] = p_f
        return p

    # -- ratio test --

    def _ratio(self, x, p, alpha_cap):
        """Largest step along p keeping the box; returns (alpha, blocking)."""
        alpha = alpha_cap
        candidates = []
        tol = 1e-14 * (1.0 + float(np.max(np.abs(p))))
        for i in np.flatnonzero(np.abs(p) > tol):
            if p[i] > 0.0:
                if np.isfinite(self.ub[i]):
                    candidates.append((max(self.ub[i] - x[i], 0.0) / p[i], i))
            else:
                if np.isfinite(self.lb[i]):
                    candidates.append((max(x[i] - self.lb[i], 0.0) / (-p[i]), i))
        if not candidates:
            return alpha, None
        a_min = min(a for a, _ in candidates)
        if a_min >= alpha:
            return alpha, None
        near = [(a, i) for a, i in candidates
                if a <= a_min + 1e-12 * (1.0 + a_min)]
        if self.pivots <= self.half:
            # greedy: among ties take the largest displacement component
            block = max(near, key=lambda t: abs(p[t[1]]))[1]
        else:
            block = min(near, key=lambda t: t[1])[1]
        return a_min, block

    # -- multiplier check --

    def _multipliers(self, grad, work, free):
        if free.size:
            lam = np.linalg.lstsq(self.A[free], grad[free], rcond=None)[0]
        elif self.A.shape[1]:
            lam = np.linalg.lstsq(self.A, grad, rcond=None)[0]
        else:
            lam = np.zeros(0)
        mu = grad - self.A @ lam
        mu[free] = 0.0
        tol = MU_SIGN_REL * (1.0 + float(np.max(np.abs(grad), initial=0.0)))
        viol = np.zeros(self.n)
        at_lower = work == LOWER
        at_upper = work == UPPER
        viol[at_lower] = np.maximum(-mu[at_lower] - tol, 0.0)
        viol[at_upper] = np.maximum(mu[at_upper] - tol, 0.0)
        if not np.any(viol > 0.0):
            return lam, mu, None
        if self.pivots <= self.half:
            drop = int(np.argmax(viol))
        else:
            drop = int(np.flatnonzero(viol > 0.0)[0])
        return lam, mu, drop


def _initial_work(x, lb, ub):
    work = np.zeros(x.shape[0], dtype=np.int8)
    work[lb == ub] = PINNED
    loose = work == FREE
    work[loose & (x <= lb + 0.0)] = LOWER
    work[(work == FREE) & (x >= ub - 0.0)] = UPPER
    return work


def _phase1(A, b, lb, ub, max_pivots):
    """Elastic l1 feasibility LP; returns (x, work) or None when infeasible."""
    n, m = A.shape
    x0 = np.clip(np.zeros(n), lb, ub)
    r = A.T @ x0 - b
    if m == 0 or np.max(np.abs(r), initial=0.0) <= ELASTIC_TOL:
        return x0, _initial_work(x0, lb, ub)
    # variables (x, u, v) with A^T x - u + v = b, u, v >= 0
    N = n + 2 * m
    We = np.zeros((N, N))
    ge = np.concatenate([np.zeros(n), np.ones(2 * m)])
    Ae = np.vstack([A, -np.eye(m), np.eye(m)])
    lbe = np.concatenate([lb, np.zeros(2 * m)])
    ube = np.concatenate([ub, np.full(2 * m, np.inf)])
    u0 = np.maximum(r, 0.0)
    v0 = np.maximum(-r, 0.0)
    xe = np.concatenate([x0, u0, v0])
    core = _Core(We, ge, Ae, b, lbe, ube, max_pivots)
    status, xe, _, _, _ = core.run(xe, _initial_work(xe, lbe, ube))
    if status != "optimal":
        return None
    resid = float(np.sum(xe[n:]))
    if resid > ELASTIC_TOL:
        return None
    x = xe[:n]
    return x, _initial_work(x, lb, ub)


def _face_enumeration(W, g, lb, ub):
    """Global minimum of a small box QP by face enumeration.

    The minimum of a bounded quadratic over a box sits on a face whose
    reduced Hessian is positive semidefinite; flat directions slide to a
    smaller face at equal objective, so corners plus faces with positive
    definite blocks cover the optimum. Returns (objective, x, work) with
    x None when no candidate face is attainable.
    """
    n = g.shape[0]
    best_obj, best_x, best_work = np.inf, None, None
    for codes in itertools.product((FREE, LOWER, UPPER), repeat=n):
        work = np.array(codes, dtype=np.int8)
        fixed = work != FREE
        x = np.zeros(n)
        x[work == LOWER] = lb[work == LOWER]
        x[work == UPPER] = ub[work == UPPER]
        if not np.all(np.isfinite(x[fixed])):
            continue
        free = np.flatnonzero(~fixed)
        if free.size:
            Wff = W[np.ix_(free, free)]
            w = np.linalg.eigvalsh(Wff)
            if w[0] <= EIG_ZERO_REL * max(1.0, float(np.max(np.abs(w)))):
                continue
            rhs = -(g[free] + W[np.ix_(free, np.flatnonzero(fixed))] @ x[fixed])
            xf = np.linalg.solve(Wff, rhs)
            pad = 1e-10 * (1.0 + float(np.max(np.abs(xf))))
            if np.any(xf < lb[free] - pad) or np.any(xf > ub[free] + pad):
                continue
            x[free] = np.clip(xf, lb[free], ub[free])
        obj = float(0.5 * x @ W @ x + g @ x)
        if obj < best_obj:
            best_obj, best_x, best_work = obj, x.copy(), work.copy()
    return best_obj, best_x, best_work


def _try_warm_eqp(W, g, A, b, lb, ub, codes):
    """Jump straight to the equality QP on a hinted active set.

    Returns (x, work) when the hinted EQP is solvable, strictly convex on its
    null space, and lands inside the box; None otherwise.
    """
    n = g.shape[0]
    work = np.asarray(codes, dtype=np.int8).copy()
    work[lb == ub] = PINNED
    x = np.zeros(n)
    fixed = work != FREE
    x[work == LOWER] = lb[work == LOWER]
    x[work == UPPER] = ub[work == UPPER]
    x[work == PINNED] = lb[work == PINNED]
    if not np.all(np.isfinite(x[fixed])):
        return None
    free = np.flatnonzero(~fixed)
    rhs = b - A[fixed].T @ x[fixed] if A.shape[1] else np.zeros(0)
    if free.size == 0:
        if A.shape[1] and np.max(np.abs(rhs), initial=0.0) > 1e-9 * (
                1.0 + np.max(np.abs(b), initial=0.0)):
            return None
        return x, work
    Af = A[free]
    if A.shape[1]:
        xf0, residual = np.linalg.lstsq(Af.T, rhs, rcond=None)[:2]
        if np.max(np.abs(Af.T @ xf0 - rhs), initial=0.0) > 1e-9 * (
                1.0 + np.max(np.abs(b), initial=0.0)):
            return None
    else:
        xf0 = np.zeros(free.size)
    Z = nullspace_basis(Af)
    if Z.shape[1]:
        Wff = W[np.ix_(free, free)]
        H = Z.T @ Wff @ Z
        w, V = np.linalg.eigh(0.5 * (H + H.T))
        if w[0] <= EIG_ZERO_REL * max(1.0, float(np.max(np.abs(w)))):
            return None
        gf = g[free] + W[np.ix_(free, fixed.nonzero()[0])] @ x[fixed] \
            + Wff @ xf0
        pz = V @ ((V.T @ (-Z.T @ gf)) / w)
        xf = xf0 + Z @ pz
    else:
        xf = xf0
    pad = 1e-10 * (1.0 + np.max(np.abs(xf), initial=0.0))
    if np.any(xf < lb[free] - pad) or np.any(xf > ub[free] + pad):
        return None
    x[free] = np.clip(xf, lb[free], ub[free])
    return x, work


def solve_qp(qp: QpData, warm_start: np.ndarray | None = None,
             feasible_start: np.ndarray | None = None,
             max_pivots: int | None = None) -> QpSolution:
    """Solve the QP. warm_start hints an active set (codes -1/0/+1 per
    variable); feasible_start supplies a point already satisfying all
    constraints, skipping the elastic phase."""
    n, m = qp.n, qp.m
    W = 0.5 * (qp.W + qp.W.T)
    g = np.asarray(qp.g, dtype=float)
    A = np.asarray(qp.A, dtype=float).reshape(n, m)
    b = np.asarray(qp.b, dtype=float)
    lb = np.asarray(qp.lb, dtype=float)
    ub = np.asarray(qp.ub, dtype=float)
    if np.any(lb > ub):
        raise DimensionMismatch("empty box: lb > ub")
    if max_pivots is None:
        max_pivots = 50 * (n + m)

    # drop linearly dependent equality columns; verify them post-solve
    keep = np.arange(m)
    drop = np.zeros(0, dtype=int)
    if m > 1:
        R, piv = scipy.linalg.qr(A, mode="r", pivoting=True)
        rdiag = np.abs(np.diag(R))
        if rdiag.size and rdiag[0] > 0.0:
            rank = int(np.sum(rdiag > 1e-10 * rdiag[0]))
        else:
            rank = 0
        if rank < m:
            keep = np.sort(piv[:rank])
            drop = np.sort(piv[rank:])
    elif m == 1 and not np.any(A):
        keep, drop = np.zeros(0, dtype=int), np.zeros(1, dtype=int)
    Ak, bk = A[:, keep], b[keep]

    core = _Core(W, g, Ak, bk, lb, ub, max_pivots)

    start = None
    if warm_start is not None:
        start = _try_warm_eqp(W, g, Ak, bk, lb, ub, warm_start)
    if start is None and feasible_start is not None:
        x = np.clip(np.asarray(feasible_start, dtype=float), lb, ub)
        ok = keep.size == 0 or np.max(
            np.abs(Ak.T @ x - bk), initial=0.0) <= 1e-8 * (
                1.0 + np.max(np.abs(bk), initial=0.0))
        if ok:
            start = x, _initial_work(x, lb, ub)
    if start is None:
        start = _phase1(Ak, bk, lb, ub, max_pivots)
        if start is None:
            return QpSolution(status="infeasible", x=np.zeros(n),
                              lam=np.zeros(m), mu=np.zeros(n),
                              objective=np.inf, n_pivots=0)

    status, x, lam_k, mu, work = core.run(*start)
    if status == "unbounded":
        return QpSolution(status="unbounded", x=x, lam=np.zeros(m),
                          mu=np.zeros(n), objective=-np.inf,
                          n_pivots=core.pivots, active=work.copy())

    # active-set iteration is local; on small box-only nonconvex problems a
    # face scan certifies (or repairs) global optimality
    if keep.size == 0 and 0 < n <= FACE_ENUM_MAX:
        w_all = np.linalg.eigvalsh(W)
        if w_all[0] < -EIG_ZERO_REL * max(1.0, float(np.max(np.abs(w_all)))):
            obj_loc = float(0.5 * x @ W @ x + g @ x)
            obj_enum, x_enum, work_enum = _face_enumeration(W, g, lb, ub)
            if x_enum is not None and obj_enum < obj_loc - 1e-12 * (
                    1.0 + abs(obj_loc)):
                x, work = x_enum, work_enum
                work[lb == ub] = PINNED
                mu = W @ x + g
                mu[work == FREE] = 0.0
                lam_k = np.zeros(0)

    if drop.size:
        resid = np.abs(A[:, drop].T @ x - b[drop])
        if np.max(resid, initial=0.0) > DROP_ROW_REL * (
                1.0 + np.max(np.abs(b), initial=0.0)):
            return QpSolution(status="infeasible", x=x, lam=np.zeros(m),
                              mu=np.zeros(n), objective=np.inf,
                              n_pivots=core.pivots)
    lam = np.zeros(m)
    lam[keep] = lam_k
    return QpSolution(status="optimal", x=x, lam=lam, mu=mu,
                      objective=qp_objective(qp, x), n_pivots=core.pivots,
                      active=work.copy())
