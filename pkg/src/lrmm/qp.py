"""Dense strictly convex QP solver for a handful of variables.

    minimise   0.5 z'Hz + f'z   subject to   A z <= b

Dual active-set method of Goldfarb and Idnani: start at the unconstrained
minimiser, repeatedly add the most violated constraint, dropping active
constraints whose multipliers would turn negative.  The final active set is
re-solved as an equality-constrained KKT system to clean up round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError


@dataclass
class QpResult:
    status: str  # "optimal" or "infeasible"
    x: np.ndarray | None
    active: tuple = ()
    multipliers: np.ndarray | None = None  # one per constraint, zero when inactive
    iterations: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def objective(self, H, f) -> float:
        return float(0.5 * self.x @ H @ self.x + f @ self.x)


def kkt_residual(H, f, A, b, res: QpResult) -> float:
    """Max of stationarity, primal infeasibility, dual infeasibility and complementarity."""
    x, lam = res.x, res.multipliers
    stat = H @ x + f + (A.T @ lam if len(lam) else 0.0)
    slack = b - A @ x if len(b) else np.zeros(0)
    parts = [np.abs(stat).max(initial=0.0),
             np.maximum(-slack, 0).max(initial=0.0),
             np.maximum(-lam, 0).max(initial=0.0),
             np.abs(lam * slack).max(initial=0.0)]
    return float(max(parts))


def solve_qp(H, f, A=None, b=None, tol: float = 1e-12, max_iter: int = 200) -> QpResult:
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    nvar = len(f)
    A = np.zeros((0, nvar)) if A is None else np.asarray(A, dtype=float).reshape(-1, nvar)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    if not np.allclose(H, H.T):
        raise ValueError("H must be symmetric")
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("H must be positive definite") from exc
    Hinv = np.linalg.solve(L.T, np.linalg.solve(L, np.eye(nvar)))
    # constraints as N'z >= c with N = -A', c = -b
    normals = -A
    scale = 1.0 + np.abs(b)
    x = -Hinv @ f
    active: list[int] = []
    u = np.zeros(0)
    it = 0
    while True:
        viol = (b - A @ x) / scale
        if len(b) == 0 or viol.min() >= -tol:
            break
        p = int(np.argmin(viol))
        n_p = normals[p]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise NumericError(f"QP solver exceeded {max_iter} iterations")
            if active:
                N = normals[active].T
                HN = Hinv @ N
                r = np.linalg.solve(N.T @ HN, HN.T @ n_p)
                z = Hinv @ n_p - HN @ r
            else:
                r = np.zeros(0)
                z = Hinv @ n_p
            t1, k = np.inf, -1
            for j in range(len(active)):
                if r[j] > tol and u[j] / r[j] < t1:
                    t1, k = u[j] / r[j], j
            zn = float(z @ n_p)
            s_p = float(n_p @ x + b[p])  # n_p'x - c_p, negative while violated
            t2 = -s_p / zn if zn > tol * (1.0 + n_p @ n_p) else np.inf
            if t1 == np.inf and t2 == np.inf:
                return QpResult("infeasible", None, tuple(active), None, it)
            t = min(t1, t2)
            if t2 < np.inf:
                x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[k]
            u = np.delete(u, k)
    lam = np.zeros(len(b))
    lam[active] = u
    res = QpResult("optimal", x, tuple(sorted(active)), lam, it)
    return _polish(H, f, A, b, res)


def _polish(H, f, A, b, res: QpResult) -> QpResult:
    act = list(res.active)
    if not act:
        return res
    q, nvar = len(act), len(f)
    K = np.zeros((nvar + q, nvar + q))
    K[:nvar, :nvar] = H
    K[:nvar, nvar:] = A[act].T
    K[nvar:, :nvar] = A[act]
    try:
        sol = np.linalg.solve(K, np.concatenate([-f, b[act]]))
    except np.linalg.LinAlgError:
        return res
    lam = np.zeros(len(b))
    lam[act] = sol[nvar:]
    cand = QpResult("optimal", sol[:nvar], res.active, lam, res.iterations)
    if kkt_residual(H, f, A, b, cand) <= kkt_residual(H, f, A, b, res):
        return cand
    return res
