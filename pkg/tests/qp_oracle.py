"""Projected-gradient reference solver for small QPs (test oracle only)."""

import numpy as np


def random_feasible_qps(rng, count, max_vars=4, max_cons=8):
    problems = []
    for _ in range(count):
        n = int(rng.integers(1, max_vars + 1))
        m = int(rng.integers(1, max_cons + 1))
        M = rng.normal(size=(n, n))
        H = M @ M.T / n + 0.5 * np.eye(n)
        f = rng.normal(scale=2.0, size=n)
        A = rng.normal(size=(m, n))
        z0 = rng.normal(size=n)
        b = A @ z0 + rng.uniform(0.0, 1.0, size=m)
        problems.append((H, f, A, b))
    return problems


def dual_projected_gradient(H, f, A, b, iters=20000):
    """Accelerated projected gradient ascent on the dual, lambda >= 0.

    dual(l) = -0.5 (f + A'l)' H^-1 (f + A'l) - b'l ; primal z = -H^-1 (f + A'l).
    Uses adaptive restart; returns the primal point.
    """
    Hinv = np.linalg.inv(H)
    G = A @ Hinv @ A.T
    step = 1.0 / max(np.linalg.eigvalsh(G).max(), 1e-12)
    c = A @ Hinv @ f + b
    lam = np.zeros(len(b))
    y = lam.copy()
    tk = 1.0
    for _ in range(iters):
        new = np.maximum(y - step * (G @ y + c), 0.0)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        if (new - lam) @ (G @ new + c) > 0:  # gradient restart
            tn = 1.0
            y = new
        else:
            y = new + ((tk - 1) / tn) * (new - lam)
        lam, tk = new, tn
    return -Hinv @ (f + A.T @ lam), lam


def batched_dual_projected_gradient(problems, nvar=4, ncon=8, iters=5000):
    """Same oracle vectorised over problems padded to (nvar, ncon).

    Padding variables get identity curvature and no constraints; padding
    constraints are 0'z <= 1 and stay inactive.
    """
    B = len(problems)
    Hinv = np.zeros((B, nvar, nvar))
    F = np.zeros((B, nvar))
    A = np.zeros((B, ncon, nvar))
    bb = np.ones((B, ncon))
    for i, (H, f, a, b) in enumerate(problems):
        n, m = len(f), len(b)
        Hinv[i] = np.eye(nvar)
        Hinv[i, :n, :n] = np.linalg.inv(H)
        F[i, :n] = f
        A[i, :m, :n] = a
        bb[i, :m] = b
    G = A @ Hinv @ A.transpose(0, 2, 1)
    step = 1.0 / np.maximum(np.linalg.eigvalsh(G).max(axis=1), 1e-12)
    c = np.einsum("bij,bj->bi", A @ Hinv, F) + bb
    lam = np.zeros((B, ncon))
    y = lam.copy()
    tk = np.ones(B)
    for _ in range(iters):
        grad = np.einsum("bij,bj->bi", G, y) + c
        new = np.maximum(y - step[:, None] * grad, 0.0)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        restart = np.einsum("bi,bi->b", new - lam, np.einsum("bij,bj->bi", G, new) + c) > 0
        mom = np.where(restart, 0.0, (tk - 1) / tn)
        y = new + mom[:, None] * (new - lam)
        tn = np.where(restart, 1.0, tn)
        lam, tk = new, tn
    z = -np.einsum("bij,bj->bi", Hinv, F + np.einsum("bji,bj->bi", A, lam))
    return [z[i, :len(p[1])] for i, p in enumerate(problems)]
