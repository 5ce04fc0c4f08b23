"""Dense two-phase revised simplex for small equality-form problems.

Solves  minimize c @ x  subject to  A x = b, x >= 0.

Scope: tiny, ill-conditioned-but-dense instances where determinism matters
more than speed.  Bland's rule everywhere (smallest eligible index), an
explicitly maintained basis inverse with product-form updates, and periodic
refactorization.  Dependent constraint rows are removed by a Gaussian
pre-pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
REFACTOR_EVERY = 256


@dataclass
class SimplexResult:
    status: str            # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray | None
    objective: float
    iterations: int


def _reduce_rows(a: np.ndarray, b: np.ndarray):
    """Gaussian elimination to an equivalent full-row-rank system.

    Returns (A', b') or None when the system is inconsistent.
    """
    m, n = a.shape
    work = np.hstack([a.astype(float), b.reshape(-1, 1).astype(float)])
    row = 0
    for col in range(n):
        if row >= m:
            break
        piv = row + int(np.argmax(np.abs(work[row:, col])))
        if abs(work[piv, col]) <= PIVOT_TOL:
            continue
        if piv != row:
            work[[row, piv]] = work[[piv, row]]
        work[row] /= work[row, col]
        rest = np.delete(np.arange(m), row)
        work[rest] -= np.outer(work[rest, col], work[row])
        row += 1
    if np.any(np.abs(work[row:, -1]) > FEAS_TOL):
        return None
    return work[:row, :n], work[:row, -1]


def _pivot(basis, b_inv, x_b, w, r, entering):
    theta = x_b[r] / w[r]
    x_b -= theta * w
    x_b[r] = theta
    np.maximum(x_b, 0.0, out=x_b)
    b_inv[r] /= w[r]
    rest = np.delete(np.arange(len(basis)), r)
    b_inv[rest] -= np.outer(w[rest], b_inv[r])
    basis[r] = entering


def _bland_ratio_row(basis, x_b, w):
    """Leaving row by minimum ratio, ties broken on smallest basis index."""
    eligible = np.flatnonzero(w > PIVOT_TOL)
    if eligible.size == 0:
        return None
    ratios = x_b[eligible] / w[eligible]
    best = ratios.min()
    near = eligible[ratios <= best + PIVOT_TOL]
    return int(near[np.argmin(np.asarray(basis)[near])])


def _run_phase(a_full, c_full, basis, b_inv, x_b, b, allowed, maxiter):
    """Bland-rule simplex iterations; mutates basis/b_inv/x_b in place."""
    iters = 0
    while True:
        if iters >= maxiter:
            return "iteration_limit", iters
        if iters and iters % REFACTOR_EVERY == 0:
            b_inv[:] = np.linalg.inv(a_full[:, basis])
            x_b[:] = b_inv @ b
            np.maximum(x_b, 0.0, out=x_b)
        y = c_full[basis] @ b_inv
        reduced = c_full[:allowed] - y @ a_full[:, :allowed]
        candidates = np.flatnonzero(reduced < -PIVOT_TOL)
        entering = -1
        basis_set = set(basis)
        for j in candidates:  # Bland: smallest eligible index
            if j not in basis_set:
                entering = int(j)
                break
        if entering < 0:
            return "optimal", iters
        w = b_inv @ a_full[:, entering]
        r = _bland_ratio_row(basis, x_b, w)
        if r is None:
            return "unbounded", iters
        _pivot(basis, b_inv, x_b, w, r, entering)
        iters += 1


def linear_program(c, a, b, maxiter: int | None = None) -> SimplexResult:
    """Minimize c @ x subject to A x = b, x >= 0."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    if a.shape != (b.size, c.size):
        raise ValueError("inconsistent LP dimensions")
    reduced = _reduce_rows(a, b)
    if reduced is None:
        return SimplexResult("infeasible", None, float("nan"), 0)
    a, b = reduced
    m, n = a.shape
    if m == 0:
        x = np.zeros(n)
        return SimplexResult("optimal", x, 0.0, 0)
    flip = b < 0
    a[flip] *= -1.0
    b = np.abs(b)
    if maxiter is None:
        maxiter = max(20000, 60 * (m + n))

    a_full = np.hstack([a, np.eye(m)])
    basis = list(range(n, n + m))
    b_inv = np.eye(m)
    x_b = b.copy()

    # Phase 1: minimize the artificial mass; artificials never re-enter
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    status, it1 = _run_phase(a_full, c1, basis, b_inv, x_b, b, n, maxiter)
    if status != "optimal":
        return SimplexResult(status, None, float("nan"), it1)
    art_mass = sum(x_b[i] for i, j in enumerate(basis) if j >= n)
    if art_mass > FEAS_TOL:
        return SimplexResult("infeasible", None, float("nan"), it1)
    # drive leftover zero-valued artificials out of the basis
    for r in range(m):
        if basis[r] < n:
            continue
        row = b_inv[r] @ a_full[:, :n]
        basis_set = set(basis)
        options = np.flatnonzero(np.abs(row) > PIVOT_TOL)
        entering = next((int(j) for j in options if j not in basis_set), None)
        if entering is None:
            # numerically dependent row that survived the pre-pass
            continue
        w = b_inv @ a_full[:, entering]
        _pivot(basis, b_inv, x_b, w, r, entering)

    # Phase 2 on the original objective, artificial columns barred
    c2 = np.concatenate([c, np.full(m, 0.0)])
    status, it2 = _run_phase(a_full, c2, basis, b_inv, x_b, b, n, maxiter)
    if status != "optimal":
        return SimplexResult(status, None, float("nan"), it1 + it2)
    x = np.zeros(n)
    for value, j in zip(x_b, basis):
        if j < n:
            x[j] = value
    return SimplexResult("optimal", x, float(c @ x), it1 + it2)
