"""Pure-Python simplex pivot loop.

Fallback for the compiled kernel in ``oic._speedups``; both implement the
same pivot rule (Dantzig with a Bland switch after a degeneracy stall) so
results are identical whichever one is loaded.
"""

import numpy as np

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_MAXITER = 2


def pivot_loop(T, basis, ncols_active, tol, max_iter, bland_after):
    """Run simplex pivots in place on tableau ``T``.

    T has shape (m+1, ntot+1): m constraint rows, one reduced-cost row,
    last column is the rhs. ``basis`` holds the basic column per row.
    Only columns below ``ncols_active`` may enter the basis.
    """
    m = T.shape[0] - 1
    rhs = T.shape[1] - 1
    obj = T[m]
    degen_streak = 0
    for _ in range(max_iter):
        costs = obj[:ncols_active]
        if degen_streak < bland_after:
            jcol = int(np.argmin(costs))
            if costs[jcol] >= -tol:
                return STATUS_OPTIMAL
        else:
            neg = np.nonzero(costs < -tol)[0]
            if neg.size == 0:
                return STATUS_OPTIMAL
            jcol = int(neg[0])

        col = T[:m, jcol]
        best_ratio = np.inf
        r = -1
        for i in range(m):
            a = col[i]
            if a > tol:
                ratio = T[i, rhs] / a
                if ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    r = i
                elif ratio <= best_ratio + 1e-12 and r >= 0 and basis[i] < basis[r]:
                    r = i
        if r < 0:
            return STATUS_UNBOUNDED
        if best_ratio <= tol:
            degen_streak += 1
        else:
            degen_streak = 0

        piv = T[r, jcol]
        T[r] /= piv
        colcopy = T[:, jcol].copy()
        colcopy[r] = 0.0
        T -= np.outer(colcopy, T[r])
        T[:, jcol] = 0.0
        T[r, jcol] = 1.0
        basis[r] = jcol
    return STATUS_MAXITER
