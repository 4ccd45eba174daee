# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot loop; mirrors oic._simplex.pivot_loop exactly."""

STATUS_OPTIMAL = 0
STATUS_UNBOUNDED = 1
STATUS_MAXITER = 2


def pivot_loop(double[:, ::1] T, long long[::1] basis, Py_ssize_t ncols_active,
               double tol, long long max_iter, long long bland_after):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t ncols = T.shape[1]
    cdef Py_ssize_t jcol, i, j, r
    cdef long long it, degen_streak = 0
    cdef double best, a, ratio, best_ratio, piv, f

    for it in range(max_iter):
        jcol = -1
        if degen_streak < bland_after:
            best = -tol
            for j in range(ncols_active):
                if T[m, j] < best:
                    best = T[m, j]
                    jcol = j
        else:
            for j in range(ncols_active):
                if T[m, j] < -tol:
                    jcol = j
                    break
        if jcol < 0:
            return STATUS_OPTIMAL

        r = -1
        best_ratio = 0.0
        for i in range(m):
            a = T[i, jcol]
            if a > tol:
                ratio = T[i, rhs] / a
                if r < 0 or ratio < best_ratio - 1e-12:
                    best_ratio = ratio
                    r = i
                elif ratio <= best_ratio + 1e-12 and basis[i] < basis[r]:
                    r = i
        if r < 0:
            return STATUS_UNBOUNDED
        if best_ratio <= tol:
            degen_streak += 1
        else:
            degen_streak = 0

        piv = T[r, jcol]
        for j in range(ncols):
            T[r, j] /= piv
        for i in range(m + 1):
            if i == r:
                continue
            f = T[i, jcol]
            if f != 0.0:
                for j in range(ncols):
                    T[i, j] -= f * T[r, j]
        for i in range(m + 1):
            T[i, jcol] = 0.0
        T[r, jcol] = 1.0
        basis[r] = jcol
    return STATUS_MAXITER
