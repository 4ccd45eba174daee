"""Dense two-phase simplex solver for inequality-form linear programs.

Solves ``min c'x  s.t.  G x <= h`` with free variables (optionally flagged
nonnegative to keep the tableau small). The pivot loop runs in a compiled
extension when available and falls back to a pure-Python implementation
with identical pivoting, so solutions are deterministic either way.
"""

import os
from dataclasses import dataclass

import numpy as np

from oic import _simplex

try:
    from oic import _speedups
except ImportError:  # pragma: no cover - build-dependent
    _speedups = None

if _speedups is not None and not os.environ.get("OIC_PURE_PYTHON"):
    _default_kernel = _speedups.pivot_loop
    KERNEL = "compiled"
else:
    _default_kernel = _simplex.pivot_loop
    KERNEL = "python"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_TOL = 1e-9
_PHASE1_TOL = 1e-7
_BLAND_AFTER = 50


class LpError(Exception):
    """Solver failed to terminate (iteration limit); indicates a bug."""


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    value: float | None = None


def solve_lp(c, G, h, nonneg=None, kernel=None, max_iter=None):
    """Minimize c'x subject to G x <= h.

    nonneg: optional boolean mask marking variables known to be >= 0
    (avoids the +/- split for those columns).
    """
    c = np.asarray(c, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).ravel()
    n = c.size
    if G.size == 0:
        G = G.reshape(0, n)
    m = G.shape[0]
    if G.shape[1] != n or h.size != m:
        raise ValueError("objective/constraint dimension mismatch")
    if kernel is None:
        kernel = _default_kernel
    elif kernel == "python":
        kernel = _simplex.pivot_loop
    elif kernel == "compiled":
        if _speedups is None:
            raise ValueError("compiled kernel is not available")
        kernel = _speedups.pivot_loop
    elif isinstance(kernel, str):
        raise ValueError(f"unknown kernel {kernel!r}")

    if m == 0:
        if np.all(c == 0.0):
            return LpSolution(OPTIMAL, np.zeros(n), 0.0)
        return LpSolution(UNBOUNDED)

    if nonneg is None:
        nonneg = np.zeros(n, dtype=bool)
    else:
        nonneg = np.asarray(nonneg, dtype=bool)
    free_idx = np.nonzero(~nonneg)[0]
    nf = free_idx.size

    flip = h < 0.0
    sign = np.where(flip, -1.0, 1.0)
    b = sign * h
    Gs = sign[:, None] * G
    flip_rows = np.nonzero(flip)[0]
    n_art = flip_rows.size

    nvar = n + nf + m
    ntot = nvar + n_art
    T = np.zeros((m + 1, ntot + 1))
    T[:m, :n] = Gs
    T[:m, n:n + nf] = -Gs[:, free_idx]
    T[np.arange(m), n + nf + np.arange(m)] = sign
    for k, i in enumerate(flip_rows):
        T[i, nvar + k] = 1.0
    T[:m, ntot] = b

    basis = np.empty(m, dtype=np.int64)
    basis[:] = n + nf + np.arange(m)
    art_of_row = {}
    for k, i in enumerate(flip_rows):
        basis[i] = nvar + k
        art_of_row[i] = nvar + k

    if max_iter is None:
        max_iter = 100 * (m + ntot) + 10000

    if n_art:
        # phase 1: minimize the sum of artificials
        T[m, :] = -T[flip_rows].sum(axis=0)
        T[m, nvar:ntot] = 0.0
        status = kernel(T, basis, ntot, _PIVOT_TOL, max_iter, _BLAND_AFTER)
        if status == _simplex.STATUS_MAXITER:
            raise LpError("simplex iteration limit in phase 1")
        if -T[m, ntot] > _PHASE1_TOL:
            return LpSolution(INFEASIBLE)
        # pivot remaining artificials out of the basis, dropping
        # redundant rows where no pivot exists
        drop = []
        for i in range(m):
            if basis[i] >= nvar:
                jpiv = -1
                for j in range(nvar):
                    if abs(T[i, j]) > _PHASE1_TOL:
                        jpiv = j
                        break
                if jpiv < 0:
                    drop.append(i)
                    continue
                piv = T[i, jpiv]
                T[i] /= piv
                colcopy = T[:, jpiv].copy()
                colcopy[i] = 0.0
                T -= np.outer(colcopy, T[i])
                T[:, jpiv] = 0.0
                T[i, jpiv] = 1.0
                basis[i] = jpiv
        if drop:
            keep = [i for i in range(m) if i not in set(drop)]
            T = T[keep + [m]]
            basis = basis[keep]
            m = len(keep)
        T = np.ascontiguousarray(np.hstack([T[:, :nvar], T[:, ntot:]]))
        ntot = nvar

    # phase 2
    c_std = np.zeros(ntot)
    c_std[:n] = c
    c_std[n:n + nf] = -c[free_idx]
    cb = c_std[basis]
    T[m, :ntot] = c_std - cb @ T[:m, :ntot]
    T[m, ntot] = -cb @ T[:m, ntot]
    status = kernel(T, basis, ntot, _PIVOT_TOL, max_iter, _BLAND_AFTER)
    if status == _simplex.STATUS_MAXITER:
        raise LpError("simplex iteration limit in phase 2")
    if status == _simplex.STATUS_UNBOUNDED:
        return LpSolution(UNBOUNDED)

    x_std = np.zeros(ntot)
    x_std[basis] = T[:m, ntot]
    x = x_std[:n].copy()
    x[free_idx] -= x_std[n:n + nf]
    return LpSolution(OPTIMAL, x, float(c @ x))
