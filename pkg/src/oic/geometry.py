"""H-representation polytope kernel.

All sets are stored as {x | H x <= h}. Operations are pure functions; the
embedded LP solver (oic.lp) backs every containment, support and
redundancy query. Ambient dimensions in this project stay <= 3, so
Fourier-Motzkin elimination is used for projections.
"""

from dataclasses import dataclass

import numpy as np

from oic import lp

EPS_FEAS = 1e-7
EPS_SET = 1e-6

LpResult = lp.LpSolution


class DimensionError(ValueError):
    pass


class Polytope:
    """Convex polytope {x | H x <= h}; immutable after construction."""

    __slots__ = ("H", "h", "dim")

    def __init__(self, H, h, dim=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).ravel()
        if H.size == 0:
            if dim is None:
                raise DimensionError("empty constraint list needs explicit dim")
            H = H.reshape(0, dim)
        if dim is not None and H.shape[1] != dim:
            raise DimensionError(f"H has {H.shape[1]} columns, expected {dim}")
        if h.size != H.shape[0]:
            raise DimensionError("h length does not match H row count")
        H.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "dim", H.shape[1])

    def __setattr__(self, *a):
        raise AttributeError("Polytope is immutable")

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.H.shape[0]})"

    @classmethod
    def from_box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.size != hi.size:
            raise DimensionError("box bounds must have equal length")
        d = lo.size
        eye = np.eye(d)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @classmethod
    def singleton(cls, point):
        point = np.asarray(point, dtype=float).ravel()
        return cls.from_box(point, point)

    @classmethod
    def full_space(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((1, dim)), np.array([-1.0]), dim=dim)

    def contains(self, x, tol=EPS_FEAS):
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.dim:
            raise DimensionError("point dimension mismatch")
        if self.H.shape[0] == 0:
            return True
        return bool(np.all(self.H @ x <= self.h + tol))


def lp_solve(objective, P):
    """Minimize objective'x over P."""
    objective = np.asarray(objective, dtype=float).ravel()
    if objective.size != P.dim:
        raise DimensionError("objective dimension mismatch")
    return lp.solve_lp(objective, P.H, P.h)


def support(P, direction):
    """sup direction'x over P; +inf if unbounded, -inf if empty."""
    res = lp_solve(-np.asarray(direction, dtype=float), P)
    if res.status == lp.OPTIMAL:
        return -res.value
    if res.status == lp.UNBOUNDED:
        return np.inf
    return -np.inf


def is_empty(P):
    return lp.solve_lp(np.zeros(P.dim), P.H, P.h).status == lp.INFEASIBLE


def is_subset(P, Q, tol=EPS_FEAS):
    """P subseteq Q via per-row support maximization over P."""
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    if is_empty(P):
        return True
    for Hj, qj in zip(Q.H, Q.h):
        if support(P, Hj) > qj + tol:
            return False
    return True


def set_equal(P, Q, tol=EPS_SET):
    return is_subset(P, Q, tol) and is_subset(Q, P, tol)


def intersect(P, Q):
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    return Polytope(np.vstack([P.H, Q.H]), np.concatenate([P.h, Q.h]))


def translate(P, v):
    v = np.asarray(v, dtype=float).ravel()
    if v.size != P.dim:
        raise DimensionError("translation dimension mismatch")
    return Polytope(P.H, P.h + P.H @ v)


def scale(P, alpha):
    if alpha <= 0:
        raise ValueError("scale factor must be positive")
    return Polytope(P.H, alpha * P.h)


def _clean_rows(H, h, dim):
    """Normalize rows, drop trivial ones, dedupe; detect plain infeasibility."""
    if H.shape[0] == 0:
        return H, h, False
    norms = np.linalg.norm(H, axis=1)
    zero = norms < 1e-12
    if np.any(zero & (h < -EPS_FEAS)):
        return None, None, True  # 0'x <= negative: empty
    keep = ~zero
    H, h, norms = H[keep], h[keep], norms[keep]
    if H.shape[0] == 0:
        return H.reshape(0, dim), h, False
    H = H / norms[:, None]
    h = h / norms
    # dedupe rows with (almost) identical normals, keep tightest offset
    order = np.lexsort(np.round(H / 1e-9).T.astype(np.int64))
    H, h = H[order], h[order]
    out_H, out_h = [H[0]], [h[0]]
    for i in range(1, H.shape[0]):
        if np.max(np.abs(H[i] - out_H[-1])) < 1e-9:
            out_h[-1] = min(out_h[-1], h[i])
        else:
            out_H.append(H[i])
            out_h.append(h[i])
    return np.array(out_H), np.array(out_h), False


def remove_redundancy(P):
    """Minimal-row representation of the same set; rows certified by LP."""
    H, h, infeas = _clean_rows(P.H.copy(), P.h.copy(), P.dim)
    if infeas:
        return Polytope.empty(P.dim)
    if H.shape[0] == 0:
        return Polytope.full_space(P.dim)
    if is_empty(Polytope(H, h)):
        return Polytope.empty(P.dim)
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        keep[i] = False
        others = Polytope(H[keep], h[keep], dim=P.dim)
        if support(others, H[i]) > h[i] + 1e-9:
            keep[i] = True
    return Polytope(H[keep], h[keep], dim=P.dim)


def eliminate(P, var_indices):
    """Exact Fourier-Motzkin projection dropping the given coordinates."""
    if isinstance(var_indices, (int, np.integer)):
        var_indices = [int(var_indices)]
    var_indices = sorted(set(int(i) for i in var_indices))
    for i in var_indices:
        if i < 0 or i >= P.dim:
            raise DimensionError(f"variable index {i} out of range")
    H, h = P.H.copy(), P.h.copy()
    dim = P.dim
    # eliminate from the highest index so remaining indices stay valid
    for idx in reversed(var_indices):
        col = H[:, idx]
        pos = col > 1e-10
        neg = col < -1e-10
        zer = ~(pos | neg)
        rows_H = [np.delete(H[zer], idx, axis=1)]
        rows_h = [h[zer]]
        if np.any(pos) and np.any(neg):
            Hp = H[pos] / col[pos, None]
            hp = h[pos] / col[pos]
            Hn = H[neg] / (-col[neg, None])
            hn = h[neg] / (-col[neg])
            comb_H = (Hp[:, None, :] + Hn[None, :, :]).reshape(-1, H.shape[1])
            comb_h = (hp[:, None] + hn[None, :]).reshape(-1)
            rows_H.append(np.delete(comb_H, idx, axis=1))
            rows_h.append(comb_h)
        dim -= 1
        H = np.vstack(rows_H) if rows_H else np.zeros((0, dim))
        h = np.concatenate(rows_h) if rows_h else np.zeros(0)
        reduced = remove_redundancy(Polytope(H, h, dim=dim))
        H, h = reduced.H.copy(), reduced.h.copy()
    return Polytope(H, h, dim=dim)


def minkowski_sum(P, Q):
    """{p + q | p in P, q in Q} via lift-and-eliminate."""
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    d = P.dim
    if is_empty(P) or is_empty(Q):
        return Polytope.empty(d)
    lo, hi = bounding_box(Q)
    if np.all(hi - lo < 1e-12):  # Q is (numerically) a single point
        return translate(P, (lo + hi) / 2.0)
    # variables (z, x): x in P, z - x in Q
    kP, kQ = P.H.shape[0], Q.H.shape[0]
    H = np.zeros((kP + kQ, 2 * d))
    H[:kP, d:] = P.H
    H[kP:, :d] = Q.H
    H[kP:, d:] = -Q.H
    h = np.concatenate([P.h, Q.h])
    return eliminate(Polytope(H, h, dim=2 * d), list(range(d, 2 * d)))


def pontryagin_diff(P, Q):
    """{x | x + Q subseteq P}: per-row support tightening."""
    if P.dim != Q.dim:
        raise DimensionError("dimension mismatch")
    if P.H.shape[0] == 0:
        return P
    tight = np.array([support(Q, row) for row in P.H])
    if np.any(np.isinf(tight)):
        return Polytope.empty(P.dim)
    return remove_redundancy(Polytope(P.H, P.h - tight))


def linear_image(M, P):
    """{M x | x in P} via lift-and-eliminate (handles singular M)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != P.dim:
        raise DimensionError("matrix/polytope dimension mismatch")
    p, d = M.shape
    k = P.H.shape[0]
    # variables (y, x): y = M x as paired inequalities, x in P
    H = np.zeros((2 * p + k, p + d))
    H[:p, :p] = np.eye(p)
    H[:p, p:] = -M
    H[p:2 * p, :p] = -np.eye(p)
    H[p:2 * p, p:] = M
    H[2 * p:, p:] = P.H
    h = np.concatenate([np.zeros(2 * p), P.h])
    return eliminate(Polytope(H, h, dim=p + d), list(range(p, p + d)))


def linear_preimage(M, P):
    """{x | M x in P} by H-row composition; no invertibility needed."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != P.dim:
        raise DimensionError("matrix range does not match polytope space")
    if P.H.shape[0] == 0:
        return Polytope.full_space(M.shape[1])
    return remove_redundancy(Polytope(P.H @ M, P.h))


def bounding_box(P):
    """Per-axis support bounds (lo, hi); inf entries if unbounded."""
    d = P.dim
    lo = np.empty(d)
    hi = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        hi[i] = support(P, e)
        lo[i] = -support(P, -e)
    return lo, hi


def sample(P, rng, count, max_tries=100000):
    """Uniform interior samples by seeded rejection from the bounding box."""
    lo, hi = bounding_box(P)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("cannot sample an unbounded polytope")
    out = []
    tries = 0
    while len(out) < count:
        x = rng.uniform(lo, hi)
        if P.contains(x):
            out.append(x)
        tries += 1
        if tries > max_tries:
            raise RuntimeError("rejection sampling failed; set may be degenerate")
    return np.array(out)


def vertices(P, tol=EPS_FEAS):
    """Vertex list for 1-D and 2-D polytopes (oracle helper)."""
    if is_empty(P):
        return np.zeros((0, P.dim))
    if P.dim == 1:
        lo, hi = bounding_box(P)
        if not np.all(np.isfinite([lo[0], hi[0]])):
            raise ValueError("unbounded polytope has no vertex list")
        if abs(hi[0] - lo[0]) < tol:
            return np.array([[lo[0]]])
        return np.array([[lo[0]], [hi[0]]])
    if P.dim != 2:
        raise NotImplementedError("vertex enumeration implemented for dim <= 2")
    pts = []
    k = P.H.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            A = np.vstack([P.H[i], P.H[j]])
            if abs(np.linalg.det(A)) < 1e-10:
                continue
            v = np.linalg.solve(A, np.array([P.h[i], P.h[j]]))
            if P.contains(v, tol=1e-6):
                pts.append(v)
    if not pts:
        raise ValueError("no vertices found; polytope may be unbounded")
    pts = np.array(pts)
    # dedupe, then order counterclockwise around the centroid
    uniq = []
    for p in pts:
        if not any(np.linalg.norm(p - q) < 1e-7 for q in uniq):
            uniq.append(p)
    pts = np.array(uniq)
    cen = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - cen[1], pts[:, 0] - cen[0])
    return pts[np.argsort(ang)]


def box_vertices(lo, hi):
    """Corner points of an axis-aligned box (degenerate axes collapse)."""
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    axes = [[l] if abs(u - l) < 1e-12 else [l, u] for l, u in zip(lo, hi)]
    out = [[]]
    for vals in axes:
        out = [prefix + [v] for prefix in out for v in vals]
    return np.array(out)


def to_text(P):
    """Serialize to the round-trip-exact text form."""
    lines = ["polytope v1", f"dim {P.dim}", f"rows {P.H.shape[0]}"]
    for row, off in zip(P.H, P.h):
        vals = [f"{v:.17g}" for v in row] + [f"{off:.17g}"]
        lines.append(" ".join(vals))
    return "\n".join(lines) + "\n"


def from_text(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "polytope v1":
        raise ValueError("not a polytope v1 document")
    dim = int(lines[1].split()[1])
    rows = int(lines[2].split()[1])
    H = np.zeros((rows, dim))
    h = np.zeros(rows)
    for i in range(rows):
        vals = [float(v) for v in lines[3 + i].split()]
        if len(vals) != dim + 1:
            raise ValueError(f"row {i} has {len(vals)} values, expected {dim + 1}")
        H[i] = vals[:dim]
        h[i] = vals[dim]
    return Polytope(H, h, dim=dim)
