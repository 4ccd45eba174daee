"""Offline computation of the nested safe sets.

Three levels: the original safe set X, a robust control invariant set X_I
(either from a linear-feedback disturbance-sum formula or as the feasible
region of the robust MPC), and the strengthened safe set X' where even a
skipped control step cannot leave X_I.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from oic import geometry
from oic.geometry import Polytope

logger = logging.getLogger(__name__)

_SUPPORT_CONV_TOL = 1e-6
_MAX_SUM_TERMS = 50


class SafeSetError(Exception):
    pass


class VerificationError(SafeSetError):
    """A computed set failed its invariance post-check."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def _disturbance_vertices(W):
    """Vertex list of W; exact for dims 1-2, box corners otherwise."""
    if W.dim <= 2:
        return geometry.vertices(W)
    lo, hi = geometry.bounding_box(W)
    return geometry.box_vertices(lo, hi)


def robust_invariant_linear(sys, K, alpha=1.0, n=None, W=None, verify=True):
    """Disturbance-sum invariant set for the closed loop A + B K.

    Returns alpha * (W (+) A_K W (+) ... (+) A_K^n W). When n is None, the
    smallest n is used at which the next term changes the set's support
    values by less than 1e-6 (capped at 50). The result is post-verified
    vertex-wise; failure raises VerificationError.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A_K = sys.A + sys.B @ K
    rho = spectral_radius(A_K)
    if rho >= 1.0:
        raise SafeSetError(f"A+BK is not Schur-stable (spectral radius {rho:.4f})")
    if W is None:
        W = sys.W
    if geometry.is_empty(W):
        raise SafeSetError("W is empty")

    S = W
    term = W
    n_used = 0
    limit = n if n is not None else _MAX_SUM_TERMS
    for k in range(1, limit + 1):
        term = geometry.linear_image(A_K, term)
        S_next = geometry.minkowski_sum(S, term)
        n_used = k
        if n is None:
            delta = max(
                abs(geometry.support(S_next, row) - geometry.support(S, row))
                for row in S_next.H
            )
            S = S_next
            if delta < _SUPPORT_CONV_TOL:
                break
        else:
            S = S_next
    S = geometry.remove_redundancy(geometry.scale(S, alpha))

    if verify:
        verify_linear_invariance(S, A_K, W, n_used=n_used)
    return S


def verify_linear_invariance(S, A_K, W, n_used=None, tol=geometry.EPS_SET):
    """Check A_K v + w in S for every vertex v of S and vertex w of W."""
    if S.dim == 2:
        verts = geometry.vertices(S)
    elif S.dim == 1:
        verts = geometry.vertices(S)
    else:
        lo, hi = geometry.bounding_box(S)
        rng = np.random.default_rng(0)
        verts = geometry.sample(S, rng, 200)
    w_verts = _disturbance_vertices(W)
    for v in verts:
        for w in w_verts:
            nxt = A_K @ v + w
            if not S.contains(nxt, tol=tol):
                raise VerificationError(
                    f"invariance check failed (n={n_used}): vertex {v} with "
                    f"w={w} maps outside the set",
                    witness=(v, w),
                )


def max_robust_invariant(A_K, S0, W0, max_iter=200):
    """Largest set inside S0 that is robust invariant for x+ = A_K x + w.

    Fixed-point iteration S <- S intersect {x | A_K x + w in S for all w};
    terminates finitely for stable A_K and bounded S0. The result is
    exactly invariant, which matters when W0 is degenerate and the
    disturbance-sum formula cannot close.
    """
    S = S0
    for _ in range(max_iter):
        eroded = geometry.pontryagin_diff(S, W0)
        if geometry.is_empty(eroded):
            return geometry.Polytope.empty(S.dim)
        pre = geometry.linear_preimage(A_K, eroded)
        if geometry.is_subset(S, pre, tol=1e-9):
            return S
        S = geometry.remove_redundancy(geometry.intersect(S, pre))
        if geometry.is_empty(S):
            return S
    raise SafeSetError("invariant-set fixed point did not converge")


def pre_with_input(Y, sys, offset=None):
    """{x | exists u in U: A x + B u + offset in Y} via lift-and-eliminate."""
    if geometry.is_empty(Y):
        return Polytope.empty(sys.n)
    n, m = sys.n, sys.m
    hY = Y.h.copy()
    if offset is not None:
        hY = hY - Y.H @ np.asarray(offset, dtype=float).ravel()
    kY, kU = Y.H.shape[0], sys.U.H.shape[0]
    H = np.zeros((kY + kU, n + m))
    H[:kY, :n] = Y.H @ sys.A
    H[:kY, n:] = Y.H @ sys.B
    H[kY:, n:] = sys.U.H
    h = np.concatenate([hY, sys.U.h])
    return geometry.eliminate(Polytope(H, h, dim=n + m), list(range(n, n + m)))


def rmpc_feasible_set(sys, rmpc_cfg):
    """Feasible region of the robust MPC by backward recursion.

    C_N = X_t, C_k = Pre(C_{k+1}) intersect X(k); C_0 is exactly the set
    of states where the MPC program is feasible, and by the terminal-set
    premise it is robust control invariant.
    """
    N = rmpc_cfg.N
    tightened = rmpc_cfg.tightened
    C = rmpc_cfg.X_t
    if N == 0:
        return geometry.remove_redundancy(geometry.intersect(C, tightened[0]))
    offset = getattr(rmpc_cfg, "w_nom", None)
    for k in reversed(range(N)):
        pre = pre_with_input(C, sys, offset=offset)
        C = geometry.remove_redundancy(geometry.intersect(pre, tightened[k]))
        if geometry.is_empty(C):
            raise SafeSetError(f"feasible-set recursion became empty at step {k}")
    return C


def backward_reachable_skip(Y, sys):
    """B(Y, 0): states that land in Y under u_skip for every w in W."""
    eroded = geometry.pontryagin_diff(Y, sys.W)
    if geometry.is_empty(eroded):
        return Polytope.empty(sys.n)
    shifted = geometry.translate(eroded, -sys.B @ sys.u_skip)
    return geometry.linear_preimage(sys.A, shifted)


def strengthened_safe_set(X_I, sys):
    """X' = B(X_I, 0) intersect X_I."""
    if geometry.is_empty(X_I):
        raise SafeSetError("X_I is empty")
    back = backward_reachable_skip(X_I, sys)
    Xp = geometry.remove_redundancy(geometry.intersect(back, X_I))
    if geometry.is_empty(Xp):
        raise SafeSetError(
            "strengthened safe set is empty; skipping is never safe for "
            "this system (framework degenerates to always-actuate)"
        )
    return Xp


@dataclass(frozen=True)
class SafeSetBundle:
    """The (X, X_I, X') triple plus provenance metadata."""

    X: Polytope
    X_I: Polytope
    X_prime: Polytope
    method: str
    params: dict = field(default_factory=dict)
    system_hash: str = ""

    def __post_init__(self):
        for name, S in (("X", self.X), ("X_I", self.X_I), ("X_prime", self.X_prime)):
            if geometry.is_empty(S):
                raise SafeSetError(f"{name} is empty")
        if not geometry.is_subset(self.X_prime, self.X_I):
            raise SafeSetError("X' is not contained in X_I")
        if not geometry.is_subset(self.X_I, self.X):
            raise SafeSetError("X_I is not contained in X")


def compute_bundle(sys, rmpc_cfg=None, method="rmpc_feasible", K=None,
                   alpha=1.0, n=None):
    """Build the full safe-set bundle for a system."""
    if method == "rmpc_feasible":
        if rmpc_cfg is None:
            raise ValueError("rmpc_feasible method needs an RmpcConfig")
        X_I = rmpc_feasible_set(sys, rmpc_cfg)
        params = {"N": rmpc_cfg.N}
    elif method == "linear_feedback":
        if K is None:
            raise ValueError("linear_feedback method needs a gain K")
        X_I = robust_invariant_linear(sys, K, alpha=alpha, n=n)
        X_I = geometry.remove_redundancy(geometry.intersect(X_I, sys.X))
        params = {"alpha": alpha, "n": n}
    else:
        raise ValueError(f"unknown safe-set method {method!r}")
    X_prime = strengthened_safe_set(X_I, sys)
    return SafeSetBundle(
        X=sys.X,
        X_I=X_I,
        X_prime=X_prime,
        method=method,
        params=params,
        system_hash=sys.definition_hash(),
    )


def bundle_to_text(bundle):
    head = [
        "safesetbundle v1",
        f"method {bundle.method}",
        f"system_hash {bundle.system_hash}",
        "params " + ",".join(f"{k}={v}" for k, v in sorted(bundle.params.items())),
    ]
    parts = [
        "\n".join(head),
        geometry.to_text(bundle.X),
        geometry.to_text(bundle.X_I),
        geometry.to_text(bundle.X_prime),
    ]
    return "\n".join(parts)


def bundle_from_text(text, expected_system_hash=None):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "safesetbundle v1":
        raise ValueError("not a safesetbundle v1 document")
    method = lines[1].split(None, 1)[1]
    system_hash = lines[2].split(None, 1)[1]
    params_str = lines[3].split(None, 1)[1] if len(lines[3].split(None, 1)) > 1 else ""
    params = {}
    for item in params_str.split(","):
        if "=" in item:
            k, v = item.split("=", 1)
            try:
                params[k] = int(v)
            except ValueError:
                try:
                    params[k] = float(v)
                except ValueError:
                    params[k] = v
    if expected_system_hash is not None and system_hash != expected_system_hash:
        raise SafeSetError(
            f"bundle was computed for system {system_hash}, "
            f"expected {expected_system_hash}"
        )
    # the three polytope blocks each start with their own header line
    idx = [i for i, ln in enumerate(lines) if ln.strip() == "polytope v1"]
    if len(idx) != 3:
        raise ValueError("bundle must contain exactly three polytopes")
    blocks = [
        "\n".join(lines[idx[0]:idx[1]]),
        "\n".join(lines[idx[1]:idx[2]]),
        "\n".join(lines[idx[2]:]),
    ]
    X, X_I, X_prime = (geometry.from_text(b) for b in blocks)
    return SafeSetBundle(X=X, X_I=X_I, X_prime=X_prime, method=method,
                         params=params, system_hash=system_hash)
