"""Robust MPC with tightened constraints.

The controller predicts with the nominal model (disturbance fixed at its
box center w_nom) and robustifies by recursively eroding the state
constraints with the centered disturbance remainder. The finite-horizon
program is condensed into a single dense LP over the input sequence plus
1-norm epigraph variables and solved with the embedded simplex.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from oic import geometry, lp, safesets
from oic.geometry import Polytope

logger = logging.getLogger(__name__)


class RmpcError(Exception):
    pass


class TighteningError(RmpcError):
    def __init__(self, k):
        super().__init__(f"tightened constraint set X({k}) is empty")
        self.k = k


class RmpcInfeasibleError(RmpcError):
    """The MPC program is infeasible at the queried state."""


def dlqr(A, B, Q=None, R=None, tol=1e-9, max_iter=100000):
    """Infinite-horizon discrete LQR gain via Riccati fixed-point iteration.

    Returns K such that u = K x stabilizes A + B K.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = B.shape
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(m) if R is None else np.asarray(R, dtype=float)
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        K = -np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ (A + B @ K)
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            break
        P = P_next
    else:
        raise RmpcError("Riccati iteration did not converge")
    BtP = B.T @ P
    K = -np.linalg.solve(R + BtP @ B, BtP @ A)
    return K


def tightened_constraints(X, A, W, N):
    """Recursive constraint tightening X(0..N).

    X(k) = X(k-1) intersect (X(k-1) eroded by A^{k-1} W). W here is the
    disturbance set seen by the nominal prediction (already centered if
    the raw disturbance has a nonzero mean).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    sets = [X]
    term = W  # A^{k-1} W for the current k
    for k in range(1, N + 1):
        eroded = geometry.pontryagin_diff(sets[-1], term)
        Xk = geometry.remove_redundancy(geometry.intersect(sets[-1], eroded))
        if geometry.is_empty(Xk):
            raise TighteningError(k)
        sets.append(Xk)
        if k < N:
            term = geometry.linear_image(A, term)
    return sets


def _box_center(P):
    lo, hi = geometry.bounding_box(P)
    return (lo + hi) / 2.0


def terminal_set(sys, K_L, X_N, x_ref=None, u_eq=None, w_nom=None,
                 verify_samples=200):
    """Robust invariant terminal set under the local feedback law.

    The local controller is affine around the operating point,
    u = u_eq + K_L (x - x_ref); with the defaults (origin, zero input)
    this reduces to plain linear feedback. The disturbance mean shifts
    the closed-loop equilibrium; the invariant error set is computed for
    the centered disturbance and translated there.
    """
    K_L = np.atleast_2d(np.asarray(K_L, dtype=float))
    n, m = sys.n, sys.m
    x_ref = np.zeros(n) if x_ref is None else np.asarray(x_ref, dtype=float).ravel()
    u_eq = np.zeros(m) if u_eq is None else np.asarray(u_eq, dtype=float).ravel()
    w_nom = _box_center(sys.W) if w_nom is None else np.asarray(w_nom, dtype=float).ravel()

    A_K = sys.A + sys.B @ K_L
    rho = safesets.spectral_radius(A_K)
    if rho >= 1.0:
        raise RmpcError(f"A+BK_L is not Schur-stable (spectral radius {rho:.4f})")

    # closed-loop equilibrium under the mean disturbance
    drift = sys.B @ (u_eq - K_L @ x_ref) + w_nom
    x_c = np.linalg.solve(np.eye(n) - A_K, drift)

    W0 = geometry.translate(sys.W, -w_nom)
    # states whose local-feedback input is admissible
    input_ok = Polytope(sys.U.H @ K_L, sys.U.h - sys.U.H @ (u_eq - K_L @ x_ref))
    seed = geometry.remove_redundancy(geometry.intersect(X_N, input_ok))
    # work in error coordinates around the shifted equilibrium
    seed_err = geometry.translate(seed, -x_c)
    F = safesets.max_robust_invariant(A_K, seed_err, W0)
    if geometry.is_empty(F):
        raise RmpcError("terminal set is empty")
    Xt = geometry.translate(F, x_c)

    # post-verify invariance under the true dynamics and full W
    w_verts = safesets._disturbance_vertices(sys.W)
    if sys.n <= 2:
        pts = geometry.vertices(Xt)
    else:
        pts = geometry.sample(Xt, np.random.default_rng(0), verify_samples)
    for x in pts:
        u = u_eq + K_L @ (x - x_ref)
        for w in w_verts:
            nxt = sys.A @ x + sys.B @ u + w
            if not Xt.contains(nxt, tol=geometry.EPS_SET):
                raise safesets.VerificationError(
                    f"terminal set not invariant: x={x}, w={w}", witness=(x, w))
    return Xt


@dataclass
class RmpcConfig:
    N: int
    P_weight: float
    Q_weight: float
    x_ref: np.ndarray
    tightened: list
    X_t: Polytope
    K_L: np.ndarray
    w_nom: np.ndarray
    u_eq: np.ndarray
    _controller: object = field(default=None, repr=False, compare=False)

    def controller(self, sys):
        if self._controller is None or self._controller.sys is not sys:
            self._controller = RmpcController(sys, self)
        return self._controller


def build_rmpc_config(sys, N=10, P_weight=1.0, Q_weight=1.0, x_ref=None,
                      w_nom=None, K_L=None, X_t=None):
    """Assemble tightened constraints, local gain and terminal set."""
    n, m = sys.n, sys.m
    x_ref = np.zeros(n) if x_ref is None else np.asarray(x_ref, dtype=float).ravel()
    w_nom = _box_center(sys.W) if w_nom is None else np.asarray(w_nom, dtype=float).ravel()
    if K_L is None:
        K_L = dlqr(sys.A, sys.B)
    K_L = np.atleast_2d(np.asarray(K_L, dtype=float))
    # steady input holding x_ref under the mean disturbance
    rhs = (np.eye(n) - sys.A) @ x_ref - w_nom
    u_eq, res, *_ = np.linalg.lstsq(sys.B, rhs, rcond=None)
    if np.linalg.norm(sys.B @ u_eq - rhs) > 1e-6:
        logger.warning("x_ref is not an equilibrium; terminal set may be off-center")
    W0 = geometry.translate(sys.W, -w_nom)
    tightened = tightened_constraints(sys.X, sys.A, W0, N)
    if X_t is None:
        X_t = terminal_set(sys, K_L, tightened[N], x_ref=x_ref, u_eq=u_eq,
                           w_nom=w_nom)
    return RmpcConfig(N=N, P_weight=P_weight, Q_weight=Q_weight, x_ref=x_ref,
                      tightened=tightened, X_t=X_t, K_L=K_L, w_nom=w_nom,
                      u_eq=u_eq)


class RmpcController:
    """Condensed-LP robust MPC; callable as kappa(x) -> u.

    Predicted states x(k) = A^k x0 + S_k u + d_k (d_k accumulates the
    nominal disturbance). Cost P * sum_k ||x(k)-x_ref||_1 over k=1..N
    plus Q * sum_k ||u(k)||_1, both via epigraph variables, solved as one
    inequality-form LP. Only the right-hand side depends on x0, so the
    constraint matrix is built once.
    """

    def __init__(self, sys, cfg):
        self.sys = sys
        self.cfg = cfg
        n, m, N = sys.n, sys.m, cfg.N
        A, B = sys.A, sys.B
        w_nom = cfg.w_nom

        A_pows = [np.eye(n)]
        for _ in range(N):
            A_pows.append(A @ A_pows[-1])
        # x(k) = A^k x0 + S[k] @ u_flat + d[k]
        S = [np.zeros((n, m * N))]
        d = [np.zeros(n)]
        for k in range(1, N + 1):
            Sk = np.zeros((n, m * N))
            for j in range(k):
                Sk[:, j * m:(j + 1) * m] = A_pows[k - 1 - j] @ B
            S.append(Sk)
            d.append(A @ d[k - 1] + w_nom)

        nu = m * N
        ntx = n * N  # state deviation epigraphs, k = 1..N
        ntu = m * N
        nv = nu + ntx + ntu
        rows_G, rows_c, rows_x0 = [], [], []

        def add(row_u, row_tx, row_tu, const, x0_coef):
            row = np.zeros(nv)
            row[:nu] = row_u
            if row_tx is not None:
                row[nu + row_tx[0]] = row_tx[1]
            if row_tu is not None:
                row[nu + ntx + row_tu[0]] = row_tu[1]
            rows_G.append(row)
            rows_c.append(const)
            rows_x0.append(x0_coef)

        x_ref = cfg.x_ref
        for k in range(1, N + 1):
            for i in range(n):
                tx_idx = (k - 1) * n + i
                add(S[k][i], (tx_idx, -1.0), None,
                    x_ref[i] - d[k][i], A_pows[k][i])
                add(-S[k][i], (tx_idx, -1.0), None,
                    d[k][i] - x_ref[i], -A_pows[k][i])
        for j in range(nu):
            e = np.zeros(nu)
            e[j] = 1.0
            add(e, None, (j, -1.0), 0.0, np.zeros(n))
            add(-e, None, (j, -1.0), 0.0, np.zeros(n))
        for k in range(1, N):
            Xk = cfg.tightened[k]
            for Hi, hi in zip(Xk.H, Xk.h):
                add(Hi @ S[k], None, None, hi - Hi @ d[k], Hi @ A_pows[k])
        for Hi, hi in zip(cfg.X_t.H, cfg.X_t.h):
            add(Hi @ S[N], None, None, hi - Hi @ d[N], Hi @ A_pows[N])
        for k in range(N):
            for Hi, hi in zip(sys.U.H, sys.U.h):
                row_u = np.zeros(nu)
                row_u[k * m:(k + 1) * m] = Hi
                add(row_u, None, None, hi, np.zeros(n))

        self.G = np.array(rows_G)
        self.g_const = np.array(rows_c)
        self.Gx0 = np.array(rows_x0)
        P_vec = np.broadcast_to(np.asarray(cfg.P_weight, dtype=float), (n,))
        Q_vec = np.broadcast_to(np.asarray(cfg.Q_weight, dtype=float), (m,))
        self.c = np.concatenate([
            np.zeros(nu),
            np.tile(P_vec, N),
            np.tile(Q_vec, N),
        ])
        self.nonneg = np.concatenate([
            np.zeros(nu, dtype=bool),
            np.ones(ntx + ntu, dtype=bool),
        ])
        self._nu = nu

    def solve(self, x):
        x = np.asarray(x, dtype=float).ravel()
        g = self.g_const - self.Gx0 @ x
        res = lp.solve_lp(self.c, self.G, g, nonneg=self.nonneg)
        if res.status == lp.INFEASIBLE:
            raise RmpcInfeasibleError(f"MPC infeasible at x={x}")
        if res.status != lp.OPTIMAL:
            raise RmpcError(f"unexpected LP status {res.status}")
        return res

    def __call__(self, x):
        res = self.solve(x)
        u = res.x[:self.sys.m]
        if not self.sys.U.contains(u, tol=1e-6):
            raise RmpcError(f"computed input {u} violates U")
        return u

    def cost(self, x):
        return self.solve(x).value


def rmpc_control(cfg, sys, x):
    """First input of the optimal MPC sequence at state x."""
    return cfg.controller(sys)(x)
