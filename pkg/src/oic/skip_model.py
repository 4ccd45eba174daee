"""Model-based skipping decisions with known future perturbations.

Given a forecast w(t..t+H-1) and an evaluable controller kappa, pick the
binary skip sequence minimizing the horizon energy sum ||u(k)||_1 subject
to every intermediate state staying in the strengthened safe set X'.
Only the first element of the optimal sequence is applied.
"""

import logging
from dataclasses import dataclass

import numpy as np

from oic import geometry
from oic.runtime import SkipPolicy

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 10


@dataclass
class SkipPlan:
    """One candidate skip schedule with its simulated trajectory."""

    z: list          # H booleans (as ints)
    u: list          # H input vectors
    x: list          # H+1 state vectors
    cost: float      # sum of ||u(k)||_1

    def check(self, sys, w_forecast, kappa, X_prime, tol=geometry.EPS_SET):
        """Replay the plan and verify all consistency invariants."""
        H = len(self.z)
        assert len(self.u) == H and len(self.x) == H + 1
        x = np.asarray(self.x[0], dtype=float)
        total = 0.0
        for k in range(H):
            u_expect = sys.u_skip if self.z[k] == 0 else np.asarray(
                kappa(x), dtype=float).ravel()
            if not np.allclose(self.u[k], u_expect, atol=tol):
                raise AssertionError(f"plan input {k} inconsistent with z")
            x = sys.A @ x + sys.B @ np.asarray(self.u[k], dtype=float).ravel() \
                + np.asarray(w_forecast[k], dtype=float).ravel()
            if not np.allclose(x, self.x[k + 1], atol=tol):
                raise AssertionError(f"plan state {k + 1} inconsistent")
            if not X_prime.contains(x, tol=tol):
                raise AssertionError(f"plan state {k + 1} leaves X'")
            total += float(np.abs(self.u[k]).sum())
        if abs(total - self.cost) > tol:
            raise AssertionError("plan cost inconsistent")
        return True


def _step_choice(sys, x, z, w, kappa):
    """Input and successor for one branch; None input if kappa fails."""
    if z == 0:
        u = sys.u_skip
    else:
        try:
            u = np.asarray(kappa(x), dtype=float).ravel()
        except Exception:
            return None, None
    x_next = sys.A @ x + sys.B @ u + np.asarray(w, dtype=float).ravel()
    return u, x_next


def plan_branch_and_bound(x0, w_forecast, kappa, X_prime, sys, H=None):
    """Cost-minimal feasible SkipPlan by depth-first branch-and-bound.

    The z=0 branch is expanded first and the incumbent is only replaced
    on strictly lower cost, so among equal-cost optima the plan that
    skips lexicographically earliest wins. Partial cost >= incumbent
    prunes (admissible: stage costs are nonnegative); a state leaving X'
    prunes the branch. Returns None when no sequence is feasible.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if H is None:
        H = len(w_forecast)
    if len(w_forecast) < H:
        raise ValueError("forecast shorter than the horizon")
    best = {"cost": np.inf, "plan": None}

    def dfs(k, x, z_acc, u_acc, x_acc, cost):
        if cost >= best["cost"]:
            return
        if k == H:
            best["cost"] = cost
            best["plan"] = SkipPlan(z=list(z_acc), u=list(u_acc),
                                    x=list(x_acc), cost=cost)
            return
        for z in (0, 1):
            u, x_next = _step_choice(sys, x, z, w_forecast[k], kappa)
            if u is None:
                continue
            if not X_prime.contains(x_next, tol=geometry.EPS_FEAS):
                continue
            step_cost = float(np.abs(u).sum())
            if cost + step_cost >= best["cost"]:
                continue
            z_acc.append(z)
            u_acc.append(u)
            x_acc.append(x_next)
            dfs(k + 1, x_next, z_acc, u_acc, x_acc, cost + step_cost)
            z_acc.pop()
            u_acc.pop()
            x_acc.pop()

    dfs(0, x0, [], [], [x0], 0.0)
    return best["plan"]


def plan_exhaustive(x0, w_forecast, kappa, X_prime, sys, H=None):
    """Enumeration oracle: simulate all 2^H sequences, keep the best.

    Sequences are visited in lexicographic order with 0 before 1 and the
    incumbent replaced only on strict improvement, matching the
    branch-and-bound tie rule.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if H is None:
        H = len(w_forecast)
    best = None
    for code in range(2 ** H):
        z_seq = [(code >> (H - 1 - k)) & 1 for k in range(H)]
        x = x0
        xs, us = [x0], []
        cost = 0.0
        ok = True
        for k in range(H):
            u, x_next = _step_choice(sys, x, z_seq[k], w_forecast[k], kappa)
            if u is None or not X_prime.contains(x_next, tol=geometry.EPS_FEAS):
                ok = False
                break
            us.append(u)
            xs.append(x_next)
            cost += float(np.abs(u).sum())
            x = x_next
        if ok and (best is None or cost < best.cost):
            best = SkipPlan(z=z_seq, u=us, x=xs, cost=cost)
    return best


def decide_model_based(x, w_forecast, kappa, X_prime, sys, H=None):
    """First decision of the optimal plan; z=1 fallback when infeasible."""
    plan = plan_branch_and_bound(x, w_forecast, kappa, X_prime, sys, H=H)
    if plan is None:
        logger.info("no feasible skip plan at x=%s; actuating", x)
        return 1
    return int(plan.z[0])


class ModelBasedPolicy(SkipPolicy):
    """Skip policy driven by the horizon optimizer; needs a forecast."""

    name = "model_based"
    needs_forecast = True

    def __init__(self, kappa, bundle, sys, H=DEFAULT_HORIZON):
        self.kappa = kappa
        self.bundle = bundle
        self.sys = sys
        self.horizon = H

    def decide(self, x, w_hist, forecast=None):
        if forecast is None:
            raise ValueError(
                "model-based skipping needs known future perturbations; "
                "use a clairvoyant perturbation source"
            )
        return decide_model_based(x, forecast, self.kappa,
                                  self.bundle.X_prime, self.sys,
                                  H=self.horizon)
