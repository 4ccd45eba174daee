"""Online monitor loop: membership check, skip dispatch, forced actuation.

Implements the runtime protocol: when the state is inside the
strengthened safe set X' the skip policy is consulted; otherwise
actuation of the safe controller is forced. Either way the state can
never leave the robust invariant set X_I.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from oic import geometry, system
from oic.rmpc import RmpcInfeasibleError

logger = logging.getLogger(__name__)

REGION_XPRIME = "X'"
REGION_SHELL = "X_I\\X'"
REGION_OUTSIDE = "outside"


class SafetyViolationError(Exception):
    """State left the safe set X; indicates a broken bundle or bug."""


class BundleError(Exception):
    """The controller failed inside its guaranteed feasible region."""


class SkipPolicy:
    """Decision source consulted only when the state is inside X'."""

    name = "abstract"
    needs_forecast = False

    def decide(self, x, w_hist, forecast=None):
        raise NotImplementedError

    def reset(self):
        pass


class AlwaysActuatePolicy(SkipPolicy):
    name = "rmpc_only"

    def decide(self, x, w_hist, forecast=None):
        return 1


class BangBangPolicy(SkipPolicy):
    """Skip whenever inside X' (the monitor supplies the other branch)."""

    name = "bang_bang"

    def decide(self, x, w_hist, forecast=None):
        return 0


class AdversarialSkipPolicy(SkipPolicy):
    """Always proposes skipping; exists to stress the safety argument."""

    name = "adversarial"

    def decide(self, x, w_hist, forecast=None):
        return 0


def bang_bang_decide(x):
    """Pure bang-bang rule inside X': always skip."""
    return 0


@dataclass
class StepRecord:
    t: int
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z_proposed: int
    z_applied: int
    region: str
    u_norm1: float
    reward: float


@dataclass
class EpisodeLog:
    records: list = field(default_factory=list)
    x_final: np.ndarray = None
    policy_name: str = ""
    seed: int = None

    def inputs(self):
        return [r.u for r in self.records]


CSV_STATIC_COLS = ["t"]


def episode_csv_header(n, m):
    cols = ["t"]
    cols += [f"x{i}" for i in range(n)]
    cols += [f"u{i}" for i in range(m)]
    cols += [f"w{i}" for i in range(n)]
    cols += ["z_prop", "z_appl", "region", "unorm1", "reward"]
    return cols


def episode_csv_rows(log):
    for r in log.records:
        row = [r.t]
        row += [f"{v:.17g}" for v in r.x]
        row += [f"{v:.17g}" for v in r.u]
        row += [f"{v:.17g}" for v in r.w]
        row += [r.z_proposed, r.z_applied, r.region, f"{r.u_norm1:.17g}",
                f"{r.reward:.17g}"]
        yield row


def write_episode_csv(log, path, n, m):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(episode_csv_header(n, m))
        for row in episode_csv_rows(log):
            wr.writerow(row)


def classify_region(bundle, x, tol=geometry.EPS_FEAS):
    """Conservative region tag: near-boundary X' states count as outside."""
    if bundle.X_prime.contains(x, tol=-tol):
        return REGION_XPRIME
    if bundle.X_I.contains(x, tol=tol):
        return REGION_SHELL
    return REGION_OUTSIDE


def run_episode(sys, bundle, kappa, policy, w_src, T, x0,
                reward_weights=(0.01, 0.0001)):
    """Execute the monitored loop for T steps and log every transition.

    kappa is the safe controller (state -> input). The per-step reward is
    recorded for every policy since it is computable from the applied
    input and the successor region at no extra cost.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if bundle.system_hash and bundle.system_hash != sys.definition_hash():
        raise BundleError("bundle provenance hash does not match the system")
    if not bundle.X_I.contains(x0):
        raise ValueError("initial state must lie inside X_I")
    w1, w2 = reward_weights
    log = EpisodeLog(policy_name=policy.name)
    policy.reset()
    x = x0
    w_hist = []
    for t in range(T):
        region = classify_region(bundle, x)
        if region == REGION_OUTSIDE:
            raise SafetyViolationError(f"state {x} left X_I at step {t}")
        if not sys.X.contains(x):
            raise SafetyViolationError(f"state {x} left X at step {t}")
        if region == REGION_XPRIME:
            forecast = None
            if policy.needs_forecast:
                forecast = w_src.forecast(t, policy.horizon)
            z_prop = int(policy.decide(x, w_hist, forecast=forecast))
            z_appl = z_prop
        else:
            z_prop = 1
            z_appl = 1
        if z_appl == 1:
            try:
                u = np.asarray(kappa(x), dtype=float).ravel()
            except RmpcInfeasibleError as exc:
                raise BundleError(
                    f"controller infeasible inside X_I at step {t}: {exc}"
                ) from exc
        else:
            u = sys.u_skip
        w = np.asarray(w_src.query(t), dtype=float).ravel()
        x_next = system.step(sys, x, u, w, strict=False)
        # reward per the skip-learning objective; reuses the applied input
        r1 = 0.0 if bundle.X_prime.contains(x_next, tol=-geometry.EPS_FEAS) else 1.0
        r2 = 0.0 if (z_appl == 0 and region == REGION_XPRIME) else float(np.abs(u).sum())
        reward = -w1 * r1 - w2 * r2
        log.records.append(StepRecord(
            t=t, x=x, u=u, w=w, z_proposed=z_prop, z_applied=z_appl,
            region=region, u_norm1=float(np.abs(u).sum()), reward=reward,
        ))
        x = x_next
        w_hist.append(w)
    log.x_final = x
    if not bundle.X_I.contains(x):
        raise SafetyViolationError("final state left X_I")
    return log


def metrics(log):
    """Aggregate episode metrics from the log."""
    T = len(log.records)
    total_energy = system.energy(log.inputs())
    skip_count = sum(1 for r in log.records if r.z_applied == 0)
    forced = sum(1 for r in log.records if r.region == REGION_SHELL)
    violations = sum(1 for r in log.records if r.region == REGION_OUTSIDE)
    return {
        "energy": total_energy,
        "skip_count": skip_count,
        "skip_rate": skip_count / T if T else 0.0,
        "forced_actuations": forced,
        "safety_violations": violations,
        "steps": T,
    }


def saving_percent(energy_base, energy_policy):
    if energy_base == 0:
        return 0.0
    return 100.0 * (energy_base - energy_policy) / energy_base
