"""Adaptive cruise control case study.

State x = (s, v): gap to the front vehicle and ego velocity. The front
vehicle's velocity enters the dynamics as the additive perturbation
w(t) = (delta * v_f(t), 0), so a v_f range [lo, hi] induces the
disturbance box W = [delta*lo, delta*hi] x {0}.
"""

import concurrent.futures
import csv
from dataclasses import dataclass, field

import numpy as np

from oic import geometry, rmpc, runtime, safesets, system
from oic.geometry import Polytope
from oic.system import LtiSystem, PerturbationSource

DELTA = 0.1     # control period
DRAG = 0.2      # velocity drag coefficient

S_RANGE = (120.0, 180.0)
V_RANGE = (25.0, 55.0)
U_RANGE = (-40.0, 40.0)
X_REF = (150.0, 40.0)
DEFAULT_VF_RANGE = (30.0, 50.0)


def build_acc_system(v_f_range=DEFAULT_VF_RANGE, N=10, P_weight=(5.0, 0.0),
                     Q_weight=1.0):
    """ACC plant plus its robust-MPC configuration.

    The default state cost penalizes only the gap deviation: the baseline
    controller then tracks the front vehicle tightly (the conservative
    behavior skipping is measured against), while velocity floats.
    """
    A = np.array([[1.0, -DELTA], [0.0, 1.0 - DRAG * DELTA]])
    B = np.array([[0.0], [DELTA]])
    X = Polytope.from_box([S_RANGE[0], V_RANGE[0]], [S_RANGE[1], V_RANGE[1]])
    U = Polytope.from_box([U_RANGE[0]], [U_RANGE[1]])
    lo, hi = v_f_range
    W = Polytope.from_box([DELTA * lo, 0.0], [DELTA * hi, 0.0])
    sys = LtiSystem(A=A, B=B, X=X, U=U, W=W)
    cfg = rmpc.build_rmpc_config(sys, N=N, P_weight=np.asarray(P_weight),
                                 Q_weight=Q_weight, x_ref=np.array(X_REF))
    return sys, cfg


@dataclass(frozen=True)
class AccScenario:
    """Front-vehicle velocity pattern for one experiment."""

    name: str
    pattern: str                       # sinusoid | pure_random | random_walk
    v_f_range: tuple = DEFAULT_VF_RANGE
    v_e: float = 40.0
    a_f: float = 9.0
    noise_range: tuple = (-1.0, 1.0)   # sinusoid additive disturbance
    accel_bound: tuple = (-20.0, 20.0)  # random_walk acceleration bound
    seed: int = 0


SCENARIOS = {
    "headline": AccScenario("headline", "sinusoid", a_f=9.0, noise_range=(-1.0, 1.0)),
    "ex1": AccScenario("ex1", "random_walk", v_f_range=(30.0, 50.0)),
    "ex2": AccScenario("ex2", "random_walk", v_f_range=(32.5, 47.5)),
    "ex3": AccScenario("ex3", "random_walk", v_f_range=(35.0, 45.0)),
    "ex4": AccScenario("ex4", "random_walk", v_f_range=(38.0, 42.0)),
    "ex5": AccScenario("ex5", "random_walk", v_f_range=(39.0, 41.0)),
    "ex6": AccScenario("ex6", "pure_random"),
    "ex7": AccScenario("ex7", "random_walk"),
    "ex8": AccScenario("ex8", "sinusoid", a_f=5.0, noise_range=(-5.0, 5.0)),
    "ex9": AccScenario("ex9", "sinusoid", a_f=8.0, noise_range=(-2.0, 2.0)),
    "ex10": AccScenario("ex10", "sinusoid", a_f=9.0, noise_range=(-1.0, 1.0)),
}


class FrontVelocitySource(PerturbationSource):
    """Perturbation stream w(t) = (delta * v_f(t), 0) for a scenario."""

    def __init__(self, scenario, seed=None, clairvoyant=False):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.clairvoyant = clairvoyant
        self._rng = np.random.default_rng(self.seed)
        self._vf = []

    def _extend(self, t):
        sc = self.scenario
        lo, hi = sc.v_f_range
        while len(self._vf) <= t:
            k = len(self._vf)
            if sc.pattern == "sinusoid":
                noise = self._rng.uniform(*sc.noise_range)
                v = sc.v_e + sc.a_f * np.sin(np.pi / 2.0 * DELTA * k) + noise
            elif sc.pattern == "pure_random":
                v = self._rng.uniform(lo, hi)
            elif sc.pattern == "random_walk":
                if k == 0:
                    v = self._rng.uniform(lo, hi)
                else:
                    v = self._vf[-1] + DELTA * self._rng.uniform(*sc.accel_bound)
            else:
                raise ValueError(f"unknown pattern {sc.pattern!r}")
            self._vf.append(float(np.clip(v, lo, hi)))

    def velocity(self, t):
        self._extend(t)
        return self._vf[t]

    def query(self, t):
        return np.array([DELTA * self.velocity(t), 0.0])

    def clone(self, seed):
        return FrontVelocitySource(self.scenario, seed=seed,
                                   clairvoyant=self.clairvoyant)


_trace_cache = {}


def front_velocity(scenario, t):
    """Front-vehicle velocity at step t (deterministic per scenario seed)."""
    key = scenario
    src = _trace_cache.get(key)
    if src is None:
        src = FrontVelocitySource(scenario)
        _trace_cache[key] = src
    return src.velocity(t)


# ---------------------------------------------------------------------------
# experiments

def build_scenario_artifacts(name, **system_kwargs):
    """System, controller config, and safe-set bundle for one scenario.

    Each v_f range induces its own disturbance box and hence its own
    bundle; Ex.1-Ex.5 therefore get progressively larger safe sets.
    """
    scenario = SCENARIOS[name]
    sys, cfg = build_acc_system(v_f_range=scenario.v_f_range, **system_kwargs)
    bundle = safesets.compute_bundle(sys, cfg)
    return scenario, sys, cfg, bundle


def _make_policy(kind, agent=None):
    if kind == "rmpc_only":
        return runtime.AlwaysActuatePolicy()
    if kind == "bang_bang":
        return runtime.BangBangPolicy()
    if kind == "adversarial":
        return runtime.AdversarialSkipPolicy()
    if kind == "drl":
        if agent is None:
            raise ValueError("drl policy needs a trained agent")
        from oic.skip_drl import DrlPolicy
        return DrlPolicy(agent)
    raise ValueError(f"unknown policy kind {kind!r}")


def _episode_seed(master_seed, episode):
    return master_seed ^ episode


def _run_paired_episode(sys, bundle, kappa, scenario, policy_kinds, agent,
                        master_seed, episode, T):
    """All requested policies on one episode under identical w sequences."""
    seed = _episode_seed(master_seed, episode)
    rng = np.random.default_rng([seed, 0xA5])
    x0 = geometry.sample(bundle.X_prime, rng, 1)[0]
    out = {"episode": episode, "x0": x0}
    for kind in policy_kinds:
        policy = _make_policy(kind, agent=agent)
        src = FrontVelocitySource(scenario, seed=seed)
        log = runtime.run_episode(sys, bundle, kappa, policy, src, T, x0)
        out[kind] = runtime.metrics(log)
    return out


_WORKER_CTX = {}


def _init_worker(payload):
    _WORKER_CTX.update(payload)


def _episode_worker(episode):
    c = _WORKER_CTX
    return _run_paired_episode(c["sys"], c["bundle"], c["kappa"],
                               c["scenario"], c["policy_kinds"], c["agent"],
                               c["master_seed"], episode, c["T"])


@dataclass
class ExperimentReport:
    """Paired-seed comparison of skip policies on one scenario."""

    name: str
    episodes: int
    T: int
    seed: int
    policy_kinds: tuple
    rows: list = field(default_factory=list)

    def mean_energy(self, kind):
        return float(np.mean([r[kind]["energy"] for r in self.rows]))

    def mean_skip_rate(self, kind):
        return float(np.mean([r[kind]["skip_rate"] for r in self.rows]))

    def episode_savings(self, kind, base="rmpc_only"):
        return np.array([
            runtime.saving_percent(r[base]["energy"], r[kind]["energy"])
            for r in self.rows
        ])

    def mean_saving(self, kind, base="rmpc_only"):
        eb = self.mean_energy(base)
        return runtime.saving_percent(eb, self.mean_energy(kind))

    def total_violations(self):
        return sum(r[k]["safety_violations"]
                   for r in self.rows for k in self.policy_kinds)

    def summary(self):
        out = {"scenario": self.name, "episodes": self.episodes, "T": self.T,
               "seed": self.seed, "safety_violations": self.total_violations()}
        for kind in self.policy_kinds:
            out[f"energy_{kind}"] = self.mean_energy(kind)
            out[f"skip_rate_{kind}"] = self.mean_skip_rate(kind)
            if kind != "rmpc_only" and "rmpc_only" in self.policy_kinds:
                out[f"saving_{kind}"] = self.mean_saving(kind)
        return out


def run_experiment(name, episodes=500, T=100, seed=0, jobs=1,
                   policy_kinds=("rmpc_only", "bang_bang", "drl"),
                   agent=None, artifacts=None):
    """Run one scenario's paired-seed policy comparison.

    Episode e is fully determined by seed XOR e (initial state and
    perturbation trace), so results are independent of the job count.
    """
    if artifacts is None:
        scenario, sys, cfg, bundle = build_scenario_artifacts(name)
    else:
        scenario, sys, cfg, bundle = artifacts
    kappa = cfg.controller(sys)
    report = ExperimentReport(name=name, episodes=episodes, T=T, seed=seed,
                              policy_kinds=tuple(policy_kinds))
    if jobs <= 1:
        for ep in range(episodes):
            report.rows.append(_run_paired_episode(
                sys, bundle, kappa, scenario, policy_kinds, agent,
                seed, ep, T))
    else:
        payload = {"sys": sys, "bundle": bundle, "kappa": kappa,
                   "scenario": scenario, "policy_kinds": tuple(policy_kinds),
                   "agent": agent, "master_seed": seed, "T": T}
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=jobs, initializer=_init_worker,
                initargs=(payload,)) as pool:
            rows = list(pool.map(_episode_worker, range(episodes)))
        rows.sort(key=lambda r: r["episode"])
        report.rows = rows
    return report


def report_csv_rows(report):
    """Per-episode rows: energies, skip rates, and savings vs rmpc_only."""
    kinds = report.policy_kinds
    header = ["episode", "x0_s", "x0_v"]
    for k in kinds:
        header += [f"energy_{k}", f"skip_count_{k}", f"skip_rate_{k}",
                   f"forced_{k}"]
    for k in kinds:
        if k != "rmpc_only":
            header.append(f"saving_{k}")
    yield header
    for r in report.rows:
        row = [r["episode"], f"{r['x0'][0]:.17g}", f"{r['x0'][1]:.17g}"]
        for k in kinds:
            m = r[k]
            row += [f"{m['energy']:.17g}", m["skip_count"],
                    f"{m['skip_rate']:.17g}", m["forced_actuations"]]
        for k in kinds:
            if k != "rmpc_only":
                s = runtime.saving_percent(r["rmpc_only"]["energy"],
                                           r[k]["energy"])
                row.append(f"{s:.17g}")
        yield row


def write_report_csv(report, path):
    with open(path, "w", newline="") as f:
        f.write(f"# scenario {report.name} episodes {report.episodes} "
                f"T {report.T} seed {report.seed}\n")
        wr = csv.writer(f)
        for row in report_csv_rows(report):
            wr.writerow(row)


def read_report_csv(path):
    """Load a report CSV back into an ExperimentReport."""
    with open(path) as f:
        header_line = f.readline().strip()
        parts = header_line.lstrip("# ").split()
        meta = dict(zip(parts[::2], parts[1::2]))
        rd = csv.reader(f)
        cols = next(rd)
        kinds = [c[len("energy_"):] for c in cols if c.startswith("energy_")]
        report = ExperimentReport(
            name=meta["scenario"], episodes=int(meta["episodes"]),
            T=int(meta["T"]), seed=int(meta["seed"]),
            policy_kinds=tuple(kinds))
        for raw in rd:
            row = dict(zip(cols, raw))
            rec = {"episode": int(row["episode"]),
                   "x0": np.array([float(row["x0_s"]), float(row["x0_v"])])}
            for k in kinds:
                skip_count = int(row[f"skip_count_{k}"])
                rec[k] = {
                    "energy": float(row[f"energy_{k}"]),
                    "skip_count": skip_count,
                    "skip_rate": float(row[f"skip_rate_{k}"]),
                    "forced_actuations": int(row[f"forced_{k}"]),
                    "safety_violations": 0,
                    "steps": report.T,
                }
            report.rows.append(rec)
        return report


def savings_histogram(report, kind="drl", bins=20):
    """Histogram of per-episode savings; plot-ready (bin_lo, bin_hi, count)."""
    savings = report.episode_savings(kind)
    counts, edges = np.histogram(savings, bins=bins)
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(len(counts))]


def write_histogram_csv(report, path, kinds=None, bins=20):
    kinds = [k for k in report.policy_kinds if k != "rmpc_only"] \
        if kinds is None else kinds
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["policy", "bin_lo", "bin_hi", "count"])
        for kind in kinds:
            for lo, hi, cnt in savings_histogram(report, kind, bins=bins):
                wr.writerow([kind, f"{lo:.17g}", f"{hi:.17g}", cnt])
