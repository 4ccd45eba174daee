"""Command-line entry point: sets / train / evaluate / suite.

Configuration is a single TOML file; every run requires an explicit
seed (flag or config) so results are reproducible by construction.
Artifacts are plain text (bundles, networks) and CSV (reports, curves).
"""

import argparse
import csv
import logging
import pathlib
import sys as _sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from oic import acc, geometry, rmpc, runtime, safesets, skip_drl, system
from oic.geometry import Polytope

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SAFETY = 4
EXIT_VERIFICATION = 5


class ConfigError(Exception):
    pass


def load_config(path):
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _resolve_seed(args, config):
    seed = args.seed
    if seed is None:
        seed = config.get("run", {}).get("seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or [run] seed)")
    return int(seed)


def _build_from_config(config, scenario_name=None):
    """(scenario, sys, cfg) per the [system]/[rmpc] sections."""
    sys_sec = config.get("system", {})
    preset = sys_sec.get("preset", "acc")
    rm = config.get("rmpc", {})
    if preset == "acc":
        name = scenario_name or config.get("scenario", {}).get("name", "headline")
        if name not in acc.SCENARIOS:
            raise ConfigError(f"unknown scenario {name!r}")
        scenario = acc.SCENARIOS[name]
        kwargs = {}
        if "N" in rm:
            kwargs["N"] = int(rm["N"])
        if "P" in rm:
            kwargs["P_weight"] = np.asarray(rm["P"], dtype=float)
        if "Q" in rm:
            kwargs["Q_weight"] = np.asarray(rm["Q"], dtype=float)
        sys_, cfg = acc.build_acc_system(v_f_range=scenario.v_f_range, **kwargs)
        return scenario, sys_, cfg
    if preset == "matrices":
        try:
            A = np.asarray(sys_sec["A"], dtype=float)
            B = np.asarray(sys_sec["B"], dtype=float)
            X = Polytope.from_box(sys_sec["x_lo"], sys_sec["x_hi"])
            U = Polytope.from_box(sys_sec["u_lo"], sys_sec["u_hi"])
            W = Polytope.from_box(sys_sec["w_lo"], sys_sec["w_hi"])
        except KeyError as exc:
            raise ConfigError(f"missing system field {exc}") from exc
        u_skip = np.asarray(sys_sec.get("u_skip", np.zeros(B.shape[1])),
                            dtype=float)
        sys_ = system.LtiSystem(A=A, B=B, X=X, U=U, W=W, u_skip=u_skip)
        cfg = rmpc.build_rmpc_config(
            sys_,
            N=int(rm.get("N", 10)),
            P_weight=np.asarray(rm.get("P", 1.0), dtype=float),
            Q_weight=np.asarray(rm.get("Q", 1.0), dtype=float),
            x_ref=np.asarray(rm["x_ref"], dtype=float) if "x_ref" in rm else None,
        )
        return None, sys_, cfg
    raise ConfigError(f"unknown system preset {preset!r}")


def _bundle_path(out, scenario_name):
    return out / f"bundle_{scenario_name or 'system'}.txt"


def _agent_path(out, scenario_name):
    return out / f"agent_{scenario_name or 'system'}.txt"


def _compute_bundle(sys_, cfg, config):
    sets_sec = config.get("sets", {})
    method = sets_sec.get("method", "rmpc_feasible")
    if method == "rmpc_feasible":
        return safesets.compute_bundle(sys_, cfg, method=method)
    K = sets_sec.get("K")
    K = np.asarray(K, dtype=float) if K is not None else rmpc.dlqr(sys_.A, sys_.B)
    return safesets.compute_bundle(
        sys_, cfg, method=method, K=K,
        alpha=float(sets_sec.get("alpha", 1.0)),
        n=sets_sec.get("n"),
    )


def _load_bundle(path, sys_):
    if not path.exists():
        raise ConfigError(f"bundle not found: {path} (run the sets command first)")
    return safesets.bundle_from_text(path.read_text(),
                                     expected_system_hash=sys_.definition_hash())


def _hyper_from_config(config):
    d = config.get("drl", {})
    kwargs = {}
    for key in ("gamma", "lr", "eps_start", "eps_end", "eps_frac",
                "max_grad_norm"):
        if key in d:
            kwargs[key] = float(d[key])
    for key in ("replay_capacity", "batch_size", "target_period", "episodes",
                "steps_per_episode", "r", "learn_start"):
        if key in d:
            kwargs[key] = int(d[key])
    if "hidden" in d:
        kwargs["hidden"] = tuple(int(v) for v in d["hidden"])
    if "reward_weights" in d:
        kwargs["reward_weights"] = tuple(float(v) for v in d["reward_weights"])
    return skip_drl.Hyper(**kwargs)


def cmd_sets(args, config, out, seed, scenario_name=None, quiet=False):
    scenario, sys_, cfg = _build_from_config(config, scenario_name)
    bundle = _compute_bundle(sys_, cfg, config)
    name = scenario.name if scenario else None
    path = _bundle_path(out, name)
    path.write_text(safesets.bundle_to_text(bundle))
    if not quiet:
        print(f"bundle written to {path}")
        for label, S in (("X", bundle.X), ("X_I", bundle.X_I),
                         ("X'", bundle.X_prime)):
            print(f"  {label}: {S.H.shape[0]} rows")
        print("  nesting X' <= X_I <= X: verified")
    return EXIT_OK


def cmd_train(args, config, out, seed, scenario_name=None, quiet=False):
    scenario, sys_, cfg = _build_from_config(config, scenario_name)
    name = scenario.name if scenario else None
    bundle = _load_bundle(_bundle_path(out, name), sys_)
    if scenario is None:
        raise ConfigError("training needs a scenario-driven perturbation source")
    hyper = _hyper_from_config(config)
    kappa = cfg.controller(sys_)
    src = acc.FrontVelocitySource(scenario)
    agent, curve = skip_drl.train(sys_, bundle, kappa, src, hyper=hyper,
                                  seed=seed)
    apath = _agent_path(out, name)
    apath.write_text(skip_drl.agent_to_text(agent))
    cpath = out / f"curve_{name}.csv"
    skip_drl.write_curve_csv(curve, cpath, hyper=hyper, seed=seed)
    if not quiet:
        k = max(1, len(curve) // 10)
        first = np.mean([c["cumulative_reward"] for c in curve[:k]])
        last = np.mean([c["cumulative_reward"] for c in curve[-k:]])
        print(f"agent written to {apath}; curve to {cpath}")
        print(f"  mean cumulative reward: first 10% {first:.4f}, "
              f"last 10% {last:.4f}")
    return EXIT_OK


def cmd_evaluate(args, config, out, seed, scenario_name=None, quiet=False):
    scenario, sys_, cfg = _build_from_config(config, scenario_name)
    if scenario is None:
        raise ConfigError("evaluation needs a scenario")
    name = scenario.name
    bundle = _load_bundle(_bundle_path(out, name), sys_)
    run = config.get("run", {})
    episodes = int(run.get("episodes", 500))
    T = int(run.get("T", 100))
    kinds = tuple(config.get("policy", {}).get(
        "kinds", ["rmpc_only", "bang_bang", "adversarial", "drl"]))
    agent = None
    if "drl" in kinds:
        apath = _agent_path(out, name)
        if not apath.exists():
            raise ConfigError(f"agent not found: {apath} (run train first)")
        agent = skip_drl.agent_from_text(apath.read_text())
    report = acc.run_experiment(name, episodes=episodes, T=T, seed=seed,
                                jobs=args.jobs, policy_kinds=kinds,
                                agent=agent,
                                artifacts=(scenario, sys_, cfg, bundle))
    acc.write_report_csv(report, out / f"report_{name}.csv")
    acc.write_histogram_csv(report, out / f"histogram_{name}.csv")
    summary = report.summary()
    spath = out / f"summary_{name}.txt"
    with open(spath, "w") as f:
        for k, v in summary.items():
            f.write(f"{k} {v}\n")
    if not quiet:
        print(f"report written to {out / f'report_{name}.csv'}")
        for k, v in summary.items():
            print(f"  {k}: {v}")
    if summary["safety_violations"] > 0:
        return EXIT_SAFETY
    return EXIT_OK


SUITE_SCENARIOS = ("headline", "ex1", "ex2", "ex3", "ex4", "ex5",
                   "ex6", "ex7", "ex8", "ex9", "ex10")


def cmd_suite(args, config, out, seed, quiet=False):
    """sets -> train -> evaluate for every scenario; consolidated report."""
    failures = {}
    summaries = []
    worst = EXIT_OK
    for name in SUITE_SCENARIOS:
        try:
            cmd_sets(args, config, out, seed, scenario_name=name, quiet=True)
            cmd_train(args, config, out, seed, scenario_name=name, quiet=True)
            code = cmd_evaluate(args, config, out, seed, scenario_name=name,
                                quiet=True)
            if code != EXIT_OK:
                failures[name] = code
                worst = max(worst, code)
                continue
            with open(out / f"summary_{name}.txt") as f:
                summary = dict(ln.split(None, 1) for ln in f
                               if ln.strip())
            summaries.append((name, summary))
            if not quiet:
                print(f"{name}: saving_drl={summary.get('saving_drl', 'n/a').strip()} "
                      f"skip_rate_drl={summary.get('skip_rate_drl', 'n/a').strip()}")
        except Exception as exc:  # keep going; record the failure
            logger.exception("scenario %s failed", name)
            failures[name] = _exit_code_for(exc)
            worst = max(worst, failures[name])
    cols = ["scenario", "energy_rmpc_only", "energy_bang_bang", "energy_drl",
            "saving_bang_bang", "saving_drl", "skip_rate_drl",
            "safety_violations"]
    with open(out / "suite_report.csv", "w", newline="") as f:
        f.write(f"# seed {seed}\n")
        wr = csv.writer(f)
        wr.writerow(cols)
        for name, summary in summaries:
            wr.writerow([name] + [summary.get(c, "").strip() for c in cols[1:]])
    if failures:
        with open(out / "suite_failures.txt", "w") as f:
            for name, code in failures.items():
                f.write(f"{name} exit {code}\n")
        if not quiet:
            print(f"failed scenarios: {failures}")
    if not quiet:
        print(f"suite report written to {out / 'suite_report.csv'}")
    return worst


def _exit_code_for(exc):
    if isinstance(exc, (ConfigError, KeyError, ValueError)):
        return EXIT_CONFIG
    if isinstance(exc, (rmpc.RmpcInfeasibleError, rmpc.TighteningError,
                        runtime.BundleError, safesets.SafeSetError)) \
            and not isinstance(exc, safesets.VerificationError):
        return EXIT_INFEASIBLE
    if isinstance(exc, runtime.SafetyViolationError):
        return EXIT_SAFETY
    if isinstance(exc, safesets.VerificationError):
        return EXIT_VERIFICATION
    return EXIT_CONFIG


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oic",
        description="Opportunistic intermittent control: safe sets, robust "
                    "MPC, skip-decision training and evaluation.")
    parser.add_argument("--config", type=pathlib.Path, required=False,
                        help="TOML configuration file")
    parser.add_argument("--out", type=pathlib.Path, default=pathlib.Path("."),
                        help="output directory for artifacts")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed (overrides [run] seed)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel episode workers for evaluation")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sets", help="compute and persist the safe-set bundle")
    sub.add_parser("train", help="train the skip agent for a scenario")
    sub.add_parser("evaluate", help="paired-seed policy comparison")
    sub.add_parser("suite", help="sets+train+evaluate for every scenario")
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        seed = _resolve_seed(args, config)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "sets":
            return cmd_sets(args, config, out, seed)
        if args.command == "train":
            return cmd_train(args, config, out, seed)
        if args.command == "evaluate":
            return cmd_evaluate(args, config, out, seed)
        if args.command == "suite":
            return cmd_suite(args, config, out, seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except Exception as exc:
        code = _exit_code_for(exc)
        print(f"error: {exc}", file=_sys.stderr)
        return code


if __name__ == "__main__":
    raise SystemExit(main())
