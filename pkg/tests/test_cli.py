import numpy as np
import pytest

from oic import acc, cli, safesets, skip_drl

TINY_CONFIG = """
[scenario]
name = "ex5"

[run]
episodes = 2
T = 10

[drl]
episodes = 2
steps_per_episode = 5
learn_start = 8
batch_size = 4

[policy]
kinds = ["rmpc_only", "bang_bang", "drl"]
"""


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(TINY_CONFIG)
    return path


def run_cli(*argv):
    return cli.main(list(argv))


def test_missing_seed_is_config_error(tmp_path, tiny_config, capsys):
    code = run_cli("--config", str(tiny_config), "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_CONFIG
    assert "seed" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    code = run_cli("--config", str(tmp_path / "nope.toml"), "--seed", "1",
                   "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_CONFIG


def test_malformed_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario\nname=")
    code = run_cli("--config", str(bad), "--seed", "1",
                   "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_CONFIG


def test_unknown_scenario(tmp_path):
    cfgf = tmp_path / "c.toml"
    cfgf.write_text('[scenario]\nname = "ex99"\n')
    code = run_cli("--config", str(cfgf), "--seed", "1",
                   "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_CONFIG


def test_train_without_bundle(tmp_path, tiny_config):
    code = run_cli("--config", str(tiny_config), "--seed", "1",
                   "--out", str(tmp_path), "train")
    assert code == cli.EXIT_CONFIG


def test_seed_from_config(tmp_path):
    cfgf = tmp_path / "c.toml"
    cfgf.write_text('[scenario]\nname = "ex5"\n[run]\nseed = 7\n')
    code = run_cli("--config", str(cfgf), "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_OK


def test_sets_roundtrip_and_provenance(tmp_path, tiny_config, capsys):
    code = run_cli("--config", str(tiny_config), "--seed", "1",
                   "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "nesting" in out
    bpath = tmp_path / "bundle_ex5.txt"
    assert bpath.exists()
    sys_, _ = acc.build_acc_system(v_f_range=acc.SCENARIOS["ex5"].v_f_range)
    bundle = safesets.bundle_from_text(
        bpath.read_text(), expected_system_hash=sys_.definition_hash())
    assert bundle.X_prime.H.shape[1] == 2

    # a bundle for the wrong system must be rejected at load time
    other_sys, _ = acc.build_acc_system(v_f_range=(30.0, 50.0))
    with pytest.raises(safesets.SafeSetError):
        safesets.bundle_from_text(
            bpath.read_text(),
            expected_system_hash=other_sys.definition_hash())


def test_corrupted_bundle_exit_code(tmp_path, tiny_config):
    assert run_cli("--config", str(tiny_config), "--seed", "1",
                   "--out", str(tmp_path), "sets") == cli.EXIT_OK
    bpath = tmp_path / "bundle_ex5.txt"
    text = bpath.read_text().replace("hash ", "hash f")
    bpath.write_text(text)
    code = run_cli("--config", str(tiny_config), "--seed", "1",
                   "--out", str(tmp_path), "train")
    assert code == cli.EXIT_INFEASIBLE


def test_full_pipeline_and_artifacts(tmp_path, tiny_config):
    args = ("--config", str(tiny_config), "--seed", "5", "--out", str(tmp_path))
    assert run_cli(*args, "sets") == cli.EXIT_OK
    assert run_cli(*args, "train") == cli.EXIT_OK
    assert run_cli(*args, "evaluate") == cli.EXIT_OK

    agent = skip_drl.agent_from_text((tmp_path / "agent_ex5.txt").read_text())
    assert agent.r == 1

    curve = (tmp_path / "curve_ex5.csv").read_text().splitlines()
    assert curve[0].startswith("# hyper") and len(curve) == 3 + 2

    report = acc.read_report_csv(tmp_path / "report_ex5.csv")
    assert report.episodes == 2 and report.T == 10
    assert report.policy_kinds == ("rmpc_only", "bang_bang", "drl")

    summary = (tmp_path / "summary_ex5.txt").read_text()
    assert "saving_drl" in summary and "safety_violations 0" in summary
    assert (tmp_path / "histogram_ex5.csv").exists()


def test_train_deterministic(tmp_path, tiny_config):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        out.mkdir()
        args = ("--config", str(tiny_config), "--seed", "3", "--out", str(out))
        assert run_cli(*args, "sets") == cli.EXIT_OK
        assert run_cli(*args, "train") == cli.EXIT_OK
        outs.append(out)
    assert (outs[0] / "agent_ex5.txt").read_bytes() == \
        (outs[1] / "agent_ex5.txt").read_bytes()
    assert (outs[0] / "curve_ex5.csv").read_bytes() == \
        (outs[1] / "curve_ex5.csv").read_bytes()


def test_evaluate_jobs_independent(tmp_path, tiny_config):
    args = ("--config", str(tiny_config), "--seed", "9", "--out", str(tmp_path))
    assert run_cli(*args, "sets") == cli.EXIT_OK
    assert run_cli(*args, "train") == cli.EXIT_OK
    assert run_cli(*args, "evaluate") == cli.EXIT_OK
    one = (tmp_path / "report_ex5.csv").read_bytes()
    assert run_cli(*args, "--jobs", "2", "evaluate") == cli.EXIT_OK
    two = (tmp_path / "report_ex5.csv").read_bytes()
    assert one == two


def test_matrices_preset_sets(tmp_path):
    cfgf = tmp_path / "c.toml"
    cfgf.write_text("""
[system]
preset = "matrices"
A = [[0.5]]
B = [[1.0]]
x_lo = [-4.0]
x_hi = [4.0]
u_lo = [-2.0]
u_hi = [2.0]
w_lo = [-0.2]
w_hi = [0.2]

[rmpc]
N = 3
x_ref = [0.0]
""")
    code = run_cli("--config", str(cfgf), "--seed", "1",
                   "--out", str(tmp_path), "sets")
    assert code == cli.EXIT_OK
    assert (tmp_path / "bundle_system.txt").exists()


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["--seed", "1"])
