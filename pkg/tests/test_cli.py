from pathlib import Path

import pytest

from aonn.cli import EXIT_CONFIG, EXIT_OK, run
from aonn.config import ConfigError, load_config, resolve_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY = """
[problem]
name = "test1"
[network.y]
num_blocks = 1
width = 6
[network.p]
num_blocks = 1
width = 6
[network.u]
num_blocks = 1
width = 6
[schedule]
n0 = 3
n_iter = {n_iter}
[sampling]
n_points = 64
[method]
chunk = 5
[output]
resolution = 8
mu_slices = [[]]
"""


def _write(tmp_path: Path, text: str, name: str = "cfg.toml") -> Path:
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.mark.parametrize("name", ["test1", "test2", "test4", "test5"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / f"{name}.toml")
    assert cfg["problem"]["name"] == name


def test_unknown_keys_are_fatal(tmp_path):
    with pytest.raises(ConfigError, match="n_iters"):
        resolve_config({"schedule": {"n_iters": 5}})
    with pytest.raises(ConfigError):
        resolve_config({"network": {"q": {"width": 5}}})
    with pytest.raises(ConfigError):
        resolve_config({"schedule": {"n0": "many"}})
    with pytest.raises(ConfigError):
        resolve_config({"problem": {"name": "test1", "control_upper": 2.0}})
    bad = _write(tmp_path, "[schedule]\nn_iters = 5\n")
    assert run(["solve", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_is_a_config_error(tmp_path):
    assert run(["solve", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_values_are_config_errors(tmp_path):
    cfg = _write(tmp_path, TINY.format(n_iter=1).replace("n0 = 3", "n0 = 3\ngamma = 2.0"))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_solve_with_no_iterations_writes_header_only_log(tmp_path):
    cfg = _write(tmp_path, TINY.format(n_iter=0))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "iterations.csv").read_text().count("\n") == 1


def test_manifest_round_trip_and_seed_override(tmp_path, capsys):
    cfg = _write(tmp_path, TINY.format(n_iter=2))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "4"]) == EXIT_OK
    manifest = tmp_path / "a" / "manifest.toml"
    assert "seed = 4" in manifest.read_text()
    assert run(["solve", "--config", str(manifest), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("iterations.csv", "fields.csv", "net_u.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    capsys.readouterr()
    assert run(["evaluate", "--config", str(manifest), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert capsys.readouterr().out.startswith("mu,l2_u,linf_u")
    assert run(["sweep", "--config", str(manifest), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert (tmp_path / "a" / "sweep.csv").exists()


def test_evaluate_without_saved_bundle_fails_cleanly(tmp_path):
    cfg = _write(tmp_path, TINY.format(n_iter=0))
    assert run(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "empty")]) == EXIT_CONFIG


def test_baseline_methods_run(tmp_path):
    for method in ("pinn", "pinn_projection"):
        text = TINY.format(n_iter=0).replace("chunk = 5", f'chunk = 5\nname = "{method}"\nepochs = 5')
        cfg = _write(tmp_path, text, f"{method}.toml")
        assert run(["solve", "--config", str(cfg), "--out", str(tmp_path / method)]) == EXIT_OK
        assert (tmp_path / method / "iterations.csv").read_text().count("\n") == 2
