import math

import numpy as np
import pytest

from aonn.driver import IterationRecord, init_bundle
from aonn.jets import NetworkSpec, init_network
from aonn.problems import analytic_solution, make_problem
from aonn.report import (LOG_COLUMNS, format_number, load_params, relative_errors, save_params, sparsity_profile,
                         write_field_dump, write_iteration_log, write_outputs)
from aonn.sampling import eval_grid

HEADER = "iter,loss_state,loss_adjoint,loss_control,loss_verify,step_size,epochs,err_l2,err_linf,wall_seconds"


@pytest.fixture
def fake_fields(monkeypatch):
    """Make evaluate_fields return the analytic triple plus a configurable control shift."""
    state = {"shift": 0.0, "zero_u": False}

    def fields(problem, bundle, points, ans=None):
        y, u, p = analytic_solution(problem, points) if problem.analytic else (None, None, None)
        n = len(points)
        if state["zero_u"]:
            return {"y": np.zeros(n), "p": np.zeros(n), "u": np.zeros(n)}
        return {"y": y, "p": p, "u": u + state["shift"]}

    monkeypatch.setattr("aonn.report.evaluate_fields", fields)
    return state


def test_exact_fields_have_zero_error(fake_fields):
    problem = make_problem("test1")
    errs = relative_errors(None, problem, (), 64)
    assert errs["u"] == (0.0, 0.0) and errs["y"] == (0.0, 0.0)


def test_constant_shift_error_matches_direct_sum(fake_fields):
    fake_fields["shift"] = 0.01
    problem = make_problem("test1")
    l2, linf = relative_errors(None, problem, (), 256)["u"]
    grid = eval_grid(problem.domain, [], 256)
    u_star = analytic_solution(problem, grid.points)[1]
    direct = math.sqrt(sum(0.01 ** 2 for _ in range(len(grid.points)))) / math.sqrt(float(np.sum(u_star ** 2)))
    assert l2 == pytest.approx(0.01 * 256 / np.linalg.norm(u_star), rel=1e-12)
    assert l2 == pytest.approx(direct, rel=1e-12)
    assert linf == pytest.approx(0.01 / 3.0, rel=1e-12)


def test_relative_errors_need_closed_form():
    with pytest.raises(ValueError):
        relative_errors(None, make_problem("test5"), [0.0], 16)


def test_zero_control_has_empty_support(fake_fields):
    fake_fields["zero_u"] = True
    profile = sparsity_profile(None, make_problem("test5"), [[0.0], [0.064], [0.128]], resolution=32)
    assert [frac for frac, _ in profile] == [0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        sparsity_profile(None, make_problem("test5"), [[0.0]], threshold=0.0)


def test_mu_above_box_is_clamped_when_solution_saturates(monkeypatch):
    seen = []

    def fields(problem, bundle, points, ans=None):
        seen.append(points[0, -1])
        return {"u": np.zeros(len(points))}

    monkeypatch.setattr("aonn.report.evaluate_fields", fields)
    problem = make_problem("test5")
    sparsity_profile(None, problem, [[0.256]], resolution=16)
    assert seen == [pytest.approx(0.128)]
    with pytest.raises(ValueError):
        sparsity_profile(None, make_problem("test2"), [[40.0]], resolution=16)


def test_log_header_only_for_empty_history(tmp_path):
    path = write_iteration_log([], tmp_path / "log.csv")
    assert path.read_text() == HEADER + "\n"
    assert ",".join(LOG_COLUMNS) == HEADER


def test_log_rows_round_trip(tmp_path):
    rec = IterationRecord(0, 0.1, 1 / 3, 2e-17, math.pi, 100.0, 500, 1e-3, 2e-3, 12.5)
    text = write_iteration_log([rec], tmp_path / "a.csv").read_text().splitlines()[1].split(",")
    assert float(text[2]) == 1 / 3 and float(text[4]) == math.pi
    assert text[6] == "500" and text[-1] == "nan"
    with_clock = write_iteration_log([rec], tmp_path / "b.csv", wall_clock=True).read_text()
    assert with_clock.splitlines()[1].endswith(",12.5")
    assert format_number(0.1) == "0.10000000000000001"


def test_field_dump_rows_and_determinism(tmp_path):
    problem = make_problem("test1")
    bundle = init_bundle(problem, {n: problem.network_spec(1, 4) for n in ("y", "p", "u")}, 0)
    a = write_field_dump(bundle, problem, (), 256, tmp_path / "a.csv")
    b = write_field_dump(bundle, problem, (), 256, tmp_path / "b.csv")
    lines = a.read_text().splitlines()
    assert lines[0] == "x0,x1,y,p,u"
    assert len(lines) == 65536 + 1
    assert a.read_bytes() == b.read_bytes()


def test_parametric_dump_header(tmp_path):
    problem = make_problem("test4")
    bundle = init_bundle(problem, {n: problem.network_spec(1, 5) for n in ("y", "p", "u")}, 0)
    path = write_field_dump(bundle, problem, [0.2, 1.0], 16, tmp_path / "f.csv")
    assert path.read_text().splitlines()[0] == "x0,x1,mu0,mu1,y,p,u"


def test_params_round_trip(tmp_path):
    spec = make_problem("test2").network_spec(2, 20)
    params = init_network(spec, 3)
    loaded_spec, loaded = load_params(save_params(spec, params, tmp_path / "net.bin"))
    assert loaded_spec == spec
    np.testing.assert_array_equal(loaded, params)
    raw = (tmp_path / "net.bin").read_bytes()
    assert raw.startswith(b"aonn-params 1\ninput_dim=3\n")
    assert raw.endswith(params.astype("<f8").tobytes())
    with pytest.raises(ValueError):
        save_params(NetworkSpec(2), np.zeros(3), tmp_path / "bad.bin")


def test_write_errors_name_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        write_iteration_log([], blocker / "log.csv")


def test_write_outputs_files(tmp_path):
    problem = make_problem("test1")
    bundle = init_bundle(problem, {n: problem.network_spec(1, 4) for n in ("y", "p", "u")}, 0)
    written = write_outputs(bundle, problem, tmp_path, {"problem": {"name": "test1"}}, [()], 8)
    names = sorted(p.name for p in written)
    assert names == ["fields.csv", "iterations.csv", "manifest.toml", "net_p.bin", "net_u.bin", "net_y.bin"]
