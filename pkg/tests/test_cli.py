import numpy as np
import pytest

from kcm import cli, tables
from kcm.experiments import PARTIAL_MARKER
from kcm.integrate import NewtonError

SHORT = ["--t-final", "60"]


def run(tmp_path, *argv):
    return cli.main([argv[0], "--output-dir", str(tmp_path), *argv[1:]])


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "simulate", "--example", "2", *SHORT) == 0
    assert run(b, "simulate", "--example", "2", *SHORT) == 0
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()
    assert not (a / PARTIAL_MARKER).exists()


def test_simulate_writes_trajectories(tmp_path):
    assert run(tmp_path, "simulate", "--example", "1", "--t-final", "1", "--trajectories") == 0
    header, arr = tables.read_csv(tmp_path / "trajectory_0.csv")
    assert header == ["t", "x1", "y1"] and arr.shape == (11, 3)
    assert arr[0, 1:].tolist() == [-0.8, -0.8]


def test_fit_residual_taylor_chain(tmp_path, datasets, capsys):
    data_path = tables.write_dataset(tmp_path / "ds1.csv", datasets(1))
    args = ["--example", "1", "--data", str(data_path), "--kernel", "gauss", "--shape", "1", "--lam", "1e-10"]
    assert run(tmp_path, "fit", *args) == 0
    approx = tmp_path / "approximant_gauss1.txt"
    assert approx.exists() and (tmp_path / "greedy_gauss1.csv").exists()
    assert run(tmp_path, "residual", "--example", "1", "--approximant", str(approx)) == 0
    header, arr = tables.read_csv(tmp_path / "residual_gauss1.csv")
    assert header == ["input", "residual"] and arr.shape == (1001, 2)
    assert run(tmp_path, "taylor", "--approximant", str(approx)) == 0
    coeffs = tables.read_taylor(tmp_path / "taylor.csv")["gauss1"]
    assert coeffs["x1^2"] == pytest.approx(-1.0, abs=0.02)
    assert abs(coeffs["1"]) <= 1e-8 and abs(coeffs["x1"]) <= 1e-8


def test_compare_writes_error_table(tmp_path, datasets):
    data_path = tables.write_dataset(tmp_path / "ds2.csv", datasets(2))
    assert run(tmp_path, "fit", "--example", "2", "--data", str(data_path)) == 0
    approx = tmp_path / "approximant_wendland.txt"
    code = run(tmp_path, "compare", "--example", "2", "--approximant", str(approx), "--x0", "0.05,0.0025", "--t-final", "20")
    assert code == 0
    header, arr = tables.read_csv(tmp_path / "comparison_wendland.csv")
    assert header == ["t", "err_abs", "err_rel"] and arr.shape == (201, 3)
    assert arr[0, 1] == 0.0


def test_convergence_command(tmp_path):
    assert run(tmp_path, "convergence", *SHORT, "--max-points", "30") == 0
    header, arr = tables.read_csv(tmp_path / "convergence_wendland.csv")
    assert header == ["N", "e_N"] and arr[:, 0].tolist() == list(range(1, arr.shape[0] + 1))


def test_failed_check_exits_1(tmp_path):
    # a shortened horizon changes the dataset size, so reference checks fail
    assert run(tmp_path, "example", "2", "--t-final", "100") == 1
    assert (tmp_path / "example2" / "summary.csv").exists()
    assert not (tmp_path / PARTIAL_MARKER).exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["example", "4"],
        ["simulate"],
        ["simulate", "--example", "5"],
        ["simulate", "--example", "1", "--dt", "-1"],
        ["fit", "--example", "1", "--kernel", "matern"],
        ["nonsense"],
    ],
)
def test_usage_errors_exit_2(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_numerical_failure_exits_3_and_leaves_marker(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NewtonError("no convergence", 1.0)

    monkeypatch.setattr(cli, "generate_dataset", boom)
    assert run(tmp_path, "simulate", "--example", "1") == 3
    assert (tmp_path / PARTIAL_MARKER).exists()


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[common]\nexample = 2\n\n[simulate]\nt_final = 1\n")
    assert run(tmp_path / "a", "simulate", "--config", str(cfg)) == 0
    assert run(tmp_path / "b", "simulate", "--config", str(cfg), "--t-final", "60") == 0
    n_a = tables.read_dataset(tmp_path / "a" / "dataset.csv").N
    n_b = tables.read_dataset(tmp_path / "b" / "dataset.csv").N
    assert n_a == 0 and n_b > 0


@pytest.mark.parametrize("text", ["[simulate]\nbogus = 1\n", "[nosuch]\nexample = 1\n", "[simulate]\nexample = one\n"])
def test_bad_config_exits_2(tmp_path, text):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    assert run(tmp_path, "simulate", "--config", str(cfg)) == 2


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "--example", "2", "--t-final", "1"]) == 0
    assert (tmp_path / "env" / "dataset.csv").exists()


def test_help_documents_schemas(capsys):
    assert cli.main(["--help"]) == 0
    out = capsys.readouterr().out
    for name in ("dataset.csv", "taylor.csv", "summary.csv", "exit codes", ".partial"):
        assert name in out


def test_sub_help_lists_options(capsys):
    assert cli.main(["fit", "--help"]) == 0
    out = capsys.readouterr().out
    assert "--origin-constraints" in out and "--eps-tol" in out


def test_dataset_values_round_trip_through_cli(tmp_path, datasets):
    run(tmp_path, "simulate", "--example", "2")
    back = tables.read_dataset(tmp_path / "dataset.csv")
    ref = datasets(2)
    assert np.array_equal(back.X, ref.X) and np.array_equal(back.Y, ref.Y)
