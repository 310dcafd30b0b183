import orjson
import pandas as pd
import pytest

from timedd.main import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_SOLVER_ERROR, main
from timedd.services.experiment_runner import align_time_steps


@pytest.mark.parametrize("M,Ks,expected", [
    (128, [2, 4, 8, 16, 32, 64], 513),
    (16, [2], 65),
    (8, [1], 32),
    (32, [2, 4, 8, 16, 32, 64], 129),
])
def test_align_time_steps(M, Ks, expected):
    assert align_time_steps(M, 4.0, Ks) == expected


@pytest.mark.parametrize("M,Ks,expected", [
    (32, [2, 4, 8, 16, 32, 64], 193),
    (4, [8], 25),
    (128, [2, 4, 8, 16, 32, 64], 513),
])
def test_align_time_steps_leaves_room_for_overlap(M, Ks, expected):
    N = align_time_steps(M, 4.0, Ks, min_steps=3)
    assert N == expected
    assert (N - 1) // max(Ks) > 2


def test_direct_run(tmp_path):
    assert main(["run", "--mode", "direct", "--M", "16", "--out", str(tmp_path)]) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary.columns) == [
        "problem", "variant", "levels", "K", "M", "N", "gamma", "mode",
        "iters", "status", "wall_seconds", "err_y", "err_p",
    ]
    row = summary.iloc[0]
    assert row["iters"] == 1 and row["status"] == "converged"
    assert row["N"] == 64
    assert row["err_y"] < 1e-1


def test_stationary_run_writes_histories(tmp_path):
    args = ["run", "--M", "8", "--variant", "msn", "--K", "2,4", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["K"]) == [2, 4]
    assert set(summary["N"]) == {33}
    assert set(summary["variant"]) == {"MSN"}
    for K in (2, 4):
        history = pd.read_csv(tmp_path / f"example1_stationary_MSN_L1_K{K}_M8_N33.history.csv")
        assert list(history.columns) == ["iter", "abs_residual", "rel_residual"]
        assert history["rel_residual"].iloc[0] == 1.0
        assert history["rel_residual"].iloc[-1] < 1e-7
        report = orjson.loads((tmp_path / f"example1_stationary_MSN_L1_K{K}_M8_N33.report.json").read_bytes())
        assert report["status"] == "converged" and report["seed"] == 0


def test_summary_is_appended(tmp_path):
    args = ["run", "--M", "8", "--K", "2", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert main(args + ["--levels", "2"]) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["levels"]) == [1, 2]


def test_runs_are_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["run", "--M", "8", "--K", "4", "--variant", "aso", "--seed", "3", "--out", str(tmp_path / name)])
    stem = "example1_stationary_ASO_L1_K4_M8_N33.history.csv"
    a = (tmp_path / "a" / stem).read_bytes()
    b = (tmp_path / "b" / stem).read_bytes()
    assert a == b


def test_gmres_runs(tmp_path):
    assert main(["run", "--M", "8", "--K", "4", "--mode", "gmres", "--levels", "2", "--out", str(tmp_path)]) == EXIT_OK
    assert main(["run", "--M", "8", "--K", "4", "--mode", "gmres", "--precond", "none", "--out", str(tmp_path)]) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["mode"]) == ["gmres", "gmres"]
    assert summary["iters"].iloc[0] < summary["iters"].iloc[1]
    assert (tmp_path / "example1_gmres_none_L1_K4_M8_N33.history.csv").exists()


def test_max_iters_exit_status_still_writes_summary(tmp_path):
    code = main(["run", "--M", "8", "--K", "4", "--max-iters", "1", "--out", str(tmp_path)])
    assert code == EXIT_SOLVER_ERROR
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary["status"].iloc[0] == "max_iters"


def test_invalid_config_exit_status(tmp_path, capsys):
    assert main(["run", "--M", "2", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR
    error = orjson.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["success"] is False
    assert error["error"]["code"] == "INVALID_CONFIG"


def test_overlap_rejected_for_nonoverlapping_variant(tmp_path):
    assert main(["run", "--variant", "asn", "--overlap", "1", "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


def test_indivisible_grid_exit_status(tmp_path, capsys):
    assert main(["run", "--M", "8", "--N", "20", "--K", "2", "--out", str(tmp_path)]) == EXIT_SOLVER_ERROR
    error = orjson.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"]["code"] == "INDIVISIBLE_GRID"
    assert error["error"]["message"] == "N-1=19 is not divisible by K=2"
    assert error["error"]["details"] == {"N": 20, "K": 2}


def test_dump(tmp_path):
    assert main(["run", "--mode", "direct", "--M", "4", "--dump", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "example1_M4_N16.header.json").exists()
    assert (tmp_path / "example1_M4_N16.triplets.txt").exists()


def test_refine(tmp_path):
    assert main(["refine", "--M", "8,16", "--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "example1_refinement.csv")
    assert list(table["M"]) == [8, 16]
    assert pd.isna(table["ratio_y"].iloc[0])
    assert table["ratio_y"].iloc[1] > 2.0


def test_tables(tmp_path):
    assert main(["tables", "--M", "8", "--K", "2,4", "--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "example1_tables.csv")
    assert len(table) == 4
    assert list(table.columns[:4]) == ["levels", "K", "MSN_iters", "MSN_local_wall_s"]
    assert set(table["wall_note"]) == {"local wall time in seconds; not comparable to published CPU times"}
    assert (table[["MSN_iters", "ASN_iters", "MSO_iters", "ASO_iters"]] > 0).all().all()


def test_tables_raise_N_until_overlap_fits(tmp_path):
    assert main(["tables", "--M", "4", "--K", "8", "--out", str(tmp_path)]) == EXIT_OK
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert len(summary) == 8
    assert set(summary["N"]) == {25}
    assert set(summary["status"]) == {"converged"}
    table = pd.read_csv(tmp_path / "example1_tables.csv")
    assert list(table["levels"]) == [1, 2]


def test_failing_K_is_recorded_and_the_run_continues(tmp_path, capsys):
    code = main(["run", "--variant", "mso", "--M", "4", "--N", "17", "--K", "8,2", "--out", str(tmp_path)])
    assert code == EXIT_SOLVER_ERROR
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary["K"]) == [8, 2]
    assert list(summary["status"]) == ["failed", "converged"]
    assert pd.isna(summary["iters"].iloc[0])
    assert (tmp_path / "example1_stationary_MSO_L1_K8_M4_N17.report.json").exists()
    error = orjson.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"]["code"] == "OVERLAP_TOO_LARGE"


def test_probe(tmp_path):
    assert main(["probe", "--M", "8", "--variant", "msn", "--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "example1_probe_MSN_M8_N33.csv")
    assert list(table.columns) == ["iteration", "e1_sq", "w2_sq", "m_asn", "m_msn"]
    assert table["iteration"].iloc[0] == 1
    assert (table["m_msn"].diff().dropna() <= 1e-12 * table["m_msn"].iloc[0]).all()
