import json

import numpy as np
import pytest

import ctmcpath as cp
from ctmcpath import cli
from ctmcpath import io as fmt


def run_cli(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCmdModel:
    def test_hky_csv_inflation(self, capsys):
        code, out, _ = run_cli(
            ["model", "hky", "--kappa", "2", "--freqs", "0.2,0.3,0.3,0.2", "--calibrate"],
            capsys,
        )
        assert code == 0
        q = fmt.parse_matrix_csv(out)
        pi = cp.stationary_distribution(q)
        assert abs(cp.inflation_factor(q, pi) - 1.12) < 0.01

    def test_hky_cpg_gamma_one_equals_hky(self, capsys):
        code, out_cpg, _ = run_cli(
            ["model", "hky-cpg", "--kappa", "2", "--nu", "0.25,0.25,0.25,0.25", "--gamma", "1"],
            capsys,
        )
        code2, out_hky, _ = run_cli(
            ["model", "hky", "--kappa", "2", "--freqs", "0.25,0.25,0.25,0.25", "--no-calibrate"],
            capsys,
        )
        assert code == code2 == 0
        assert out_cpg == out_hky

    def test_random_reversible_deterministic(self, capsys):
        args = ["model", "random-reversible", "--n", "5", "--seed", "7"]
        _, out1, _ = run_cli(args, capsys)
        _, out2, _ = run_cli(args, capsys)
        assert out1 == out2
        q = fmt.parse_matrix_csv(out1)
        assert q.n == 5

    def test_json_format(self, capsys):
        code, out, _ = run_cli(["model", "hky", "--format", "json"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["labels"] == ["A", "G", "C", "T"]

    def test_bad_params_exit_2(self, capsys):
        code, _, err = run_cli(["model", "hky", "--freqs", "0.5,0.5"], capsys)
        assert code == 2
        assert "freqs" in err or "base_freqs" in err


class TestCmdSample:
    HKY = ["--model", "hky", "--freqs", "0.2,0.3,0.3,0.2"]

    def test_deterministic_output(self, capsys, tmp_path):
        out1 = tmp_path / "a.jsonl"
        out2 = tmp_path / "b.jsonl"
        base = ["sample"] + self.HKY + ["-a", "A", "-b", "G", "-T", "1", "-k", "100",
                                        "--seed", "3", "--sampler", "direct"]
        assert cli.main(base + ["-o", str(out1)]) == 0
        assert cli.main(base + ["-o", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_paths_roundtrip(self, capsys):
        code, out, err = run_cli(
            ["sample"] + self.HKY + ["-a", "A", "-b", "G", "-T", "1", "-k", "5",
                                     "--seed", "1", "--sampler", "uniformization"],
            capsys,
        )
        assert code == 0
        q, _ = cp.build_hky(cp.HkyParams(kappa=2.0, base_freqs=(0.2, 0.3, 0.3, 0.2)))
        paths = fmt.parse_paths_jsonl(out, q.states)
        assert len(paths) == 5
        assert all(p.start_state == 0 and p.end_state == 1 for p in paths)
        assert "sampler=uniformization" in err

    def test_auto_mode_logs_prediction(self, capsys):
        code, out, err = run_cli(
            ["sample"] + self.HKY + ["-a", "A", "-b", "A", "-T", "2", "-k", "3", "--seed", "2"],
            capsys,
        )
        assert code == 0
        pred_line = next(line for line in err.splitlines() if line.startswith("{"))
        doc = json.loads(pred_line)
        assert doc["selected"] == "rejection"
        assert "sampler=rejection" in err

    def test_gy_budget_exit_3(self, capsys):
        code, _, err = run_cli(
            ["sample", "--model", "gy", "-a", "AAA", "-b", "TTT", "-T", "0.5",
             "--sampler", "rejection", "--max-attempts", "10000", "--seed", "4"],
            capsys,
        )
        assert code == 3

    def test_gy_auto_avoids_rejection(self, capsys):
        code, out, err = run_cli(
            ["sample", "--model", "gy", "-a", "AAA", "-b", "TTT", "-T", "0.5",
             "-k", "2", "--seed", "5"],
            capsys,
        )
        assert code == 0
        pred_line = next(line for line in err.splitlines() if line.startswith("{"))
        doc = json.loads(pred_line)
        assert doc["selected"] in ("direct", "uniformization")
        q, _ = cp.build_gy(cp.GyParams(kappa=2.0, omega=0.01))
        paths = fmt.parse_paths_jsonl(out, q.states)
        assert len(paths) == 2
        assert all(p.n_jumps >= 3 for p in paths)

    def test_csv_format(self, capsys):
        code, out, _ = run_cli(
            ["sample"] + self.HKY + ["-a", "A", "-b", "G", "-T", "1", "-k", "2",
                                     "--seed", "1", "--format", "csv", "--sampler", "direct"],
            capsys,
        )
        assert code == 0
        assert out.startswith("path_id,seg_index,state,t_in,t_out")

    def test_matrix_file_source(self, capsys, tmp_path, hky):
        q, _ = hky
        matrix_file = tmp_path / "m.csv"
        matrix_file.write_text(fmt.emit_matrix_csv(q))
        code, out, _ = run_cli(
            ["sample", "--matrix", str(matrix_file), "-a", "A", "-b", "G", "-T", "1",
             "-k", "2", "--seed", "1", "--sampler", "direct"],
            capsys,
        )
        assert code == 0


class TestCmdPredict:
    def test_paper_large_T_values(self, capsys):
        code, out, _ = run_cli(
            ["predict", "--model", "hky", "--freqs", "0.2,0.3,0.3,0.2",
             "-a", "A", "-b", "A", "-T", "2", "--mode", "large-t"],
            capsys,
        )
        assert code == 0
        doc = json.loads(out)
        assert abs(doc["predicted_cost"]["direct"] - 0.472) < 0.005
        assert abs(doc["predicted_cost"]["uniformization"] - 0.261) < 0.005

    def test_hky_cpg_rejection_cost(self, capsys):
        code, out, _ = run_cli(
            ["predict", "--model", "hky-cpg", "-a", "T", "-b", "C", "-T", "2",
             "--mode", "large-t"],
            capsys,
        )
        doc = json.loads(out)
        assert abs(doc["predicted_cost"]["rejection"] - 3.112) < 0.05
        assert abs(doc["predicted_cost"]["uniformization"] - 0.693) < 0.01
        assert doc["selected"] == "direct"

    def test_modes_agree_at_large_horizon(self, capsys):
        selections = {}
        for mode in ("exact", "large-t"):
            code, out, _ = run_cli(
                ["predict", "--model", "hky", "--freqs", "0.2,0.3,0.3,0.2",
                 "-a", "A", "-b", "G", "-T", "50", "--mode", mode],
                capsys,
            )
            selections[mode] = json.loads(out)["selected"]
        assert selections["exact"] == selections["large-t"]

    def test_coeffs_file(self, capsys, tmp_path, paper_coeffs_sparse61):
        coeff_file = tmp_path / "c.json"
        coeff_file.write_text(json.dumps(paper_coeffs_sparse61.to_dict()))
        code, out, _ = run_cli(
            ["predict", "--model", "gy", "-a", "AAA", "-b", "AAG", "-T", "2",
             "--coeffs", str(coeff_file)],
            capsys,
        )
        assert code == 0
        assert json.loads(out)["selected"] == "rejection"


class TestCmdBench:
    def test_small_grid(self, capsys, tmp_path):
        raw = tmp_path / "raw.csv"
        coeffs = tmp_path / "coeffs.csv"
        code, _, _ = run_cli(
            ["bench", "--model", "hky", "--freqs", "0.2,0.3,0.3,0.2",
             "--horizons", "0.25,0.5,1,2", "--pairs", "A:A,A:G", "--reps", "3",
             "--seed", "1", "--out-raw", str(raw), "--out-coeffs", str(coeffs)],
            capsys,
        )
        assert code == 0
        raw_lines = raw.read_text().splitlines()
        assert raw_lines[0].startswith("sampler,a,b,T,rep")
        assert len(raw_lines) == 1 + 3 * 4 * 2 * 3  # samplers * horizons * pairs * reps
        coeff_lines = coeffs.read_text().splitlines()
        assert len(coeff_lines) == 4
        for line in coeff_lines[1:]:
            fields = line.split(",")
            assert float(fields[2]) >= 0.0 and float(fields[3]) >= 0.0

    def test_mean_recursions_monotone_in_T(self, capsys, tmp_path):
        import csv as _csv

        raw = tmp_path / "raw.csv"
        coeffs = tmp_path / "coeffs.csv"
        code, _, _ = run_cli(
            ["bench", "--model", "hky", "--freqs", "0.2,0.3,0.3,0.2",
             "--horizons", "0.25,1,4", "--pairs", "A:A", "--reps", "40",
             "--samplers", "direct", "--seed", "2",
             "--out-raw", str(raw), "--out-coeffs", str(coeffs)],
            capsys,
        )
        assert code == 0
        with open(raw) as fh:
            rows = list(_csv.DictReader(fh))
        means = {}
        for t in ("0.25", "1.0", "4.0"):
            vals = [int(r["recursion_steps"]) for r in rows if r["T"] == t]
            means[t] = sum(vals) / len(vals)
        assert means["0.25"] < means["1.0"] < means["4.0"]

    def test_empty_grid_exit_2(self, capsys):
        code, _, _ = run_cli(
            ["bench", "--model", "hky", "--horizons", "", "--pairs", "A:A"],
            capsys,
        )
        assert code == 2

    def test_too_few_horizons_exit_6(self, capsys, tmp_path):
        code, _, _ = run_cli(
            ["bench", "--model", "hky", "--horizons", "1,2", "--pairs", "A:A",
             "--reps", "1", "--out-raw", str(tmp_path / "r.csv"),
             "--out-coeffs", str(tmp_path / "c.csv")],
            capsys,
        )
        assert code == 6


class TestCmdValidate:
    def test_two_state_passes(self, capsys):
        code, out, _ = run_cli(
            ["validate", "--model", "random-reversible", "--n", "2", "--seed", "3",
             "--horizons", "1", "--paths", "4000"],
            capsys,
        )
        assert code == 0
        assert "checks passed" in out
        assert "[FAIL]" not in out


class TestExitCodes:
    def test_usage_error_both_sources(self, capsys, tmp_path):
        code, _, err = run_cli(
            ["sample", "--matrix", "x.csv", "--model", "hky",
             "-a", "A", "-b", "G", "-T", "1"],
            capsys,
        )
        assert code == 2

    def test_missing_matrix_file(self, capsys):
        code, _, _ = run_cli(
            ["sample", "--matrix", "/nonexistent.csv", "-a", "A", "-b", "G", "-T", "1"],
            capsys,
        )
        assert code == 2

    def test_unknown_label(self, capsys):
        code, _, _ = run_cli(
            ["sample", "--model", "hky", "-a", "Z", "-b", "G", "-T", "1"],
            capsys,
        )
        assert code == 2
