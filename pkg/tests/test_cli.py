from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from frameloop.cli import main
from frameloop.store import load_store, save_store

from .conftest import random_store


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def store_file(tmp_path):
    path = tmp_path / "pool.uveb"
    save_store(random_store(24, 8, seed=0), path)
    return path


class TestAsk:
    def test_mock_ask_writes_trace(self, tmp_path, store_file, capsys):
        trace = tmp_path / "trace.json"
        code = run_cli(
            "ask", "--store", str(store_file), "--question", "what color is the car?",
            "--backend", "mock", "--trace", str(trace),
            "--caption-seeds", "4", "--max-rounds", "3",
        )
        assert code == 0
        records = json.loads(trace.read_text())
        assert 1 <= len(records) <= 3
        out = capsys.readouterr().out
        assert out.strip()

    def test_low_mock_score_runs_three_rounds(self, tmp_path, store_file, capsys):
        trace = tmp_path / "trace.json"
        code = run_cli(
            "ask", "--store", str(store_file), "--question", "what color is the car?",
            "--backend", "mock", "--mock-score", "0.1", "--trace", str(trace),
            "--caption-seeds", "4",
        )
        assert code == 0
        records = json.loads(trace.read_text())
        assert len(records) == 3
        assert capsys.readouterr().out.strip() == "Fallback answer derived from the global caption."

    def test_missing_store_exits_2(self, tmp_path, capsys):
        code = run_cli("ask", "--store", str(tmp_path / "nope.uveb"), "--question", "q?")
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_invalid_stop_threshold_exits_2(self, store_file, capsys):
        code = run_cli(
            "ask", "--store", str(store_file), "--question", "q?",
            "--stop-threshold", "1.1",
        )
        assert code == 2
        assert "stop_threshold" in capsys.readouterr().err

    def test_unreachable_backend_exits_3(self, store_file, capsys):
        code = run_cli(
            "ask", "--store", str(store_file), "--question", "q?",
            "--backend", "http", "--endpoint", "http://127.0.0.1:9/v1",
            "--model", "m", "--timeout", "0.2",
        )
        assert code == 3

    def test_structured_output(self, store_file, capsys):
        code = run_cli(
            "ask", "--store", str(store_file), "--question", "what color is the car?",
            "--format", "structured", "--caption-seeds", "4",
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"answer", "rounds", "trace"}

    def test_deterministic_output(self, store_file, capsys):
        argv = [
            "ask", "--store", str(store_file), "--question", "how many jumps?",
            "--format", "structured", "--caption-seeds", "4",
        ]
        run_cli(*argv)
        first = capsys.readouterr().out
        run_cli(*argv)
        assert capsys.readouterr().out == first


class TestTma:
    def test_sample_count_and_endpoints(self, capsys):
        code = run_cli("tma", "--samples", "101")
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "u,alpha_txt,alpha_img"
        assert len(lines) == 102  # header + 101 data rows
        assert lines[1] == "0.0,1.3,1.0"
        assert lines[-1] == "1.0,1.0,1.3"

    def test_zero_amplitudes_all_ones(self, capsys):
        code = run_cli("tma", "--samples", "11", "--lambda-txt", "0", "--lambda-img", "0")
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()[1:]
        for line in lines:
            _, a_txt, a_img = line.split(",")
            assert float(a_txt) == 1.0 and float(a_img) == 1.0

    def test_writes_csv_and_figure(self, tmp_path):
        csv = tmp_path / "gains.csv"
        fig = tmp_path / "gains.png"
        code = run_cli("tma", "--samples", "21", "--out", str(csv), "--figure", str(fig))
        assert code == 0
        assert csv.read_text().splitlines()[0] == "u,alpha_txt,alpha_img"
        assert fig.stat().st_size > 0

    def test_too_few_samples_exits_2(self, capsys):
        assert run_cli("tma", "--samples", "1") == 2

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("tma", "--samples", "51", "--out", str(a))
        run_cli("tma", "--samples", "51", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()


class TestSimulate:
    def test_aggregate_statistic_printed(self, capsys):
        code = run_cli("simulate", "--seeds", "5", "--steps", "10")
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("seed ") == 5
        assert "mean_improvement=" in out
        assert "mean_drift_slope=" in out

    def test_eta_zero_within_no_drift_band(self, capsys):
        code = run_cli("simulate", "--seeds", "20", "--steps", "50", "--eta", "0")
        assert code == 0
        out = capsys.readouterr().out
        slope = float(out.rsplit("mean_drift_slope=", 1)[1].split()[0])
        assert abs(slope) <= 0.005

    def test_fixed_seeds_reproduce_bytes(self, tmp_path, capsys):
        argv = ["simulate", "--seeds", "3", "--steps", "5", "--out", str(tmp_path / "r.csv")]
        run_cli(*argv)
        first_out = capsys.readouterr().out
        first_csv = (tmp_path / "r.csv").read_bytes()
        run_cli(*argv)
        assert capsys.readouterr().out == first_out
        assert (tmp_path / "r.csv").read_bytes() == first_csv

    def test_invalid_counts_exit_2(self, capsys):
        assert run_cli("simulate", "--seeds", "0") == 2

    def test_reward_figure_written(self, tmp_path):
        fig = tmp_path / "rewards.png"
        code = run_cli("simulate", "--seeds", "3", "--steps", "5", "--figure", str(fig))
        assert code == 0
        assert fig.stat().st_size > 0


class TestImport:
    def _write_text_inputs(self, directory, matrix, stamps):
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / "embeddings.txt", matrix, fmt="%.17g")
        np.savetxt(directory / "timestamps.txt", stamps.reshape(-1, 1), fmt="%.17g")

    def test_shape_passthrough(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        self._write_text_inputs(
            tmp_path / "in", rng.standard_normal((64, 768)), np.arange(64, dtype=float)
        )
        out = tmp_path / "pool.uveb"
        code = run_cli("import", "--input", str(tmp_path / "in"), "--out", str(out))
        assert code == 0
        store = load_store(out)
        assert (store.n_frames, store.dim) == (64, 768)
        assert "N=64 d=768" in capsys.readouterr().out

    def test_rows_are_normalized(self, tmp_path):
        matrix = np.array([[3.0, 4.0], [0.0, 5.0]])
        self._write_text_inputs(tmp_path / "in", matrix, np.array([0.0, 1.0]))
        out = tmp_path / "pool.uveb"
        assert run_cli("import", "--input", str(tmp_path / "in"), "--out", str(out)) == 0
        store = load_store(out)
        assert np.allclose(store.vectors[0], [0.6, 0.8])

    def test_ragged_rows_exit_2(self, tmp_path, capsys):
        src = tmp_path / "in"
        src.mkdir()
        (src / "embeddings.txt").write_text("1 0 0\n0 1\n")
        (src / "timestamps.txt").write_text("0\n1\n")
        code = run_cli("import", "--input", str(src), "--out", str(tmp_path / "x.uveb"))
        assert code == 2
        assert "ragged" in capsys.readouterr().err

    def test_reimport_of_export_is_byte_identical(self, tmp_path):
        original = tmp_path / "orig.uveb"
        save_store(random_store(12, 6, seed=7), original)
        store = load_store(original)
        self._write_text_inputs(tmp_path / "exported", store.vectors, store.timestamps)
        rebuilt = tmp_path / "rebuilt.uveb"
        code = run_cli("import", "--input", str(tmp_path / "exported"), "--out", str(rebuilt))
        assert code == 0
        assert rebuilt.read_bytes() == original.read_bytes()

    def test_timestamp_count_mismatch_exit_2(self, tmp_path):
        self._write_text_inputs(
            tmp_path / "in", np.eye(3), np.array([0.0, 1.0])
        )
        assert run_cli("import", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "x.uveb")) == 2


class TestEntryPoint:
    def test_module_invocation(self):
        result = subprocess.run(
            [sys.executable, "-m", "frameloop.cli", "tma", "--samples", "3"],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        assert result.stdout.splitlines()[1] == "0.0,1.3,1.0"


class TestHelp:
    @pytest.mark.parametrize("sub", ["ask", "import", "tma", "simulate"])
    def test_help_lists_flags(self, sub, capsys):
        with pytest.raises(SystemExit) as info:
            run_cli(sub, "--help")
        assert info.value.code == 0
        out = capsys.readouterr().out
        expected = {
            "ask": ["--store", "--question", "--backend", "--trace", "--stop-threshold",
                    "--max-rounds", "--mmr-lambda", "--tau", "--caption-seeds", "--format",
                    "--endpoint", "--model", "--timeout", "--mock-score"],
            "import": ["--input", "--out"],
            "tma": ["--samples", "--lambda-txt", "--lambda-img", "--out", "--figure",
                    "--txt-breakpoint", "--img-breakpoint"],
            "simulate": ["--seeds", "--steps", "--frames", "--dim", "--planted", "--k",
                         "--eta", "--tau", "--baseline", "--out", "--figure"],
        }[sub]
        for flag in expected:
            assert flag in out
