import json
import os
import sys

from packbound.cli import EXIT_CONFIG, EXIT_OK, EXIT_SEARCH, main

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCompile:
    def test_emits_sdpa_to_stdout(self, capsys, tmp_path):
        code, out, _ = run_cli(
            capsys, "compile", "P7 <EOS>", "--r", "1.45", "--R", "2.0",
            "--degree", "2", "--pivots", "3",
        )
        assert code == EXIT_OK
        lines = out.splitlines()
        assert lines[0] == "4" and lines[1] == "1" and lines[2] == "7"

    def test_writes_file(self, capsys, tmp_path):
        path = tmp_path / "inst.dat-s"
        code, _, _ = run_cli(
            capsys, "compile", "P1 <EOS>", "--r", "1.45", "--R", "2.0",
            "--degree", "4", "--pivots", "5", "--out", str(path),
        )
        assert code == EXIT_OK and path.exists()

    def test_bad_sentence_exits_2(self, capsys):
        code, _, err = run_cli(
            capsys, "compile", "P1 <*> <EOS>", "--r", "1.45", "--R", "2.0"
        )
        assert code == EXIT_CONFIG and "error" in err

    def test_bad_geometry_exits_2(self, capsys):
        code, _, _ = run_cli(
            capsys, "compile", "P7 <EOS>", "--r", "2.0", "--R", "1.0"
        )
        assert code == EXIT_CONFIG


class TestSolve:
    def test_solves_compiled_instance(self, capsys, tmp_path):
        path = tmp_path / "inst.dat-s"
        run_cli(capsys, "compile", "P1 <EOS>", "--r", "1.45", "--R", "2.0",
                "--degree", "4", "--pivots", "20", "--out", str(path))
        code, out, _ = run_cli(capsys, "solve", str(path))
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["status"] == "converged"
        assert abs(payload["objective"] - 1.0) < 1e-6

    def test_missing_file_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "solve", "/nonexistent.dat-s")
        assert code == EXIT_CONFIG

    def test_external_requires_cmd(self, capsys, tmp_path):
        path = tmp_path / "inst.dat-s"
        run_cli(capsys, "compile", "P7 <EOS>", "--r", "1.45", "--R", "2.0",
                "--degree", "2", "--pivots", "3", "--out", str(path))
        code, _, _ = run_cli(capsys, "solve", str(path), "--solver", "external")
        assert code == EXIT_CONFIG

    def test_external_with_stub(self, capsys, tmp_path):
        path = tmp_path / "inst.dat-s"
        run_cli(capsys, "compile", "P7 <EOS>", "--r", "1.45", "--R", "2.0",
                "--degree", "2", "--pivots", "3", "--out", str(path))
        stub = f"{sys.executable} {os.path.join(FIXTURES, 'fake_sdpa.py')}"
        code, out, _ = run_cli(capsys, "solve", str(path),
                               "--solver", "external", "--solver-cmd", stub)
        assert code == EXIT_OK
        assert json.loads(out)["status"] == "converged"


class TestSearch:
    def test_finds_sentence(self, capsys):
        code, out, _ = run_cli(
            capsys, "search", "--r", "1.45", "--R", "2.0", "--pivots", "20",
            "--iterations", "10", "--degree-search", "2", "--degree-final", "2",
            "--seed", "3",
        )
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["sentence"].endswith("<EOS>")
        assert payload["bound"] > 0

    def test_hopeless_search_exits_4(self, capsys, monkeypatch):
        import packbound.cli as cli_mod
        from packbound.mcts import SearchFailedError

        def always_fails(*args, **kwargs):
            raise SearchFailedError("nothing converged", [])

        monkeypatch.setattr(cli_mod, "run_search", always_fails)
        code, _, err = run_cli(
            capsys, "search", "--r", "1.45", "--R", "2.0", "--iterations", "2",
        )
        assert code == EXIT_SEARCH and "search failed" in err


class TestCampaign:
    def test_short_campaign(self, capsys, tmp_path):
        out_dir = tmp_path / "camp"
        code, out, _ = run_cli(
            capsys, "campaign", "--budget-rounds", "1", "--pivots", "20",
            "--seed", "5", "--out", str(out_dir), "--quiet",
        )
        assert code == EXIT_OK
        payload = json.loads(out)
        assert payload["rounds"] == 1
        assert (out_dir / "state.jsonl").exists()

    def test_invalid_config_exits_2(self, capsys, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"pivots": 0}))
        code, _, err = run_cli(capsys, "campaign", "--config", str(cfg))
        assert code == EXIT_CONFIG and "invalid config" in err

    def test_io_failure_exits_3(self, capsys, tmp_path):
        from packbound.cli import EXIT_IO

        blocker = tmp_path / "not-a-dir"
        blocker.write_text("occupied")
        code, _, err = run_cli(
            capsys, "campaign", "--budget-rounds", "1", "--out", str(blocker), "--quiet",
        )
        assert code == EXIT_IO and "campaign halted" in err

    def test_config_file_with_overrides(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"budget_rounds": 99, "mcts_iterations": 6, "pivots": 20}))
        out_dir = tmp_path / "camp2"
        code, out, _ = run_cli(
            capsys, "campaign", "--config", str(cfg), "--budget-rounds", "1",
            "--out", str(out_dir), "--quiet",
        )
        assert code == EXIT_OK
        assert json.loads(out)["rounds"] == 1  # flag overrode the file


class TestReport:
    def test_report_from_state(self, capsys, tmp_path):
        out_dir = tmp_path / "camp"
        run_cli(capsys, "campaign", "--budget-rounds", "1", "--pivots", "20",
                "--seed", "5", "--out", str(out_dir), "--quiet")
        rep_dir = tmp_path / "rep"
        rep_dir.mkdir()
        code, out, _ = run_cli(
            capsys, "report", str(out_dir / "state.jsonl"), "--out", str(rep_dir)
        )
        assert code == EXIT_OK
        assert (rep_dir / "trace.csv").exists()
        assert json.loads(out)["rounds"] == 1

    def test_missing_state_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "report", "/nonexistent.jsonl")
        assert code == EXIT_CONFIG
