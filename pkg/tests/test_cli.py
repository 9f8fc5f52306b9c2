import json

import pytest

from sddsim.cli import main

from config_fixtures import NESTED_TOML, NICHOLSON_PDE_TOML, ORACLE_TOML


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestSimulate:
    def test_writes_csv_and_residual(self, tmp_path, capsys):
        cfg = write(tmp_path, ORACLE_TOML)
        out = tmp_path / "traj.csv"
        code = main(["simulate", "--config", cfg, "--out", str(out), "--residual"])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t,v_0"
        # T/dt + 1 solved rows plus the negative-time initial knots
        assert len(lines) - 1 == 2001 + 4
        residual = json.loads((tmp_path / "traj.csv.residual.json").read_text())
        assert residual["max_defect"] <= 10 * 0.001
        assert len(residual["sample_times"]) == 10

    def test_nicholson_pde_smoke(self, tmp_path):
        cfg = write(tmp_path, NICHOLSON_PDE_TOML.replace("T = 2.0", "T = 1.0"))
        out = tmp_path / "pde.csv"
        code = main(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 0
        last = out.read_text().strip().split("\n")[-1].split(",")
        assert float(last[0]) == 1.0
        assert all(abs(float(v)) < 1e6 for v in last[1:])

    def test_config_error_exit_3(self, tmp_path, capsys):
        bad = ORACLE_TOML.replace("dt = 0.001", "dt = 1.5")
        cfg = write(tmp_path, bad)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "x.csv")])
        assert code == 3
        assert "dt exceeds delay horizon" in capsys.readouterr().err

    def test_missing_config_exit_3(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "none.toml"), "--out", "x.csv"])
        assert code == 3

    def test_solver_error_exit_2(self, tmp_path, capsys):
        bad = ORACLE_TOML.replace('c = 1.0', 'c = 0.0').replace(
            "slope = -1.0", "slope = -40.0"
        ).replace("dt = 0.001", "dt = 1.0").replace("T = 2.0", "T = 5.0")
        cfg = write(tmp_path, bad)
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "Picard" in capsys.readouterr().err


class TestCheckDelay:
    def test_prints_segment_json(self, tmp_path, capsys):
        cfg = write(tmp_path, NESTED_TOML)
        code = main(["check-delay", "--config", cfg])
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert body["passed"] is True
        seg = body["report"]["results"]["segment"]
        assert seg["theta_upper"] == pytest.approx(1.0)
        assert seg["theta_lower"] == pytest.approx(0.5)

    def test_seed_required(self, tmp_path, capsys):
        text = NESTED_TOML.replace("seed = 7", "")
        cfg = write(tmp_path, text)
        code = main(["check-delay", "--config", cfg])
        assert code == 3
        assert "seed" in capsys.readouterr().err


class TestVerify:
    def test_suite_report_written(self, tmp_path):
        cfg = write(tmp_path, NESTED_TOML)
        out = tmp_path / "report.json"
        code = main(["verify", "--config", cfg, "--suite", "ignorance", "--out", str(out)])
        assert code == 0
        body = json.loads(out.read_text())
        assert body["report"]["results"]["pass"] is True

    def test_seed_flag_overrides(self, tmp_path):
        text = NESTED_TOML.replace("seed = 7", "")
        cfg = write(tmp_path, text)
        out = tmp_path / "report.json"
        code = main(["verify", "--config", cfg, "--suite", "ignorance", "--seed", "5", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["report"]["results"]["seed"] == 5

    def test_deterministic_reports_without_timing(self, tmp_path):
        cfg = write(tmp_path, NESTED_TOML)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            code = main(
                ["verify", "--config", cfg, "--suite", "uniqueness", "--no-timing", "--out", str(out)]
            )
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_certified_fail_exit_1(self, tmp_path):
        # five Hoelder pairs can never reach the ten-pair requirement, so the
        # regularity section reports a certified failure
        text = NICHOLSON_PDE_TOML.replace("holder_pairs = 200", "holder_pairs = 5").replace(
            "T_long = 20.0", "T_long = 6.0"
        )
        cfg = write(tmp_path, text)
        out = tmp_path / "report.json"
        code = main(["verify", "--config", cfg, "--suite", "attractor", "--out", str(out)])
        assert code == 1
        body = json.loads(out.read_text())
        assert body["passed"] is False
        assert "valid pairs" in body["report"]["results"]["sections"]["holder"]["error"]


class TestAttractor:
    def test_unbounded_nonlinearity_reports_section_failure(self, tmp_path):
        # the dissipation claim needs a bounded delayed term; an affine
        # nonlinearity fails that precondition as a certified section failure
        out = tmp_path / "report.json"
        cfg = write(tmp_path, ORACLE_TOML)
        code = main(["verify", "--config", cfg, "--suite", "attractor", "--out", str(out)])
        assert code == 1
        body = json.loads(out.read_text())
        assert "bounded" in body["report"]["results"]["sections"]["dissipation"]["error"]

    def test_diagnostics_written(self, tmp_path):
        cfg = write(tmp_path, NICHOLSON_PDE_TOML)
        out = tmp_path / "diag.json"
        code = main(
            ["attractor", "--config", cfg, "--T-long", "12", "--ensemble-size", "2", "--out", str(out)]
        )
        assert code == 0
        body = json.loads(out.read_text())
        sec = body["report"]["results"]["sections"]
        assert sec["dissipation"]["pass"] is True
        assert sec["dissipation"]["radius_estimate"] > 0
        assert sec["holder"]["l_tilde_estimate"] is not None


class TestLogging:
    def test_sdd_log_env_levels(self, tmp_path, monkeypatch):
        import logging

        cfg = write(tmp_path, ORACLE_TOML)
        monkeypatch.setenv("SDD_LOG", "debug")
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "t.csv")])
        assert code == 0
        assert logging.getLogger("sddsim").level == logging.DEBUG
        monkeypatch.setenv("SDD_LOG", "error")
        code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "t.csv")])
        assert code == 0
        assert logging.getLogger("sddsim").level == logging.ERROR


class TestServerMode:
    def test_thin_client_round_trip(self, tmp_path, monkeypatch, capsys):
        from fastapi.testclient import TestClient
        import httpx

        from sddsim.service import create_app

        test_client = TestClient(create_app())

        def fake_post(url, json=None, timeout=None):
            path = url.split("http://fake-server", 1)[1]
            return test_client.post(path, json=json)

        monkeypatch.setattr(httpx, "post", fake_post)
        cfg = write(tmp_path, ORACLE_TOML)
        out = tmp_path / "traj.csv"
        code = main(
            ["simulate", "--config", cfg, "--out", str(out), "--server", "http://fake-server"]
        )
        assert code == 0
        assert out.read_text().startswith("t,v_0")

    def test_server_config_error_maps_to_exit_3(self, tmp_path, monkeypatch, capsys):
        from fastapi.testclient import TestClient
        import httpx

        from sddsim.service import create_app

        test_client = TestClient(create_app())
        monkeypatch.setattr(
            httpx, "post", lambda url, json=None, timeout=None: test_client.post(
                url.split("http://fake-server", 1)[1], json=json
            )
        )
        bad = ORACLE_TOML.replace("dt = 0.001", "dt = 1.5")
        cfg = write(tmp_path, bad)
        code = main(
            ["simulate", "--config", cfg, "--out", str(tmp_path / "x.csv"), "--server", "http://fake-server"]
        )
        assert code == 3
