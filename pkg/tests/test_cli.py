import json

import numpy as np
import pytest

from flatcert.cli import RunConfig, main
from flatcert.grid import read_gf1
from flatcert.mse import mse_residual


def run_cli(*argv):
    return main(list(argv))


class TestConfig:
    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            RunConfig(command="ledger", resolution=9)
        with pytest.raises(ValueError):
            RunConfig(command="ledger", resolution=18)

    def test_missing_output_dir(self, tmp_path):
        with pytest.raises(ValueError):
            RunConfig(command="ledger", out=str(tmp_path / "nope" / "x.json"))


class TestLedgerCommand:
    def test_writes_json_with_warning(self, tmp_path, capsys):
        out = tmp_path / "ledger.json"
        code = run_cli(
            "ledger", "--n", "3", "--eps1", "0.25", "--eta", "0.2", "--out", str(out)
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["alpha_warning"] is True
        assert "flatness_threshold" in doc["constants"]
        assert float(doc["constants"]["flatness_threshold"]["log2"]) < -1000

    def test_stdout_when_no_out(self, capsys):
        assert run_cli("ledger") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["passed"] is True

    def test_bad_params_exit_2(self, capsys):
        assert run_cli("ledger", "--eta", "0.5") == 2
        assert "error:" in capsys.readouterr().err


class TestSurfaceCommands:
    def test_exact_and_solve_roundtrip(self, tmp_path):
        surf = tmp_path / "plane.gf"
        assert run_cli(
            "exact", "--kind", "affine", "--a", "0.005,0", "--resolution", "33",
            "--out", str(surf),
        ) == 0
        field = read_gf1(surf)
        assert field.resolution == 33

        solved = tmp_path / "saddle.gf"
        assert run_cli(
            "solve", "--preset", "saddle", "--eps", "1e-2", "--resolution", "33",
            "--out", str(solved),
        ) == 0
        u = read_gf1(solved)
        res = mse_residual(u).values
        assert np.nanmax(np.abs(res)) < 1e-9

    def test_solve_from_boundary_file(self, tmp_path):
        surf = tmp_path / "plane.gf"
        run_cli("exact", "--kind", "affine", "--a", "0.004,-0.002",
                "--resolution", "33", "--out", str(surf))
        solved = tmp_path / "resolved.gf"
        assert run_cli(
            "solve", "--boundary-file", str(surf), "--resolution", "33",
            "--out", str(solved),
        ) == 0
        a = read_gf1(surf)
        b = read_gf1(solved)
        sel = a.covered()
        assert np.nanmax(np.abs(a.values[sel] - b.values[sel])) < 1e-9


class TestCertifyCommand:
    def test_exact_flat_plane(self, tmp_path, capsys):
        out = tmp_path / "cert.json"
        code = run_cli(
            "certify", "--exact", "affine", "--a", "0,0", "--eps", "1e-2",
            "--resolution", "33", "--out", str(out),
        )
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["verdict"] is True
        assert [abs(x) for x in doc["nu"]] == [0.0, 0.0, 1.0]

    def test_surface_file(self, tmp_path):
        surf = tmp_path / "bumped.gf"
        run_cli(
            "solve", "--preset", "bump", "--eps", "1e-2", "--q", "0.1",
            "--amp", "0.02", "--seed", "7", "--resolution", "65", "--out", str(surf),
        )
        out = tmp_path / "cert.json"
        assert run_cli(
            "certify", "--surface", str(surf), "--eps", "1e-2",
            "--resolution", "65", "--out", str(out),
        ) == 0
        doc = json.loads(out.read_text())
        assert doc["verdict"] is True
        assert all(v > 0 for v in doc["margins"].values())

    def test_failing_stage_exit_1(self, tmp_path, capsys):
        # two full-height sheets at small flatness violate the sandwich
        surf = tmp_path / "flat.gf"
        run_cli("exact", "--kind", "affine", "--a", "0,0", "--resolution", "33",
                "--out", str(surf))
        import flatcert.grid as fg

        field = read_gf1(surf)
        samples = np.argwhere(field.covered())
        # craft a gf carrying eps-height values: reuse solve output path instead
        out = tmp_path / "cert.json"
        vals = field.values.copy()
        vals[field.covered()] = 1e-5 * (np.arange(samples.shape[0]) % 2)
        bad = field.with_values(vals)
        fg.write_gf1(bad, surf)
        code = run_cli(
            "certify", "--surface", str(surf), "--eps", "1e-5",
            "--resolution", "33", "--out", str(out),
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "FAIL" in err
        doc = json.loads(out.read_text())
        assert doc["verdict"] is False
        assert "failed_stage" in doc

    def test_deterministic_reports(self, tmp_path):
        surf = tmp_path / "s.gf"
        run_cli("solve", "--preset", "saddle", "--eps", "1e-2",
                "--resolution", "33", "--out", str(surf))
        out1 = tmp_path / "c1.json"
        out2 = tmp_path / "c2.json"
        for out in (out1, out2):
            assert run_cli(
                "certify", "--surface", str(surf), "--eps", "1e-2",
                "--resolution", "33", "--out", str(out),
            ) == 0
        assert out1.read_bytes() == out2.read_bytes()


class TestAuditIterateReport:
    def test_audit_csv(self, tmp_path):
        surf = tmp_path / "s.gf"
        run_cli("solve", "--preset", "saddle", "--eps", "1e-2",
                "--resolution", "65", "--out", str(surf))
        out = tmp_path / "audit.csv"
        assert run_cli(
            "audit", "--surface", str(surf), "--eps", "1e-2",
            "--resolution", "65", "--out", str(out),
        ) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "m,radius,measured,bound"
        assert len(lines) >= 2

    def test_iterate_and_report(self, tmp_path):
        surf = tmp_path / "s.gf"
        run_cli("solve", "--preset", "saddle", "--eps", "1e-2",
                "--resolution", "33", "--out", str(surf))
        certs = tmp_path / "iter.json"
        assert run_cli(
            "iterate", "--surface", str(surf), "--eps", "1e-2", "--steps", "2",
            "--resolution", "33", "--out", str(certs),
        ) == 0
        doc = json.loads(certs.read_text())
        assert len(doc["certificates"]) >= 1

        single = tmp_path / "c.json"
        run_cli("certify", "--surface", str(surf), "--eps", "1e-2",
                "--resolution", "33", "--out", str(single))
        report = tmp_path / "merge.csv"
        assert run_cli(
            "report", "--inputs", str(single), "--out", str(report)
        ) == 0
        lines = report.read_text().strip().splitlines()
        assert lines[0] == "eps,closeness_measured,closeness_bound"
        assert len(lines) == 2


def test_audit_json_format(tmp_path):
    surf = tmp_path / "s.gf"
    run_cli("solve", "--preset", "saddle", "--eps", "1e-2",
            "--resolution", "65", "--out", str(surf))
    out = tmp_path / "audit.json"
    assert run_cli(
        "audit", "--surface", str(surf), "--eps", "1e-2",
        "--format", "json", "--out", str(out),
    ) == 0
    doc = json.loads(out.read_text())
    assert doc["passed"] is True
    assert doc["rows"][0]["m"] == 3
