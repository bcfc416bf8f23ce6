"""
Command line tests
"""

import json

import pytest
from click.testing import CliRunner

from src import services
from src.main import cli
from src.settings import get_settings


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


def simulate(runner, out, *args):
    result = runner.invoke(cli, ["simulate", "--out", str(out), *args])
    assert result.exit_code == 0, result.stderr
    return result


def test_missing_file_is_exit_two(runner, tmp_path):
    result = runner.invoke(cli, ["test-networks", str(tmp_path / "a.tsv"), str(tmp_path / "b.tsv")])
    assert result.exit_code == 2
    assert "file not found" in result.stderr


def test_non_finite_matrix_is_exit_two(runner, tmp_path):
    network = tmp_path / "net.tsv"
    network.write_text("a\tb\nb\tc\n")
    matrix = tmp_path / "y.csv"
    matrix.write_text("1,2\nnan,3\n4,5\n")
    result = runner.invoke(cli, ["test-netcov", str(network), str(matrix)])
    assert result.exit_code == 2
    assert "row 2, column 1" in result.stderr


def test_bad_k_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["test-networks", "a", "b", "--k1", "zero"])
    assert result.exit_code == 2


def test_infeasible_design_is_exit_one(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--n", "20", "--k1", "2", "--r", "50", "--s", "0.6",
                                 "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "infeasible" in result.stderr


def test_simulate_full_dependence(runner, tmp_path):
    simulate(runner, tmp_path, "--generator", "sbm", "--n", "100", "--k1", "2", "--delta", "1", "--s", "0.05")
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["z1"] == truth["z2"]
    assert (tmp_path / "view1.tsv").exists() and (tmp_path / "view2.tsv").exists()


def test_simulate_shared_popularity(runner, tmp_path):
    simulate(runner, tmp_path, "--generator", "dcsbm-shared-popularity", "--n", "50", "--k1", "2",
             "--theta", "[[0.5,0.25],[0.25,1.0]]", "--seed", "3")
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["delta1"] == truth["delta2"]
    assert all(0.14 <= d <= 0.84 for d in truth["delta1"])


def test_simulate_same_seed_same_bytes(runner, tmp_path):
    args = ["--generator", "netcov", "--n", "80", "--k1", "3", "--delta", "0.5", "--seed", "11"]
    simulate(runner, tmp_path / "a", *args)
    simulate(runner, tmp_path / "b", *args)
    for name in ("view1.tsv", "features.csv", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_networks_end_to_end(runner, tmp_path):
    sim = tmp_path / "sim"
    simulate(runner, sim, "--n", "200", "--k1", "2", "--delta", "1", "--s", "0.1", "--seed", "2")
    out = tmp_path / "run"
    result = runner.invoke(cli, ["test-networks", str(sim / "view1.tsv"), str(sim / "view2.tsv"),
                                 "--k1", "2", "--k2", "2", "-M", "20", "--seed", "1", "--out", str(out)])
    assert result.exit_code == 0, result.stderr
    record = json.loads(result.stdout)
    assert record["p_value"] == 0.0
    assert record["rejected"] is True
    assert record["k1"] == 2 and record["k2"] == 2
    for name in ("result.json", "fit.json", "C.csv", "pi1.csv", "pi2.csv", "perm_statistics.csv", "ingestion.json"):
        assert (out / name).exists()
    ingestion = json.loads((out / "ingestion.json").read_text())
    assert ingestion["n"] <= 200

    report = runner.invoke(cli, ["verify-ledger"])
    assert report.exit_code == 0
    assert json.loads(report.stdout)["entries"] == 2


def test_netcov_end_to_end_csv_output(runner, tmp_path):
    sim = tmp_path / "sim"
    simulate(runner, sim, "--generator", "netcov", "--n", "150", "--k1", "3", "--delta", "0.5",
             "--s", "0.08", "--seed", "4")
    result = runner.invoke(cli, ["test-netcov", str(sim / "view1.tsv"), str(sim / "features.csv"),
                                 "--row-labels", "--k1", "3", "--k2", "3", "-M", "10",
                                 "--format", "csv", "--out", str(tmp_path / "run")])
    assert result.exit_code == 0, result.stderr
    header, values = result.stdout.strip().splitlines()
    assert header.split(",")[:2] == ["statistic", "p_value"]
    assert len(values.split(",")) == len(header.split(","))


def test_power_study_writes_tidy_rows(runner, tmp_path):
    result = runner.invoke(cli, ["power-study", "--n", "60", "--k", "2", "--grid-delta", "0,1", "--grid-s", "0.1",
                                 "--reps", "2", "--perms", "5", "--tests", "gtest-true-k",
                                 "--format", "json", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.stderr
    rows = json.loads(result.stdout)
    assert [r["delta"] for r in rows] == [0.0, 1.0]
    assert all(r["replicates"] + r["errors"] == 2 for r in rows)
    assert len((tmp_path / "tidy.csv").read_text().splitlines()) == 1 + 4


def test_estimate_k_prints_integer(runner, tmp_path):
    simulate(runner, tmp_path, "--n", "300", "--k1", "2", "--s", "0.1", "--seed", "5")
    result = runner.invoke(cli, ["estimate-k", str(tmp_path / "view1.tsv")])
    assert result.exit_code == 0, result.stderr
    assert result.stdout.strip() == "2"


def test_tampered_ledger_fails_verification(runner, tmp_path):
    simulate(runner, tmp_path / "a", "--n", "30", "--k1", "2", "--s", "0.2", "--seed", "1")
    simulate(runner, tmp_path / "b", "--n", "30", "--k1", "2", "--s", "0.2", "--seed", "2")
    ledger = get_settings().ledger_path
    lines = ledger.read_text().splitlines()
    ledger.write_text(lines[1] + "\n")

    result = runner.invoke(cli, ["verify-ledger"])
    assert result.exit_code == 1
    assert json.loads(result.stdout)["violations"][0]["violation"] == "CHAIN_BREAK"


class _FakeResponse:
    def __init__(self, chunks, status=200):
        self.chunks = chunks
        self.status = status

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def raise_for_status(self):
        if self.status >= 400:
            raise services.requests.HTTPError(f"{self.status} error")

    def iter_content(self, chunk_size):
        yield from self.chunks


def test_fetch_streams_to_file(runner, tmp_path, monkeypatch):
    monkeypatch.setattr(services.requests, "get", lambda url, stream, timeout: _FakeResponse([b"a\tb\n", b"b\tc\n"]))
    target = tmp_path / "data" / "edges.tsv"
    result = runner.invoke(cli, ["fetch", "http://example.org/edges.tsv", "--out", str(target)])
    assert result.exit_code == 0, result.stderr
    assert target.read_text() == "a\tb\nb\tc\n"


def test_fetch_http_error_is_exit_two(runner, tmp_path, monkeypatch):
    monkeypatch.setattr(services.requests, "get", lambda url, stream, timeout: _FakeResponse([], status=404))
    result = runner.invoke(cli, ["fetch", "http://example.org/missing", "--out", str(tmp_path / "x.tsv")])
    assert result.exit_code == 2
    assert "download failed" in result.stderr


def test_asymmetric_theta_is_exit_two(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--n", "20", "--k1", "2", "--theta", "[[0.5,0.2],[0.3,0.5]]",
                                 "--out", str(tmp_path)])
    assert result.exit_code == 2
    assert "symmetric" in result.stderr


def test_same_network_twice_is_dependent(runner, tmp_path):
    sim = tmp_path / "sim"
    simulate(runner, sim, "--n", "150", "--k1", "2", "--s", "0.1", "--seed", "8")
    result = runner.invoke(cli, ["test-networks", str(sim / "view1.tsv"), str(sim / "view1.tsv"),
                                 "--k1", "2", "--k2", "2", "-M", "20", "--out", str(tmp_path / "run")])
    assert result.exit_code == 0, result.stderr
    assert json.loads(result.stdout)["p_value"] == 0.0
