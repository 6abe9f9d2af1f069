import os
import stat

import pytest

from dynshadow.circuit import build_random_pauli_circuit, parse_gatespec
from dynshadow.cli import main, verify_shot_floor
from dynshadow.serialize import deserialize_circuit


def kv(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def cli(capsys):
    def call(*args):
        try:
            code = main([str(a) for a in args])
        except SystemExit as exc:
            code = exc.code
        out, err = capsys.readouterr()
        return code, out, err
    return call


class TestBuild:
    def test_single_qubit(self, cli, tmp_path):
        out = tmp_path / "fig.json"
        code, stdout, _ = cli("build", "--qubits", 1, "--out", out)
        assert code == 0 and kv(stdout)["n_clbits"] == "3"
        assert deserialize_circuit(out.read_text()) == build_random_pauli_circuit(1)

    def test_prep(self, cli, tmp_path):
        out = tmp_path / "c.json"
        assert cli("build", "--qubits", 3, "--prep", "x0,x1", "--out", out)[0] == 0
        assert deserialize_circuit(out.read_text()) == build_random_pauli_circuit(3, parse_gatespec("x0,x1"))

    def test_stdout(self, cli):
        code, stdout, _ = cli("build", "--qubits", 1)
        assert code == 0 and deserialize_circuit(stdout).n_qubits == 1

    @pytest.mark.parametrize("args", [
        ("--qubits", 1, "--probs", "0.5,0.5,0"),
        ("--qubits", 1, "--probs", "0.5,0.5"),
        ("--qubits", 2, "--prep", "x5"),
        ("--qubits", "two"),
        (),
    ])
    def test_usage_errors(self, cli, args):
        assert cli("build", *args)[0] == 1

    def test_file_mode_follows_umask(self, cli, tmp_path):
        out = tmp_path / "c.json"
        cli("build", "--qubits", 1, "--out", out)
        mask = os.umask(0)
        os.umask(mask)
        assert stat.S_IMODE(out.stat().st_mode) == 0o666 & ~mask


class TestRun:
    def test_records(self, cli, tmp_path):
        circ = tmp_path / "fig.json"
        cli("build", "--qubits", 1, "--out", circ)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            code, stdout, _ = cli("run", "--circuit", circ, "--shots", 100_000, "--seed", 7,
                                  "--backend", "statevector", "--out", out)
            assert code == 0 and kv(stdout)["rows"] == "100000"
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert lines[0] == "shot,Store_Z[0],Store_XY[0],Result[0]" and len(lines) == 100_001

    def test_stabilizer_rejects_sampler_circuit(self, cli, tmp_path):
        circ = tmp_path / "fig.json"
        cli("build", "--qubits", 1, "--out", circ)
        out = tmp_path / "x.csv"
        code, _, err = cli("run", "--circuit", circ, "--shots", 10, "--seed", 1, "--backend", "stabilizer", "--out", out)
        assert code == 2 and "Clifford" in err
        assert not out.exists() and os.listdir(tmp_path) == ["fig.json"]

    def test_unreadable_circuit(self, cli, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        assert cli("run", "--circuit", bad, "--shots", 1, "--seed", 1)[0] == 2

    def test_ci_requires_seed(self, cli):
        assert cli("run", "--hybrid", "--qubits", 1, "--shots", 5, "--ci")[0] == 1

    def test_hybrid_statevector_and_stabilizer_formats(self, cli, tmp_path):
        for backend in ("statevector", "stabilizer"):
            out = tmp_path / f"{backend}.csv"
            code, stdout, _ = cli("run", "--hybrid", "--qubits", 2, "--prep", "h0", "--shots", 100,
                                  "--seed", 3, "--backend", backend, "--out", out)
            assert code == 0 and kv(stdout)["kind"] == "snapshots"
            assert out.read_text().splitlines()[0] == "shot,basis,outcomes"

    def test_readout_errors_count(self, cli):
        assert cli("run", "--hybrid", "--qubits", 2, "--shots", 5, "--seed", 1,
                   "--readout-errors", "0.1,0.2,0.3")[0] == 1

    @pytest.mark.slow
    def test_forty_qubit_hybrid(self, cli, tmp_path):
        out = tmp_path / "s.csv"
        code, stdout, _ = cli("run", "--hybrid", "--qubits", 40, "--prep", "x0..x19", "--shots", 1_000_000,
                              "--seed", 1, "--backend", "stabilizer", "--out", out)
        assert code == 0 and kv(stdout)["rows"] == "1000000"
        with open(out) as fh:
            fh.readline()
            _, basis, bits = fh.readline().strip().split(",")
        assert len(basis) == len(bits) == 40


class TestEstimate:
    @pytest.fixture
    def zero_stream(self, cli, tmp_path):
        out = tmp_path / "z.csv"
        cli("run", "--hybrid", "--qubits", 1, "--shots", 100_000, "--seed", 5, "--backend", "stabilizer", "--out", out)
        return out

    def test_zero_state(self, cli, zero_stream):
        code, stdout, _ = cli("estimate", "--snapshots", zero_stream, "--observable", "Z")
        r = kv(stdout)
        assert code == 0 and r["shots"] == "100000"
        assert abs(float(r["value"]) - 1.0) <= 0.02
        assert float(r["stderr"]) == pytest.approx(0.0045, rel=0.05)

    def test_mitigation(self, cli, tmp_path):
        out = tmp_path / "noisy.csv"
        cli("run", "--hybrid", "--qubits", 1, "--shots", 100_000, "--seed", 2, "--readout-error", 0.02, "--out", out)
        plain = float(kv(cli("estimate", "--snapshots", out, "--observable", "Z")[1])["value"])
        code, stdout, _ = cli("estimate", "--snapshots", out, "--observable", "Z", "--mitigate", "--readout-errors", 0.02)
        assert code == 0 and kv(stdout)["mitigation"] == "on"
        assert abs(plain - 0.96) <= 0.02 and abs(float(kv(stdout)["value"]) - 1.0) <= 0.02

    def test_mitigate_needs_rates(self, cli, zero_stream):
        assert cli("estimate", "--snapshots", zero_stream, "--observable", "Z", "--mitigate")[0] == 1

    def test_trace(self, cli, tmp_path):
        snaps, ham, trace = tmp_path / "s.csv", tmp_path / "h.txt", tmp_path / "t.csv"
        ham.write_text("0.5 ZI\n0.25 XX\n")
        cli("run", "--hybrid", "--qubits", 2, "--shots", 20_000, "--seed", 4, "--backend", "stabilizer", "--out", snaps)
        code, stdout, _ = cli("estimate", "--snapshots", snaps, "--hamiltonian", ham, "--trace", "10,100,1000,10000",
                              "--reference", 0.5, "--trace-out", trace)
        assert code == 0 and "abs_error" in kv(stdout)
        lines = trace.read_text().splitlines()
        assert lines[0] == "shots,estimate,stderr,abs_error" and len(lines) == 5

    def test_from_records(self, cli, tmp_path):
        circ, rec = tmp_path / "c.json", tmp_path / "r.csv"
        cli("build", "--qubits", 2, "--prep", "x0", "--out", circ)
        cli("run", "--circuit", circ, "--shots", 50_000, "--seed", 3, "--out", rec)
        code, stdout, _ = cli("estimate", "--snapshots", rec, "--observable", "ZZ")
        r = kv(stdout)
        assert code == 0 and abs(float(r["value"]) + 1.0) <= 3 * float(r["stderr"])

    def test_aggregator(self, cli, zero_stream):
        code, stdout, _ = cli("estimate", "--snapshots", zero_stream, "--observable", "Z", "--aggregator", "mom:20")
        assert code == 0 and abs(float(kv(stdout)["value"]) - 1.0) <= 0.03
        assert cli("estimate", "--snapshots", zero_stream, "--observable", "Z", "--aggregator", "median")[0] == 1

    def test_errors(self, cli, zero_stream, tmp_path):
        assert cli("estimate", "--snapshots", tmp_path / "missing.csv", "--observable", "Z")[0] == 1
        assert cli("estimate", "--snapshots", zero_stream, "--observable", "ZZ")[0] == 2
        bad = tmp_path / "h.txt"
        bad.write_text("1.0 ZI\n1.0 XYZ\n")
        assert cli("estimate", "--snapshots", zero_stream, "--hamiltonian", bad)[0] == 2
        assert cli("estimate", "--snapshots", zero_stream)[0] == 1


class TestVerify:
    def test_default_passes(self, cli):
        code, stdout, _ = cli("verify-single-qubit", "--seed", 1, "--ci")
        assert code == 0 and kv(stdout)["status"] == "pass"

    def test_small_shot_count_inconclusive(self, cli):
        code, stdout, _ = cli("verify-single-qubit", "--shots", 100, "--seed", 1)
        assert code == 0 and kv(stdout)["status"] == "inconclusive"

    def test_shot_floor(self):
        assert verify_shot_floor(0.02) == 67_500

    def test_readout_error_shows_and_fails(self, cli):
        code, stdout, _ = cli("verify-single-qubit", "--seed", 2, "--readout-error", 0.1)
        z_on_zero = float(stdout.splitlines()[1].split()[1])
        assert abs(z_on_zero - 0.8) <= 0.02
        assert code == 3 and kv(stdout)["status"] == "fail"
        code, stdout, _ = cli("verify-single-qubit", "--seed", 2, "--readout-error", 0.1, "--mitigate")
        assert code == 0 and kv(stdout)["status"] == "pass"


class TestBench:
    def test_calibrated_ratio(self, cli):
        code, stdout, _ = cli("bench", "--shots", 100_000, "--static-shots", 100, "--seed", 1)
        r = kv(stdout)
        assert code == 0
        assert r["dynamic.circuits_compiled"] == "1" and r["static.circuits_compiled"] == "100"
        assert float(r["dynamic.speedup_vs_static"]) == pytest.approx(100_000 / 40 / (100 / 540), rel=1e-9)

    def test_custom_costs(self, cli):
        code, stdout, _ = cli("bench", "--shots", 50, "--seed", 1, "--compile-cost", 0, "--per-shot-cost", 1)
        assert code == 0 and float(kv(stdout)["dynamic.speedup_vs_static"]) == 1.0

    def test_zero_shots(self, cli):
        assert cli("bench", "--shots", 0, "--seed", 1)[0] == 1


def test_usage_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
