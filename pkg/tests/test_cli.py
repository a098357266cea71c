import json

from vqe_lab.cli import main


def test_models_lists_every_preset(capsys):
    assert main(["models"]) == 0
    out = capsys.readouterr().out
    for name in ("Delta1", "Delta2", "Delta3", "Delta4L", "Delta4P", "Delta4S", "Separable"):
        assert name in out
    assert "E_g=-2.0000000000" in out


def test_fit_sk_reads_csv(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    rows = [(d, 10.0 ** -(d / 2.0) ** (1 / 1.5)) for d in (1, 2, 3, 4)]
    path.write_text("# comment\nD,eps\n" + "".join(f"{d},{e!r}\n" for d, e in rows))
    assert main(["fit-sk", str(path), "--threshold", "0.001"]) == 0
    fit = json.loads(capsys.readouterr().out)
    assert abs(fit["c"] - 1.5) < 1e-9


def test_fit_sk_refuses_short_input(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    path.write_text("d_blocks,eps\n1,0.5\n2,0.2\n")
    assert main(["fit-sk", str(path)]) == 2
    assert "refused" in capsys.readouterr().err


def test_run_writes_outputs(tmp_path, capsys):
    spec = {"kind": "EntanglerBenchmark", "models": ["Delta1"], "entanglers": ["Ent0"],
            "iterations": 20, "calibration_steps": 2, "repetitions": 2, "seed": 1}
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(spec))
    assert main(["run", str(path), "-o", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "benchmark.csv").exists()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["provenance"]["seed"] == 1
    assert report["rows"][0]["fraction_converged"] == 0
