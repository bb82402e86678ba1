import json

import numpy as np
import pytest

from spintomo.cli import main
from spintomo.data import load_dataset
from spintomo.field import load_field, zero_field
from spintomo.mesh import load_mesh

FAST = ["--nv", "300", "--step", "2e-3"]


def run(args):
    return main([str(a) for a in args])


def test_zero_noiseless_pipeline_evaluates_to_zero(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--truth", "zero", "--sigma", "0",
                "--n", "10", *FAST]) == 0
    capsys.readouterr()
    assert run(["eval", "--out", out]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["l2_error"] == 0.0
    assert report["n_geodesics"] == 10
    assert report["rel_l2_error"] is None  # zero truth has no relative scale


def test_sample_twice_is_bit_identical(tmp_path):
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--n", "15", "--seed", "7", *FAST]) == 0
    assert run(["sample", "--out", out, "--steps", "1", "--seed", "7",
                "--delta", "0.1", "--thin", "1"]) == 0
    first = {
        p.name: p.read_bytes() for p in (out / "chain").iterdir()
    }
    assert run(["sample", "--out", out, "--steps", "1", "--seed", "7",
                "--delta", "0.1", "--thin", "1"]) == 0
    second = {p.name: p.read_bytes() for p in (out / "chain").iterdir()}
    assert first == second
    assert set(first) == {"mean.json", "report.json", "loglik.csv"}


def test_full_pipeline_layout(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--n", "20", "--sigma", "0.05",
                "--seed", "5", *FAST]) == 0
    assert run(["sample", "--out", out, "--steps", "60", "--delta", "0.02",
                "--thin", "10"]) == 0
    assert run(["eval", "--out", out]) == 0
    capsys.readouterr()
    assert run(["forward", "--out", out]) == 0
    assert run(["export", "--out", out]) == 0

    for rel in [
        "run.json", "mesh.json", "truth.json", "data.json", "eval.json",
        "chain/report.json", "chain/mean.json", "chain/loglik.csv",
        "plots/forward.csv", "plots/fields.csv", "plots/mesh.png",
        "plots/truth.png", "plots/mean.png", "plots/compare.png",
        "plots/trace.png",
    ]:
        assert (out / rel).exists(), rel

    report = json.loads((out / "chain" / "report.json").read_text())
    assert report["n_chains"] == 1
    assert report["burn_in"] == 12
    assert 0.0 <= report["chains"][0]["acceptance_rate"] <= 1.0

    run_file = json.loads((out / "run.json").read_text())
    assert run_file["config"]["noise.sigma"] == 0.05
    assert run_file["config"]["mesh.target_nv"] == 300

    mesh = load_mesh(out / "mesh.json")
    mean = load_field(out / "chain" / "mean.json", mesh)
    assert np.isfinite(mean.coeffs).all()


def test_forward_csv_identity_rows(tmp_path):
    out = tmp_path / "run"
    assert run(["truth", "--out", out, "--truth", "zero", *FAST]) == 0
    assert run(["forward", "--out", out, "--n", "5"]) == 0
    rows = (out / "plots" / "forward.csv").read_text().splitlines()
    assert rows[0] == "beta,alpha,y0,y1,y2,y3,y4,y5,y6,y7"
    assert len(rows) == 6
    # zero field scatters to the identity: re/im interleaved rows
    for row in rows[1:]:
        vals = [float(v) for v in row.split(",")[2:]]
        assert vals == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]


def test_multi_chain_pooling(tmp_path):
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--n", "10", *FAST]) == 0
    assert run(["sample", "--out", out, "--steps", "20", "--chains", "2",
                "--delta", "0.05"]) == 0
    mesh = load_mesh(out / "mesh.json")
    pooled = load_field(out / "chain" / "mean.json", mesh)
    a = load_field(out / "chain" / "mean_0.json", mesh)
    b = load_field(out / "chain" / "mean_1.json", mesh)
    assert np.allclose(pooled.coeffs, 0.5 * (a.coeffs + b.coeffs))
    assert not np.array_equal(a.coeffs, b.coeffs)  # distinct chain streams
    report = json.loads((out / "chain" / "report.json").read_text())
    assert report["n_chains"] == 2
    assert report["chains"][0]["seed"] != report["chains"][1]["seed"]


def test_seed_changes_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out, seed in ((a, 1), (b, 2)):
        assert run(["simulate", "--out", out, "--n", "8", "--seed", seed,
                    *FAST]) == 0
    da, db = load_dataset(a / "data.json"), load_dataset(b / "data.json")
    assert not np.array_equal(da.y, db.y)
    assert da.entries != db.entries


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(
        "# desk-scale noise\nnoise.sigma=0.1\nmesh.target_nv=300\n"
        "forward.step=2e-3\nmetric.name=euclidean\n"
    )
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--config", cfg, "--n", "5",
                "--sigma", "0.2"]) == 0
    stored = json.loads((out / "run.json").read_text())["config"]
    assert stored["noise.sigma"] == 0.2  # flag beats file
    assert stored["mesh.target_nv"] == 300
    assert stored["metric.name"] == "euclidean"
    assert load_dataset(out / "data.json").sigma == 0.2

    # a later subcommand inherits the stored configuration
    assert run(["eval", "--out", out]) == 0
    stored = json.loads((out / "run.json").read_text())["config"]
    assert stored["noise.sigma"] == 0.2


def test_json_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mesh": {"target_nv": 250}, "noise.sigma": 0.3}))
    out = tmp_path / "run"
    assert run(["mesh", "--out", out, "--config", cfg]) == 0
    stored = json.loads((out / "run.json").read_text())["config"]
    assert stored["mesh.target_nv"] == 250
    assert stored["noise.sigma"] == 0.3
    mesh = load_mesh(out / "mesh.json")
    assert abs(mesh.nv - 250) <= 25


def test_usage_errors_exit_1(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["simulate", "--out", out, "--definitely-not-a-flag"]) == 1
    assert run(["simulate", "--out", out, "--truth", "nonsense"]) == 1
    cfg = tmp_path / "bad.txt"
    cfg.write_text("unknown.key=2\n")
    assert run(["mesh", "--out", out, "--config", cfg]) == 1
    cfg.write_text("mesh.target_nv\n")
    assert run(["mesh", "--out", out, "--config", cfg]) == 1
    assert run(["mesh", "--out", out, "--config", tmp_path / "absent.txt"]) == 1
    capsys.readouterr()


def test_data_errors_exit_2(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["sample", "--out", out, "--steps", "1"]) == 2  # nothing yet
    assert run(["eval", "--out", out]) == 2
    assert run(["simulate", "--out", out, "--n", "5", *FAST]) == 0
    # corrupt the dataset: later stages must fail loudly
    (out / "data.json").write_text("{\"version\": 1, truncated")
    assert run(["sample", "--out", out, "--steps", "1"]) == 2
    capsys.readouterr()


def test_mesh_hash_mismatch_exit_2(tmp_path, capsys):
    out = tmp_path / "run"
    assert run(["truth", "--out", out, *FAST]) == 0
    # regenerate the mesh with a different seed: truth no longer matches
    (out / "mesh.json").unlink()
    assert run(["mesh", "--out", out, "--seed", "99"]) == 0
    assert run(["eval", "--out", out]) == 2
    capsys.readouterr()


def test_threads_flag_accepted(tmp_path):
    out = tmp_path / "run"
    assert run(["mesh", "--out", out, "--threads", "1", "--nv", "200"]) == 0


def test_prior_truth_kind(tmp_path):
    out = tmp_path / "run"
    assert run(["truth", "--out", out, "--truth", "prior", "--group", "so3",
                *FAST]) == 0
    mesh = load_mesh(out / "mesh.json")
    truth = load_field(out / "truth.json", mesh)
    assert truth.group == "so3"
    assert not np.array_equal(truth.coeffs, zero_field(mesh, "so3").coeffs)
