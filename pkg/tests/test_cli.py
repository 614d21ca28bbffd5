import json

from blochhom import cli


def run(args):
    return cli.main(args)


def test_mesh_command_roundtrip(tmp_path):
    out = tmp_path / "m"
    assert run(["mesh", "--geometry", "kagome", "--hmax", "0.2", "--out", str(out)]) == 0
    stats = json.loads((out / "mesh_stats.json").read_text())
    assert abs(stats["porosity"] - 0.7488) < 1e-6
    # re-import through the file path
    out2 = tmp_path / "m2"
    assert run(["mesh", "--geometry", "file", "--input", str(out / "mesh.txt"),
                "--out", str(out2)]) == 0
    assert (out2 / "mesh.txt").read_text() == (out / "mesh.txt").read_text()


def test_bands_deterministic(tmp_path):
    cfg = {"schema_version": 1,
           "geometry": {"kind": "pinned", "h_max": 0.16},
           "n_max": 3,
           "path": {"waypoints": [[0.5, 0], [0, 0]], "samples_per_segment": 4}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert run(["bands", "--config", str(cfg_path), "--out", str(out)]) == 0
        outs.append((out / "bands.csv").read_bytes())
    assert outs[0] == outs[1]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"]
    assert "bands.csv" in manifest["artifacts"]


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\"schema_version\": 99}")
    assert run(["bands", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2


def test_homogenize_json_output(tmp_path, capsys):
    code = run(["homogenize", "--ks", "0,0", "--branch", "2", "--direction", "1,0",
                "--epsilon", "0.05"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["regime"] == "SimpleThetaZero"
    assert len(payload["omega2_poly_coefficients"]) >= 2


def test_classify_command(tmp_path, capsys):
    tens = {"Q": 2, "theta11": [[0, 1], [0, 0]], "theta22": [[0, -1], [0, 0]],
            "theta12": [[0, 0], [1, 0]], "rho1": 1.0, "rho2": 1.0, "gamma": 0.0}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(tens))
    assert run(["classify", "--from-tensors", str(path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kind"] == "AxisymmetricDiracCone"


def test_verify_subset(tmp_path):
    assert run(["verify", "--only", "9", "--out", str(tmp_path / "v")]) == 0
    payload = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert payload[0]["passed"] is True


def test_numerical_failure_exit_code(tmp_path, capsys):
    # frequency far below the gap edge: the denominator changes sign
    cfg = {"schema_version": 1, "geometry": {"kind": "kagome", "h_max": 0.2},
           "branch": 1, "truncation_cells": 3}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code = run(["respond", "--config", str(path), "--epsilon", "0.9",
                "--section", "x.j=1.5", "--kgrid", "8",
                "--out", str(tmp_path / "r")])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_homogenize_cluster_branches(capsys):
    code = run(["homogenize", "--ks", "0.6667,0.3333", "--branch", "1,2",
                "--direction", "1,0", "--epsilon", "0.04"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["regime"].startswith(("Cluster", "Repeated"))
    assert len(payload["rho0"]) == 2


def test_bands_from_kpath_file(tmp_path):
    kfile = tmp_path / "path.txt"
    kfile.write_text("0.5 0.0\n0 0\n")
    cfg = {"schema_version": 1, "geometry": {"kind": "pinned", "h_max": 0.18},
           "n_max": 2, "path": {"file": str(kfile), "samples_per_segment": 3}}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert run(["bands", "--config", str(cfg_path), "--out", str(tmp_path / "b")]) == 0
    lines = (tmp_path / "b" / "bands.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
