import csv
import json

import numpy as np
import pytest

import lirpose.cli as cli_module
from conftest import make_scene
from lirpose.cli import METRICS_SCHEMA, REPORT_SCHEMA, evaluate, main
from lirpose.errors import DimensionMismatch, MissingIntrinsics, NoValidCandidate, ParseError, TooFewMatches
from lirpose.geometry import RelativePose, rodrigues, rotation_angular_error
from lirpose.io import load_matches, write_intrinsics, write_matches, write_pose
from lirpose.simlab import CSV_COLUMNS

K = np.array([[800.0, 0.0, 320.0], [0.0, 800.0, 240.0], [0.0, 0.0, 1.0]])


def strip_timing(path):
    doc = json.loads(path.read_text())
    doc.pop("timing")
    return doc


@pytest.fixture
def synthetic(tmp_path):
    scene, m = make_scene(51, n=40)
    write_matches(tmp_path / "m.txt", m.pairs)
    write_pose(tmp_path / "truth.txt", scene.pose_true)
    return scene, tmp_path


def test_match_file_errors(tmp_path):
    p = tmp_path / "few.txt"
    p.write_text("#matches version=1 convention=NORMALIZED\n0 0 0 0\n0.1 0 0.1 0\n")
    with pytest.raises(TooFewMatches):
        load_matches(p)
    p.write_text("#matches version=1 convention=PIXEL\n" + "1 2 3 4\n" * 8)
    with pytest.raises(MissingIntrinsics):
        load_matches(p)
    p.write_text("#matches version=1 convention=NORMALIZED\n# comment\n\n1 2 3 4\n1 2 x 4\n")
    with pytest.raises(ParseError) as info:
        load_matches(p)
    assert info.value.line == 5
    p.write_text("x y x' y'\n")
    with pytest.raises(ParseError):
        load_matches(p)


def test_principal_point_maps_to_the_optical_axis(tmp_path):
    p = tmp_path / "pix.txt"
    p.write_text("#matches version=1 convention=PIXEL\n" + "320 240 320 240\n" * 6)
    pairs = load_matches(p, K)
    np.testing.assert_allclose(pairs.x, np.tile([0, 0, 1.0], (6, 1)), atol=1e-15)
    write_intrinsics(tmp_path / "K.txt", K)
    np.testing.assert_allclose(load_matches(p, str(tmp_path / "K.txt")).x_prime[0], [0, 0, 1.0], atol=1e-15)


def test_pixel_round_trip(tmp_path):
    _, m = make_scene(52, n=50)
    front = m.pairs.subset(np.flatnonzero((m.pairs.x[:, 2] > 0.2) & (m.pairs.x_prime[:, 2] > 0.2)))
    write_matches(tmp_path / "pix.txt", front, "PIXEL", K)
    back = load_matches(tmp_path / "pix.txt", K)
    for a, b in ((front.x, back.x), (front.x_prime, back.x_prime)):
        ang = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), (a * b).sum(1))
        assert ang.max() < 1e-9


def test_estimate_recovers_the_planted_pose(synthetic):
    scene, d = synthetic
    out = d / "r.json"
    code = main(["estimate", "--matches", str(d / "m.txt"), "--method", "lirp", "--out", str(out), "--residuals", str(d / "r.csv")])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == REPORT_SCHEMA and doc["status"] == "ok"
    R = np.array(doc["pose"]["R"]).reshape(3, 3)
    assert rotation_angular_error(scene.pose_true.R, R) < 1e-6
    assert doc["meta"]["inputs"]["n_matches"] == 40
    with open(d / "r.csv") as fh:
        assert len(list(csv.reader(fh))) == 41


@pytest.mark.parametrize("method", ["gnc-irls", "gnc-ransac", "ligt-refine"])
def test_every_method_runs(synthetic, method):
    _, d = synthetic
    out = d / f"{method}.json"
    args = ["estimate", "--matches", str(d / "m.txt"), "--method", method, "--out", str(out), "--iters", "3"]
    assert main(args) == 0
    assert json.loads(out.read_text())["diagnostics"] is not None


def test_estimate_exit_codes(synthetic, monkeypatch, capsys):
    _, d = synthetic
    bad = d / "bad.txt"
    bad.write_text("#matches version=1 convention=NORMALIZED\n1 2 3\n")
    out = d / "bad.json"
    assert main(["estimate", "--matches", str(bad), "--method", "lirp", "--out", str(out)]) == 2
    err = json.loads(out.read_text())["error"]
    assert err["type"] == "ParseError" and err["line"] == 2
    assert main(["estimate", "--matches", str(d / "m.txt"), "--method", "lirp", "--min-matches", "41", "--out", str(out)]) == 2
    assert json.loads(out.read_text())["error"]["type"] == "TooFewMatches"

    def fail(*args, **kwargs):
        raise NoValidCandidate("forced")

    monkeypatch.setattr(cli_module, "lirp_solve", fail)
    assert main(["estimate", "--matches", str(d / "m.txt"), "--method", "lirp", "--out", str(out)]) == 3
    doc = json.loads(out.read_text())
    assert doc["status"] == "error" and doc["error"]["type"] == "NoValidCandidate" and doc["pose"] is None


def test_estimate_reports_are_reproducible(tmp_path):
    _, m = make_scene(53, n=120, noise_px=1.0, outlier_fraction=0.6)
    write_matches(tmp_path / "m.txt", m.pairs)
    docs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        args = ["estimate", "--matches", str(tmp_path / "m.txt"), "--method", "gnc-ransac", "--seed", "9"]
        assert main(args + ["--iters", "5", "--out", str(out)]) == 0
        docs.append(strip_timing(out))
    assert docs[0] == docs[1]


def write_config(path, **overrides):
    doc = {"schema_version": 1, "n_trials": 2, "seed": 3, "noise_px": [0.5]}
    doc.update(overrides)
    path.write_text(json.dumps(doc))
    return str(path)


def test_simulate_writes_one_row_per_cell(tmp_path):
    cfg = write_config(tmp_path / "c.json", scene_kind=["normal", "planar"], outlier_fraction=[0.0, 0.2])
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o.csv")]) == 0
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == f"#schema={METRICS_SCHEMA}"
    rows = list(csv.DictReader(lines[1:]))
    assert list(rows[0]) == CSV_COLUMNS and len(rows) == 4


def test_simulate_edge_cases(tmp_path, capsys):
    cfg = write_config(tmp_path / "e.json", scene_kind=[])
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "e.csv")]) == 0
    assert (tmp_path / "e.csv").read_text().splitlines()[1:] == [",".join(CSV_COLUMNS)]
    cfg = write_config(tmp_path / "b.json", scene_kind=["curved"])
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b.csv")]) == 2
    assert "scene_kind" in capsys.readouterr().err
    cfg = write_config(tmp_path / "u.json", noise=[1.0])
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "u.csv")]) == 2


def test_evaluate(tmp_path):
    truth = RelativePose(rodrigues([0.1, -0.2, 0.3]), [1.0, 0.0, 0.0])
    write_pose(tmp_path / "t.txt", truth)

    def report(name, R):
        doc = {"schema": REPORT_SCHEMA, "pose": {"R": list(np.ravel(R)), "t": [1.0, 0.0, 0.0]}}
        (tmp_path / name).write_text(json.dumps(doc))
        return str(tmp_path / name)

    same = evaluate([report("a.json", truth.R)], [tmp_path / "t.txt"])
    assert same["epsilon_mean_deg"] == 0 and same["epsilon_med_deg"] == 0
    off = report("b.json", rodrigues([0, 0, np.radians(0.1)]) @ truth.R)
    res = evaluate([off], [tmp_path / "t.txt"])
    assert res["epsilon_mean_deg"] == pytest.approx(0.1, abs=1e-9)
    (tmp_path / "c.json").write_text(json.dumps({"schema": REPORT_SCHEMA, "pose": None}))
    with pytest.raises(DimensionMismatch):
        evaluate([tmp_path / "c.json"], [tmp_path / "t.txt"])
    with pytest.raises(DimensionMismatch):
        evaluate([off, off], [tmp_path / "t.txt"])
    out = tmp_path / "e.json"
    assert main(["evaluate", "--report", off, "--truth", str(tmp_path / "t.txt"), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["pairs"][0]["epsilon_deg"] == pytest.approx(0.1, abs=1e-9)
    assert main(["evaluate", "--report", str(tmp_path / "c.json"), "--truth", str(tmp_path / "t.txt"), "--out", str(out)]) == 2
