import csv
import json

import numpy as np
import pytest
import yaml

from jupad.atoms import Dictionary, Gaussian, identity_dictionary
from jupad.cli import main
from jupad.fileio import load_model
from jupad.model import JointModel, sample


def _truth():
    d = Dictionary([Gaussian(m, 0.5) for m in (-2.0, 0.0, 2.0)], low=-2, high=2)
    B = np.array([[0.8, 0.1], [0.1, 0.1], [0.1, 0.8]])
    return JointModel([d, d, identity_dictionary(2)], [B, B, np.eye(2)], [0.5, 0.5])


@pytest.fixture
def workspace(tmp_path):
    X = sample(_truth(), 3000, 0)
    with open(tmp_path / "train.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "cls"])
        for row in X:
            w.writerow([repr(float(row[0])), repr(float(row[1])), "yes" if row[2] else "no"])
    cfg = {
        "data": {"path": "train.csv", "columns": {"cls": "discrete"}, "label": "cls"},
        "dictionaries": {"default": {"range": [-3, 3], "spacing": 1.0, "families": {"gaussian": {"variance": 0.5}}}},
        "fit": {"rank": 2, "bins": 10, "seed": 1},
        "output": {"model": "model.json", "trace": "trace.csv"},
    }
    (tmp_path / "run.yaml").write_text(yaml.safe_dump(cfg))
    return tmp_path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fit_classify_sample_pipeline(workspace, capsys):
    w = workspace
    before = (w / "train.csv").read_bytes()
    assert main(["fit", str(w / "run.yaml")]) == 0
    assert (w / "train.csv").read_bytes() == before
    model = load_model(w / "model.json")
    assert model.rank == 2 and model.metadata["names"] == ["a", "b", "cls"]
    assert model.metadata["provenance"]["seed"] == 1
    trace = _rows(w / "trace.csv")
    assert trace[0] == ["stage", "block", "iteration", "objective", "simplex_error"]

    assert main(["classify", "--model", str(w / "model.json"), "--data", str(w / "train.csv"),
                 "--scores", str(w / "scores.csv"), "--predictions", str(w / "pred.csv"), "--split-seed", "0"]) == 0
    header, row = _rows(w / "scores.csv")
    assert header == ["dataset", "F", "split_seed", "accuracy", "zero_density_fraction"]
    assert row[:3] == ["train", "2", "0"] and float(row[3]) > 0.8
    assert set(r[2] for r in _rows(w / "pred.csv")[1:]) <= {"yes", "no"}

    assert main(["sample", "--model", str(w / "model.json"), "--count", "5", "--seed", "3",
                 "--out", str(w / "s.csv")]) == 0
    rows = _rows(w / "s.csv")
    assert rows[0] == ["a", "b", "cls"] and len(rows) == 6 and {r[2] for r in rows[1:]} <= {"yes", "no"}

    assert main(["eval-density", "--model", str(w / "model.json"), "--points", str(w / "s.csv"),
                 "--out", str(w / "dens.csv")]) == 0
    dens = [float(r[0]) for r in _rows(w / "dens.csv")[1:]]
    assert len(dens) == 5 and all(d > 0 for d in dens)


def test_reruns_are_byte_identical(workspace):
    w = workspace
    assert main(["fit", str(w / "run.yaml"), "--model", str(w / "m1.json")]) == 0
    assert main(["fit", str(w / "run.yaml"), "--model", str(w / "m2.json")]) == 0
    assert (w / "m1.json").read_bytes() == (w / "m2.json").read_bytes()


def test_synth_desk_run(tmp_path):
    cfg = {"synth": {"dims": ["gaussian", "gaussian", "gaussian"], "rank": 2, "atoms_per_component": 2,
                     "sample_sizes": [500, 2000], "trials": 1, "test_size": 100,
                     "dictionary": {"mode": "oracle"}},
           "fit": {"bins": 8, "stage3_max_sweeps": 5}, "output": {"table": "table.csv"}}
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(cfg))
    assert main(["synth", str(tmp_path / "s.yaml")]) == 0
    rows = _rows(tmp_path / "table.csv")
    assert rows[0] == ["n_samples", "mean_d", "std_d", "wall_time"]
    assert [r[0] for r in rows[1:]] == ["500", "2000"]


def test_inspect(workspace):
    w = workspace
    assert main(["inspect", "--data", str(w / "train.csv"), "--bins", "4", "--columns", '{"cls": "discrete"}',
                 "--out", str(w / "h.csv")]) == 0
    rows = _rows(w / "h.csv")[1:]
    assert sum(int(r[3]) for r in rows if r[0] == "a") == 3000


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_exit_codes(workspace, capsys):
    w = workspace
    assert main(["fit", str(w / "run.yaml"), "--bogus"]) == 1
    assert _error(capsys)["error"] == "usage"
    assert main([]) == 1
    assert main(["classify", "--model", str(w / "nope.json"), "--data", "x", "--scores", "y"]) == 2
    assert _error(capsys)["error"] == "data"
    (w / "bad.yaml").write_text("data: {path: train.csv}\nfit: {rank: 2, learning_rate: 3}\n")
    assert main(["fit", str(w / "bad.yaml")]) == 2
    assert "learning_rate" in _error(capsys)["message"]
    (w / "broken.json").write_text('{"format": "jupad-model", "version": 1, "dimen')
    assert main(["sample", "--model", str(w / "broken.json"), "--count", "2", "--out", str(w / "o.csv")]) == 2
    assert _error(capsys)["type"] == "CorruptModelError"


def test_infeasible_rank_is_a_data_error(workspace, capsys):
    w = workspace
    cfg = yaml.safe_load((w / "run.yaml").read_text())
    cfg["fit"]["rank"] = 50  # more components than atoms on either side of the split
    (w / "big.yaml").write_text(yaml.safe_dump(cfg))
    code = main(["fit", str(w / "big.yaml")])
    err = _error(capsys)
    assert code == 2 and err["type"] == "InfeasibleSplitError"


def test_numeric_failure_exit_code(workspace, capsys, monkeypatch):
    from jupad import cli
    from jupad.errors import DivergenceError

    def diverge(*args, **kwargs):
        raise DivergenceError("objective became non-finite; lower eta_B", "eta_B")

    monkeypatch.setattr(cli, "fit", diverge)
    assert main(["fit", str(workspace / "run.yaml")]) == 3
    err = _error(capsys)
    assert err["error"] == "numeric" and "eta_B" in err["message"]
