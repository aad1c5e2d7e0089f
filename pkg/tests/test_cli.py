import json

import numpy as np
import pytest

from bitscope import io as bio
from bitscope.cli import run
from bitscope.nn.engine import PartitionPlan
from bitscope.profiler import profile


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic IDX splits plus a briefly trained tiny model."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    for split, n in (("train", 120), ("test", 60)):
        labels = rng.integers(0, 10, n).astype(np.uint8)
        imgs = rng.integers(0, 40, (n, 28, 28)).astype(np.uint8)
        for k, y in enumerate(labels):
            imgs[k, 2 * y:2 * y + 3, 4:24] = 220
        img_name, lbl_name = bio.SPLITS[split]
        bio.write_idx(root / "data" / img_name, imgs)
        bio.write_idx(root / "data" / lbl_name, labels)
    assert run(["train", "--arch", "tiny", "--data", str(root / "data"), "--out", str(root / "model"),
                "--epochs", "2", "--batch-size", "16"]) == 0
    return root


def cli(capsys, *argv):
    rc = run([str(a) for a in argv])
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_usage_errors(capsys, workspace):
    rc, _, err = cli(capsys)
    assert rc == 1
    rc, _, err = cli(capsys, "evaluate", "--bogus")
    assert rc == 1 and "usage error" in err
    rc, _, err = cli(capsys, "evaluate", "--model", workspace / "model", "--data", workspace / "data",
                     "--configs", "FI(6)")
    assert rc == 1 and "FI(6)" in err
    rc, _, err = cli(capsys, "evaluate", "--model", workspace / "model", "--data", workspace / "data",
                     "--configs", "NOPE=FI(6,8)")
    assert rc == 1
    rc, _, _ = cli(capsys, "evaluate", "--model", workspace / "model", "--configs", "FI(6,8)",
                   "--threads", "0")
    assert rc == 1


def test_data_errors(capsys, workspace, tmp_path):
    rc, _, err = cli(capsys, "evaluate", "--model", workspace / "model", "--data", tmp_path,
                     "--configs", "FI(6,8)")
    assert rc == 2 and "data error" in err
    rc, _, _ = cli(capsys, "evaluate", "--model", tmp_path / "none", "--configs", "FI(6,8)")
    assert rc == 2


def test_evaluate_full_precision_is_exactly_baseline(capsys, workspace):
    rc, out, _ = cli(capsys, "evaluate", "--model", workspace / "model", "--data", workspace / "data",
                     "--configs", "FL(8,23)")
    assert rc == 0
    assert "100.00%" in out


def test_evaluate_sweep_json_matches_table(capsys, workspace, tmp_path):
    args = ["evaluate", "--model", workspace / "model", "--data", workspace / "data",
            "--configs", "FI(4,6)", "--configs", "CONV1=FL(4,5),FC2=H(4,6,4)", "--configs", "BIN"]
    rc, text, _ = cli(capsys, *args, "--out", tmp_path / "sweep.json")
    assert rc == 0
    rc, js, _ = cli(capsys, *args, "--json")
    doc = json.loads(js)
    assert len(doc["rows"]) == 3
    for row in doc["rows"]:
        assert f"{row['relative_accuracy']:.2f}%" in text
    sweep = json.loads((tmp_path / "sweep.json").read_text())
    assert sweep["kind"] == "sweep" and sweep["rows"][1]["configs"][1] == "FL(8,23)"

    rc, table, _ = cli(capsys, "report", "--in", tmp_path / "sweep.json", "--style", "table4",
                       "--out", tmp_path / "rep")
    assert rc == 0 and "H(4,6,4)" in table
    csv = (tmp_path / "rep" / "table4.csv").read_text().splitlines()
    assert csv[0] == "CONV1,FC1,FC2,relative_accuracy,source"
    assert len(csv) == 1 + 3
    assert (tmp_path / "rep" / "table4.png").read_bytes()[:4] == b"\x89PNG"
    rc, table, _ = cli(capsys, "report", "--in", tmp_path / "sweep.json", "--style", "table3")
    assert rc == 0 and "BIN" not in table


def test_profile_and_table1(capsys, workspace, tmp_path):
    rc, out, _ = cli(capsys, "profile", "--model", workspace / "model", "--data", workspace / "data",
                     "--out", tmp_path / "prof.json")
    assert rc == 0 and "integral_bits" in out
    doc = json.loads((tmp_path / "prof.json").read_text())
    model = bio.load_model(workspace / "model")
    plan = PartitionPlan.layerwise(model)
    want = profile(model, plan, bio.load_split(workspace / "data", "train").images)
    assert doc == json.loads(bio.dumps_json(want.to_dict()))
    for _ in range(2):
        rc, _, _ = cli(capsys, "report", "--in", tmp_path / "prof.json", "--style", "table1",
                       "--out", tmp_path / "r1")
        assert rc == 0
        png = (tmp_path / "r1" / "table1.png").read_bytes()
    rc, _, _ = cli(capsys, "report", "--in", tmp_path / "prof.json", "--style", "table1",
                   "--out", tmp_path / "r2")
    assert (tmp_path / "r2" / "table1.png").read_bytes() == png
    assert (tmp_path / "r2" / "table1.csv").read_text() == (tmp_path / "r1" / "table1.csv").read_text()


def test_explore_is_byte_deterministic(capsys, workspace, tmp_path):
    rc, _, _ = cli(capsys, "profile", "--model", workspace / "model", "--data", workspace / "data",
                   "--out", tmp_path / "prof.json")
    settings = tmp_path / "s.toml"
    settings.write_text('families = ["FI", "I"]\nheadroom = 1\nprecision = [2, 5]\nepsilon = 0.05\n')
    outs = []
    for k, threads in enumerate((1, 2)):
        rc, _, _ = cli(capsys, "explore", "--model", workspace / "model", "--data", workspace / "data",
                       "--profile", tmp_path / "prof.json", "--settings", settings,
                       "--out", tmp_path / f"rep{k}.json", "--threads", threads)
        assert rc == 0
        outs.append((tmp_path / f"rep{k}.json").read_bytes())
    assert outs[0] == outs[1]
    tables = [cli(capsys, "report", "--in", tmp_path / "rep0.json", "--style", s)[1] for s in ("table3", "table4")]
    # the final selection is listed in exactly one of the two tables
    assert sum("final *" in t for t in tables) == 1
    (tmp_path / "bad.json").write_text('{"families": ["ZZ"]}')
    rc, _, _ = cli(capsys, "explore", "--model", workspace / "model", "--data", workspace / "data",
                   "--profile", tmp_path / "prof.json", "--settings", tmp_path / "bad.json",
                   "--out", tmp_path / "x.json")
    assert rc == 1


def test_quantize_and_infer(capsys, workspace, tmp_path):
    rc, out, _ = cli(capsys, "quantize", "--model", workspace / "model", "--configs", "FI(1,3)",
                     "--out", tmp_path / "q.json")
    assert rc == 0
    doc = json.loads((tmp_path / "q.json").read_text())
    assert [l["layer"] for l in doc["layers"]] == ["CONV1", "FC1", "FC2"]
    assert all(l["max_abs_error"] >= 0 for l in doc["layers"])
    rc, out, _ = cli(capsys, "infer", "--model", workspace / "model", "--data", workspace / "data",
                     "--index", "3", "--json")
    assert rc == 0
    res = json.loads(out)
    assert res["label"] == int(np.argmax(res["scores"]))
    np.save(tmp_path / "img.npy", np.zeros((28, 28), np.float32))
    rc, out, _ = cli(capsys, "infer", "--model", workspace / "model", "--image", tmp_path / "img.npy")
    assert rc == 0 and out.startswith("predicted")
    rc, _, _ = cli(capsys, "infer", "--model", workspace / "model", "--data", workspace / "data",
                   "--index", "999")
    assert rc == 1


def test_fetch_mnist_from_csv(capsys, tmp_path):
    rows = [",".join(["0"] * 784 + [str(d)]) for d in range(10) for _ in range(2)]
    (tmp_path / "s.csv").write_text("\n".join(rows))
    rc, out, _ = cli(capsys, "fetch-mnist", "--csv", tmp_path / "s.csv", "--out", tmp_path / "d",
                     "--train-per-class", "1", "--json")
    assert rc == 0 and json.loads(out)["train"] == 10
