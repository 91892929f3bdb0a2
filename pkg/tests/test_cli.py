import csv
import io
import json
import subprocess
import sys

import pytest

from roomplace import __version__
from roomplace.cli import EXIT_IO, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main
from roomplace.metrics import EXACT_GED_MAX_NODES
from roomplace.scene import dump_scene, load_layout
from roomplace.toy import toy_corpus

from conftest import obj, scene
from oracles import brute_force_ged
from test_metrics import graph

SMALL = {"model": {"hidden_dim": 16}, "env": {"max_cells": 8}, "train": {"epochs": 2}}


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    d.mkdir()
    for i, sc in enumerate(toy_corpus(5, seed=2)):
        (d / f"scene_{i}.json").write_text(dump_scene(sc))
    return d


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def graph_file(path, g):
    doc = {"nodes": [{"name": n.name} for n in g.nodes],
           "edges": [{"subject": e.subject, "relation": e.relation, "object": e.object}
                     for e in g.edges]}
    path.write_text(json.dumps(doc))
    return str(path)


def test_version_and_help(capsys):
    assert main(["--help"]) == EXIT_OK
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "roomplace.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


# -- solve -------------------------------------------------------------------------


def test_solve_dfs_writes_layout_and_report(corpus, tmp_path, capsys):
    out = tmp_path / "lay.json"
    assert main(["solve", str(corpus / "scene_0.json"), "--out", str(out)]) == EXIT_OK
    report = json.loads((tmp_path / "lay.report.json").read_text())
    assert report["report"]["oob_pct"] == 0.0
    assert report["method"] == "dfs" and report["config"]["seed"] == 0
    lay = json.loads(out.read_text())
    assert lay["pto_seconds"] == 0.0
    assert json.loads(capsys.readouterr().out)["oob_pct"] == 0.0


def test_solve_is_byte_reproducible(corpus, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        main(["solve", str(corpus / "scene_1.json"), "--method", "random", "--seed", "4",
              "--out", str(tmp_path / name)])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_solve_usage_errors(corpus, tmp_path, capsys):
    sc = str(corpus / "scene_0.json")
    assert main(["solve", sc, "--method", "rl", "--out", str(tmp_path / "x.json")]) == EXIT_USAGE
    assert "--checkpoint" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x.json")]) \
        == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text('{"room": {"width": -1}}')
    assert main(["solve", str(bad), "--out", str(tmp_path / "x.json")]) == EXIT_USAGE


def test_solve_unwritable_output(corpus, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve", str(corpus / "scene_0.json"),
                 "--out", str(blocker / "lay.json")]) == EXIT_IO


def test_solver_giving_up(tmp_path):
    p = tmp_path / "tight.json"
    p.write_text(dump_scene(scene([obj("huge", 6.0, 6.0)])))
    assert main(["solve", str(p), "--out", str(tmp_path / "o.json")]) == EXIT_SOLVER


def test_bad_config_key(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"colour": 1}')
    assert main(["solve", str(corpus / "scene_0.json"), "--config", str(cfg),
                 "--out", str(tmp_path / "o.json")]) == EXIT_USAGE


# -- train / rl --------------------------------------------------------------------------


def test_train_and_solve_with_checkpoint(corpus, tmp_path, small_cfg):
    ck = tmp_path / "agent.bin"
    assert main(["train", str(corpus), "--out", str(ck), "--config", small_cfg]) == EXIT_OK
    rows = (tmp_path / "agent.bin.curve.csv").read_text().splitlines()
    assert rows[0].startswith("epoch,mean_E_total") and len(rows) == 3
    assert json.loads((tmp_path / "agent.bin.config.json").read_text())["model"]["hidden_dim"] == 16

    out = tmp_path / "rl.json"
    assert main(["solve", str(corpus / "scene_0.json"), "--method", "rl",
                 "--checkpoint", str(ck), "--out", str(out)]) == EXIT_OK
    assert load_layout(out.read_text())
    # an explicit canvas that disagrees with the checkpoint is a usage error
    assert main(["solve", str(corpus / "scene_0.json"), "--method", "rl", "--max-cells", "10",
                 "--checkpoint", str(ck), "--out", str(out)]) == EXIT_USAGE


def test_train_is_byte_reproducible(corpus, tmp_path, small_cfg):
    blobs = []
    for name in ("a.bin", "b.bin"):
        assert main(["train", str(corpus), "--out", str(tmp_path / name), "--config", small_cfg,
                     "--epochs", "1", "--seed", "3"]) == EXIT_OK
        blobs.append((tmp_path / name).read_bytes())
    assert blobs[0] == blobs[1]


def test_train_skips_corrupt_scene(corpus, tmp_path, small_cfg):
    (corpus / "broken.json").write_text("{not json")
    # a fresh process so the warning reaches the real stderr handler
    out = subprocess.run([sys.executable, "-m", "roomplace.cli", "train", str(corpus),
                          "--out", str(tmp_path / "a.bin"), "--config", small_cfg,
                          "--epochs", "1"], capture_output=True, text=True)
    assert out.returncode == EXIT_OK
    assert "broken.json" in out.stderr


def test_train_empty_corpus(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["train", str(tmp_path / "empty"), "--out", str(tmp_path / "a.bin")]) \
        == EXIT_USAGE


def test_bad_checkpoint(corpus, tmp_path):
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a checkpoint")
    assert main(["solve", str(corpus / "scene_0.json"), "--method", "rl", "--checkpoint",
                 str(junk), "--out", str(tmp_path / "o.json")]) == EXIT_USAGE


# -- eval -------------------------------------------------------------------------------


def test_eval_csv(corpus, capsys):
    assert main(["eval", str(corpus), "--methods", "dfs,random", "--runs", "1",
                 "--jobs", "1"]) == EXIT_OK
    captured = capsys.readouterr()
    rows = list(csv.DictReader(io.StringIO(captured.out)))
    assert {r["method"] for r in rows} == {"dfs", "random"}
    assert all(float(r["std"]) == 0.0 for r in rows)
    assert "method" in captured.err


def test_eval_anneal_not_worse_than_random(corpus, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"budget": {"iters": 200}}))
    out = tmp_path / "eval.csv"
    assert main(["eval", str(corpus), "--methods", "anneal,random", "--runs", "1",
                 "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == EXIT_OK
    e = {r["method"]: float(r["mean"]) for r in csv.DictReader(out.open())
         if r["metric"] == "e_total"}
    assert e["anneal"] <= e["random"]


def test_eval_usage_errors(corpus, tmp_path):
    assert main(["eval", str(corpus), "--methods", "dfs,magic"]) == EXIT_USAGE
    assert main(["eval", str(tmp_path / "missing")]) == EXIT_USAGE
    assert main(["eval", str(corpus), "--runs", "0"]) == EXIT_USAGE


# -- render / vrpos / classify -------------------------------------------------------------


def test_render_and_vrpos(corpus, tmp_path):
    sc = str(corpus / "scene_0.json")
    lay = str(tmp_path / "lay.json")
    assert main(["solve", sc, "--out", lay]) == EXIT_OK
    vp = tmp_path / "vp.json"
    assert main(["vrpos", sc, lay, "--standoff", "1.2", "--out", str(vp)]) == EXIT_OK
    doc = json.loads(vp.read_text())
    assert doc["anchor"]
    svg = tmp_path / "out.svg"
    assert main(["render", sc, lay, "--viewpoints", str(vp), "--out", str(svg)]) == EXIT_OK
    text = svg.read_text()
    assert text.startswith("<?xml") and text.count('class="vr"') == len(doc["candidates"])


def test_vrpos_bad_anchor(corpus, tmp_path):
    sc = str(corpus / "scene_0.json")
    lay = str(tmp_path / "lay.json")
    main(["solve", sc, "--out", lay])
    assert main(["vrpos", sc, lay, "--anchor", "ghost"]) == EXIT_USAGE
    assert main(["vrpos", sc, lay, "--standoff", "3", "--reach", "1"]) == EXIT_USAGE


def test_render_dangling_object(corpus, tmp_path):
    lay = tmp_path / "lay.json"
    lay.write_text(json.dumps({"placements": [{"id": "ghost", "x": 1, "y": 1, "theta": 0}],
                               "skipped": []}))
    assert main(["render", str(corpus / "scene_0.json"), str(lay),
                 "--out", str(tmp_path / "o.svg")]) == EXIT_USAGE


def test_classify(capsys):
    assert main(["classify", "--objects", "bed,pillow", "--rooms", "bedroom,kitchen"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"room_type": "bedroom"}
    assert main(["classify", "--objects", " ", "--rooms", "kitchen"]) == EXIT_USAGE


# -- ged -----------------------------------------------------------------------------------


def test_ged_identical_files(tmp_path, capsys):
    g = graph(["book", "nightstand"], [(0, "on", 1)])
    a, b = graph_file(tmp_path / "a.json", g), graph_file(tmp_path / "b.json", g)
    assert main(["ged", a, b]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"ged": 0, "irecall": 1.0, "f1": 1.0}


def test_ged_partial_recall(tmp_path, capsys):
    gt = graph(["book", "nightstand", "lamp"], [(0, "on", 1), (2, "near", 1)])
    pred = graph(["book", "nightstand", "lamp"], [(0, "on", 1)])
    main(["ged", graph_file(tmp_path / "p.json", pred), graph_file(tmp_path / "g.json", gt)])
    assert json.loads(capsys.readouterr().out)["irecall"] == 0.5


def test_ged_matches_oracle(tmp_path, capsys):
    g1 = graph(["bed", "lamp", "desk", "chair", "lamp"], [(0, "near", 1), (2, "on", 3)])
    g2 = graph(["lamp", "bed", "desk", "rug", "chair"], [(1, "near", 0), (3, "on", 2)])
    main(["ged", graph_file(tmp_path / "a.json", g1), graph_file(tmp_path / "b.json", g2)])
    assert json.loads(capsys.readouterr().out)["ged"] == brute_force_ged(g1, g2)


def test_ged_oversize(tmp_path, capsys):
    big = graph([f"n{i}" for i in range(EXACT_GED_MAX_NODES + 1)])
    f = graph_file(tmp_path / "big.json", big)
    assert main(["ged", f, f]) == EXIT_SOLVER
    assert "upper-bound estimate: 0" in capsys.readouterr().err
