import csv
import io
import json

import pytest
from hypothesis import given, settings, strategies as st

from roomplace.baselines import dfs_solve, random_solve, anneal_solve, SolverBudget
from roomplace.metrics import (CSV_COLUMNS, LAYOUT_METRICS, GraphCapacityError,
                               approximate_graph_edit_distance, evaluate_corpus, fidelity,
                               graph_edit_distance, graph_report, instruction_recall,
                               layout_report, load_corpus, object_f1, plausibility,
                               rows_to_csv, rows_to_table)
from roomplace.scene import Door, GraphEdge, GraphNode, SceneGraph, dump_scene
from roomplace.toy import toy_corpus, toy_scene

from conftest import layout, obj, scene
from oracles import brute_force_ged

NAMES = ["bed", "lamp", "desk", "chair"]
RELATIONS = ["near", "on", "far_from"]


def graph(names, edges=()):
    return SceneGraph(tuple(GraphNode(n) for n in names),
                      tuple(GraphEdge(a, r, b) for a, r, b in edges))


@st.composite
def graphs(draw, max_nodes=5):
    n = draw(st.integers(0, max_nodes))
    names = [draw(st.sampled_from(NAMES)) for _ in range(n)]
    edges = []
    if n >= 2:
        pairs = st.tuples(st.integers(0, n - 1), st.sampled_from(RELATIONS),
                          st.integers(0, n - 1)).filter(lambda t: t[0] != t[2])
        edges = draw(st.lists(pairs, max_size=4))
    return graph(names, edges)


# -- fidelity and plausibility ------------------------------------------------------


def five_objects():
    return [obj("bed", 1.6, 1.2, role="anchor"), obj("wardrobe", 1.0, 0.5, role="inference"),
            obj("lamp", 0.3, 0.3), obj("rug", 1.0, 0.6), obj("chair", 0.5, 0.5)]


def test_fidelity_examples():
    sc = scene(five_objects(), w=6.0, d=6.0)
    full = layout(("bed", 1, 1, 0), ("wardrobe", 4, 1, 0), ("lamp", 1, 4, 0),
                  ("rug", 3, 3, 0), ("chair", 5, 5, 0))
    assert fidelity(sc, full) == (100.0, True)
    no_rug = layout(("bed", 1, 1, 0), ("wardrobe", 4, 1, 0), ("lamp", 1, 4, 0),
                    ("chair", 5, 5, 0), skipped=("rug",))
    assert fidelity(sc, no_rug) == (80.0, True)
    no_bed = layout(("wardrobe", 4, 1, 0), ("lamp", 1, 4, 0), ("rug", 3, 3, 0),
                    ("chair", 5, 5, 0), skipped=("bed",))
    assert fidelity(sc, no_bed) == (80.0, False)


def test_plausibility_empty_layout():
    assert plausibility(scene(five_objects()), layout()) == (100.0, 100.0, 0.0)


def test_oob_counts_objects_not_area():
    sc = scene([obj("a"), obj("b"), obj("c"), obj("d")], doors=[Door("S", 1.5, 0.9)])
    lay = layout(("a", 0.0, 2.0, 0.0), ("b", 2.0, 2.0, 0.0), ("c", 3.4, 3.4, 0.0),
                 ("d", 0.6, 3.4, 0.0))
    assert plausibility(sc, lay)[2] == pytest.approx(25.0)


def test_walled_off_anchor_is_unreachable():
    # a full-width wall splits the room; the anchor sits behind it
    objs = [obj("wall", 4.0, 0.2), obj("safe", 0.5, 0.5, role="anchor")]
    sc = scene(objs, doors=[Door("S", 1.5, 0.9)])
    lay = layout(("wall", 2.0, 2.0, 0.0), ("safe", 2.0, 3.5, 0.0))
    nav, key_nav, _ = plausibility(sc, lay)
    assert key_nav == 0.0
    assert nav < 100.0


def test_key_nav_defaults_without_key_objects():
    sc = scene([obj("a")], doors=[Door("S", 1.5, 0.9)])
    assert plausibility(sc, layout(("a", 2.0, 2.0, 0.0)))[1] == 100.0


def test_plausibility_ignores_object_ids():
    a = scene([obj("x", role="anchor"), obj("y", 2.0, 0.2)], doors=[Door("S", 1.5, 0.9)])
    b = scene([obj("renamed", name="x", role="anchor"), obj("other", 2.0, 0.2, name="y")],
              doors=[Door("S", 1.5, 0.9)])
    la = layout(("x", 1.0, 3.0, 0.0), ("y", 2.0, 2.0, 0.0))
    lb = layout(("renamed", 1.0, 3.0, 0.0), ("other", 2.0, 2.0, 0.0))
    assert plausibility(a, la) == plausibility(b, lb)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_dfs_layouts_never_out_of_bounds(seed):
    sc = toy_scene(seed)
    assert plausibility(sc, dfs_solve(sc))[2] == 0.0


def test_layout_report_ranges():
    sc = toy_scene(1)
    rep = layout_report(sc, random_solve(sc, 0))
    for v in (rep.cnt_pct, rep.nav_pct, rep.key_nav_pct, rep.oob_pct):
        assert 0.0 <= v <= 100.0
    assert rep.pto_seconds >= 0.0


# -- scene graphs ---------------------------------------------------------------------


def test_ged_identical_and_one_extra_node():
    g = graph(["bed", "lamp"], [(0, "near", 1)])
    assert graph_edit_distance(g, g) == 0
    assert graph_edit_distance(g, graph(["bed", "lamp", "desk"], [(0, "near", 1)])) == 1


def test_ged_relabel_and_substitute():
    g = graph(["bed", "lamp"], [(0, "near", 1)])
    assert graph_edit_distance(g, graph(["bed", "lamp"], [(0, "on", 1)])) == 1
    assert graph_edit_distance(g, graph(["bed", "desk"], [(0, "near", 1)])) == 1
    assert graph_edit_distance(g, graph(["BED", "Lamp"], [(0, "near", 1)])) == 0


@settings(max_examples=40, deadline=None)
@given(graphs(), graphs())
def test_ged_matches_brute_force(g1, g2):
    assert graph_edit_distance(g1, g2) == brute_force_ged(g1, g2)


@settings(max_examples=40, deadline=None)
@given(graphs(4), graphs(4), graphs(4))
def test_ged_symmetry_and_triangle(a, b, c):
    ab, bc, ac = graph_edit_distance(a, b), graph_edit_distance(b, c), graph_edit_distance(a, c)
    assert ab == graph_edit_distance(b, a)
    assert ac <= ab + bc


@settings(max_examples=30, deadline=None)
@given(graphs(), graphs())
def test_greedy_ged_is_an_upper_bound(g1, g2):
    assert approximate_graph_edit_distance(g1, g2) >= graph_edit_distance(g1, g2)


def test_ged_capacity_limit():
    big = graph([f"n{i}" for i in range(13)])
    with pytest.raises(GraphCapacityError):
        graph_edit_distance(big, big)
    assert approximate_graph_edit_distance(big, big) == 0
    assert graph_report(big, big).ged == 0


def test_instruction_recall_examples():
    pred = graph(["book", "nightstand", "lamp"], [(0, "on", 1), (2, "near", 1)])
    assert instruction_recall(pred, [("book", "on", "nightstand")]) == 1.0
    assert instruction_recall(pred, [("Book", "on", "Nightstand"),
                                     ("book", "near", "lamp")]) == 0.5
    assert instruction_recall(pred, [("lamp", "far_from", "nightstand")]) == 0.0
    with pytest.raises(ValueError):
        instruction_recall(pred, [])


@pytest.mark.parametrize("pred, gt, expect", [
    (["a", "b"], ["b", "a"], 1.0),
    (["a", "b"], ["a", "c"], 0.5),
    ([], ["a"], 0.0),
    ([], [], 1.0),
    (["chair", "chair", "desk"], ["chair", "desk"], 0.8),
])
def test_object_f1(pred, gt, expect):
    assert object_f1(pred, gt) == pytest.approx(expect)


def test_graph_metrics_ignore_node_order():
    g = graph(["bed", "lamp", "desk"], [(0, "near", 1), (2, "on", 0)])
    shuffled = graph(["desk", "bed", "lamp"], [(1, "near", 2), (0, "on", 1)])
    a, b = graph_report(g, g), graph_report(shuffled, g)
    assert (a.irecall, a.f1, a.ged) == (b.irecall, b.f1, b.ged) == (1.0, 1.0, 0)


# -- corpus evaluation ---------------------------------------------------------------


def test_deterministic_solver_has_zero_spread():
    scenes = toy_corpus(3, seed=5)
    rows = evaluate_corpus(scenes, {"dfs": lambda s, seed: dfs_solve(s)}, runs=5)
    assert {r.metric for r in rows} == set(LAYOUT_METRICS)
    for r in rows:
        if r.metric != "pto_seconds":
            assert r.std == 0.0
        assert r.n_runs == 5


def test_parallel_evaluation_matches_serial():
    scenes = toy_corpus(3, seed=6)
    solvers = {"random": lambda s, seed: random_solve(s, seed)}
    strip = lambda rows: [(r.method, r.metric, r.mean, r.std) for r in rows
                          if r.metric != "pto_seconds"]
    assert strip(evaluate_corpus(scenes, solvers, runs=2, jobs=1)) == \
        strip(evaluate_corpus(scenes, solvers, runs=2, jobs=2))


def test_anneal_nav_not_below_random():
    scenes = toy_corpus(4, seed=7)
    rows = evaluate_corpus(scenes, {
        "random": lambda s, seed: random_solve(s, seed),
        "anneal": lambda s, seed: anneal_solve(s, SolverBudget(iters=200, seed=seed)),
    }, runs=1)
    nav = {r.method: r.mean for r in rows if r.metric == "nav_pct"}
    assert nav["anneal"] >= nav["random"]


def test_evaluate_rejects_bad_counts():
    with pytest.raises(ValueError):
        evaluate_corpus([], {}, runs=0)


def test_csv_and_table_output():
    rows = evaluate_corpus(toy_corpus(2), {"dfs": lambda s, seed: dfs_solve(s)}, runs=1)
    parsed = list(csv.reader(io.StringIO(rows_to_csv(rows))))
    assert tuple(parsed[0]) == CSV_COLUMNS
    assert len(parsed) == 1 + len(LAYOUT_METRICS)
    assert float(parsed[1][2]) == rows[0].mean
    table = rows_to_table(rows)
    assert table.splitlines()[0].startswith("method")
    assert "dfs" in table


def test_load_corpus_reports_bad_files(tmp_path, caplog):
    (tmp_path / "a.json").write_text(dump_scene(toy_scene(0)))
    (tmp_path / "b.json").write_text("{broken")
    (tmp_path / "a.graph.json").write_text(json.dumps({"nodes": [], "edges": []}))
    scenes, errors = load_corpus(tmp_path)
    assert [name for name, _ in scenes] == ["a.json"]
    assert [name for name, _ in errors] == ["b.json"]
    assert "b.json" in caplog.text
